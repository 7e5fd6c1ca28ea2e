//! C ABI for `wms-core`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new` style function and released by the matching `*_free`. Fallible
//! calls return a [`WmsStatus`] and write their result through an out
//! pointer; the message for the most recent failure on the calling thread
//! is available from [`wms_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wms_core::attack::AttackSpec;
use wms_core::detect::{analyze, calibrate_threshold, DetectionReport, WindowSpec};
use wms_core::model::{ClosedLoopModel, DesignWeights, PlantModel};
use wms_core::numerics::{Matrix, SpdMatrix};
use wms_core::scenarios;
use wms_core::simulate::{run_simulation, SimulationConfig, SimulationTrace};
use wms_core::WmsError;

/// Result code of every fallible call. `WMS_STATUS_OK` is zero.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WmsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPositiveSemidefinite = 4,
    Singular = 5,
    NotConverged = 6,
    NotStabilizable = 7,
    NotDetectable = 8,
    UnstableClosedLoop = 9,
    NoWatermarkPath = 10,
    SingularExcitation = 11,
    NumericalBlowup = 12,
    WindowError = 13,
    Io = 14,
    Panic = 15,
}

impl From<&WmsError> for WmsStatus {
    fn from(e: &WmsError) -> Self {
        match e {
            WmsError::DimensionMismatch { .. } | WmsError::NotSquare { .. } => WmsStatus::DimensionMismatch,
            WmsError::NonFinite | WmsError::InvalidArgument(_) | WmsError::NotSpecialCase { .. } => {
                WmsStatus::InvalidArgument
            }
            WmsError::NotSymmetric { .. } | WmsError::NotPositiveSemidefinite { .. } => {
                WmsStatus::NotPositiveSemidefinite
            }
            WmsError::Singular => WmsStatus::Singular,
            WmsError::NotConverged { .. } | WmsError::NoConvergence { .. } => WmsStatus::NotConverged,
            WmsError::NotStabilizable { .. } => WmsStatus::NotStabilizable,
            WmsError::NotDetectable { .. } => WmsStatus::NotDetectable,
            WmsError::UnstableClosedLoop { .. } => WmsStatus::UnstableClosedLoop,
            WmsError::NoWatermarkPath => WmsStatus::NoWatermarkPath,
            WmsError::SingularExcitation => WmsStatus::SingularExcitation,
            WmsError::NumericalBlowup { .. } => WmsStatus::NumericalBlowup,
            WmsError::WindowTooShort { .. } | WmsError::OutOfRange { .. } | WmsError::SingularWindow => {
                WmsStatus::WindowError
            }
            WmsError::Io(_) => WmsStatus::Io,
        }
    }
}

/// Plant description `(A, B, C, Σ_W, Σ_Z)`.
pub struct WmsPlant(PlantModel);
/// Plant with controller, observer and watermark covariance.
pub struct WmsModel(ClosedLoopModel);
/// Simulated trajectory.
pub struct WmsTrace(SimulationTrace);
/// Detector output for one trace.
pub struct WmsReport(DetectionReport);

/// Replay-style attack with isotropic noise covariances.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct WmsAttack {
    pub alpha: f64,
    pub sigma_o: f64,
    pub sigma_s: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn guard(f: impl FnOnce() -> Result<(), WmsStatus>) -> WmsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WmsStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("Panic: {msg}"));
            WmsStatus::Panic
        }
    }
}

fn lift<T>(r: wms_core::Result<T>) -> Result<T, WmsStatus> {
    r.map_err(|e| {
        set_error(format!("{}: {e}", e.name()));
        WmsStatus::from(&e)
    })
}

fn null() -> WmsStatus {
    set_error("NullPointer: required pointer argument was null".into());
    WmsStatus::NullPointer
}

fn invalid(msg: &str) -> WmsStatus {
    set_error(format!("InvalidArgument: {msg}"));
    WmsStatus::InvalidArgument
}

unsafe fn borrow<'a, T>(p: *const T) -> Result<&'a T, WmsStatus> {
    p.as_ref().ok_or_else(null)
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), WmsStatus> {
    if out.is_null() {
        return Err(null());
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn read_matrix(data: *const f64, rows: usize, cols: usize) -> Result<Matrix, WmsStatus> {
    if data.is_null() {
        return Err(null());
    }
    let v = std::slice::from_raw_parts(data, rows * cols).to_vec();
    lift(Matrix::new(rows, cols, v))
}

unsafe fn read_spd(data: *const f64, n: usize) -> Result<SpdMatrix, WmsStatus> {
    lift(SpdMatrix::new(read_matrix(data, n, n)?))
}

unsafe fn read_path(path: *const c_char) -> Result<String, WmsStatus> {
    if path.is_null() {
        return Err(null());
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn wms_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a plant from row-major `A` (p×p), `B` (p×q), `C` (m×p),
/// `Σ_W` (p×p) and `Σ_Z` (m×m).
///
/// # Safety
/// Matrix pointers must reference arrays of the stated sizes; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn wms_plant_new(
    p: usize,
    q: usize,
    m: usize,
    a: *const f64,
    b: *const f64,
    c: *const f64,
    sigma_w: *const f64,
    sigma_z: *const f64,
    out: *mut *mut WmsPlant,
) -> WmsStatus {
    guard(|| {
        let plant = lift(PlantModel::new(
            read_matrix(a, p, p)?,
            read_matrix(b, p, q)?,
            read_matrix(c, m, p)?,
            read_spd(sigma_w, p)?,
            read_spd(sigma_z, m)?,
        ))?;
        store(out, WmsPlant(plant))
    })
}

/// The built-in vehicle plant, optionally with the wind state.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wms_plant_vehicle(include_wind: bool, out: *mut *mut WmsPlant) -> WmsStatus {
    guard(|| store(out, WmsPlant(scenarios::build_vehicle(include_wind))))
}

/// The built-in double-integrator plant.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wms_plant_double_integrator(out: *mut *mut WmsPlant) -> WmsStatus {
    guard(|| store(out, WmsPlant(scenarios::build_double_integrator())))
}

/// Writes the state, input and output dimensions.
///
/// # Safety
/// `plant` must come from this library; out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn wms_plant_dims(plant: *const WmsPlant, p: *mut usize, q: *mut usize, m: *mut usize) -> WmsStatus {
    guard(|| {
        let pl = &borrow(plant)?.0;
        for (dst, v) in [(p, pl.p()), (q, pl.q()), (m, pl.m())] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `plant` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn wms_plant_free(plant: *mut WmsPlant) {
    if !plant.is_null() {
        drop(Box::from_raw(plant));
    }
}

/// Synthesizes default LQR / Kalman gains for `plant` and assembles the
/// closed loop with watermark covariance `watermark_var · I`.
///
/// # Safety
/// `plant` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wms_model_new(plant: *const WmsPlant, watermark_var: f64, out: *mut *mut WmsModel) -> WmsStatus {
    guard(|| {
        let pl = borrow(plant)?.0.clone();
        let model = lift(scenarios::default_closed_loop(pl, watermark_var, &DesignWeights::default()))?;
        store(out, WmsModel(model))
    })
}

/// Assembles a closed loop from explicit gains `K` (q×p), `L` (p×m) and
/// `Σ_E` (q×q), all row-major.
///
/// # Safety
/// `plant` must come from this library; matrix pointers must reference
/// arrays of the stated sizes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wms_model_with_gains(
    plant: *const WmsPlant,
    k: *const f64,
    l: *const f64,
    sigma_e: *const f64,
    out: *mut *mut WmsModel,
) -> WmsStatus {
    guard(|| {
        let pl = borrow(plant)?.0.clone();
        let (p, q, m) = (pl.p(), pl.q(), pl.m());
        let model = lift(wms_core::model::assemble_closed_loop(
            pl,
            read_matrix(k, q, p)?,
            read_matrix(l, p, m)?,
            read_spd(sigma_e, q)?,
        ))?;
        store(out, WmsModel(model))
    })
}

/// Watermark lag `k'` of the model.
///
/// # Safety
/// `model` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wms_model_kprime(model: *const WmsModel, out: *mut usize) -> WmsStatus {
    guard(|| {
        let k = borrow(model)?.0.kprime();
        if out.is_null() {
            return Err(null());
        }
        *out = k;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn wms_model_free(model: *mut WmsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulates `horizon` steps of `world` under the detector `model`.
/// `attack` may be null for an honest run.
///
/// # Safety
/// `world` and `model` must come from this library; `attack` must be null or
/// valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wms_simulate(
    world: *const WmsPlant,
    model: *const WmsModel,
    attack: *const WmsAttack,
    horizon: usize,
    seed: u64,
    out: *mut *mut WmsTrace,
) -> WmsStatus {
    guard(|| {
        let world = borrow(world)?.0.clone();
        let model = borrow(model)?.0.clone();
        let spec = match attack.as_ref() {
            None => None,
            Some(a) => {
                let pl = model.plant();
                Some(lift(AttackSpec::isotropic(a.alpha, pl.p(), pl.m(), a.sigma_o, a.sigma_s))?)
            }
        };
        let trace = lift(run_simulation(&SimulationConfig::new(world, model, spec, horizon, seed)))?;
        store(out, WmsTrace(trace))
    })
}

/// Number of simulated steps.
///
/// # Safety
/// `trace` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn wms_trace_len(trace: *const WmsTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.len())
}

/// Copies residual `n` (length m) into `out`.
///
/// # Safety
/// `trace` must come from this library; `out` must hold `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn wms_trace_residual(trace: *const WmsTrace, n: usize, out: *mut f64) -> WmsStatus {
    guard(|| {
        let t = &borrow(trace)?.0;
        if n >= t.len() {
            return Err(invalid("step index out of range"));
        }
        if out.is_null() {
            return Err(null());
        }
        let r = t.residual(n);
        ptr::copy_nonoverlapping(r.as_ptr(), out, r.len());
        Ok(())
    })
}

/// Writes the trace as CSV to `path`.
///
/// # Safety
/// `trace` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn wms_trace_write_csv(trace: *const WmsTrace, path: *const c_char) -> WmsStatus {
    guard(|| {
        let t = &borrow(trace)?.0;
        let f = lift(File::create(read_path(path)?).map_err(WmsError::from))?;
        lift(t.write_csv(BufWriter::new(f)))
    })
}

/// # Safety
/// `trace` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn wms_trace_free(trace: *mut WmsTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

fn window(model: &ClosedLoopModel, ell: usize) -> WindowSpec {
    let mut w = WindowSpec::default_for(model);
    if ell != 0 {
        w.ell = ell;
    }
    w
}

/// Calibrates the NLL threshold from `runs` honest windows.
/// `ell = 0` selects the default window length.
///
/// # Safety
/// `model` must come from this library; `tau` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wms_calibrate(
    model: *const WmsModel,
    ell: usize,
    alpha_fa: f64,
    runs: usize,
    seed: u64,
    tau: *mut f64,
) -> WmsStatus {
    guard(|| {
        let m = &borrow(model)?.0;
        if tau.is_null() {
            return Err(null());
        }
        *tau = lift(calibrate_threshold(m, window(m, ell), alpha_fa, runs, seed))?;
        Ok(())
    })
}

/// Runs every detector statistic on `trace`.
///
/// # Safety
/// `trace` and `model` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wms_analyze(
    trace: *const WmsTrace,
    model: *const WmsModel,
    ell: usize,
    tau: f64,
    alpha_fa: f64,
    out: *mut *mut WmsReport,
) -> WmsStatus {
    guard(|| {
        let t = &borrow(trace)?.0;
        let m = &borrow(model)?.0;
        let r = lift(analyze(t, m, window(m, ell), tau, alpha_fa))?;
        store(out, WmsReport(r))
    })
}

/// Fraction of windows rejected; NaN for a null report.
///
/// # Safety
/// `report` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn wms_report_reject_rate(report: *const WmsReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.reject_rate())
}

/// Final covariance-deviation statistic; NaN for a null report.
///
/// # Safety
/// `report` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn wms_report_final_d1(report: *const WmsReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.final_d1())
}

/// Final watermark-correlation statistic; NaN for a null report.
///
/// # Safety
/// `report` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn wms_report_final_d2(report: *const WmsReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.final_d2())
}

/// Number of tested windows.
///
/// # Safety
/// `report` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn wms_report_window_count(report: *const WmsReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.verdicts.len())
}

/// Writes the report as CSV to `path`.
///
/// # Safety
/// `report` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn wms_report_write_csv(report: *const WmsReport, path: *const c_char) -> WmsStatus {
    guard(|| {
        let r = &borrow(report)?.0;
        let f = lift(File::create(read_path(path)?).map_err(WmsError::from))?;
        lift(r.write_csv(BufWriter::new(f)))
    })
}

/// # Safety
/// `report` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn wms_report_free(report: *mut WmsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
