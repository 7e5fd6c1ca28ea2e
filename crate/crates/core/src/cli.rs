//! Batch commands behind the `wms` binary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{ResolveError, ResolvedRun, RunConfig};
use crate::detect::{analyze, calibrate_threshold, DetectionReport, WindowSpec};
use crate::error::WmsError;
use crate::model::ClosedLoopModel;
use crate::rng::derive_seed;
use crate::scenarios::{experiment_matrix, vehicle_model};
use crate::simulate::{run_simulation, SimulationConfig};

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(WmsError),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    /// `<Name>: <message>` for the diagnostic stream.
    pub fn diagnostic(&self) -> String {
        match self {
            CliError::Config(m) => format!("ConfigError: {m}"),
            CliError::Numeric(e) => format!("{}: {e}", e.name()),
            CliError::Io(m) => format!("IoError: {m}"),
        }
    }
}

impl From<ResolveError> for CliError {
    fn from(e: ResolveError) -> Self {
        match e {
            ResolveError::Config(m) => CliError::Config(m),
            ResolveError::Numeric(e) => CliError::Numeric(e),
        }
    }
}

impl From<WmsError> for CliError {
    fn from(e: WmsError) -> Self {
        match e {
            WmsError::Io(m) => CliError::Io(m),
            other => CliError::Numeric(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Worker pool honouring `WMS_THREADS`.
pub fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("WMS_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("WMS_THREADS = `{v}` is not a positive integer")))?;
        if n == 0 {
            return Err(CliError::Config("WMS_THREADS must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Io(e.to_string()))
}

/// Stable fingerprint of a detector model, used to key the τ cache.
pub fn model_fingerprint(model: &ClosedLoopModel) -> String {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    let p = model.plant();
    for m in [p.a(), p.b(), p.c(), model.k_gain(), model.l_gain(), model.sigma_e().matrix(), p.sigma_w().matrix(), p.sigma_z().matrix()] {
        h = derive_seed(h, (m.rows() * 131 + m.cols()) as u64);
        for v in m.data() {
            h = derive_seed(h, v.to_bits());
        }
    }
    format!("{:016x}", h)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn window_spec(cfg: &RunConfig, ell: usize) -> WindowSpec {
    WindowSpec {
        ell,
        burn_in: cfg.detector.burn_in,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TauRecord {
    pub ell: usize,
    pub alpha_fa: f64,
    pub runs: usize,
    pub tau: f64,
    pub seed: u64,
    pub model: String,
}

const TAU_HEADER: &str = "ell,alpha_fa,runs,tau,seed,model";

fn read_tau(path: &Path) -> Option<TauRecord> {
    let text = fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    if lines.next()? != TAU_HEADER {
        return None;
    }
    let f: Vec<&str> = lines.next()?.split(',').collect();
    if f.len() != 6 {
        return None;
    }
    Some(TauRecord {
        ell: f[0].parse().ok()?,
        alpha_fa: f[1].parse().ok()?,
        runs: f[2].parse().ok()?,
        tau: f[3].parse().ok()?,
        seed: f[4].parse().ok()?,
        model: f[5].to_string(),
    })
}

fn write_tau(path: &Path, r: &TauRecord) -> CliResult<()> {
    let mut w = create(path)?;
    writeln!(w, "{TAU_HEADER}")?;
    writeln!(w, "{},{:e},{},{:e},{},{}", r.ell, r.alpha_fa, r.runs, r.tau, r.seed, r.model)?;
    w.flush()?;
    Ok(())
}

fn tau_record(cfg: &RunConfig, run: &ResolvedRun) -> CliResult<TauRecord> {
    let tau = calibrate_threshold(
        &run.detector,
        window_spec(cfg, run.ell),
        cfg.detector.alpha_fa,
        cfg.detector.calibration_runs,
        cfg.detector.calibration_seed,
    )?;
    Ok(TauRecord {
        ell: run.ell,
        alpha_fa: cfg.detector.alpha_fa,
        runs: cfg.detector.calibration_runs,
        tau,
        seed: cfg.detector.calibration_seed,
        model: model_fingerprint(&run.detector),
    })
}

/// τ from `tau.csv` in the output directory when it matches this run,
/// otherwise freshly calibrated.
fn threshold_for(cfg: &RunConfig, run: &ResolvedRun) -> CliResult<f64> {
    let path = cfg.sim.output_dir.join("tau.csv");
    if let Some(r) = read_tau(&path) {
        if r.ell == run.ell
            && r.alpha_fa == cfg.detector.alpha_fa
            && r.runs == cfg.detector.calibration_runs
            && r.seed == cfg.detector.calibration_seed
            && r.model == model_fingerprint(&run.detector)
        {
            return Ok(r.tau);
        }
    }
    Ok(tau_record(cfg, run)?.tau)
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

/// Per-seed outcome of `run`.
#[derive(Clone, Debug)]
pub struct SeedSummary {
    pub seed: u64,
    pub report: DetectionReport,
    pub horizon: usize,
}

/// Simulates every seed, writes traces, reports, the summary and the
/// effective configuration.
pub fn cmd_run(cfg: &RunConfig) -> CliResult<Vec<SeedSummary>> {
    let run = cfg.resolve()?;
    let dir = cfg.sim.output_dir.clone();
    prepare_dir(&dir)?;
    let pool = thread_pool()?;
    pool.install(|| {
        let tau = threshold_for(cfg, &run)?;
        let win = window_spec(cfg, run.ell);
        let results: Vec<CliResult<SeedSummary>> = cfg
            .sim
            .seeds
            .par_iter()
            .map(|&seed| {
                let sim = SimulationConfig::new(
                    run.world.clone(),
                    run.detector.clone(),
                    run.attack.clone(),
                    cfg.sim.horizon,
                    seed,
                );
                let trace = run_simulation(&sim)?;
                let report = analyze(&trace, &run.detector, win, tau, cfg.detector.alpha_fa)?;
                if cfg.sim.write_traces {
                    let mut w = create(&dir.join(format!("trace_{seed}.csv")))?;
                    trace.write_csv(&mut w)?;
                    w.flush()?;
                }
                let mut w = create(&dir.join(format!("report_{seed}.csv")))?;
                report.write_csv(&mut w)?;
                w.flush()?;
                Ok(SeedSummary {
                    seed,
                    report,
                    horizon: cfg.sim.horizon,
                })
            })
            .collect();
        let summaries = results.into_iter().collect::<CliResult<Vec<_>>>()?;
        let mut w = create(&dir.join("summary.csv"))?;
        writeln!(w, "seed,final_d1,final_d2,reject_rate,tau,ell,N,final_legacy")?;
        for s in &summaries {
            let r = &s.report;
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{},{},{:e}",
                s.seed,
                r.final_d1(),
                r.final_d2(),
                r.reject_rate(),
                r.tau,
                r.ell,
                s.horizon,
                r.final_legacy()
            )?;
        }
        w.flush()?;
        fs::write(dir.join("config.toml"), cfg.to_toml())?;
        Ok(summaries)
    })
}

/// Calibrates τ for the configured detector and caches it in `tau.csv`.
pub fn cmd_calibrate(cfg: &RunConfig) -> CliResult<TauRecord> {
    if cfg.attack.preset != "none" {
        return Err(CliError::Config("calibration runs without an attack; set attack to `none`".into()));
    }
    let run = cfg.resolve()?;
    prepare_dir(&cfg.sim.output_dir)?;
    let pool = thread_pool()?;
    let rec = pool.install(|| tau_record(cfg, &run))?;
    write_tau(&cfg.sim.output_dir.join("tau.csv"), &rec)?;
    Ok(rec)
}

/// One row of the demo summary.
#[derive(Clone, Debug)]
pub struct DemoRow {
    pub case: String,
    pub detector_wind: bool,
    pub attacked: bool,
    pub seed: u64,
    pub report: DetectionReport,
}

/// The four-run vehicle experiment: windy world, detector with and without
/// the wind state, with and without the attacker.
pub fn cmd_demo(name: &str, cfg: &RunConfig) -> CliResult<Vec<DemoRow>> {
    if name != "vehicle" {
        return Err(CliError::Config(format!("unknown demo `{name}` (only `vehicle` is available)")));
    }
    cfg.validate_basic().map_err(CliError::Config)?;
    let dir = cfg.sim.output_dir.clone();
    prepare_dir(&dir)?;
    let pool = thread_pool()?;
    pool.install(|| {
        let mut taus = Vec::new();
        for wind in [false, true] {
            let detector = vehicle_model(wind)?;
            let ell = if cfg.detector.ell == 0 {
                crate::detect::default_ell(&detector)
            } else {
                cfg.detector.ell
            };
            if cfg.sim.horizon < ell + detector.kprime() + 1 {
                return Err(CliError::Config(format!(
                    "horizon {} is shorter than ell + k' + 1 = {}",
                    cfg.sim.horizon,
                    ell + detector.kprime() + 1
                )));
            }
            let win = window_spec(cfg, ell);
            let tau = calibrate_threshold(
                &detector,
                win,
                cfg.detector.alpha_fa,
                cfg.detector.calibration_runs,
                cfg.detector.calibration_seed,
            )?;
            taus.push((win, tau));
        }
        let mut jobs = Vec::new();
        for &seed in &cfg.sim.seeds {
            for case in experiment_matrix(cfg.sim.horizon, seed)? {
                jobs.push(case);
            }
        }
        let rows: Vec<CliResult<DemoRow>> = jobs
            .par_iter()
            .map(|case| {
                let (win, tau) = taus[usize::from(case.detector_wind)];
                let trace = run_simulation(&case.config)?;
                let report = analyze(&trace, &case.config.detector, win, tau, cfg.detector.alpha_fa)?;
                let seed = case.config.seed;
                let mut w = create(&dir.join(format!("report_{}_{seed}.csv", case.name)))?;
                report.write_csv(&mut w)?;
                w.flush()?;
                Ok(DemoRow {
                    case: case.name.clone(),
                    detector_wind: case.detector_wind,
                    attacked: case.attacked,
                    seed,
                    report,
                })
            })
            .collect();
        let rows = rows.into_iter().collect::<CliResult<Vec<_>>>()?;
        let mut w = create(&dir.join("demo_summary.csv"))?;
        writeln!(w, "case,detector_wind,attacked,seed,final_d1,final_d2,reject_rate,tau,ell,N")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{:e},{:e},{:e},{:e},{},{}",
                r.case,
                r.detector_wind,
                r.attacked,
                r.seed,
                r.report.final_d1(),
                r.report.final_d2(),
                r.report.reject_rate(),
                r.report.tau,
                r.report.ell,
                cfg.sim.horizon
            )?;
        }
        w.flush()?;
        fs::write(dir.join("config.toml"), cfg.to_toml())?;
        Ok(rows)
    })
}

/// Reads a config file, or the defaults when `path` is `None`.
pub fn load_config(path: Option<&PathBuf>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            RunConfig::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}
