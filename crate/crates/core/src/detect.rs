//! Attack detection: running consistency statistics, the ψ-window Wishart
//! test with a Monte Carlo threshold, the lag-1 legacy statistic, and the
//! full-state simplified innovation.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Result, WmsError};
use crate::model::ClosedLoopModel;
use crate::numerics::{Matrix, SpdMatrix};
use crate::rng::derive_seed;
use crate::simulate::{run_simulation, SimulationConfig, SimulationTrace};

/// Running `‖(1/N′) Σ_{n<N′} w r_n e_{n−lag}ᵀ‖_F` for every `N′ = 1..=N`,
/// where `w` is an optional left weight (`e` at negative indices is zero).
pub fn lagged_correlation_stat(trace: &SimulationTrace, weight: Option<&Matrix>, lag: usize) -> Result<Vec<f64>> {
    let (m, q) = (trace.m, trace.q);
    let rows = match weight {
        Some(wm) => {
            if wm.cols() != m {
                return Err(WmsError::DimensionMismatch {
                    context: "lagged_correlation_stat: weight",
                    expected: (wm.rows(), m),
                    got: wm.shape(),
                });
            }
            wm.rows()
        }
        None => m,
    };
    let mut acc = vec![0.0; rows * q];
    let mut wr = vec![0.0; rows];
    let mut out = Vec::with_capacity(trace.len());
    for n in 0..trace.len() {
        if n >= lag {
            let r = trace.residual(n);
            match weight {
                Some(wm) => wm.mul_vec_into(r, &mut wr),
                None => wr.copy_from_slice(r),
            }
            let e = trace.e(n - lag);
            for i in 0..rows {
                for j in 0..q {
                    acc[i * q + j] += wr[i] * e[j];
                }
            }
        }
        let inv = 1.0 / (n + 1) as f64;
        out.push(acc.iter().map(|a| (a * inv).powi(2)).sum::<f64>().sqrt());
    }
    Ok(out)
}

/// `(1/N) Σ r_n e_{n−lag}ᵀ` over the whole trace.
pub fn lagged_correlation(trace: &SimulationTrace, lag: usize) -> Matrix {
    let (m, q) = (trace.m, trace.q);
    let mut acc = Matrix::zeros(m, q);
    for n in lag..trace.len() {
        let r = trace.residual(n);
        let e = trace.e(n - lag);
        for i in 0..m {
            for j in 0..q {
                acc.set(i, j, acc.get(i, j) + r[i] * e[j]);
            }
        }
    }
    acc.scale(1.0 / trace.len().max(1) as f64)
}

/// `(1/N) Σ r_n r_nᵀ` over the whole trace.
pub fn residual_covariance(trace: &SimulationTrace) -> Matrix {
    let m = trace.m;
    let mut acc = Matrix::zeros(m, m);
    for n in 0..trace.len() {
        let r = trace.residual(n);
        for i in 0..m {
            for j in 0..m {
                acc.set(i, j, acc.get(i, j) + r[i] * r[j]);
            }
        }
    }
    acc.scale(1.0 / trace.len().max(1) as f64)
}

fn check_trace(trace: &SimulationTrace, model: &ClosedLoopModel) -> Result<()> {
    let p = model.plant();
    if trace.m != p.m() || trace.q != p.q() {
        return Err(WmsError::DimensionMismatch {
            context: "trace vs model (m, q)",
            expected: (p.m(), p.q()),
            got: (trace.m, trace.q),
        });
    }
    Ok(())
}

/// Running deviation of the empirical residual covariance from
/// `CΣ_ΔCᵀ + Σ_Z`, one value per prefix length.
pub fn deviation_stat_covariance(trace: &SimulationTrace, model: &ClosedLoopModel) -> Result<Vec<f64>> {
    check_trace(trace, model)?;
    let m = trace.m;
    let target = model.residual_covariance().matrix();
    let mut acc = vec![0.0; m * m];
    let mut out = Vec::with_capacity(trace.len());
    for n in 0..trace.len() {
        let r = trace.residual(n);
        for i in 0..m {
            for j in 0..m {
                acc[i * m + j] += r[i] * r[j];
            }
        }
        let inv = 1.0 / (n + 1) as f64;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += (acc[i * m + j] * inv - target.get(i, j)).powi(2);
            }
        }
        out.push(s.sqrt());
    }
    Ok(out)
}

/// Running norm of the residual / watermark correlation at lag `k′+1`.
pub fn deviation_stat_watermark(trace: &SimulationTrace, model: &ClosedLoopModel) -> Result<Vec<f64>> {
    check_trace(trace, model)?;
    if trace.len() <= model.kprime() + 1 {
        return Err(WmsError::InvalidArgument(format!(
            "trace of length {} is too short for lag {}",
            trace.len(),
            model.kprime() + 1
        )));
    }
    lagged_correlation_stat(trace, None, model.kprime() + 1)
}

/// Running norm of `(1/N′) Σ L r_n e_{n−1}ᵀ`, the lag-1 innovations test
/// that ignores the input-to-output delay.
pub fn legacy_lag1_stat(trace: &SimulationTrace, model: &ClosedLoopModel) -> Result<Vec<f64>> {
    check_trace(trace, model)?;
    if trace.len() <= 1 {
        return Err(WmsError::InvalidArgument("trace must have at least 2 steps".into()));
    }
    lagged_correlation_stat(trace, Some(model.l_gain()), 1)
}

/// `ψ_n = [Cx̂_n − y_n; e_{n−k′−1}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsiVector {
    pub residual_part: Vec<f64>,
    pub excitation_part: Vec<f64>,
}

impl PsiVector {
    pub fn len(&self) -> usize {
        self.residual_part.len() + self.excitation_part.len()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.residual_part.clone();
        v.extend_from_slice(&self.excitation_part);
        v
    }
}

/// One ψ per step `n ≥ k′+1`.
pub fn build_psi_sequence(trace: &SimulationTrace, kprime: usize) -> Result<Vec<PsiVector>> {
    let lag = kprime + 1;
    if trace.len() <= lag {
        return Err(WmsError::InvalidArgument(format!(
            "trace of length {} yields no psi vectors at lag {lag}",
            trace.len()
        )));
    }
    Ok((lag..trace.len())
        .map(|n| PsiVector {
            residual_part: trace.residual(n).to_vec(),
            excitation_part: trace.e(n - lag).to_vec(),
        })
        .collect())
}

fn window_sum(psi: &[PsiVector], ell: usize, window_index: usize) -> Result<Matrix> {
    let d = psi.first().map(PsiVector::len).unwrap_or(0);
    let required = d;
    if ell < required || ell == 0 {
        return Err(WmsError::WindowTooShort { ell, required });
    }
    let start = window_index
        .checked_mul(ell)
        .filter(|s| s + ell <= psi.len())
        .ok_or(WmsError::OutOfRange {
            index: window_index,
            available: psi.len(),
        })?;
    let mut acc = vec![0.0; d * d];
    let mut v = Vec::with_capacity(d);
    for p in &psi[start..start + ell] {
        v.clear();
        v.extend_from_slice(&p.residual_part);
        v.extend_from_slice(&p.excitation_part);
        for i in 0..d {
            for j in i..d {
                acc[i * d + j] += v[i] * v[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            acc[i * d + j] = acc[j * d + i];
        }
    }
    Matrix::new(d, d, acc)
}

/// `S = (1/ℓ) Σ ψψᵀ` over disjoint window `window_index` of length `ℓ`.
pub fn windowed_scatter(psi: &[PsiVector], ell: usize, window_index: usize) -> Result<SpdMatrix> {
    let s = window_sum(psi, ell, window_index)?;
    SpdMatrix::new(s.scale(1.0 / ell as f64))
}

/// `L(S) = (d+1−ℓ)·log det S + tr(blockdiag(V⁻¹, Σ_E⁻¹)·S)` with
/// `V = CΣ_ΔCᵀ + Σ_Z` and `d = m+q`.
pub fn wishart_nll(s: &SpdMatrix, sigma_delta_c: &SpdMatrix, sigma_e: &SpdMatrix, ell: usize) -> Result<f64> {
    let d = sigma_delta_c.dim() + sigma_e.dim();
    if s.dim() != d {
        return Err(WmsError::DimensionMismatch {
            context: "wishart_nll",
            expected: (d, d),
            got: s.matrix().shape(),
        });
    }
    let logdet = s.log_det().ok_or(WmsError::SingularWindow)?;
    let vi = sigma_delta_c.inverse()?;
    let ei = sigma_e.inverse()?;
    let m = sigma_delta_c.dim();
    let sm = s.matrix();
    // tr(blockdiag(Vi, Ei) S) touches only the diagonal blocks of S
    let mut tr = 0.0;
    for i in 0..m {
        for j in 0..m {
            tr += vi.get(i, j) * sm.get(j, i);
        }
    }
    for i in 0..sigma_e.dim() {
        for j in 0..sigma_e.dim() {
            tr += ei.get(i, j) * sm.get(m + j, m + i);
        }
    }
    let coef = d as f64 + 1.0 - ell as f64;
    Ok(coef * logdet + tr)
}

/// Window options for the statistical test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSpec {
    pub ell: usize,
    /// Skip the first window (ℓ ψ vectors) as burn-in.
    pub burn_in: bool,
}

impl WindowSpec {
    /// `ℓ = 20 (m+q)` with burn-in.
    pub fn default_for(model: &ClosedLoopModel) -> Self {
        WindowSpec {
            ell: default_ell(model),
            burn_in: true,
        }
    }

    fn skip(&self) -> usize {
        usize::from(self.burn_in)
    }
}

pub fn default_ell(model: &ClosedLoopModel) -> usize {
    20 * (model.plant().m() + model.plant().q())
}

/// NLL of one window, evaluated on the window sum `ℓS`, which is the
/// Wishart-distributed quantity (ℓ degrees of freedom, scale equal to the
/// honest ψ covariance). Constant offsets are absorbed by the calibrated τ.
pub fn window_nll(psi: &[PsiVector], model: &ClosedLoopModel, ell: usize, window_index: usize) -> Result<f64> {
    let sum = SpdMatrix::new(window_sum(psi, ell, window_index)?)?;
    wishart_nll(&sum, model.residual_covariance(), model.sigma_e(), ell)
}

/// NLL of every complete window after burn-in.
pub fn window_nll_sequence(trace: &SimulationTrace, model: &ClosedLoopModel, win: WindowSpec) -> Result<Vec<f64>> {
    let psi = build_psi_sequence(trace, model.kprime())?;
    let d = model.plant().m() + model.plant().q();
    if win.ell < d {
        return Err(WmsError::WindowTooShort {
            ell: win.ell,
            required: d,
        });
    }
    let total = psi.len() / win.ell;
    (win.skip()..total)
        .map(|w| window_nll(&psi, model, win.ell, w))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
        }
    }
}

/// Reject iff `nll > τ`.
pub fn hypothesis_test(nll_value: f64, tau: f64) -> Verdict {
    if nll_value > tau {
        Verdict::Reject
    } else {
        Verdict::Accept
    }
}

/// Linear interpolation between order statistics (`h = (n−1)p`).
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Monte Carlo threshold: `runs` independent honest simulations of the
/// matched model, one post-burn-in window each, and the `(1 − α)` quantile
/// of their NLL values.
pub fn calibrate_threshold(
    model: &ClosedLoopModel,
    win: WindowSpec,
    alpha_fa: f64,
    runs: usize,
    seed: u64,
) -> Result<f64> {
    Ok(quantile(
        &calibration_sample(model, win, alpha_fa, runs, seed)?,
        1.0 - alpha_fa,
    ))
}

/// The null NLL values behind [`calibrate_threshold`].
pub fn calibration_sample(model: &ClosedLoopModel, win: WindowSpec, alpha_fa: f64, runs: usize, seed: u64) -> Result<Vec<f64>> {
    if !(alpha_fa > 0.0 && alpha_fa < 1.0) {
        return Err(WmsError::InvalidArgument(format!(
            "alpha_fa = {alpha_fa} must lie in (0, 1)"
        )));
    }
    if runs < 100 {
        return Err(WmsError::InvalidArgument(format!(
            "calibration needs at least 100 runs, got {runs}"
        )));
    }
    let horizon = model.kprime() + 1 + win.ell * (win.skip() + 1);
    (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = SimulationConfig::new(
                model.plant().clone(),
                model.clone(),
                None,
                horizon,
                derive_seed(seed, i),
            );
            let trace = run_simulation(&cfg)?;
            let psi = build_psi_sequence(&trace, model.kprime())?;
            window_nll(&psi, model, win.ell, win.skip())
        })
        .collect()
}

/// Everything the detector reports for one trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionReport {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    /// Lag-1 legacy statistic, for comparison.
    pub legacy: Vec<f64>,
    pub nll: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    /// Step at which each window ends.
    pub window_end: Vec<usize>,
    pub tau: f64,
    pub ell: usize,
    pub alpha_fa: f64,
}

impl DetectionReport {
    pub fn reject_rate(&self) -> f64 {
        if self.verdicts.is_empty() {
            return 0.0;
        }
        self.verdicts.iter().filter(|v| **v == Verdict::Reject).count() as f64 / self.verdicts.len() as f64
    }

    pub fn final_d1(&self) -> f64 {
        self.d1.last().copied().unwrap_or(0.0)
    }

    pub fn final_d2(&self) -> f64 {
        self.d2.last().copied().unwrap_or(0.0)
    }

    pub fn final_legacy(&self) -> f64 {
        self.legacy.last().copied().unwrap_or(0.0)
    }

    /// CSV with one row per step; `nll` and `verdict` only on rows where a
    /// window ends.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step_or_window,d1,d2,nll,verdict,tau")?;
        let mut next = 0;
        for n in 0..self.d1.len() {
            if next < self.window_end.len() && self.window_end[next] == n {
                writeln!(
                    w,
                    "{n},{:e},{:e},{:e},{},{:e}",
                    self.d1[n],
                    self.d2[n],
                    self.nll[next],
                    self.verdicts[next].as_str(),
                    self.tau
                )?;
                next += 1;
            } else {
                writeln!(w, "{n},{:e},{:e},,,{:e}", self.d1[n], self.d2[n], self.tau)?;
            }
        }
        Ok(())
    }
}

/// Runs every statistic on `trace` against `model` with threshold `tau`.
pub fn analyze(trace: &SimulationTrace, model: &ClosedLoopModel, win: WindowSpec, tau: f64, alpha_fa: f64) -> Result<DetectionReport> {
    let d1 = deviation_stat_covariance(trace, model)?;
    let d2 = deviation_stat_watermark(trace, model)?;
    let legacy = legacy_lag1_stat(trace, model)?;
    let nll = window_nll_sequence(trace, model, win)?;
    let verdicts = nll.iter().map(|v| hypothesis_test(*v, tau)).collect();
    let lag = model.kprime() + 1;
    let window_end = (0..nll.len())
        .map(|j| lag + (j + win.skip() + 1) * win.ell - 1)
        .collect();
    Ok(DetectionReport {
        d1,
        d2,
        legacy,
        nll,
        verdicts,
        window_end,
        tau,
        ell: win.ell,
        alpha_fa,
    })
}

/// For `C = I`, `L = −A`: `y_{n+1} − A y_n − BK x̂_n − B e_n`, one vector per
/// step `n < N−1`.
pub fn specialized_full_state_residual(trace: &SimulationTrace, model: &ClosedLoopModel) -> Result<Vec<Vec<f64>>> {
    let plant = model.plant();
    let p = plant.p();
    if plant.c().shape() != (p, p) || (plant.c() - &Matrix::identity(p)).max_abs() > 1e-12 {
        return Err(WmsError::NotSpecialCase {
            reason: "C is not the identity".into(),
        });
    }
    let gap = (model.l_gain() + plant.a()).max_abs();
    if gap > 1e-12 * plant.a().max_abs().max(1.0) {
        return Err(WmsError::NotSpecialCase {
            reason: format!("L differs from -A by {gap:e}"),
        });
    }
    check_trace(trace, model)?;
    let bk = plant.b().matmul(model.k_gain());
    Ok((0..trace.len().saturating_sub(1))
        .map(|n| {
            let mut out = trace.y(n + 1).to_vec();
            let ay = plant.a().mul_vec(trace.y(n));
            let bkx = bk.mul_vec(trace.xhat(n));
            let be = plant.b().mul_vec(trace.e(n));
            for i in 0..p {
                out[i] -= ay[i] + bkx[i] + be[i];
            }
            out
        })
        .collect())
}
