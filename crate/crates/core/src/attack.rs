//! Sensor attack `v = α(Cx + z) + Cξ + ζ` with a false state
//! `ξ⁺ = (A+BK)ξ + ω`.

use crate::error::{Result, WmsError};
use crate::model::ClosedLoopModel;
use crate::numerics::{Matrix, SpdMatrix};
use crate::rng::NormalStream;

/// Attacker parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec {
    pub alpha: f64,
    pub xi0: Vec<f64>,
    pub sigma_o: SpdMatrix,
    pub sigma_s: SpdMatrix,
}

impl AttackSpec {
    pub fn new(alpha: f64, xi0: Vec<f64>, sigma_o: SpdMatrix, sigma_s: SpdMatrix) -> Result<Self> {
        if !alpha.is_finite() || xi0.iter().any(|v| !v.is_finite()) {
            return Err(WmsError::NonFinite);
        }
        if xi0.len() != sigma_o.dim() {
            return Err(WmsError::DimensionMismatch {
                context: "AttackSpec: xi0 vs sigma_o",
                expected: (sigma_o.dim(), 1),
                got: (xi0.len(), 1),
            });
        }
        Ok(AttackSpec {
            alpha,
            xi0,
            sigma_o,
            sigma_s,
        })
    }

    /// Isotropic covariances `so·I` (p×p) and `ss·I` (m×m), `ξ₀ = 0`.
    pub fn isotropic(alpha: f64, p: usize, m: usize, so: f64, ss: f64) -> Result<Self> {
        Self::new(
            alpha,
            vec![0.0; p],
            SpdMatrix::scaled_identity(p, so)?,
            SpdMatrix::scaled_identity(m, ss)?,
        )
    }

    /// Dimension of the false state.
    pub fn state_dim(&self) -> usize {
        self.xi0.len()
    }

    pub fn output_dim(&self) -> usize {
        self.sigma_s.dim()
    }

    pub fn initial_state(&self) -> AttackState {
        AttackState {
            xi: self.xi0.clone(),
        }
    }
}

/// Current false state `ξ_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackState {
    pub xi: Vec<f64>,
}

fn draw(chol: &Matrix, rng: &mut NormalStream) -> Vec<f64> {
    if chol.max_abs() == 0.0 {
        return vec![0.0; chol.rows()];
    }
    let mut z = vec![0.0; chol.rows()];
    rng.fill(&mut z);
    chol.mul_vec(&z)
}

/// One attacker step. Returns `v_n` and `ξ_{n+1}`; `ζ_n` is drawn before
/// `ω_n` from the same stream.
pub fn attack_step(
    spec: &AttackSpec,
    state: &AttackState,
    true_output: &[f64],
    closed_a: &Matrix,
    c: &Matrix,
    rng: &mut NormalStream,
) -> Result<(Vec<f64>, AttackState)> {
    let (px, m) = (spec.state_dim(), spec.output_dim());
    if closed_a.shape() != (px, px) {
        return Err(WmsError::DimensionMismatch {
            context: "attack_step: closed-loop matrix",
            expected: (px, px),
            got: closed_a.shape(),
        });
    }
    if c.shape() != (m, px) {
        return Err(WmsError::DimensionMismatch {
            context: "attack_step: C",
            expected: (m, px),
            got: c.shape(),
        });
    }
    if true_output.len() != m || state.xi.len() != px {
        return Err(WmsError::DimensionMismatch {
            context: "attack_step: vectors",
            expected: (m, px),
            got: (true_output.len(), state.xi.len()),
        });
    }
    let zeta = draw(spec.sigma_s.cholesky_factor(), rng);
    let omega = draw(spec.sigma_o.cholesky_factor(), rng);
    let mut v = c.mul_vec(&state.xi);
    for i in 0..m {
        v[i] += spec.alpha * true_output[i] + zeta[i];
    }
    let mut xi = closed_a.mul_vec(&state.xi);
    for (x, w) in xi.iter_mut().zip(&omega) {
        *x += w;
    }
    Ok((v, AttackState { xi }))
}

/// The `(A+BK, C)` pair the attacker propagates ξ with.
///
/// When the false state is shorter than the detector state (an attacker that
/// models the vehicle but not an augmented disturbance), the leading blocks
/// are used.
pub fn attacker_dynamics(detector: &ClosedLoopModel, state_dim: usize) -> Result<(Matrix, Matrix)> {
    let p = detector.plant().p();
    let m = detector.plant().m();
    if state_dim == 0 || state_dim > p {
        return Err(WmsError::DimensionMismatch {
            context: "attacker_dynamics",
            expected: (p, p),
            got: (state_dim, state_dim),
        });
    }
    let a = detector.a_closed().submatrix(0, 0, state_dim, state_dim);
    let c = detector.plant().c().submatrix(0, 0, m, state_dim);
    Ok((a, c))
}
