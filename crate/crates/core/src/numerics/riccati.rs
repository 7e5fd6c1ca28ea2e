//! Controller and observer gains from discrete algebraic Riccati iterations.

use crate::error::{Result, WmsError};
use crate::numerics::eigen::{spectral_radius, SCHUR_MARGIN};
use crate::numerics::{Matrix, SpdMatrix};

const MAX_ITERATIONS: usize = 10_000;
const REL_TOL: f64 = 1e-12;
const DIVERGENCE_NORM: f64 = 1e150;

enum Failure {
    Diverged(String),
    Singular,
}

/// Iterates `P ← AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q` from `P = Q`.
fn dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> std::result::Result<Matrix, Failure> {
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = q.clone();
    for _ in 0..MAX_ITERATIONS {
        let pa = p.matmul(a);
        let pb = p.matmul(b);
        let g = r + &bt.matmul(&pb);
        let btpa = bt.matmul(&pa);
        let x = g.solve(&btpa).map_err(|_| Failure::Singular)?;
        let next = (&(&at.matmul(&pa) - &at.matmul(&pb).matmul(&x)) + q).symmetrize();
        let nn = next.frobenius_norm();
        if !next.is_finite() || nn > DIVERGENCE_NORM {
            return Err(Failure::Diverged(format!("Riccati iterate norm reached {nn:e}")));
        }
        let delta = (&next - &p).frobenius_norm();
        p = next;
        if delta <= REL_TOL * nn.max(f64::MIN_POSITIVE) {
            return Ok(p);
        }
    }
    Err(Failure::Diverged(format!(
        "no convergence within {MAX_ITERATIONS} iterations"
    )))
}

/// Riccati solution `P` of the control DARE (exposed for checks).
pub fn dare_solution(a: &Matrix, b: &Matrix, q: &SpdMatrix, r: &SpdMatrix) -> Result<Matrix> {
    check_shapes(a, b, q, r, "dare_solution")?;
    dare(a, b, q.matrix(), r.matrix()).map_err(|f| match f {
        Failure::Diverged(reason) => WmsError::NotStabilizable { reason },
        Failure::Singular => WmsError::Singular,
    })
}

fn check_shapes(a: &Matrix, b: &Matrix, q: &SpdMatrix, r: &SpdMatrix, context: &'static str) -> Result<()> {
    if !a.is_square() {
        return Err(WmsError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let p = a.rows();
    if b.rows() != p {
        return Err(WmsError::DimensionMismatch {
            context,
            expected: (p, b.cols()),
            got: b.shape(),
        });
    }
    if q.dim() != p {
        return Err(WmsError::DimensionMismatch {
            context,
            expected: (p, p),
            got: q.matrix().shape(),
        });
    }
    if r.dim() != b.cols() {
        return Err(WmsError::DimensionMismatch {
            context,
            expected: (b.cols(), b.cols()),
            got: r.matrix().shape(),
        });
    }
    Ok(())
}

/// LQR state feedback `K = −(R + BᵀPB)⁻¹BᵀPA`, so that `A + BK` is Schur
/// stable.
pub fn dlqr_gain(a: &Matrix, b: &Matrix, q: &SpdMatrix, r: &SpdMatrix) -> Result<Matrix> {
    check_shapes(a, b, q, r, "dlqr_gain")?;
    if !r.is_positive_definite() {
        return Err(WmsError::InvalidArgument(
            "dlqr_gain: R must be strictly positive definite".into(),
        ));
    }
    let p = dare(a, b, q.matrix(), r.matrix()).map_err(|f| match f {
        Failure::Diverged(reason) => WmsError::NotStabilizable { reason },
        Failure::Singular => WmsError::NotStabilizable {
            reason: "R + BᵀPB became singular".into(),
        },
    })?;
    let bt = b.transpose();
    let g = r.matrix() + &bt.matmul(&p).matmul(b);
    let k = -&g.solve(&bt.matmul(&p).matmul(a))?;
    let rho = spectral_radius(&(a + &b.matmul(&k)))?;
    if rho >= 1.0 - SCHUR_MARGIN {
        return Err(WmsError::NotStabilizable {
            reason: format!("closed loop A+BK has spectral radius {rho}"),
        });
    }
    Ok(k)
}

/// Observer gain `L = −APCᵀ(CPCᵀ + Σ_Z)⁻¹` from the filtering Riccati
/// equation, so that `A + LC` is Schur stable.
pub fn kalman_gain(a: &Matrix, c: &Matrix, sw: &SpdMatrix, sz: &SpdMatrix) -> Result<Matrix> {
    if c.cols() != a.rows() {
        return Err(WmsError::DimensionMismatch {
            context: "kalman_gain",
            expected: (c.rows(), a.rows()),
            got: c.shape(),
        });
    }
    let at = a.transpose();
    let ct = c.transpose();
    check_shapes(&at, &ct, sw, sz, "kalman_gain")?;
    if !sz.is_positive_definite() {
        return Err(WmsError::InvalidArgument(
            "kalman_gain: Σ_Z must be strictly positive definite".into(),
        ));
    }
    // the filtering equation is the control equation for (Aᵀ, Cᵀ)
    let p = dare(&at, &ct, sw.matrix(), sz.matrix()).map_err(|f| match f {
        Failure::Diverged(reason) => WmsError::NotDetectable { reason },
        Failure::Singular => WmsError::NotDetectable {
            reason: "CPCᵀ + Σ_Z became singular".into(),
        },
    })?;
    let apct = a.matmul(&p).matmul(&ct);
    let g = &c.matmul(&p).matmul(&ct) + sz.matrix();
    // L = −APCᵀ G⁻¹, with G symmetric: Lᵀ = −G⁻¹ (APCᵀ)ᵀ
    let l = -&g.solve(&apct.transpose())?.transpose();
    let rho = spectral_radius(&(a + &l.matmul(c)))?;
    if rho >= 1.0 - SCHUR_MARGIN {
        return Err(WmsError::NotDetectable {
            reason: format!("observer A+LC has spectral radius {rho}"),
        });
    }
    Ok(l)
}
