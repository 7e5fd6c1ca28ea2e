//! Discrete Lyapunov equation `Σ = AΣAᵀ + Q` by doubling.

use crate::error::{Result, WmsError};
use crate::numerics::{Matrix, SpdMatrix};

const MAX_DOUBLINGS: usize = 128;
const REL_TOL: f64 = 1e-14;

/// Solves `Σ = A Σ Aᵀ + Q` for Schur-stable `A`.
///
/// Doubling: after step k, `Σ_k = Σ_{j < 2^k} A^j Q (A^j)ᵀ`. Each step adds
/// `A_k Σ_k A_kᵀ` and squares `A_k`, so the series converges quadratically
/// once `ρ(A)^(2^k)` is small.
pub fn solve_discrete_lyapunov(a: &Matrix, q: &SpdMatrix) -> Result<SpdMatrix> {
    if !a.is_square() {
        return Err(WmsError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if a.rows() != q.dim() {
        return Err(WmsError::DimensionMismatch {
            context: "solve_discrete_lyapunov",
            expected: a.shape(),
            got: q.matrix().shape(),
        });
    }
    let mut sigma = q.matrix().clone();
    let mut ak = a.clone();
    for _ in 0..MAX_DOUBLINGS {
        let update = ak.matmul(&sigma).matmul(&ak.transpose());
        sigma = (&sigma + &update).symmetrize();
        if !sigma.is_finite() {
            return Err(WmsError::NotConverged {
                steps: MAX_DOUBLINGS,
            });
        }
        let un = update.frobenius_norm();
        let sn = sigma.frobenius_norm();
        if un <= REL_TOL * sn || sn == 0.0 {
            // one fixed-point sweep cleans up the last bits of rounding
            let polished = (&a.matmul(&sigma).matmul(&a.transpose()) + q.matrix()).symmetrize();
            return SpdMatrix::new(polished);
        }
        ak = ak.matmul(&ak);
    }
    Err(WmsError::NotConverged {
        steps: MAX_DOUBLINGS,
    })
}

/// `‖Σ − AΣAᵀ − Q‖_F / ‖Σ‖_F`.
pub fn lyapunov_residual(a: &Matrix, q: &Matrix, sigma: &Matrix) -> f64 {
    let r = &(sigma - &a.matmul(sigma).matmul(&a.transpose())) - q;
    let n = sigma.frobenius_norm();
    if n == 0.0 {
        r.frobenius_norm()
    } else {
        r.frobenius_norm() / n
    }
}
