//! Symmetric positive semidefinite matrices and their Cholesky factors.

use crate::error::{Result, WmsError};
use crate::numerics::Matrix;

/// Relative pivot tolerance of the semidefinite Cholesky.
pub const CHOLESKY_TOL: f64 = 1e-10;

/// Inputs more asymmetric than this (relative to the Frobenius norm) are
/// rejected rather than symmetrized.
const SYMMETRY_REJECT_TOL: f64 = 1e-8;

/// Lower-triangular `L` with `L Lᵀ = m` for a symmetric PSD `m`.
///
/// Pivots within `1e-10 * max(diag)` of zero are treated as exact zeros and
/// their column is cleared, so rank-deficient covariances factor cleanly.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    Ok(factor(m)?.0)
}

/// Factor plus the number of pivots that were zeroed.
fn factor(m: &Matrix) -> Result<(Matrix, usize)> {
    if !m.is_square() {
        return Err(WmsError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    let max_diag = (0..n).fold(0.0_f64, |acc, i| acc.max(m.get(i, i).abs()));
    let tol = CHOLESKY_TOL * max_diag;
    let mut l = Matrix::zeros(n, n);
    let mut zeroed = 0;
    for j in 0..n {
        let s: f64 = (0..j).map(|k| l.get(j, k) * l.get(j, k)).sum();
        let d = m.get(j, j) - s;
        if d < -tol {
            return Err(WmsError::NotPositiveSemidefinite { index: j, pivot: d });
        }
        if d <= tol {
            // Null direction: the Schur-complement column must vanish too,
            // otherwise the matrix is indefinite.
            for i in (j + 1)..n {
                let s: f64 = (0..j).map(|k| l.get(i, k) * l.get(j, k)).sum();
                let off = m.get(i, j) - s;
                let di = (m.get(i, i) - (0..j).map(|k| l.get(i, k).powi(2)).sum::<f64>()).max(tol);
                if off.abs() > 10.0 * (tol.max(d.abs()) * di).sqrt() + f64::EPSILON * max_diag {
                    return Err(WmsError::NotPositiveSemidefinite { index: j, pivot: d });
                }
            }
            zeroed += 1;
            continue;
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let s: f64 = (0..j).map(|k| l.get(i, k) * l.get(j, k)).sum();
            l.set(i, j, (m.get(i, j) - s) / ljj);
        }
    }
    Ok((l, zeroed))
}

/// A symmetric positive semidefinite matrix with its cached Cholesky factor.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix {
    m: Matrix,
    chol: Matrix,
    full_rank: bool,
}

impl SpdMatrix {
    /// Symmetrizes `m` and verifies it is PSD.
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(WmsError::NotSquare {
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        let norm = m.frobenius_norm();
        if norm > 0.0 {
            let asym = (&m - &m.transpose()).frobenius_norm() / norm;
            if asym > SYMMETRY_REJECT_TOL {
                return Err(WmsError::NotSymmetric { asymmetry: asym });
            }
        }
        let m = m.symmetrize();
        let (chol, zeroed) = factor(&m)?;
        Ok(Self {
            full_rank: zeroed == 0,
            m,
            chol,
        })
    }

    /// `s * I`. `s` must be nonnegative.
    pub fn scaled_identity(n: usize, s: f64) -> Result<Self> {
        Self::new(Matrix::scaled_identity(n, s))
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(Matrix::zeros(n, n)).expect("zero matrix is PSD")
    }

    /// Block diagonal of two PSD matrices.
    pub fn block_diag(a: &SpdMatrix, b: &SpdMatrix) -> Self {
        let za = Matrix::zeros(a.dim(), b.dim());
        let zb = Matrix::zeros(b.dim(), a.dim());
        let m = Matrix::from_blocks(&[&[a.matrix(), &za], &[&zb, b.matrix()]])
            .expect("block shapes are consistent");
        Self::new(m).expect("block diagonal of PSD matrices is PSD")
    }

    /// `T M Tᵀ`, which stays PSD.
    pub fn congruence(&self, t: &Matrix) -> Result<Self> {
        if t.cols() != self.dim() {
            return Err(WmsError::DimensionMismatch {
                context: "SpdMatrix::congruence",
                expected: (t.rows(), self.dim()),
                got: t.shape(),
            });
        }
        Self::new(t.matmul(&self.m).matmul(&t.transpose()))
    }

    pub fn add(&self, other: &SpdMatrix) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(WmsError::DimensionMismatch {
                context: "SpdMatrix::add",
                expected: self.m.shape(),
                got: other.m.shape(),
            });
        }
        Self::new(&self.m + &other.m)
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn into_matrix(self) -> Matrix {
        self.m
    }

    /// Lower Cholesky factor (zero columns on null directions).
    pub fn cholesky_factor(&self) -> &Matrix {
        &self.chol
    }

    /// True when no pivot was zeroed, i.e. strictly positive definite at the
    /// Cholesky tolerance.
    pub fn is_positive_definite(&self) -> bool {
        self.full_rank
    }

    /// `log det` via the Cholesky factor; `None` if singular.
    pub fn log_det(&self) -> Option<f64> {
        if !self.full_rank {
            return None;
        }
        Some(
            (0..self.dim())
                .map(|i| 2.0 * self.chol.get(i, i).ln())
                .sum(),
        )
    }

    /// Inverse through the Cholesky factor; only for strictly PD matrices.
    pub fn inverse(&self) -> Result<Matrix> {
        if !self.full_rank {
            return Err(WmsError::Singular);
        }
        let n = self.dim();
        let l = &self.chol;
        let mut inv = Matrix::zeros(n, n);
        for c in 0..n {
            // forward: L y = e_c
            let mut y = vec![0.0; n];
            for i in 0..n {
                let rhs = if i == c { 1.0 } else { 0.0 };
                let s: f64 = (0..i).map(|k| l.get(i, k) * y[k]).sum();
                y[i] = (rhs - s) / l.get(i, i);
            }
            // backward: Lᵀ x = y
            let mut x = vec![0.0; n];
            for i in (0..n).rev() {
                let s: f64 = ((i + 1)..n).map(|k| l.get(k, i) * x[k]).sum();
                x[i] = (y[i] - s) / l.get(i, i);
            }
            for i in 0..n {
                inv.set(i, c, x[i]);
            }
        }
        Ok(inv.symmetrize())
    }
}
