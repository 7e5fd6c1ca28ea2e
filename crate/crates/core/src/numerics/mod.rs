//! Dense linear algebra and the structured solvers used by the rest of the
//! crate.

pub mod eigen;
pub mod lyapunov;
mod matrix;
pub mod riccati;
pub mod spd;

pub use eigen::{eigenvalues, is_schur_stable, spectral_radius, SCHUR_MARGIN};
pub use lyapunov::{lyapunov_residual, solve_discrete_lyapunov};
pub use matrix::Matrix;
pub use riccati::{dare_solution, dlqr_gain, kalman_gain};
pub use spd::{cholesky, SpdMatrix, CHOLESKY_TOL};
