#![allow(dead_code)]

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use wms_core::model::{assemble_closed_loop, synthesize_gains, ClosedLoopModel, DesignWeights, PlantModel};
use wms_core::numerics::{spectral_radius, Matrix, SpdMatrix};

pub struct TestRng {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn int(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        lo + (self.rng.next_u64() % (hi_inclusive - lo + 1) as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let (u1, u2) = (self.uniform(), self.uniform());
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * t.sin());
        r * t.cos()
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| self.normal()).collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    /// Random matrix rescaled to the given spectral radius.
    pub fn matrix_with_radius(&mut self, n: usize, radius: f64) -> Matrix {
        loop {
            let a = self.matrix(n, n);
            let rho = spectral_radius(&a).unwrap();
            if rho > 1e-3 {
                return a.scale(radius / rho);
            }
        }
    }

    /// `G Gᵀ` for a random `n×k` factor (rank `min(n, k)`).
    pub fn psd(&mut self, n: usize, k: usize) -> Matrix {
        let g = self.matrix(n, k);
        g.matmul(&g.transpose())
    }
}

/// A stabilizable / detectable random plant with default gains.
///
/// Even indices draw dense `(A, B, C)`; odd indices draw a chain structure
/// where `B` only drives the last state and `C` only reads the first `j+1`
/// states, so the watermark lag is `p−1−j`.
pub fn random_closed_loop(rng: &mut TestRng, index: usize) -> ClosedLoopModel {
    loop {
        let p = rng.int(1, 6);
        let q = rng.int(1, 3.min(p));
        let m = rng.int(1, 3.min(p));
        let (a, b, c) = if index % 2 == 0 {
            let radius = 0.5 + 0.8 * rng.uniform();
            (rng.matrix_with_radius(p, radius), rng.matrix(p, q), rng.matrix(m, p))
        } else {
            let mut a = Matrix::zeros(p, p);
            for i in 0..p {
                a.set(i, i, 1.6 * rng.uniform() - 0.8);
                if i + 1 < p {
                    a.set(i, i + 1, 0.5 + rng.uniform());
                }
            }
            let mut b = Matrix::zeros(p, q);
            for j in 0..q {
                b.set(p - 1, j, rng.normal());
            }
            let reach = rng.int(0, p - 1);
            let mut c = Matrix::zeros(m, p);
            for i in 0..m {
                for j in 0..=reach {
                    c.set(i, j, rng.normal());
                }
            }
            (a, b, c)
        };
        let plant = match PlantModel::new(
            a,
            b,
            c,
            SpdMatrix::scaled_identity(p, 1e-2).unwrap(),
            SpdMatrix::scaled_identity(m, 1e-2).unwrap(),
        ) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let Ok((k, l)) = synthesize_gains(&plant, &DesignWeights::default()) else {
            continue;
        };
        if let Ok(model) = assemble_closed_loop(plant, k, l, SpdMatrix::scaled_identity(q, 1.0).unwrap()) {
            return model;
        }
    }
}

pub fn rel_err(got: &Matrix, want: &Matrix) -> f64 {
    let d = (got - want).frobenius_norm();
    let n = want.frobenius_norm();
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

pub fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}
