//! Seeded Gaussian streams.
//!
//! Every run derives independent ChaCha8 streams from one 64-bit seed, one
//! per noise source, so changing (say) the attack covariance never perturbs
//! the plant noise realisation.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Result, WmsError};
use crate::numerics::{Matrix, SpdMatrix};

/// Purpose of a sub-stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Process = 1,
    Measurement = 2,
    Watermark = 3,
    Attack = 4,
}

/// SplitMix64 finaliser; maps `(seed, index)` to a well-mixed child seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal draws by the Box-Muller transform.
#[derive(Clone, Debug)]
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        NormalStream { rng, spare: None }
    }

    /// Uniform on (0, 1].
    fn open_uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        1.0 - (bits as f64) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.open_uniform();
        let u2 = self.open_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }
}

/// Draws `N(0, Σ)` vectors as `L z` with `L` the Cholesky factor of `Σ`.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    chol: Matrix,
    zero: bool,
    scratch: Vec<f64>,
}

impl GaussianSampler {
    pub fn new(cov: &SpdMatrix) -> Self {
        let chol = cov.cholesky_factor().clone();
        let zero = chol.max_abs() == 0.0;
        GaussianSampler {
            scratch: vec![0.0; chol.rows()],
            chol,
            zero,
        }
    }

    pub fn dim(&self) -> usize {
        self.chol.rows()
    }

    /// Writes one draw into `out`. A zero covariance consumes no randomness.
    pub fn sample_into(&mut self, stream: &mut NormalStream, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim() {
            return Err(WmsError::DimensionMismatch {
                context: "GaussianSampler::sample_into",
                expected: (self.dim(), 1),
                got: (out.len(), 1),
            });
        }
        if self.zero {
            out.fill(0.0);
            return Ok(());
        }
        stream.fill(&mut self.scratch);
        self.chol.mul_vec_into(&self.scratch, out);
        Ok(())
    }

    pub fn sample(&mut self, stream: &mut NormalStream) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(stream, &mut out).expect("length matches");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let mut a = NormalStream::new(7, Stream::Process);
        let mut b = NormalStream::new(7, Stream::Process);
        let mut c = NormalStream::new(7, Stream::Measurement);
        let xa: Vec<f64> = (0..16).map(|_| a.next_normal()).collect();
        let xb: Vec<f64> = (0..16).map(|_| b.next_normal()).collect();
        let xc: Vec<f64> = (0..16).map(|_| c.next_normal()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn moments_are_standard() {
        let mut s = NormalStream::new(11, Stream::Watermark);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.next_normal();
            m1 += z;
            m2 += z * z;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        assert!(m1.abs() < 4.0 / (n as f64).sqrt());
        assert!((m2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn sampler_covariance() {
        let cov = SpdMatrix::new(Matrix::from_rows(&[[2.0, 0.6], [0.6, 0.5]]).unwrap()).unwrap();
        let mut g = GaussianSampler::new(&cov);
        let mut s = NormalStream::new(3, Stream::Attack);
        let n = 100_000;
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let v = g.sample(&mut s);
            acc[0] += v[0] * v[0];
            acc[1] += v[0] * v[1];
            acc[2] += v[1] * v[1];
        }
        let got = [acc[0] / n as f64, acc[1] / n as f64, acc[2] / n as f64];
        assert!((got[0] - 2.0).abs() < 0.05);
        assert!((got[1] - 0.6).abs() < 0.02);
        assert!((got[2] - 0.5).abs() < 0.01);
    }

    #[test]
    fn zero_covariance_yields_zeros() {
        let mut g = GaussianSampler::new(&SpdMatrix::zeros(2));
        let mut s = NormalStream::new(0, Stream::Attack);
        assert_eq!(g.sample(&mut s), vec![0.0, 0.0]);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }
}
