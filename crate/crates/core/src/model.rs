//! Plant description, watermarked closed-loop assembly, watermark lag and
//! steady-state covariances.

use crate::error::{Result, WmsError};
use crate::numerics::{
    dlqr_gain, kalman_gain, solve_discrete_lyapunov, spectral_radius, Matrix, SpdMatrix,
    SCHUR_MARGIN,
};

/// Relative singular-value threshold used for numerical rank.
pub const RANK_TOL: f64 = 1e-9;

/// Open-loop LTI plant `x⁺ = Ax + Bu + w`, `y = Cx + z`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantModel {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    sigma_w: SpdMatrix,
    sigma_z: SpdMatrix,
}

impl PlantModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, sigma_w: SpdMatrix, sigma_z: SpdMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(WmsError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let p = a.rows();
        if b.rows() != p {
            return Err(WmsError::DimensionMismatch {
                context: "PlantModel: B rows",
                expected: (p, b.cols()),
                got: b.shape(),
            });
        }
        if c.cols() != p {
            return Err(WmsError::DimensionMismatch {
                context: "PlantModel: C columns",
                expected: (c.rows(), p),
                got: c.shape(),
            });
        }
        if sigma_w.dim() != p {
            return Err(WmsError::DimensionMismatch {
                context: "PlantModel: sigma_w",
                expected: (p, p),
                got: sigma_w.matrix().shape(),
            });
        }
        if sigma_z.dim() != c.rows() {
            return Err(WmsError::DimensionMismatch {
                context: "PlantModel: sigma_z",
                expected: (c.rows(), c.rows()),
                got: sigma_z.matrix().shape(),
            });
        }
        Ok(PlantModel {
            a,
            b,
            c,
            sigma_w,
            sigma_z,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    pub fn sigma_w(&self) -> &SpdMatrix {
        &self.sigma_w
    }
    pub fn sigma_z(&self) -> &SpdMatrix {
        &self.sigma_z
    }

    /// State dimension.
    pub fn p(&self) -> usize {
        self.a.rows()
    }
    /// Input dimension.
    pub fn q(&self) -> usize {
        self.b.cols()
    }
    /// Output dimension.
    pub fn m(&self) -> usize {
        self.c.rows()
    }
}

/// Quadratic weights for the default LQR / Kalman gain synthesis. Each
/// scale multiplies an identity matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignWeights {
    pub q_scale: f64,
    pub r_scale: f64,
    pub observer_w_scale: f64,
    pub observer_z_scale: f64,
}

impl Default for DesignWeights {
    fn default() -> Self {
        DesignWeights {
            q_scale: 1.0,
            r_scale: 1.0,
            observer_w_scale: 1.0,
            observer_z_scale: 1.0,
        }
    }
}

/// `(K, L)` from identity-weighted Riccati designs.
pub fn synthesize_gains(plant: &PlantModel, w: &DesignWeights) -> Result<(Matrix, Matrix)> {
    let scaled = |n: usize, s: f64| {
        if !(s.is_finite() && s >= 0.0) {
            return Err(WmsError::InvalidArgument(format!("design weight {s} must be finite and nonnegative")));
        }
        SpdMatrix::scaled_identity(n, s)
    };
    let k = dlqr_gain(
        plant.a(),
        plant.b(),
        &scaled(plant.p(), w.q_scale)?,
        &scaled(plant.q(), w.r_scale)?,
    )?;
    let l = kalman_gain(
        plant.a(),
        plant.c(),
        &scaled(plant.p(), w.observer_w_scale)?,
        &scaled(plant.m(), w.observer_z_scale)?,
    )?;
    Ok((k, l))
}

/// Watermarked observer-feedback loop and everything derived from it.
#[derive(Clone, Debug)]
pub struct ClosedLoopModel {
    plant: PlantModel,
    k_gain: Matrix,
    l_gain: Matrix,
    sigma_e: SpdMatrix,
    a_cl: Matrix,
    a_obs: Matrix,
    a_under: Matrix,
    b_under: Matrix,
    c_under: Matrix,
    d_under: Matrix,
    l_under: Matrix,
    h_under: Matrix,
    a_dunder: Matrix,
    b_dunder: Matrix,
    c_dunder: Matrix,
    d_dunder: Matrix,
    m_dunder: Matrix,
    kprime: usize,
    sigma_x: SpdMatrix,
    sigma_delta: SpdMatrix,
    residual_cov: SpdMatrix,
}

fn stable_or(which: &'static str, m: &Matrix) -> Result<()> {
    let radius = spectral_radius(m)?;
    if radius < 1.0 - SCHUR_MARGIN {
        Ok(())
    } else {
        Err(WmsError::UnstableClosedLoop { which, radius })
    }
}

/// Builds the closed loop for gains `K` (q×p) and `L` (p×m) with
/// watermark covariance `Σ_E`.
pub fn assemble_closed_loop(
    plant: PlantModel,
    k_gain: Matrix,
    l_gain: Matrix,
    sigma_e: SpdMatrix,
) -> Result<ClosedLoopModel> {
    let (p, q, m) = (plant.p(), plant.q(), plant.m());
    if k_gain.shape() != (q, p) {
        return Err(WmsError::DimensionMismatch {
            context: "assemble_closed_loop: K",
            expected: (q, p),
            got: k_gain.shape(),
        });
    }
    if l_gain.shape() != (p, m) {
        return Err(WmsError::DimensionMismatch {
            context: "assemble_closed_loop: L",
            expected: (p, m),
            got: l_gain.shape(),
        });
    }
    if sigma_e.dim() != q {
        return Err(WmsError::DimensionMismatch {
            context: "assemble_closed_loop: sigma_e",
            expected: (q, q),
            got: sigma_e.matrix().shape(),
        });
    }
    if !sigma_e.is_positive_definite() {
        return Err(WmsError::SingularExcitation);
    }
    let (a, b, c) = (plant.a(), plant.b(), plant.c());
    let bk = b.matmul(&k_gain);
    let lc = l_gain.matmul(c);
    let a_cl = a + &bk;
    let a_obs = a + &lc;
    stable_or("A+BK", &a_cl)?;
    stable_or("A+LC", &a_obs)?;
    let kprime = compute_kprime(a, b, c, &k_gain).ok_or(WmsError::NoWatermarkPath)?;

    let zp = Matrix::zeros(p, p);
    let ip = Matrix::identity(p);
    let neg_lc = -&lc;
    let a_under = Matrix::from_blocks(&[&[a, &bk], &[&neg_lc, &(&a_cl + &lc)]])?;
    let b_under = b.vstack(b)?;
    let c_under = c.hstack(&Matrix::zeros(m, p))?;
    let d_under = ip.vstack(&zp)?;
    let l_under = Matrix::zeros(p, m).vstack(&-&l_gain)?;
    let h_under = Matrix::from_blocks(&[&[&zp, &zp], &[&neg_lc, &zp]])?;
    let a_dunder = Matrix::from_blocks(&[&[&a_cl, &bk], &[&zp, &a_obs]])?;
    let b_dunder = b.vstack(&Matrix::zeros(p, q))?;
    let c_dunder = (-c).hstack(c)?;
    let d_dunder = ip.vstack(&-&ip)?;
    let m_dunder = zp.hstack(&ip)?;
    stable_or("closed-loop A (x, delta)", &a_dunder)?;

    let noise = sigma_e
        .congruence(&b_dunder)?
        .add(&plant.sigma_w().congruence(&d_dunder)?)?
        .add(&plant.sigma_z().congruence(&l_under)?)?;
    let sigma_x = solve_discrete_lyapunov(&a_dunder, &noise)?;
    let delta_noise = plant.sigma_w().add(&plant.sigma_z().congruence(&l_gain)?)?;
    let sigma_delta = solve_discrete_lyapunov(&a_obs, &delta_noise)?;

    let projected = m_dunder.matmul(sigma_x.matrix()).matmul(&m_dunder.transpose());
    let gap = (&projected - sigma_delta.matrix()).frobenius_norm();
    let scale = sigma_delta.matrix().frobenius_norm().max(f64::MIN_POSITIVE);
    if gap > 1e-8 * scale {
        return Err(WmsError::NotConverged { steps: 0 });
    }
    let residual_cov = sigma_delta.congruence(c)?.add(plant.sigma_z())?;

    Ok(ClosedLoopModel {
        plant,
        k_gain,
        l_gain,
        sigma_e,
        a_cl,
        a_obs,
        a_under,
        b_under,
        c_under,
        d_under,
        l_under,
        h_under,
        a_dunder,
        b_dunder,
        c_dunder,
        d_dunder,
        m_dunder,
        kprime,
        sigma_x,
        sigma_delta,
        residual_cov,
    })
}

impl ClosedLoopModel {
    pub fn plant(&self) -> &PlantModel {
        &self.plant
    }
    pub fn k_gain(&self) -> &Matrix {
        &self.k_gain
    }
    pub fn l_gain(&self) -> &Matrix {
        &self.l_gain
    }
    pub fn sigma_e(&self) -> &SpdMatrix {
        &self.sigma_e
    }
    /// `A + BK`.
    pub fn a_closed(&self) -> &Matrix {
        &self.a_cl
    }
    /// `A + LC`.
    pub fn a_observer(&self) -> &Matrix {
        &self.a_obs
    }
    pub fn a_under(&self) -> &Matrix {
        &self.a_under
    }
    pub fn b_under(&self) -> &Matrix {
        &self.b_under
    }
    pub fn c_under(&self) -> &Matrix {
        &self.c_under
    }
    pub fn d_under(&self) -> &Matrix {
        &self.d_under
    }
    pub fn l_under(&self) -> &Matrix {
        &self.l_under
    }
    pub fn h_under(&self) -> &Matrix {
        &self.h_under
    }
    pub fn a_dunder(&self) -> &Matrix {
        &self.a_dunder
    }
    pub fn b_dunder(&self) -> &Matrix {
        &self.b_dunder
    }
    /// `[−C C]`, acting on `(x, x̂)`.
    pub fn c_dunder(&self) -> &Matrix {
        &self.c_dunder
    }
    pub fn d_dunder(&self) -> &Matrix {
        &self.d_dunder
    }
    /// The double-underline `L` equals the underline one.
    pub fn l_dunder(&self) -> &Matrix {
        &self.l_under
    }
    pub fn m_dunder(&self) -> &Matrix {
        &self.m_dunder
    }
    pub fn kprime(&self) -> usize {
        self.kprime
    }
    pub fn sigma_x(&self) -> &SpdMatrix {
        &self.sigma_x
    }
    pub fn sigma_delta(&self) -> &SpdMatrix {
        &self.sigma_delta
    }
    /// `CΣ_ΔCᵀ + Σ_Z`, the honest residual covariance.
    pub fn residual_covariance(&self) -> &SpdMatrix {
        &self.residual_cov
    }
    /// `A + BK + LC`, the observer's own state matrix.
    pub fn observer_dynamics(&self) -> Matrix {
        &self.a_cl + &self.l_gain.matmul(self.plant.c())
    }
    /// `C(A+BK)^{k′}B`.
    pub fn lag_gain(&self) -> Matrix {
        self.plant
            .c()
            .matmul(&self.a_cl.pow(self.kprime))
            .matmul(self.plant.b())
    }
    /// Limit of the attacked lag-(k′+1) residual/watermark correlation,
    /// `−α C(A+BK)^{k′} B Σ_E`.
    pub fn attacked_correlation_limit(&self, alpha: f64) -> Matrix {
        self.lag_gain().matmul(self.sigma_e.matrix()).scale(-alpha)
    }
}

/// Smallest `k < p` with `C(A+BK)^k B` nonzero at the scale-aware threshold
/// `1e-9 (1 + ‖C‖‖B‖‖A+BK‖^k)`.
pub fn compute_kprime(a: &Matrix, b: &Matrix, c: &Matrix, k_gain: &Matrix) -> Option<usize> {
    let p = a.rows();
    let a_cl = a + &b.matmul(k_gain);
    let cn = c.frobenius_norm();
    let bn = b.frobenius_norm();
    let an = a_cl.frobenius_norm();
    let mut ak_b = b.clone();
    for k in 0..p {
        let prod = c.matmul(&ak_b);
        let eps = 1e-9 * (1.0 + cn * bn * an.powi(k as i32));
        if prod.max_abs() > eps {
            return Some(k);
        }
        ak_b = a_cl.matmul(&ak_b);
    }
    None
}

/// `A̲^r B̲`, by repeated multiplication.
pub fn powered_input_map(model: &ClosedLoopModel, r: usize) -> Result<Matrix> {
    attacked_input_map(model, 0.0, r)
}

/// `(A̲ + αH̲)^k B̲`, the input map under the attacked dynamics.
pub fn attacked_input_map(model: &ClosedLoopModel, alpha: f64, k: usize) -> Result<Matrix> {
    let limit = 2 * model.plant.p();
    if k > limit {
        return Err(WmsError::InvalidArgument(format!(
            "power {k} exceeds 2p = {limit}"
        )));
    }
    let dyn_m = if alpha == 0.0 {
        model.a_under.clone()
    } else {
        &model.a_under + &model.h_under.scale(alpha)
    };
    let mut out = model.b_under.clone();
    for _ in 0..k {
        out = dyn_m.matmul(&out);
    }
    Ok(out)
}

/// `[B, AB, …, A^{p−1}B]`.
pub fn controllability_matrix(a: &Matrix, b: &Matrix) -> Matrix {
    let mut blocks = b.clone();
    let mut cur = b.clone();
    for _ in 1..a.rows() {
        cur = a.matmul(&cur);
        blocks = blocks.hstack(&cur).expect("row counts agree");
    }
    blocks
}

/// `[C; CA; …; CA^{p−1}]`.
pub fn observability_matrix(a: &Matrix, c: &Matrix) -> Matrix {
    controllability_matrix(&a.transpose(), &c.transpose()).transpose()
}

pub fn is_controllable(a: &Matrix, b: &Matrix) -> bool {
    controllability_matrix(a, b).rank(RANK_TOL) == a.rows()
}

pub fn is_observable(a: &Matrix, c: &Matrix) -> bool {
    observability_matrix(a, c).rank(RANK_TOL) == a.rows()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_integrator() -> PlantModel {
        PlantModel::new(
            Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap(),
            Matrix::column(&[0.0, 1.0]).unwrap(),
            Matrix::from_rows(&[[1.0, 0.0]]).unwrap(),
            SpdMatrix::scaled_identity(2, 1e-4).unwrap(),
            SpdMatrix::scaled_identity(1, 1e-4).unwrap(),
        )
        .unwrap()
    }

    fn di_model() -> ClosedLoopModel {
        let plant = double_integrator();
        let (k, l) = synthesize_gains(&plant, &DesignWeights::default()).unwrap();
        assemble_closed_loop(plant, k, l, SpdMatrix::scaled_identity(1, 1e-4).unwrap()).unwrap()
    }

    #[test]
    fn plant_dimension_checks() {
        let bad = PlantModel::new(
            Matrix::identity(2),
            Matrix::zeros(3, 1),
            Matrix::identity(2),
            SpdMatrix::zeros(2),
            SpdMatrix::zeros(2),
        );
        assert!(matches!(bad, Err(WmsError::DimensionMismatch { .. })));
    }

    #[test]
    fn double_integrator_lag_is_one() {
        let m = di_model();
        assert_eq!(m.kprime(), 1);
        for k in [[0.0, 0.0], [-0.3, -1.1], [5.0, 2.0]] {
            let kg = Matrix::from_rows(&[k]).unwrap();
            let p = double_integrator();
            assert_eq!(compute_kprime(p.a(), p.b(), p.c(), &kg), Some(1));
        }
    }

    #[test]
    fn kprime_edge_cases() {
        let a = Matrix::from_rows(&[[0.5]]).unwrap();
        let b = Matrix::from_rows(&[[2.0]]).unwrap();
        let k = Matrix::from_rows(&[[0.0]]).unwrap();
        assert_eq!(compute_kprime(&a, &b, &Matrix::identity(1), &k), Some(0));
        assert_eq!(compute_kprime(&a, &b, &Matrix::zeros(1, 1), &k), None);
    }

    #[test]
    fn block_structure() {
        let m = di_model();
        let p = 2;
        let lc = m.l_gain().matmul(m.plant().c());
        assert_eq!(m.a_under().submatrix(p, 0, p, p), -&lc);
        assert_eq!(m.h_under().submatrix(p, 0, p, p), -&lc);
        assert_eq!(m.h_under().submatrix(0, 0, p, 2 * p).max_abs(), 0.0);
        assert_eq!(m.a_dunder().submatrix(p, 0, p, p).max_abs(), 0.0);
        assert_eq!(&m.a_dunder().submatrix(p, p, p, p), m.a_observer());
    }

    #[test]
    fn covariance_consistency() {
        let m = di_model();
        let proj = m
            .m_dunder()
            .matmul(m.sigma_x().matrix())
            .matmul(&m.m_dunder().transpose());
        let rel = (&proj - m.sigma_delta().matrix()).frobenius_norm() / m.sigma_delta().matrix().frobenius_norm();
        assert!(rel < 1e-8);
    }

    #[test]
    fn input_maps_on_double_integrator() {
        let m = di_model();
        let kp = m.kprime();
        for r in 0..=3 {
            let got = powered_input_map(&m, r).unwrap();
            let top = m.a_closed().pow(r).matmul(m.plant().b());
            let want = top.vstack(&top).unwrap();
            assert!((&got - &want).frobenius_norm() <= 1e-12 * want.frobenius_norm());
        }
        for k in 0..=kp {
            let d = &attacked_input_map(&m, -1.0, k).unwrap() - &powered_input_map(&m, k).unwrap();
            assert!(d.max_abs() < 1e-14);
        }
        // one step later the difference is [0; −αLC(A+BK)^{k′}B]
        let alpha = -1.0;
        let d = &attacked_input_map(&m, alpha, kp + 1).unwrap() - &powered_input_map(&m, kp + 1).unwrap();
        let lc = m.l_gain().matmul(m.plant().c());
        let low = lc.matmul(&m.a_closed().pow(kp)).matmul(m.plant().b()).scale(-alpha);
        let want = Matrix::zeros(2, 1).vstack(&low).unwrap();
        assert!((&d - &want).max_abs() < 1e-12);
        assert!(want.max_abs() > 0.0);
    }

    #[test]
    fn rejects_singular_watermark_and_unstable_gains() {
        let plant = double_integrator();
        let (k, l) = synthesize_gains(&plant, &DesignWeights::default()).unwrap();
        assert!(matches!(
            assemble_closed_loop(plant.clone(), k.clone(), l.clone(), SpdMatrix::zeros(1)),
            Err(WmsError::SingularExcitation)
        ));
        assert!(matches!(
            assemble_closed_loop(plant, Matrix::zeros(1, 2), l, SpdMatrix::scaled_identity(1, 1.0).unwrap()),
            Err(WmsError::UnstableClosedLoop { which: "A+BK", .. })
        ));
    }

    #[test]
    fn rank_checks() {
        let p = double_integrator();
        assert!(is_controllable(p.a(), p.b()));
        assert!(is_observable(p.a(), p.c()));
        let c2 = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(!is_observable(p.a(), &c2));
    }
}
