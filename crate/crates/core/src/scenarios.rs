//! Built-in systems: the double integrator, the lane-keeping vehicle with
//! an AR(1) crosswind, and the attack presets used with them.

use crate::attack::AttackSpec;
use crate::error::{Result, WmsError};
use crate::model::{assemble_closed_loop, synthesize_gains, ClosedLoopModel, DesignWeights, PlantModel};
use crate::numerics::{Matrix, SpdMatrix};
use crate::simulate::SimulationConfig;

/// Default double-integrator noise level (both process and measurement).
pub const DI_NOISE: f64 = 1e-4;
/// Default double-integrator watermark variance.
pub const DI_WATERMARK_VAR: f64 = 1e-4;
pub const VEHICLE_PROCESS_VAR: f64 = 1e-8;
pub const VEHICLE_MEASUREMENT_VAR: f64 = 1e-5;
pub const VEHICLE_WATERMARK_VAR: f64 = 0.5;
/// Index of the lateral-error state.
pub const VEHICLE_LATERAL_ROW: usize = 1;

/// `d⁺ = pole·d + χ`, `χ ~ N(0, chi_var)`, with `d` added to one state row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindModel {
    pub pole: f64,
    pub chi_var: f64,
    pub coupling_row: usize,
}

impl Default for WindModel {
    fn default() -> Self {
        WindModel {
            pole: 0.9,
            chi_var: 2e-6,
            coupling_row: VEHICLE_LATERAL_ROW,
        }
    }
}

impl WindModel {
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.pole.abs() < 1.0) {
            return Err(WmsError::InvalidArgument(format!("wind pole {} is not stable", self.pole)));
        }
        if !(self.chi_var >= 0.0 && self.chi_var.is_finite()) {
            return Err(WmsError::InvalidArgument(format!("wind variance {} is invalid", self.chi_var)));
        }
        if self.coupling_row >= p {
            return Err(WmsError::InvalidArgument(format!(
                "wind coupling row {} outside a {p}-state plant",
                self.coupling_row
            )));
        }
        Ok(())
    }

    /// Appends the disturbance as an extra (uncontrolled, unmeasured) state.
    pub fn augment(&self, plant: &PlantModel) -> Result<PlantModel> {
        let p = plant.p();
        self.validate(p)?;
        let mut g = Matrix::zeros(p, 1);
        g.set(self.coupling_row, 0, 1.0);
        let pole = Matrix::from_rows(&[[self.pole]])?;
        let a = Matrix::from_blocks(&[&[plant.a(), &g], &[&Matrix::zeros(1, p), &pole]])?;
        let b = plant.b().vstack(&Matrix::zeros(1, plant.q()))?;
        let c = plant.c().hstack(&Matrix::zeros(plant.m(), 1))?;
        let sw = SpdMatrix::block_diag(plant.sigma_w(), &SpdMatrix::scaled_identity(1, self.chi_var)?);
        PlantModel::new(a, b, c, sw, plant.sigma_z().clone())
    }
}

/// Double integrator with `Σ_W = sw·I₂`, `Σ_Z = sz`.
pub fn double_integrator_with_noise(sw: f64, sz: f64) -> Result<PlantModel> {
    PlantModel::new(
        Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]])?,
        Matrix::column(&[0.0, 1.0])?,
        Matrix::from_rows(&[[1.0, 0.0]])?,
        SpdMatrix::scaled_identity(2, sw)?,
        SpdMatrix::scaled_identity(1, sz)?,
    )
}

pub fn build_double_integrator() -> PlantModel {
    double_integrator_with_noise(DI_NOISE, DI_NOISE).expect("constant data")
}

fn vehicle_base() -> PlantModel {
    let a = Matrix::from_rows(&[
        [1.0, 0.0, 0.0, 1.0 / 10.0, 0.0],
        [1.0 / 2.0, 1.0, 0.0, 1.0 / 40.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 1.0 / 2.0],
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ])
    .expect("constant data");
    let b = Matrix::from_rows(&[
        [1.0 / 400.0, 0.0],
        [1.0 / 2400.0, 0.0],
        [0.0, 1.0 / 800.0],
        [1.0 / 20.0, 0.0],
        [0.0, 1.0 / 20.0],
    ])
    .expect("constant data");
    let c = Matrix::identity(3).hstack(&Matrix::zeros(3, 2)).expect("constant data");
    PlantModel::new(
        a,
        b,
        c,
        SpdMatrix::scaled_identity(5, VEHICLE_PROCESS_VAR).expect("constant data"),
        SpdMatrix::scaled_identity(3, VEHICLE_MEASUREMENT_VAR).expect("constant data"),
    )
    .expect("constant data")
}

/// Lane-keeping vehicle, optionally with the default wind state appended.
pub fn build_vehicle(include_wind: bool) -> PlantModel {
    let base = vehicle_base();
    if include_wind {
        WindModel::default().augment(&base).expect("default wind model is valid")
    } else {
        base
    }
}

/// Full replacement: `α = −1`, `ξ₀ = 0`, `Σ_O = Σ_W`, `Σ_S = Σ_Z`.
pub fn replay_attack_preset(plant: &PlantModel) -> AttackSpec {
    AttackSpec::new(
        -1.0,
        vec![0.0; plant.p()],
        plant.sigma_w().clone(),
        plant.sigma_z().clone(),
    )
    .expect("plant covariances are consistent")
}

/// `α = −0.6`, `ξ₀ = 0`, `Σ_O = 1e-8·I₅`, `Σ_S = 1e-8·I₃`.
pub fn vehicle_attack_preset() -> AttackSpec {
    AttackSpec::isotropic(-0.6, 5, 3, 1e-8, 1e-8).expect("constant data")
}

/// Closed loop for `plant` with default gains and `Σ_E = var·I`.
pub fn default_closed_loop(plant: PlantModel, watermark_var: f64, weights: &DesignWeights) -> Result<ClosedLoopModel> {
    let (k, l) = synthesize_gains(&plant, weights)?;
    let se = SpdMatrix::scaled_identity(plant.q(), watermark_var)?;
    assemble_closed_loop(plant, k, l, se)
}

pub fn double_integrator_model() -> Result<ClosedLoopModel> {
    default_closed_loop(build_double_integrator(), DI_WATERMARK_VAR, &DesignWeights::default())
}

pub fn vehicle_model(include_wind: bool) -> Result<ClosedLoopModel> {
    default_closed_loop(build_vehicle(include_wind), VEHICLE_WATERMARK_VAR, &DesignWeights::default())
}

/// One cell of the four-run vehicle experiment.
#[derive(Clone, Debug)]
pub struct ExperimentCase {
    pub name: String,
    pub detector_wind: bool,
    pub attacked: bool,
    pub config: SimulationConfig,
}

/// Windy world; detector with and without the wind state; with and without
/// the vehicle attacker.
pub fn experiment_matrix(horizon: usize, seed: u64) -> Result<Vec<ExperimentCase>> {
    let world = build_vehicle(true);
    let mut out = Vec::with_capacity(4);
    for detector_wind in [false, true] {
        let detector = vehicle_model(detector_wind)?;
        for attacked in [false, true] {
            let name = format!(
                "{}_{}",
                if detector_wind { "wind-model" } else { "no-wind-model" },
                if attacked { "attack" } else { "no-attack" }
            );
            out.push(ExperimentCase {
                name,
                detector_wind,
                attacked,
                config: SimulationConfig::new(
                    world.clone(),
                    detector.clone(),
                    attacked.then(vehicle_attack_preset),
                    horizon,
                    seed,
                ),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::compute_kprime;

    #[test]
    fn double_integrator_matrices() {
        let p = build_double_integrator();
        assert_eq!(p.a(), &Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap());
        assert_eq!(p.c().matmul(p.b()).max_abs(), 0.0);
        assert_eq!(double_integrator_model().unwrap().kprime(), 1);
    }

    #[test]
    fn vehicle_entries() {
        let p = build_vehicle(false);
        assert_eq!(p.a().get(0, 3), 0.1);
        assert_eq!(p.b().get(1, 0), 1.0 / 2400.0);
        assert_eq!((p.p(), p.q(), p.m()), (5, 2, 3));
        let w = build_vehicle(true);
        assert_eq!(w.a().get(5, 5), 0.9);
        let col: Vec<f64> = (0..5).map(|i| w.a().get(i, 5)).collect();
        assert_eq!(col, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(w.sigma_w().matrix().get(5, 5), 2e-6);
        assert_eq!(w.b().row(5), &[0.0, 0.0]);
    }

    #[test]
    fn wind_does_not_change_lag() {
        let a = vehicle_model(false).unwrap();
        let b = vehicle_model(true).unwrap();
        assert_eq!(a.kprime(), b.kprime());
        let w = build_vehicle(true);
        assert_eq!(compute_kprime(w.a(), w.b(), w.c(), b.k_gain()), Some(b.kprime()));
    }

    #[test]
    fn presets() {
        let r = replay_attack_preset(&build_double_integrator());
        assert_eq!(r.alpha, -1.0);
        assert_eq!(r.sigma_s.matrix(), build_double_integrator().sigma_z().matrix());
        assert_eq!(r.xi0, vec![0.0, 0.0]);
        let v = vehicle_attack_preset();
        assert_eq!(v.alpha, -0.6);
        assert_eq!(v.state_dim(), 5);
        assert_eq!(v.sigma_s.matrix(), &Matrix::scaled_identity(3, 1e-8));
    }

    #[test]
    fn four_cases() {
        let cases = experiment_matrix(100, 1).unwrap();
        assert_eq!(cases.len(), 4);
        for c in &cases {
            assert_eq!(c.config.detector.sigma_e().matrix(), &Matrix::scaled_identity(2, 0.5));
            assert_eq!(c.config.world.p(), 6);
            assert_eq!(c.config.detector.plant().p(), if c.detector_wind { 6 } else { 5 });
        }
    }

    #[test]
    fn unstable_wind_pole_rejected() {
        let w = WindModel {
            pole: 1.2,
            ..WindModel::default()
        };
        assert!(w.augment(&build_vehicle(false)).is_err());
    }
}
