//! Run configuration: TOML file sections plus command-line overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::attack::AttackSpec;
use crate::model::{ClosedLoopModel, DesignWeights, PlantModel};
use crate::numerics::{Matrix, SpdMatrix};
use crate::scenarios;

/// Scalar (times identity) or explicit matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovarianceSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl CovarianceSpec {
    pub fn to_spd(&self, n: usize, what: &str) -> Result<SpdMatrix, String> {
        match self {
            CovarianceSpec::Scalar(s) => {
                if !(s.is_finite() && *s >= 0.0) {
                    return Err(format!("{what}: variance {s} must be finite and nonnegative"));
                }
                SpdMatrix::scaled_identity(n, *s).map_err(|e| format!("{what}: {e}"))
            }
            CovarianceSpec::Matrix(rows) => {
                let m = matrix_from(rows, what)?;
                if m.shape() != (n, n) {
                    return Err(format!("{what}: expected {n}x{n}, got {}x{}", m.rows(), m.cols()));
                }
                SpdMatrix::new(m).map_err(|e| format!("{what}: {e}"))
            }
        }
    }
}

fn matrix_from(rows: &[Vec<f64>], what: &str) -> Result<Matrix, String> {
    Matrix::from_rows(rows).map_err(|e| format!("{what}: {e}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// `double-integrator`, `vehicle`, `vehicle-wind` or `custom`.
    pub name: String,
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<Vec<f64>>>,
    pub c: Option<Vec<Vec<f64>>>,
    pub sigma_w: Option<CovarianceSpec>,
    pub sigma_z: Option<CovarianceSpec>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            name: "vehicle".into(),
            a: None,
            b: None,
            c: None,
            sigma_w: None,
            sigma_z: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub q_scale: f64,
    pub r_scale: f64,
    pub observer_w_scale: f64,
    pub observer_z_scale: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let d = DesignWeights::default();
        ControllerSection {
            q_scale: d.q_scale,
            r_scale: d.r_scale,
            observer_w_scale: d.observer_w_scale,
            observer_z_scale: d.observer_z_scale,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WatermarkSection {
    /// Defaults to the scenario's value when absent.
    pub variance: Option<CovarianceSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    /// `none`, `replay`, `vehicle-preset` or `custom`.
    pub preset: String,
    pub alpha: Option<f64>,
    pub xi0: Option<Vec<f64>>,
    pub sigma_o: Option<CovarianceSpec>,
    pub sigma_s: Option<CovarianceSpec>,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            preset: "none".into(),
            alpha: None,
            xi0: None,
            sigma_o: None,
            sigma_s: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub wind: bool,
    /// 0 selects `20 (m+q)`.
    pub ell: usize,
    pub alpha_fa: f64,
    pub calibration_runs: usize,
    pub calibration_seed: u64,
    pub burn_in: bool,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            wind: false,
            ell: 0,
            alpha_fa: 0.05,
            calibration_runs: 500,
            calibration_seed: 2024,
            burn_in: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub write_traces: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            horizon: 20_000,
            seeds: vec![1],
            output_dir: PathBuf::from("wms-out"),
            write_traces: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    pub controller: ControllerSection,
    pub watermark: WatermarkSection,
    pub attack: AttackSection,
    pub detector: DetectorSection,
    pub sim: SimSection,
}

/// Everything a run needs, built from a validated [`RunConfig`].
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub world: PlantModel,
    pub detector: ClosedLoopModel,
    pub attack: Option<AttackSpec>,
    pub ell: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn weights(&self) -> DesignWeights {
        DesignWeights {
            q_scale: self.controller.q_scale,
            r_scale: self.controller.r_scale,
            observer_w_scale: self.controller.observer_w_scale,
            observer_z_scale: self.controller.observer_z_scale,
        }
    }

    /// Checks ranges that do not need any model.
    pub fn validate_basic(&self) -> Result<(), String> {
        let a = self.detector.alpha_fa;
        if !(a > 0.0 && a < 1.0) {
            return Err(format!("alpha_fa = {a} must lie in (0, 1)"));
        }
        if self.detector.calibration_runs < 100 {
            return Err(format!(
                "calibration_runs = {} must be at least 100",
                self.detector.calibration_runs
            ));
        }
        if self.sim.seeds.is_empty() {
            return Err("at least one seed is required".into());
        }
        if self.sim.horizon == 0 {
            return Err("horizon must be positive".into());
        }
        Ok(())
    }

    /// World plant, before the detector is chosen.
    fn world_plant(&self) -> Result<PlantModel, String> {
        let s = &self.scenario;
        let windy = self.detector.wind;
        match s.name.as_str() {
            "double-integrator" => {
                if windy {
                    return Err("the wind model only applies to the vehicle scenarios".into());
                }
                Ok(scenarios::build_double_integrator())
            }
            "vehicle" => Ok(scenarios::build_vehicle(windy)),
            "vehicle-wind" => Ok(scenarios::build_vehicle(true)),
            "custom" => {
                if windy {
                    return Err("the wind model only applies to the vehicle scenarios".into());
                }
                let need = |m: &Option<Vec<Vec<f64>>>, w: &str| -> Result<Matrix, String> {
                    matrix_from(m.as_ref().ok_or(format!("custom scenario needs `{w}`"))?, w)
                };
                let a = need(&s.a, "a")?;
                let b = need(&s.b, "b")?;
                let c = need(&s.c, "c")?;
                let sw = s
                    .sigma_w
                    .as_ref()
                    .ok_or("custom scenario needs `sigma_w`")?
                    .to_spd(a.rows(), "sigma_w")?;
                let sz = s
                    .sigma_z
                    .as_ref()
                    .ok_or("custom scenario needs `sigma_z`")?
                    .to_spd(c.rows(), "sigma_z")?;
                PlantModel::new(a, b, c, sw, sz).map_err(|e| e.to_string())
            }
            other => Err(format!(
                "unknown scenario `{other}` (expected double-integrator, vehicle, vehicle-wind or custom)"
            )),
        }
    }

    fn is_vehicle(&self) -> bool {
        matches!(self.scenario.name.as_str(), "vehicle" | "vehicle-wind")
    }

    /// Design plant of the detector: the vehicle with or without the wind
    /// state, otherwise the world plant itself.
    fn design_plant(&self, world: &PlantModel) -> PlantModel {
        if self.is_vehicle() {
            scenarios::build_vehicle(self.detector.wind)
        } else {
            world.clone()
        }
    }

    fn default_watermark(&self) -> f64 {
        if self.is_vehicle() {
            scenarios::VEHICLE_WATERMARK_VAR
        } else if self.scenario.name == "double-integrator" {
            scenarios::DI_WATERMARK_VAR
        } else {
            1.0
        }
    }

    fn attack_spec(&self, world: &PlantModel, design: &PlantModel) -> Result<Option<AttackSpec>, String> {
        let a = &self.attack;
        let spec = match a.preset.as_str() {
            "none" => return Ok(None),
            "replay" => scenarios::replay_attack_preset(design),
            "vehicle-preset" => {
                if !self.is_vehicle() {
                    return Err("attack `vehicle-preset` needs a vehicle scenario".into());
                }
                scenarios::vehicle_attack_preset()
            }
            "custom" => {
                let alpha = a.alpha.ok_or("custom attack needs `alpha`")?;
                let p = a.xi0.as_ref().map(Vec::len).unwrap_or(design.p());
                let xi0 = a.xi0.clone().unwrap_or_else(|| vec![0.0; p]);
                let so = a
                    .sigma_o
                    .clone()
                    .unwrap_or(CovarianceSpec::Scalar(0.0))
                    .to_spd(p, "sigma_o")?;
                let ss = a
                    .sigma_s
                    .clone()
                    .unwrap_or(CovarianceSpec::Scalar(0.0))
                    .to_spd(world.m(), "sigma_s")?;
                AttackSpec::new(alpha, xi0, so, ss).map_err(|e| e.to_string())?
            }
            other => {
                return Err(format!(
                    "unknown attack `{other}` (expected none, replay, vehicle-preset or custom)"
                ))
            }
        };
        if spec.output_dim() != world.m() || spec.state_dim() > design.p() || spec.state_dim() == 0 {
            return Err(format!(
                "attack dimensions (state {}, output {}) do not fit the plant (p = {}, m = {})",
                spec.state_dim(),
                spec.output_dim(),
                design.p(),
                world.m()
            ));
        }
        Ok(Some(spec))
    }

    /// Builds models and checks every invariant. The outer error separates
    /// configuration problems from numerical failures.
    pub fn resolve(&self) -> Result<ResolvedRun, ResolveError> {
        self.validate_basic().map_err(ResolveError::Config)?;
        let world = self.world_plant().map_err(ResolveError::Config)?;
        let design = self.design_plant(&world);
        let se = self
            .watermark
            .variance
            .clone()
            .unwrap_or(CovarianceSpec::Scalar(self.default_watermark()))
            .to_spd(design.q(), "watermark variance")
            .map_err(ResolveError::Config)?;
        let attack = self.attack_spec(&world, &design).map_err(ResolveError::Config)?;
        let (k, l) = crate::model::synthesize_gains(&design, &self.weights()).map_err(ResolveError::Numeric)?;
        let detector = crate::model::assemble_closed_loop(design, k, l, se).map_err(ResolveError::Numeric)?;
        let ell = if self.detector.ell == 0 {
            crate::detect::default_ell(&detector)
        } else {
            self.detector.ell
        };
        let d = detector.plant().m() + detector.plant().q();
        if ell < d {
            return Err(ResolveError::Config(format!("ell = {ell} is shorter than m+q = {d}")));
        }
        if self.sim.horizon < ell + detector.kprime() + 1 {
            return Err(ResolveError::Config(format!(
                "horizon {} is shorter than ell + k' + 1 = {}",
                self.sim.horizon,
                ell + detector.kprime() + 1
            )));
        }
        Ok(ResolvedRun {
            world,
            detector,
            attack,
            ell,
        })
    }
}

#[derive(Debug)]
pub enum ResolveError {
    Config(String),
    Numeric(crate::error::WmsError),
}
