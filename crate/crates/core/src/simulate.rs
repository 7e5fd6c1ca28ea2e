//! Seeded closed-loop simulation with an optional sensor attack.
//!
//! The world (true dynamics) and the detector (the design model the
//! controller and observer are built from) may differ, e.g. a windy world
//! seen through a wind-free observer.

use std::io::Write;

use crate::attack::{attack_step, attacker_dynamics, AttackSpec, AttackState};
use crate::error::{Result, WmsError};
use crate::model::{ClosedLoopModel, PlantModel};
use crate::numerics::SpdMatrix;
use crate::rng::{GaussianSampler, NormalStream, Stream};

/// States whose norm exceeds this abort the run.
pub const BLOWUP_NORM: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub world: PlantModel,
    pub detector: ClosedLoopModel,
    pub attack: Option<AttackSpec>,
    pub horizon: usize,
    pub seed: u64,
    /// Replaces the detector's `Σ_E` for the injected watermark (e.g. zero to
    /// switch the watermark off). The detector's statistics are unaffected.
    pub watermark_override: Option<SpdMatrix>,
}

impl SimulationConfig {
    pub fn new(world: PlantModel, detector: ClosedLoopModel, attack: Option<AttackSpec>, horizon: usize, seed: u64) -> Self {
        SimulationConfig {
            world,
            detector,
            attack,
            horizon,
            seed,
            watermark_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dp = self.detector.plant();
        if self.world.m() != dp.m() || self.world.q() != dp.q() {
            return Err(WmsError::DimensionMismatch {
                context: "SimulationConfig: world vs detector (m, q)",
                expected: (dp.m(), dp.q()),
                got: (self.world.m(), self.world.q()),
            });
        }
        if self.horizon == 0 {
            return Err(WmsError::InvalidArgument("horizon must be positive".into()));
        }
        if let Some(spec) = &self.attack {
            if spec.output_dim() != dp.m() {
                return Err(WmsError::DimensionMismatch {
                    context: "SimulationConfig: attack output dimension",
                    expected: (dp.m(), dp.m()),
                    got: (spec.output_dim(), spec.output_dim()),
                });
            }
            attacker_dynamics(&self.detector, spec.state_dim())?;
        }
        if let Some(e) = &self.watermark_override {
            if e.dim() != dp.q() {
                return Err(WmsError::DimensionMismatch {
                    context: "SimulationConfig: watermark override",
                    expected: (dp.q(), dp.q()),
                    got: e.matrix().shape(),
                });
            }
        }
        Ok(())
    }
}

/// Per-step signals of one run, stored flat (step-major).
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTrace {
    pub horizon: usize,
    /// World state dimension.
    pub px: usize,
    /// Detector state dimension.
    pub pd: usize,
    pub q: usize,
    pub m: usize,
    pub x: Vec<f64>,
    pub xhat: Vec<f64>,
    pub y: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub residual: Vec<f64>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.horizon
    }
    pub fn is_empty(&self) -> bool {
        self.horizon == 0
    }
    pub fn x(&self, n: usize) -> &[f64] {
        &self.x[n * self.px..(n + 1) * self.px]
    }
    pub fn xhat(&self, n: usize) -> &[f64] {
        &self.xhat[n * self.pd..(n + 1) * self.pd]
    }
    pub fn y(&self, n: usize) -> &[f64] {
        &self.y[n * self.m..(n + 1) * self.m]
    }
    pub fn e(&self, n: usize) -> &[f64] {
        &self.e[n * self.q..(n + 1) * self.q]
    }
    pub fn u(&self, n: usize) -> &[f64] {
        &self.u[n * self.q..(n + 1) * self.q]
    }
    pub fn v(&self, n: usize) -> &[f64] {
        &self.v[n * self.m..(n + 1) * self.m]
    }
    /// `Cx̂_n − y_n`.
    pub fn residual(&self, n: usize) -> &[f64] {
        &self.residual[n * self.m..(n + 1) * self.m]
    }

    /// Writes the trace as CSV, one row per step.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["step".to_string()];
        for (name, d) in [
            ("x", self.px),
            ("xhat", self.pd),
            ("y", self.m),
            ("e", self.q),
            ("u", self.q),
            ("v", self.m),
            ("res", self.m),
        ] {
            header.extend((0..d).map(|i| format!("{name}_{i}")));
        }
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for n in 0..self.horizon {
            line.clear();
            line.push_str(&n.to_string());
            for part in [
                self.x(n),
                self.xhat(n),
                self.y(n),
                self.e(n),
                self.u(n),
                self.v(n),
                self.residual(n),
            ] {
                for val in part {
                    line.push(',');
                    line.push_str(&format!("{val:e}"));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Runs the closed loop from `x₀ = x̂₀ = 0`.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationTrace> {
    config.validate()?;
    let world = &config.world;
    let det = &config.detector;
    let (px, pd, q, m) = (world.p(), det.plant().p(), world.q(), world.m());
    let n_steps = config.horizon;

    let obs_dyn = det.observer_dynamics();
    let neg_l = -det.l_gain();
    let k = det.k_gain();
    let b_det = det.plant().b();
    let c_det = det.plant().c();

    let mut w_s = NormalStream::new(config.seed, Stream::Process);
    let mut z_s = NormalStream::new(config.seed, Stream::Measurement);
    let mut e_s = NormalStream::new(config.seed, Stream::Watermark);
    let mut a_s = NormalStream::new(config.seed, Stream::Attack);
    let mut w_g = GaussianSampler::new(world.sigma_w());
    let mut z_g = GaussianSampler::new(world.sigma_z());
    let mut e_g = GaussianSampler::new(config.watermark_override.as_ref().unwrap_or(det.sigma_e()));

    let attacker = match &config.attack {
        Some(spec) => {
            let (a_att, c_att) = attacker_dynamics(det, spec.state_dim())?;
            Some((spec, a_att, c_att))
        }
        None => None,
    };
    let mut att_state: Option<AttackState> = config.attack.as_ref().map(|s| s.initial_state());

    let mut trace = SimulationTrace {
        horizon: n_steps,
        px,
        pd,
        q,
        m,
        x: Vec::with_capacity(n_steps * px),
        xhat: Vec::with_capacity(n_steps * pd),
        y: Vec::with_capacity(n_steps * m),
        e: Vec::with_capacity(n_steps * q),
        u: Vec::with_capacity(n_steps * q),
        v: Vec::with_capacity(n_steps * m),
        residual: Vec::with_capacity(n_steps * m),
    };

    let mut x = vec![0.0; px];
    let mut xh = vec![0.0; pd];
    let mut x_next = vec![0.0; px];
    let mut xh_next = vec![0.0; pd];
    let mut w = vec![0.0; px];
    let mut z = vec![0.0; m];
    let mut e = vec![0.0; q];
    let mut u = vec![0.0; q];
    let mut y = vec![0.0; m];
    let mut res = vec![0.0; m];

    for n in 0..n_steps {
        // measurement
        world.c().mul_vec_into(&x, &mut y);
        z_g.sample_into(&mut z_s, &mut z)?;
        for i in 0..m {
            y[i] += z[i];
        }
        let v = match (&attacker, att_state.as_mut()) {
            (Some((spec, a_att, c_att)), Some(st)) => {
                let (v, next) = attack_step(spec, st, &y, a_att, c_att, &mut a_s)?;
                *st = next;
                v
            }
            _ => vec![0.0; m],
        };
        for i in 0..m {
            y[i] += v[i];
        }

        // control
        e_g.sample_into(&mut e_s, &mut e)?;
        k.mul_vec_into(&xh, &mut u);
        for i in 0..q {
            u[i] += e[i];
        }
        c_det.mul_vec_into(&xh, &mut res);
        for i in 0..m {
            res[i] -= y[i];
        }

        trace.x.extend_from_slice(&x);
        trace.xhat.extend_from_slice(&xh);
        trace.y.extend_from_slice(&y);
        trace.e.extend_from_slice(&e);
        trace.u.extend_from_slice(&u);
        trace.v.extend_from_slice(&v);
        trace.residual.extend_from_slice(&res);

        // propagate
        w_g.sample_into(&mut w_s, &mut w)?;
        world.a().mul_vec_into(&x, &mut x_next);
        world.b().mul_vec_add(&u, &mut x_next);
        for i in 0..px {
            x_next[i] += w[i];
        }
        obs_dyn.mul_vec_into(&xh, &mut xh_next);
        neg_l.mul_vec_add(&y, &mut xh_next);
        b_det.mul_vec_add(&e, &mut xh_next);

        std::mem::swap(&mut x, &mut x_next);
        std::mem::swap(&mut xh, &mut xh_next);
        let big = norm(&x).max(norm(&xh));
        if !(big <= BLOWUP_NORM) {
            return Err(WmsError::NumericalBlowup { step: n + 1, norm: big });
        }
    }
    Ok(trace)
}

/// Observation error `δ_n = x̂_n − x_n`; needs matching world and detector
/// state dimensions.
pub fn observer_consistency_view(trace: &SimulationTrace, detector: &ClosedLoopModel) -> Result<Vec<Vec<f64>>> {
    if trace.px != trace.pd || trace.pd != detector.plant().p() {
        return Err(WmsError::DimensionMismatch {
            context: "observer_consistency_view",
            expected: (detector.plant().p(), detector.plant().p()),
            got: (trace.px, trace.pd),
        });
    }
    Ok((0..trace.len())
        .map(|n| {
            trace
                .xhat(n)
                .iter()
                .zip(trace.x(n))
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect())
}
