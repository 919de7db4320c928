//! Per-episode modeling errors: fuel slosh, inertia perturbation and a
//! mismatched thruster.

use serde::{Deserialize, Serialize};

use intercept_core::airframe::{is_positive_definite, ComModel, InertiaModel};
use intercept_core::dynamics::DynamicsConfig;
use intercept_core::{RngStream, SimError, Vec3};

/// Consecutive non-positive-definite inertia draws before giving up.
pub const MAX_INERTIA_REJECTIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct InaccuracyConfig {
    /// Redraw the center-of-mass offset every substep.
    pub fuel_slosh: bool,
    /// Inertia perturbation fraction `f`: diagonals scaled by `U(1−f, 1+f)`,
    /// products of inertia drawn from `U(−f, f)` kg·m². Zero disables.
    pub inertia_perturbation: f64,
    /// Derate one randomly chosen thruster to `U(0.8, 1.0)` of nominal.
    pub thruster_mismatch: bool,
}

impl InaccuracyConfig {
    pub fn is_nominal(&self) -> bool {
        !self.fuel_slosh && self.inertia_perturbation == 0.0 && !self.thruster_mismatch
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..1.0).contains(&self.inertia_perturbation) {
            return Err(SimError::ConfigFault(format!(
                "inertia perturbation fraction {} outside [0, 1)",
                self.inertia_perturbation
            )));
        }
        Ok(())
    }
}

/// What was applied to one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Perturbation {
    pub inertia: Option<InertiaModel>,
    /// Zero-based thruster index and thrust scale.
    pub mismatch: Option<(usize, f64)>,
    pub slosh_bound: Option<f64>,
}

/// Draws an inertia model whose tensor is positive definite at dry mass
/// (and therefore at every heavier mass, since the nominal part scales with
/// mass while the products of inertia stay fixed).
pub fn perturb_inertia(fraction: f64, dynamics: &DynamicsConfig, rng: &mut RngStream) -> Result<InertiaModel, SimError> {
    let a = &dynamics.airframe;
    for _ in 0..MAX_INERTIA_REJECTIONS {
        let model = InertiaModel {
            diagonal_scale: Vec3::from_fn(|_, _| rng.uniform(1.0 - fraction, 1.0 + fraction)),
            off_diagonal: Vec3::from_fn(|_, _| rng.uniform(-fraction, fraction)),
        };
        if is_positive_definite(&model.tensor(a.dry_mass, &a.geometry)) {
            return Ok(model);
        }
    }
    Err(SimError::ConfigFault(format!(
        "{MAX_INERTIA_REJECTIONS} consecutive non-positive-definite inertia draws at fraction {fraction}"
    )))
}

/// Applies the enabled models to `dynamics` in place. Draw order is fixed:
/// inertia, then thruster index, then thrust scale.
pub fn apply_inaccuracy_models(
    cfg: &InaccuracyConfig,
    dynamics: &mut DynamicsConfig,
    com_bound_fraction: f64,
    rng: &mut RngStream,
) -> Result<Perturbation, SimError> {
    cfg.validate()?;
    let mut out = Perturbation::default();
    if cfg.fuel_slosh {
        dynamics.com_model = ComModel::Slosh { bound_fraction: com_bound_fraction };
        out.slosh_bound = Some(com_bound_fraction);
    }
    if cfg.inertia_perturbation > 0.0 {
        let m = perturb_inertia(cfg.inertia_perturbation, dynamics, rng)?;
        dynamics.inertia = m;
        out.inertia = Some(m);
    }
    if cfg.thruster_mismatch {
        let n = dynamics.airframe.thrusters.len();
        let i = ((rng.unit() * n as f64) as usize).min(n - 1);
        let s = rng.uniform(0.8, 1.0);
        dynamics.airframe.thrusters[i].max_thrust *= s;
        out.mismatch = Some((i, s));
    }
    Ok(out)
}
