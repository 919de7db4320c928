//! Controller interface and the zero-effort-miss PN/APN benchmark with
//! pulsed divert thrusters.

use serde::{Deserialize, Serialize};

use crate::airframe::{ActionCommand, ThrusterSpec, NUM_DIVERT};
use crate::error::{Result, SimError};
use crate::mathkit::{dcm_from_quat, Quaternion, Vec3};
use crate::seeker::{lag_update, SensorPacket};

/// Ground-truth engagement quantities, available to benchmark controllers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthState {
    /// Target minus missile position, m.
    pub relative_position: Vec3,
    pub relative_velocity: Vec3,
    /// Commanded target maneuver acceleration, m/s².
    pub target_accel: Vec3,
    pub attitude: Quaternion,
    pub mass: f64,
}

/// Everything a controller may look at when choosing an action.
#[derive(Debug, Clone, Copy)]
pub struct ControlInput<'a> {
    pub time: f64,
    pub step: usize,
    pub packet: &'a SensorPacket,
    pub truth: TruthState,
}

pub trait Controller {
    /// Called once before the first step of every episode.
    fn reset(&mut self) {}

    fn act(&mut self, input: &ControlInput<'_>) -> Result<ActionCommand>;
}

/// Never fires anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullController;

impl Controller for NullController {
    fn act(&mut self, _: &ControlInput<'_>) -> Result<ActionCommand> {
        Ok(ActionCommand::NONE)
    }
}

/// Replays a fixed command every step.
#[derive(Debug, Clone, Copy)]
pub struct ConstantController(pub ActionCommand);

impl Controller for ConstantController {
    fn act(&mut self, _: &ControlInput<'_>) -> Result<ActionCommand> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuidanceLaw {
    Pn,
    Apn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    pub law: GuidanceLaw,
    pub nav_constant: f64,
    /// Lag on the ground-truth state fed to the law, s.
    pub filter_tau: f64,
    /// Fraction of the divert acceleration a projected demand must exceed.
    pub pulse_threshold: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self { law: GuidanceLaw::Pn, nav_constant: 3.0, filter_tau: 0.02, pulse_threshold: 1.0 / 3.0 }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nav_constant > 0.0) {
            return Err(SimError::ConfigFault("navigation constant must be positive".into()));
        }
        if !(self.filter_tau >= 0.0) {
            return Err(SimError::ConfigFault("filter time constant must be non-negative".into()));
        }
        if !(self.pulse_threshold > 0.0 && self.pulse_threshold < 1.0) {
            return Err(SimError::ConfigFault("pulse threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Zero-effort-miss acceleration command, inertial frame.
///
/// `target_accel` is only used by APN; pass `None` for PN.
pub fn zem_accel(r: &Vec3, v: &Vec3, target_accel: Option<&Vec3>, nav_constant: f64) -> Result<Vec3> {
    let range = r.norm();
    if !(range > 0.0) {
        return Err(SimError::PastIntercept(0.0));
    }
    let closing = -r.dot(v) / range;
    if !(closing > 0.0) {
        return Err(SimError::PastIntercept(closing));
    }
    let t_go = range / closing;
    let mut zem = r + v * t_go;
    if let Some(a) = target_accel {
        zem += a * (0.5 * t_go * t_go);
    }
    Ok(zem * (nav_constant / (t_go * t_go)))
}

/// Unit force direction and maximum thrust of each divert group.
pub fn divert_axes(thrusters: &[ThrusterSpec]) -> [(Vec3, f64); NUM_DIVERT] {
    let mut axes = [(Vec3::zeros(), 0.0); NUM_DIVERT];
    for t in thrusters.iter().filter(|t| t.group < NUM_DIVERT) {
        axes[t.group].0 += t.direction * t.max_thrust;
        axes[t.group].1 += t.max_thrust;
    }
    for a in axes.iter_mut() {
        if a.0.norm() > 0.0 {
            a.0 = a.0.normalize();
        }
    }
    axes
}

/// Quantizes an inertial acceleration demand to divert thruster pulses.
///
/// The demand is rotated into the body frame and projected on each divert
/// direction; a thruster fires when its signed projection exceeds
/// `threshold` times its maximum acceleration.
pub fn pulse_map(
    a_com: &Vec3,
    attitude: &Quaternion,
    mass: f64,
    thrusters: &[ThrusterSpec],
    threshold: f64,
) -> Result<ActionCommand> {
    if !(mass > 0.0) {
        return Err(SimError::InvalidArgument(format!("mass {mass} must be positive")));
    }
    let a_body = dcm_from_quat(attitude)? * *a_com;
    let mut cmd = ActionCommand::NONE;
    for (g, (dir, max_thrust)) in divert_axes(thrusters).iter().enumerate() {
        if *max_thrust > 0.0 && a_body.dot(dir) > threshold * max_thrust / mass {
            cmd.0[g] = true;
        }
    }
    Ok(cmd)
}

/// First-order lag on the relative state and target acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthFilter {
    pub tau: f64,
    pub state: Option<[f64; 9]>,
    pub last_time: f64,
}

impl TruthFilter {
    pub fn new(tau: f64) -> Self {
        Self { tau, state: None, last_time: 0.0 }
    }

    pub fn reset(&mut self) {
        self.state = None;
    }

    /// Feeds one sample; the first sample initializes the filter.
    pub fn update(&mut self, time: f64, r: &Vec3, v: &Vec3, a_t: &Vec3) -> (Vec3, Vec3, Vec3) {
        let mut input = [0.0; 9];
        input[..3].copy_from_slice(r.as_slice());
        input[3..6].copy_from_slice(v.as_slice());
        input[6..].copy_from_slice(a_t.as_slice());
        let out = match self.state {
            None => input,
            Some(prev) => {
                let dt = time - self.last_time;
                let mut s = prev;
                for (si, xi) in s.iter_mut().zip(input) {
                    *si = lag_update(*si, xi, dt, self.tau);
                }
                s
            }
        };
        self.state = Some(out);
        self.last_time = time;
        (
            Vec3::new(out[0], out[1], out[2]),
            Vec3::new(out[3], out[4], out[5]),
            Vec3::new(out[6], out[7], out[8]),
        )
    }
}

/// Proportional navigation on (lagged) ground truth, quantized to pulses.
#[derive(Debug, Clone)]
pub struct PnController {
    pub cfg: GuidanceConfig,
    pub thrusters: Vec<ThrusterSpec>,
    filter: TruthFilter,
}

impl PnController {
    pub fn new(cfg: GuidanceConfig, thrusters: Vec<ThrusterSpec>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { filter: TruthFilter::new(cfg.filter_tau), cfg, thrusters })
    }

    /// Continuous acceleration command from the current truth sample.
    pub fn command(&mut self, time: f64, truth: &TruthState) -> Result<Vec3> {
        let (r, v, a) = self.filter.update(time, &truth.relative_position, &truth.relative_velocity, &truth.target_accel);
        let aug = match self.cfg.law {
            GuidanceLaw::Pn => None,
            GuidanceLaw::Apn => Some(&a),
        };
        zem_accel(&r, &v, aug, self.cfg.nav_constant)
    }
}

impl Controller for PnController {
    fn reset(&mut self) {
        self.filter.reset();
    }

    fn act(&mut self, input: &ControlInput<'_>) -> Result<ActionCommand> {
        match self.command(input.time, &input.truth) {
            Ok(a) => pulse_map(&a, &input.truth.attitude, input.truth.mass, &self.thrusters, self.cfg.pulse_threshold),
            // Past closest approach there is nothing left to correct.
            Err(SimError::PastIntercept(_)) => Ok(ActionCommand::NONE),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airframe::{default_thrusters, Geometry};
    use crate::mathkit::{rk4_step, RngStream};
    use crate::scenario::{collision_triangle_velocity, perturb_heading};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn table() -> Vec<ThrusterSpec> {
        default_thrusters(&Geometry::default())
    }

    #[test]
    fn zem_examples() {
        let r = Vec3::new(10_000.0, 0.0, 0.0);
        let a = zem_accel(&r, &Vec3::new(-5000.0, 100.0, 0.0), None, 3.0).unwrap();
        assert_abs_diff_eq!(a, Vec3::new(0.0, 150.0, 0.0), epsilon = 1e-12);
        let null = zem_accel(&r, &Vec3::new(-5000.0, 0.0, 0.0), None, 3.0).unwrap();
        assert_eq!(null, Vec3::zeros());
        assert!(matches!(zem_accel(&r, &Vec3::new(10.0, 0.0, 0.0), None, 3.0), Err(SimError::PastIntercept(_))));
        assert!(matches!(zem_accel(&r, &Vec3::new(0.0, 5.0, 0.0), None, 3.0), Err(SimError::PastIntercept(_))));
    }

    #[test]
    fn apn_adds_target_acceleration_term() {
        let r = Vec3::new(10_000.0, 0.0, 0.0);
        let v = Vec3::new(-5000.0, 100.0, 0.0);
        let at = Vec3::new(0.0, 0.0, 20.0);
        let apn = zem_accel(&r, &v, Some(&at), 3.0).unwrap();
        // t_go = 2: extra ZEM ½·20·4 = 40 along z, times N/t_go² = 0.75.
        assert_abs_diff_eq!(apn, Vec3::new(0.0, 150.0, 30.0), epsilon = 1e-12);
        assert_eq!(zem_accel(&r, &v, Some(&Vec3::zeros()), 3.0).unwrap(), zem_accel(&r, &v, None, 3.0).unwrap());
    }

    #[test]
    fn pulse_map_examples() {
        let q = Quaternion::IDENTITY;
        let t = table();
        assert_eq!(pulse_map(&Vec3::zeros(), &q, 50.0, &t, 1.0 / 3.0).unwrap(), ActionCommand::NONE);
        let plus_y = pulse_map(&Vec3::new(0.0, 40.0, 0.0), &q, 50.0, &t, 1.0 / 3.0).unwrap();
        assert_eq!(plus_y.bits(), [0, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
        let below = pulse_map(&Vec3::new(0.0, 30.0, 0.0), &q, 50.0, &t, 1.0 / 3.0).unwrap();
        assert_eq!(below, ActionCommand::NONE);
        let two = pulse_map(&Vec3::new(0.0, -40.0, 40.0), &q, 50.0, &t, 1.0 / 3.0).unwrap();
        assert_eq!(two.bits(), [1, 0, 1, 0, 0, 0, 0, 0, 0, 0]);
        // Axial demand has no divert component.
        assert_eq!(pulse_map(&Vec3::new(500.0, 0.0, 0.0), &q, 50.0, &t, 1.0 / 3.0).unwrap(), ActionCommand::NONE);
    }

    #[test]
    fn pulse_map_uses_body_frame() {
        // Body rotated +90° about x: body +y points along inertial +z.
        let q = Quaternion::from_axis_angle(&Vec3::x(), std::f64::consts::FRAC_PI_2);
        let cmd = pulse_map(&Vec3::new(0.0, 0.0, 40.0), &q, 50.0, &table(), 1.0 / 3.0).unwrap();
        assert_eq!(cmd.bits(), [0, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
    }

    proptest! {
        #[test]
        fn pulse_map_never_fires_opposing_pairs(
            ax in -1e3f64..1e3, ay in -1e3f64..1e3, az in -1e3f64..1e3,
            q0 in -1f64..1.0, q1 in -1f64..1.0, q2 in -1f64..1.0, q3 in -1f64..1.0,
            mass in 10f64..35.0,
        ) {
            let q = Quaternion::new(q0, q1, q2, q3);
            prop_assume!(q.norm() > 1e-3);
            let cmd = pulse_map(&Vec3::new(ax, ay, az), &q.normalized(), mass, &table(), 1.0 / 3.0).unwrap();
            prop_assert!(!(cmd.is_set(0) && cmd.is_set(1)));
            prop_assert!(!(cmd.is_set(2) && cmd.is_set(3)));
            prop_assert_eq!(cmd.attitude_count(), 0);
        }
    }

    #[test]
    fn truth_filter_lag() {
        let mut f = TruthFilter::new(0.0);
        let (r, v, a) = f.update(0.0, &Vec3::new(1.0, 2.0, 3.0), &Vec3::x(), &Vec3::y());
        assert_eq!((r, v, a), (Vec3::new(1.0, 2.0, 3.0), Vec3::x(), Vec3::y()));
        let (r, _, _) = f.update(0.04, &Vec3::new(5.0, 5.0, 5.0), &Vec3::x(), &Vec3::y());
        assert_eq!(r, Vec3::new(5.0, 5.0, 5.0));

        let mut f = TruthFilter::new(0.02);
        f.update(0.0, &Vec3::zeros(), &Vec3::zeros(), &Vec3::zeros());
        let (r, _, _) = f.update(0.02, &Vec3::x(), &Vec3::zeros(), &Vec3::zeros());
        assert_abs_diff_eq!(r.x, 1.0 - (-1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.x, 0.6321, epsilon = 1e-4);
    }

    /// Point-mass relative motion with unquantized PN: the law itself
    /// nulls heading errors up to 5°.
    #[test]
    fn continuous_pn_closes_heading_error() {
        let mut rng = RngStream::new(3, 0);
        let r_t = Vec3::new(50_000.0, 3_000.0, -2_000.0);
        let v_t = Vec3::new(-4000.0, 300.0, 200.0);
        for _ in 0..20 {
            let (v_c, _) = collision_triangle_velocity(&Vec3::zeros(), &r_t, &v_t, 3000.0, None).unwrap();
            let v_m = perturb_heading(&v_c, 5f64.to_radians(), &mut rng).unwrap();
            let mut x = [0.0; 6];
            x[..3].copy_from_slice(r_t.as_slice());
            x[3..].copy_from_slice((v_t - v_m).as_slice());
            let dt = 1e-3;
            let mut best = f64::INFINITY;
            for _ in 0..20_000 {
                let r = Vec3::new(x[0], x[1], x[2]);
                let v = Vec3::new(x[3], x[4], x[5]);
                if r.dot(&v) >= 0.0 {
                    break;
                }
                let a = zem_accel(&r, &v, None, 3.0).unwrap();
                // Acceleration is held over the step, like a sampled command.
                x = rk4_step(&x, |s| [s[3], s[4], s[5], -a.x, -a.y, -a.z], dt).unwrap();
                let r1 = Vec3::new(x[0], x[1], x[2]);
                let v1 = Vec3::new(x[3], x[4], x[5]);
                let s = (-r1.dot(&v1) / v1.norm_squared()).clamp(-dt, 0.0);
                best = best.min((r1 + v1 * s).norm());
            }
            assert!(best < 0.5, "miss {best}");
        }
    }
}
