//! Ground-truth propagation: Earth gravity, target maneuvers, the missile's
//! translational and rotational equations of motion, and the dual-timestep
//! RK4 integrator that advances missile and target together.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::airframe::{
    force_torque_from_thrust, mass_flow, ActionCommand, ActuatorState, AirframeConfig, ComModel,
    InertiaModel, MassState, NUM_THRUSTERS,
};
use crate::error::{Result, SimError};
use crate::mathkit::{dcm_from_quat, orthogonal_unit, quat_derivative, rk4_step, Mat3, Quaternion, RngStream, Vec3};

/// Earth gravitational parameter, m³/s².
pub const MU_EARTH: f64 = 3.986004418e14;
/// Equatorial Earth radius, m.
pub const EARTH_RADIUS: f64 = 6_378_137.0;
/// Upper bound on target maneuver acceleration, m/s².
pub const MAX_TARGET_ACCEL: f64 = 5.0 * 9.81;

/// Point-mass Earth with the engagement frame anchored at a point given by
/// colatitude, longitude, and altitude. Frame axes are parallel to the
/// Earth-centered axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityModel {
    pub mu: f64,
    pub earth_radius: f64,
    /// Angle from the +z (polar) axis, rad.
    pub colatitude: f64,
    pub longitude: f64,
    /// Anchor altitude above `earth_radius`, m.
    pub altitude: f64,
}

impl GravityModel {
    /// Intercept over the pole at 50 km.
    pub fn polar() -> Self {
        Self {
            mu: MU_EARTH,
            earth_radius: EARTH_RADIUS,
            colatitude: 0.0,
            longitude: 0.0,
            altitude: 50_000.0,
        }
    }

    /// Intercept over latitude and longitude zero at 1000 km.
    pub fn equatorial() -> Self {
        Self { colatitude: PI / 2.0, altitude: 1.0e6, ..Self::polar() }
    }

    /// Position of the engagement-frame origin in Earth-centered axes.
    pub fn anchor(&self) -> Vec3 {
        let rho = self.earth_radius + self.altitude;
        Vec3::new(
            rho * self.colatitude.sin() * self.longitude.cos(),
            rho * self.colatitude.sin() * self.longitude.sin(),
            rho * self.colatitude.cos(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !(self.earth_radius > 0.0) {
            return Err(SimError::ConfigFault("gravity model needs mu > 0 and R > 0".into()));
        }
        Ok(())
    }
}

/// `g = −μ (r_E + r)/‖r_E + r‖³`.
pub fn gravity_accel(position: &Vec3, model: &GravityModel) -> Result<Vec3> {
    let r = model.anchor() + position;
    let n = r.norm();
    if !(n > 0.0) {
        return Err(SimError::DegenerateGeometry("position at Earth's center".into()));
    }
    Ok(-model.mu * r / (n * n * n))
}

fn gravity_or_zero(position: &Vec3, model: Option<&GravityModel>) -> Vec3 {
    match model {
        Some(m) => {
            let r = m.anchor() + position;
            let n = r.norm();
            -m.mu * r / (n * n * n)
        }
        None => Vec3::zeros(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManeuverKind {
    None,
    BangBang,
    VerticalS,
    BarrelRoll,
}

/// Target maneuver schedule.
///
/// `start` is the bang-bang initiation time or the weave/roll offset.
/// `lateral` and `quadrature` are orthonormal and perpendicular to the
/// target velocity at homing start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverSpec {
    pub kind: ManeuverKind,
    pub accel: f64,
    pub start: f64,
    pub duration: f64,
    pub period: f64,
    pub lateral: Vec3,
    pub quadrature: Vec3,
}

impl ManeuverSpec {
    pub fn none() -> Self {
        Self {
            kind: ManeuverKind::None,
            accel: 0.0,
            start: 0.0,
            duration: 0.0,
            period: 1.0,
            lateral: Vec3::y(),
            quadrature: Vec3::z(),
        }
    }

    /// Builds a schedule whose lateral direction sits at `phase` around the
    /// circle perpendicular to `target_velocity`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_phase(
        kind: ManeuverKind,
        accel: f64,
        start: f64,
        duration: f64,
        period: f64,
        target_velocity: &Vec3,
        phase: f64,
    ) -> Result<Self> {
        let speed = target_velocity.norm();
        if !(speed > 0.0) {
            return Err(SimError::InvalidArgument("maneuver needs a moving target".into()));
        }
        if !(0.0..=MAX_TARGET_ACCEL + 1e-9).contains(&accel) {
            return Err(SimError::InvalidArgument(format!("maneuver acceleration {accel} out of range")));
        }
        if matches!(kind, ManeuverKind::VerticalS | ManeuverKind::BarrelRoll) && !(period > 0.0) {
            return Err(SimError::InvalidArgument("maneuver period must be positive".into()));
        }
        let along = target_velocity / speed;
        let e1 = orthogonal_unit(&along);
        let e2 = along.cross(&e1);
        let lateral = e1 * phase.cos() + e2 * phase.sin();
        let quadrature = along.cross(&lateral);
        Ok(Self { kind, accel, start, duration, period, lateral, quadrature })
    }

    /// Same as [`ManeuverSpec::with_phase`] with the phase drawn uniformly.
    #[allow(clippy::too_many_arguments)]
    pub fn random(
        kind: ManeuverKind,
        accel: f64,
        start: f64,
        duration: f64,
        period: f64,
        target_velocity: &Vec3,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let phase = rng.uniform(0.0, 2.0 * PI);
        Self::with_phase(kind, accel, start, duration, period, target_velocity, phase)
    }

    /// Unprojected commanded acceleration direction scaled by magnitude.
    fn raw(&self, t: f64) -> Vec3 {
        match self.kind {
            ManeuverKind::None => Vec3::zeros(),
            ManeuverKind::BangBang => {
                let s = t - self.start;
                if s < 0.0 || s >= 2.0 * self.duration {
                    Vec3::zeros()
                } else if s < self.duration {
                    self.lateral * self.accel
                } else {
                    -self.lateral * self.accel
                }
            }
            ManeuverKind::VerticalS => {
                let s = t - self.start;
                if s < 0.0 {
                    return Vec3::zeros();
                }
                let half = (s / (0.5 * self.period)).floor() as i64;
                let sign = if half % 2 == 0 { 1.0 } else { -1.0 };
                self.lateral * (sign * self.accel)
            }
            ManeuverKind::BarrelRoll => {
                let s = t - self.start;
                if s < 0.0 {
                    return Vec3::zeros();
                }
                let phase = 2.0 * PI * s / self.period;
                (self.lateral * phase.cos() + self.quadrature * phase.sin()) * self.accel
            }
        }
    }
}

/// Commanded target acceleration, kept perpendicular to the current
/// target velocity.
pub fn target_accel(spec: &ManeuverSpec, t: f64, target_velocity: &Vec3) -> Vec3 {
    let raw = spec.raw(t);
    let mag = raw.norm();
    if mag == 0.0 {
        return raw;
    }
    let speed = target_velocity.norm();
    if !(speed > 0.0) {
        return raw;
    }
    let along = target_velocity / speed;
    let perp = raw - along * raw.dot(&along);
    let n = perp.norm();
    if n < 1e-12 * mag {
        Vec3::zeros()
    } else {
        perp * (mag / n)
    }
}

/// Integration step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub coarse_dt: f64,
    pub fine_dt: f64,
    /// Range below which the fine step is used for the rest of the episode, m.
    pub fine_range: f64,
    pub guidance_dt: f64,
}

impl Default for SimClock {
    fn default() -> Self {
        Self { coarse_dt: 0.020, fine_dt: 6.7e-5, fine_range: 1000.0, guidance_dt: 0.040 }
    }
}

impl SimClock {
    pub fn validate(&self) -> Result<()> {
        if !(self.coarse_dt > 0.0 && self.fine_dt > 0.0 && self.guidance_dt > 0.0) {
            return Err(SimError::ConfigFault("clock steps must be positive".into()));
        }
        let ratio = self.guidance_dt / self.coarse_dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(SimError::ConfigFault(format!(
                "guidance dt {} is not a multiple of coarse dt {}",
                self.guidance_dt, self.coarse_dt
            )));
        }
        Ok(())
    }

    /// Coarse substeps per guidance period.
    pub fn coarse_per_guidance(&self) -> usize {
        (self.guidance_dt / self.coarse_dt).round() as usize
    }
}

/// Full ground-truth state of one engagement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementState {
    pub missile_position: Vec3,
    pub missile_velocity: Vec3,
    /// Body-to-inertial attitude.
    pub attitude: Quaternion,
    /// Body-axis rotational velocity, rad/s.
    pub omega: Vec3,
    pub mass: MassState,
    pub actuator: ActuatorState,
    pub target_position: Vec3,
    pub target_velocity: Vec3,
    pub time: f64,
}

impl EngagementState {
    pub fn relative_position(&self) -> Vec3 {
        self.target_position - self.missile_position
    }

    pub fn relative_velocity(&self) -> Vec3 {
        self.target_velocity - self.missile_velocity
    }

    pub fn range(&self) -> f64 {
        self.relative_position().norm()
    }

    /// `v_c = −r·v/‖r‖`.
    pub fn closing_velocity(&self) -> f64 {
        let r = self.relative_position();
        -r.dot(&self.relative_velocity()) / r.norm()
    }

    pub fn is_finite(&self) -> bool {
        let vecs = [
            self.missile_position,
            self.missile_velocity,
            self.omega,
            self.target_position,
            self.target_velocity,
        ];
        vecs.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.attitude.is_finite()
            && self.mass.mass.is_finite()
            && self.time.is_finite()
    }
}

/// Everything the propagator needs besides the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    pub airframe: AirframeConfig,
    pub inertia: InertiaModel,
    pub com_model: ComModel,
    /// `None` switches gravity off.
    pub gravity: Option<GravityModel>,
    /// Thruster ignition time constant τ_u, s; zero bypasses the lag.
    pub ignition_lag: f64,
    /// `false` freezes attitude (translational benchmark mode).
    pub rotational: bool,
    pub clock: SimClock,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            airframe: AirframeConfig::default(),
            inertia: InertiaModel::default(),
            com_model: ComModel::FuelDrift { offset: Vec3::zeros() },
            gravity: Some(GravityModel::polar()),
            ignition_lag: 0.020,
            rotational: true,
            clock: SimClock::default(),
        }
    }
}

/// Instantaneous rates of the missile's rigid-body state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissileRates {
    pub position: Vec3,
    pub velocity: Vec3,
    pub attitude: Quaternion,
    pub omega: Vec3,
    pub mass: f64,
}

/// `J ω̇ = −ω × (J ω) − J̇ ω + L`.
pub fn euler_rotation(omega: &Vec3, inertia: &Mat3, inertia_inv: &Mat3, inertia_rate: &Mat3, torque: &Vec3) -> Vec3 {
    inertia_inv * (-omega.cross(&(inertia * omega)) - inertia_rate * omega + torque)
}

/// Missile rates from the lagged actuator outputs held in `state`.
pub fn missile_derivatives(
    state: &EngagementState,
    gravity: Option<&GravityModel>,
    isp: f64,
    rotational: bool,
) -> Result<MissileRates> {
    let inv = state
        .mass
        .inertia
        .try_inverse()
        .ok_or_else(|| SimError::DynamicsFault("singular inertia tensor".into()))?;
    let c_bn = dcm_from_quat(&state.attitude)?;
    let force_n = c_bn.matrix().transpose() * state.actuator.force;
    let (omega_dot, q_dot) = if rotational {
        (
            euler_rotation(&state.omega, &state.mass.inertia, &inv, &state.mass.inertia_rate, &state.actuator.torque),
            quat_derivative(&state.attitude, &state.omega),
        )
    } else {
        (Vec3::zeros(), Quaternion::new(0.0, 0.0, 0.0, 0.0))
    };
    Ok(MissileRates {
        position: state.missile_velocity,
        velocity: force_n / state.mass.mass + gravity_or_zero(&state.missile_position, gravity),
        attitude: q_dot,
        omega: omega_dot,
        mass: mass_flow(&state.actuator.thrust, isp),
    })
}

// Packed layout used by the integrator.
const R_M: usize = 0;
const V_M: usize = 3;
const Q: usize = 6;
const W: usize = 10;
const MASS: usize = 13;
const F: usize = 14;
const L: usize = 17;
const T: usize = 20;
const R_T: usize = T + NUM_THRUSTERS;
const V_T: usize = R_T + 3;
const TIME: usize = V_T + 3;
/// Packed state length.
pub const STATE_LEN: usize = TIME + 1;

fn get3(x: &[f64; STATE_LEN], i: usize) -> Vec3 {
    Vec3::new(x[i], x[i + 1], x[i + 2])
}

fn put3(x: &mut [f64; STATE_LEN], i: usize, v: &Vec3) {
    x[i] = v.x;
    x[i + 1] = v.y;
    x[i + 2] = v.z;
}

fn pack(s: &EngagementState) -> [f64; STATE_LEN] {
    let mut x = [0.0; STATE_LEN];
    put3(&mut x, R_M, &s.missile_position);
    put3(&mut x, V_M, &s.missile_velocity);
    x[Q..Q + 4].copy_from_slice(&s.attitude.to_array());
    put3(&mut x, W, &s.omega);
    x[MASS] = s.mass.mass;
    put3(&mut x, F, &s.actuator.force);
    put3(&mut x, L, &s.actuator.torque);
    x[T..T + NUM_THRUSTERS].copy_from_slice(&s.actuator.thrust);
    put3(&mut x, R_T, &s.target_position);
    put3(&mut x, V_T, &s.target_velocity);
    x[TIME] = s.time;
    x
}

/// Name of a packed state component, for fault reports.
pub fn state_component_name(index: usize) -> String {
    let (name, base) = match index {
        i if i < V_M => ("missile_position", R_M),
        i if i < Q => ("missile_velocity", V_M),
        i if i < W => ("attitude", Q),
        i if i < MASS => ("omega", W),
        MASS => ("mass", MASS),
        i if i < L => ("force", F),
        i if i < T => ("torque", L),
        i if i < R_T => ("thrust", T),
        i if i < V_T => ("target_position", R_T),
        i if i < TIME => ("target_velocity", V_T),
        _ => ("time", TIME),
    };
    format!("{name}[{}]", index - base)
}

/// Inputs held constant across one integration step.
struct StepInputs<'a> {
    thrust_cmd: [f64; NUM_THRUSTERS],
    force_cmd: Vec3,
    torque_cmd: Vec3,
    inertia: Mat3,
    inertia_inv: Mat3,
    inertia_rate: Mat3,
    cfg: &'a DynamicsConfig,
    maneuver: &'a ManeuverSpec,
}

fn packed_derivative(x: &[f64; STATE_LEN], inp: &StepInputs<'_>) -> [f64; STATE_LEN] {
    let mut d = [0.0; STATE_LEN];
    let cfg = inp.cfg;
    let gravity = cfg.gravity.as_ref();
    let r_m = get3(x, R_M);
    let v_m = get3(x, V_M);
    let q = Quaternion::from_array([x[Q], x[Q + 1], x[Q + 2], x[Q + 3]]);
    let omega = get3(x, W);
    let mass = x[MASS];
    let force = get3(x, F);
    let torque = get3(x, L);

    put3(&mut d, R_M, &v_m);
    // Mid-step quaternions are not unit norm; the rotation matrix of the
    // unnormalized value keeps RK4's polynomial structure.
    let body_to_inertial = q.rotation_matrix();
    let accel = body_to_inertial * force / mass + gravity_or_zero(&r_m, gravity);
    put3(&mut d, V_M, &accel);
    if cfg.rotational {
        d[Q..Q + 4].copy_from_slice(&quat_derivative(&q, &omega).to_array());
        let wdot = euler_rotation(&omega, &inp.inertia, &inp.inertia_inv, &inp.inertia_rate, &torque);
        put3(&mut d, W, &wdot);
    }
    d[MASS] = mass_flow(&x[T..T + NUM_THRUSTERS], cfg.airframe.isp);

    let tau = cfg.ignition_lag;
    if tau > 0.0 {
        put3(&mut d, F, &((inp.force_cmd - force) / tau));
        put3(&mut d, L, &((inp.torque_cmd - torque) / tau));
        for i in 0..NUM_THRUSTERS {
            d[T + i] = (inp.thrust_cmd[i] - x[T + i]) / tau;
        }
    }

    let v_t = get3(x, V_T);
    let a_t = target_accel(inp.maneuver, x[TIME], &v_t) + gravity_or_zero(&get3(x, R_T), gravity);
    put3(&mut d, R_T, &v_t);
    put3(&mut d, V_T, &a_t);
    d[TIME] = 1.0;
    d
}

/// Owns the ground-truth state of one episode and advances it.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub cfg: DynamicsConfig,
    pub maneuver: ManeuverSpec,
    state: EngagementState,
    fine: bool,
    rng: RngStream,
}

impl Simulator {
    /// `rng` feeds the per-step center-of-mass redraws of the slosh model.
    pub fn new(
        cfg: DynamicsConfig,
        maneuver: ManeuverSpec,
        missile_position: Vec3,
        missile_velocity: Vec3,
        attitude: Quaternion,
        target_position: Vec3,
        target_velocity: Vec3,
        mut rng: RngStream,
    ) -> Result<Self> {
        cfg.clock.validate()?;
        if let Some(g) = &cfg.gravity {
            g.validate()?;
        }
        if !(cfg.ignition_lag >= 0.0) {
            return Err(SimError::ConfigFault("ignition lag must be non-negative".into()));
        }
        if !(cfg.airframe.isp > 0.0) || !(cfg.airframe.dry_mass > 0.0) {
            return Err(SimError::ConfigFault("isp and dry mass must be positive".into()));
        }
        let mut mass = MassState::full(&cfg.airframe, &cfg.inertia, &cfg.com_model);
        mass.com = cfg.com_model.evaluate(0.0, &cfg.airframe, &mut rng)?;
        if mass.inertia.try_inverse().is_none() {
            return Err(SimError::DynamicsFault("singular inertia tensor".into()));
        }
        let state = EngagementState {
            missile_position,
            missile_velocity,
            attitude: attitude.normalized(),
            omega: Vec3::zeros(),
            mass,
            actuator: ActuatorState::at_rest(cfg.ignition_lag),
            target_position,
            target_velocity,
            time: 0.0,
        };
        if !state.is_finite() {
            return Err(SimError::InvalidArgument("non-finite initial state".into()));
        }
        Ok(Self { cfg, maneuver, state, fine: false, rng })
    }

    pub fn state(&self) -> &EngagementState {
        &self.state
    }

    /// Overrides the rotational velocity (scripted tests and benchmarks).
    pub fn set_omega(&mut self, omega: Vec3) {
        self.state.omega = omega;
    }

    pub fn in_fine_phase(&self) -> bool {
        self.fine
    }

    pub fn fuel_exhausted(&self) -> bool {
        self.state.mass.fuel_used >= self.cfg.airframe.fuel_capacity
    }

    /// Current commanded target acceleration (ground truth).
    pub fn target_accel(&self) -> Vec3 {
        target_accel(&self.maneuver, self.state.time, &self.state.target_velocity)
    }

    /// Step size the next substep will use before clipping to a boundary.
    pub fn nominal_dt(&self) -> f64 {
        if self.fine || self.state.range() <= self.cfg.clock.fine_range {
            self.cfg.clock.fine_dt
        } else {
            self.cfg.clock.coarse_dt
        }
    }

    /// Advances one substep holding `cmd`, never past `until`. Returns the
    /// step size taken.
    pub fn substep(&mut self, cmd: &ActionCommand, until: f64) -> Result<f64> {
        if !self.fine && self.state.range() <= self.cfg.clock.fine_range {
            self.fine = true;
        }
        let remaining = until - self.state.time;
        if !(remaining > 0.0) {
            return Err(SimError::InvalidArgument(format!("substep end {until} is not ahead of t = {}", self.state.time)));
        }
        let nominal = self.nominal_dt();
        // Fold a sliver of leftover time into this step instead of taking a
        // separate tiny step.
        let dt = if remaining <= nominal * (1.0 + 1e-6) { remaining } else { nominal };

        let airframe = &self.cfg.airframe;
        let thrust_cmd = if self.fuel_exhausted() {
            [0.0; NUM_THRUSTERS]
        } else {
            cmd.thrust_command(&airframe.thrusters)
        };
        let (force_cmd, mut torque_cmd) =
            force_torque_from_thrust(&thrust_cmd, &self.state.mass.com, &airframe.thrusters);
        if !self.cfg.rotational {
            torque_cmd = Vec3::zeros();
        }
        if self.cfg.ignition_lag == 0.0 {
            self.state.actuator.force = force_cmd;
            self.state.actuator.torque = torque_cmd;
            self.state.actuator.thrust = thrust_cmd;
        }
        let inertia_inv = self
            .state
            .mass
            .inertia
            .try_inverse()
            .ok_or_else(|| SimError::DynamicsFault("singular inertia tensor".into()))?;
        let inputs = StepInputs {
            thrust_cmd,
            force_cmd,
            torque_cmd,
            inertia: self.state.mass.inertia,
            inertia_inv,
            inertia_rate: self.state.mass.inertia_rate,
            cfg: &self.cfg,
            maneuver: &self.maneuver,
        };
        let x0 = pack(&self.state);
        let t0 = self.state.time;
        let x = rk4_step(&x0, |x| packed_derivative(x, &inputs), dt).map_err(|e| match e {
            SimError::IntegrationFault { index, .. } => SimError::IntegrationFault { index, time: Some(t0) },
            other => other,
        })?;

        let s = &mut self.state;
        s.missile_position = get3(&x, R_M);
        s.missile_velocity = get3(&x, V_M);
        s.attitude = Quaternion::from_array([x[Q], x[Q + 1], x[Q + 2], x[Q + 3]]).normalized();
        s.omega = get3(&x, W);
        s.actuator.force = get3(&x, F);
        s.actuator.torque = get3(&x, L);
        s.actuator.thrust.copy_from_slice(&x[T..T + NUM_THRUSTERS]);
        s.target_position = get3(&x, R_T);
        s.target_velocity = get3(&x, V_T);
        s.time = if dt == remaining { until } else { t0 + dt };
        s.mass.refresh(x[MASS], dt, &self.cfg.airframe, &self.cfg.inertia, &self.cfg.com_model, &mut self.rng)?;
        if s.mass.fuel_used >= self.cfg.airframe.fuel_capacity {
            s.actuator = ActuatorState::at_rest(self.cfg.ignition_lag);
        }
        if !s.is_finite() {
            return Err(SimError::IntegrationFault { index: 0, time: Some(t0) });
        }
        Ok(dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airframe::{nominal_inertia, NUM_GROUPS};
    use approx::assert_abs_diff_eq;

    fn quiet_config() -> DynamicsConfig {
        DynamicsConfig { gravity: None, ..DynamicsConfig::default() }
    }

    fn sim(cfg: DynamicsConfig, rm: Vec3, vm: Vec3, rt: Vec3, vt: Vec3) -> Simulator {
        Simulator::new(cfg, ManeuverSpec::none(), rm, vm, Quaternion::IDENTITY, rt, vt, RngStream::new(3, 0)).unwrap()
    }

    #[test]
    fn gravity_examples() {
        let polar = GravityModel::polar();
        let g = gravity_accel(&Vec3::zeros(), &polar).unwrap();
        let expected = MU_EARTH / (EARTH_RADIUS + 50_000.0).powi(2);
        assert_abs_diff_eq!(g.norm(), expected, epsilon = 1e-12);
        assert!((g.norm() - 9.647).abs() < 1e-3);
        assert_abs_diff_eq!(g.normalize(), -Vec3::z(), epsilon = 1e-15);

        let eq = gravity_accel(&Vec3::zeros(), &GravityModel::equatorial()).unwrap();
        assert_abs_diff_eq!(eq.norm(), MU_EARTH / (EARTH_RADIUS + 1.0e6).powi(2), epsilon = 1e-12);
        assert!((eq.norm() - 7.33).abs() < 0.01);
        assert!(eq.x < 0.0 && eq.y.abs() < 1e-9 && eq.z.abs() < 1e-9);
    }

    #[test]
    fn gravity_same_radius_points_match() {
        let m = GravityModel::polar();
        let rho = m.earth_radius + m.altitude;
        // Two points on the same sphere 50 km apart.
        let ang = 50_000.0 / rho;
        let a = Vec3::new(rho * ang.sin(), 0.0, rho * ang.cos()) - m.anchor();
        let ga = gravity_accel(&Vec3::zeros(), &m).unwrap().norm();
        let gb = gravity_accel(&a, &m).unwrap().norm();
        assert!(((ga - gb) / ga).abs() < 0.016);
        assert!(((ga - gb) / ga).abs() < 1e-9);
        let below = gravity_accel(&Vec3::new(0.0, 0.0, -50_000.0), &m).unwrap().norm();
        assert!(((below - ga) / ga).abs() < 0.016);
    }

    #[test]
    fn gravity_at_center_is_fault() {
        let m = GravityModel::polar();
        assert!(gravity_accel(&-m.anchor(), &m).is_err());
    }

    #[test]
    fn bang_bang_schedule() {
        let v = Vec3::new(-4000.0, 0.0, 0.0);
        let spec = ManeuverSpec::with_phase(ManeuverKind::BangBang, 49.05, 2.0, 3.0, 1.0, &v, 0.3).unwrap();
        assert_eq!(target_accel(&spec, 1.0, &v), Vec3::zeros());
        assert_abs_diff_eq!(target_accel(&spec, 3.0, &v), spec.lateral * 49.05, epsilon = 1e-12);
        assert_abs_diff_eq!(target_accel(&spec, 6.0, &v), -spec.lateral * 49.05, epsilon = 1e-12);
        assert_eq!(target_accel(&spec, 9.0, &v), Vec3::zeros());
        assert_eq!(target_accel(&ManeuverSpec::none(), 3.0, &v), Vec3::zeros());
    }

    #[test]
    fn vertical_s_flips_every_half_period() {
        let v = Vec3::new(-4000.0, 100.0, 0.0);
        let spec = ManeuverSpec::with_phase(ManeuverKind::VerticalS, 20.0, 1.0, 0.0, 2.0, &v, 1.0).unwrap();
        assert_eq!(target_accel(&spec, 0.5, &v), Vec3::zeros());
        let a1 = target_accel(&spec, 1.5, &v);
        let a2 = target_accel(&spec, 2.5, &v);
        let a3 = target_accel(&spec, 3.5, &v);
        assert_abs_diff_eq!(a1, -a2, epsilon = 1e-12);
        assert_abs_diff_eq!(a1, a3, epsilon = 1e-12);
        assert_abs_diff_eq!(a1.norm(), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn barrel_roll_orthogonal_constant_magnitude() {
        let mut rng = RngStream::new(9, 9);
        let v0 = Vec3::new(-3900.0, 500.0, 300.0);
        let spec = ManeuverSpec::random(ManeuverKind::BarrelRoll, 30.0, 1.0, 0.0, 2.5, &v0, &mut rng).unwrap();
        for k in 0..200 {
            let t = 1.0 + 0.037 * k as f64;
            // Velocity drifts away from its initial direction.
            let v = v0 + Vec3::new(0.0, 10.0 * t, -7.0 * t);
            let a = target_accel(&spec, t, &v);
            assert!(a.dot(&v).abs() < 1e-9 * v.norm() * a.norm().max(1.0));
            assert_abs_diff_eq!(a.norm(), 30.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn maneuver_rejects_bad_inputs() {
        let v = Vec3::new(-4000.0, 0.0, 0.0);
        assert!(ManeuverSpec::with_phase(ManeuverKind::BangBang, 60.0, 0.0, 1.0, 1.0, &v, 0.0).is_err());
        assert!(ManeuverSpec::with_phase(ManeuverKind::BangBang, 10.0, 0.0, 1.0, 1.0, &Vec3::zeros(), 0.0).is_err());
        assert!(ManeuverSpec::with_phase(ManeuverKind::VerticalS, 10.0, 0.0, 1.0, 0.0, &v, 0.0).is_err());
    }

    #[test]
    fn zero_thrust_rates() {
        let cfg = quiet_config();
        let s = sim(cfg, Vec3::zeros(), Vec3::new(3.0, 2.0, 1.0), Vec3::new(5e4, 0.0, 0.0), Vec3::zeros());
        let r = missile_derivatives(s.state(), None, 250.0, true).unwrap();
        assert_eq!(r.position, Vec3::new(3.0, 2.0, 1.0));
        assert_eq!(r.velocity, Vec3::zeros());
        assert_eq!(r.omega, Vec3::zeros());
        assert_eq!(r.attitude.to_array(), [0.0; 4]);
        assert_eq!(r.mass, 0.0);
    }

    fn brute_force_euler(j: &Mat3, jdot: &Mat3, w: &Vec3, l: &Vec3) -> Vec3 {
        // Solve J x = rhs by Cramer's rule with an explicitly expanded rhs.
        let jw = [
            j[(0, 0)] * w[0] + j[(0, 1)] * w[1] + j[(0, 2)] * w[2],
            j[(1, 0)] * w[0] + j[(1, 1)] * w[1] + j[(1, 2)] * w[2],
            j[(2, 0)] * w[0] + j[(2, 1)] * w[1] + j[(2, 2)] * w[2],
        ];
        let cross = [w[1] * jw[2] - w[2] * jw[1], w[2] * jw[0] - w[0] * jw[2], w[0] * jw[1] - w[1] * jw[0]];
        let mut rhs = [0.0; 3];
        for i in 0..3 {
            let jdw = jdot[(i, 0)] * w[0] + jdot[(i, 1)] * w[1] + jdot[(i, 2)] * w[2];
            rhs[i] = -cross[i] - jdw + l[i];
        }
        let det = j.determinant();
        let mut out = Vec3::zeros();
        for c in 0..3 {
            let mut m = *j;
            for r in 0..3 {
                m[(r, c)] = rhs[r];
            }
            out[c] = m.determinant() / det;
        }
        out
    }

    #[test]
    fn euler_equation_examples() {
        let j = nominal_inertia(50.0, 0.25, 1.0);
        let inv = j.try_inverse().unwrap();
        let zero = Mat3::zeros();
        let spin = euler_rotation(&Vec3::new(1.0, 0.0, 0.0), &j, &inv, &zero, &Vec3::zeros());
        assert_eq!(spin, Vec3::zeros());
        let w = Vec3::new(0.0, 1.0, 1.0);
        let got = euler_rotation(&w, &j, &inv, &zero, &Vec3::zeros());
        assert_abs_diff_eq!(got.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(got, brute_force_euler(&j, &zero, &w, &Vec3::zeros()), epsilon = 1e-12);

        let mut jp = j;
        jp[(0, 1)] = 0.1;
        jp[(1, 0)] = 0.1;
        jp[(1, 2)] = -0.05;
        jp[(2, 1)] = -0.05;
        let jdot = -j * 0.3;
        let w = Vec3::new(0.4, -1.2, 2.0);
        let l = Vec3::new(-62.5, 10.0, 125.0);
        let got = euler_rotation(&w, &jp, &jp.try_inverse().unwrap(), &jdot, &l);
        assert_abs_diff_eq!(got, brute_force_euler(&jp, &jdot, &w, &l), epsilon = 1e-12);
    }

    #[test]
    fn singular_inertia_is_dynamics_fault() {
        let cfg = quiet_config();
        let mut s = sim(cfg, Vec3::zeros(), Vec3::x(), Vec3::new(5e4, 0.0, 0.0), Vec3::zeros());
        s.state.mass.inertia = Mat3::zeros();
        assert!(matches!(missile_derivatives(s.state(), None, 250.0, true), Err(SimError::DynamicsFault(_))));
        assert!(matches!(s.substep(&ActionCommand::NONE, 0.04), Err(SimError::DynamicsFault(_))));
    }

    #[test]
    fn free_drift_is_linear() {
        let cfg = quiet_config();
        let v = Vec3::new(3000.0, -20.0, 5.0);
        let vt = Vec3::new(-4000.0, 0.0, 0.0);
        let rt = Vec3::new(50_000.0, 0.0, 0.0);
        let mut s = sim(cfg, Vec3::zeros(), v, rt, vt);
        for k in 1..=50 {
            let until = 0.04 * k as f64;
            while s.state().time < until {
                s.substep(&ActionCommand::NONE, until).unwrap();
            }
        }
        let t = s.state().time;
        assert_eq!(t, 2.0);
        assert_abs_diff_eq!(s.state().missile_position, v * t, epsilon = 1e-9);
        assert_abs_diff_eq!(s.state().target_position, rt + vt * t, epsilon = 1e-9);
        assert_eq!(s.state().mass.mass, 35.0);
    }

    #[test]
    fn fine_step_after_range_crossing() {
        let cfg = quiet_config();
        // Closing at 7000 m/s from 1200 m: crosses 1000 m during the second substep.
        let mut s = sim(cfg, Vec3::zeros(), Vec3::new(3000.0, 0.0, 0.0), Vec3::new(1200.0, 0.0, 0.0), Vec3::new(-4000.0, 0.0, 0.0));
        let dt1 = s.substep(&ActionCommand::NONE, 1.0).unwrap();
        assert_eq!(dt1, 0.02);
        assert!(s.state().range() > 1000.0);
        let dt2 = s.substep(&ActionCommand::NONE, 1.0).unwrap();
        assert_eq!(dt2, 0.02);
        assert!(s.state().range() <= 1000.0);
        assert!(!s.in_fine_phase());
        let dt3 = s.substep(&ActionCommand::NONE, 1.0).unwrap();
        assert_eq!(dt3, 6.7e-5);
        assert!(s.in_fine_phase());
    }

    #[test]
    fn last_substep_lands_on_boundary() {
        let cfg = quiet_config();
        let mut s = sim(cfg, Vec3::zeros(), Vec3::new(3000.0, 0.0, 0.0), Vec3::new(500.0, 0.0, 0.0), Vec3::zeros());
        let mut steps = 0;
        while s.state().time < 0.04 {
            s.substep(&ActionCommand::NONE, 0.04).unwrap();
            steps += 1;
        }
        assert_eq!(s.state().time, 0.04);
        assert_eq!(steps, 598);
    }

    #[test]
    fn thrust_uses_fuel_and_exhaustion_stops_it() {
        let mut cfg = quiet_config();
        cfg.rotational = false;
        let cfg_isp = cfg.airframe.isp;
        let mut s = sim(cfg, Vec3::zeros(), Vec3::zeros(), Vec3::new(5e4, 0.0, 0.0), Vec3::zeros());
        let mut cmd = ActionCommand::NONE;
        cmd.0[1] = true;
        let mut k = 0;
        while !s.fuel_exhausted() {
            k += 1;
            s.substep(&cmd, 0.02 * k as f64).unwrap();
            assert!(k < 1000);
        }
        assert_eq!(s.state().mass.mass, 10.0);
        let v = s.state().missile_velocity;
        assert!(v.y > 0.0);
        k += 1;
        s.substep(&cmd, 0.02 * k as f64).unwrap();
        assert_eq!(s.state().missile_velocity, v);
        assert_eq!(s.state().mass.mass, 10.0);
        // Burn time ≈ capacity / flow for one divert thruster.
        let burn = 25.0 / (5000.0 / (cfg_isp * 9.81));
        assert!(((k - 1) as f64 * 0.02 - burn).abs() < 0.1);
    }

    #[test]
    fn divert_through_com_does_not_rotate() {
        let cfg = quiet_config();
        let mut s = sim(cfg, Vec3::zeros(), Vec3::zeros(), Vec3::new(5e4, 0.0, 0.0), Vec3::zeros());
        let cmd = ActionCommand([true, false, true, false, false, false, false, false, false, false]);
        for k in 1..100 {
            s.substep(&cmd, 0.02 * k as f64).unwrap();
        }
        assert_eq!(s.state().omega, Vec3::zeros());
        assert_eq!(s.state().attitude, Quaternion::IDENTITY);
        assert!(s.state().mass.mass < 35.0);
    }

    fn momentum(s: &EngagementState) -> Vec3 {
        s.attitude.rotation_matrix() * (s.mass.inertia * s.omega)
    }

    #[test]
    fn torque_free_tumble_conserves_momentum() {
        let mut cfg = quiet_config();
        cfg.inertia.off_diagonal = Vec3::new(0.2, -0.1, 0.05);
        let mut s = sim(cfg, Vec3::zeros(), Vec3::zeros(), Vec3::new(5e4, 0.0, 0.0), Vec3::zeros());
        s.set_omega(Vec3::new(1.3, -0.7, 2.1));
        let h0 = momentum(s.state());
        let mut max_drift: f64 = 0.0;
        for k in 1..=500 {
            s.substep(&ActionCommand::NONE, 0.02 * k as f64).unwrap();
            max_drift = max_drift.max((momentum(s.state()) - h0).norm() / h0.norm());
            assert!((s.state().attitude.norm() - 1.0).abs() < 1e-12);
        }
        assert!(max_drift < 1e-6, "{max_drift}");
    }

    #[test]
    fn maneuver_only_turns_target() {
        let cfg = DynamicsConfig { gravity: None, ..DynamicsConfig::default() };
        let vt = Vec3::new(-4000.0, 300.0, -200.0);
        let spec = ManeuverSpec::with_phase(ManeuverKind::BarrelRoll, MAX_TARGET_ACCEL, 0.0, 0.0, 1.5, &vt, 0.7).unwrap();
        let mut s = Simulator::new(cfg, spec, Vec3::zeros(), Vec3::zeros(), Quaternion::IDENTITY, Vec3::new(5e4, 0.0, 0.0), vt, RngStream::new(0, 0)).unwrap();
        for k in 1..=100 {
            let before = s.state().target_velocity.norm();
            s.substep(&ActionCommand::NONE, 0.02 * k as f64).unwrap();
            let after = s.state().target_velocity.norm();
            // Speed change from a perpendicular push is second order in dt.
            let bound = 1e-6 * MAX_TARGET_ACCEL * 0.02 + (MAX_TARGET_ACCEL * 0.02).powi(2) / before;
            assert!((after - before).abs() < bound, "{}", after - before);
        }
    }

    #[test]
    fn propagation_is_bit_deterministic() {
        let run = || {
            let mut cfg = DynamicsConfig::default();
            cfg.com_model = ComModel::Slosh { bound_fraction: 0.025 };
            let vt = Vec3::new(-4000.0, 10.0, 0.0);
            let spec = ManeuverSpec::with_phase(ManeuverKind::VerticalS, 20.0, 0.1, 0.0, 1.0, &vt, 0.2).unwrap();
            let mut s = Simulator::new(cfg, spec, Vec3::zeros(), Vec3::new(3000.0, 0.0, 0.0), Quaternion::IDENTITY, Vec3::new(5e4, 0.0, 0.0), vt, RngStream::new(11, 4)).unwrap();
            let mut cmd = ActionCommand::NONE;
            for k in 1..=60 {
                cmd.0[k % NUM_GROUPS] = !cmd.0[k % NUM_GROUPS];
                let until = 0.04 * k as f64;
                while s.state().time < until {
                    s.substep(&cmd, until).unwrap();
                }
            }
            *s.state()
        };
        let a = run();
        let b = run();
        assert_eq!(pack(&a), pack(&b));
        assert_eq!(a.mass.com, b.mass.com);
    }

    #[test]
    fn component_names() {
        assert_eq!(state_component_name(0), "missile_position[0]");
        assert_eq!(state_component_name(13), "mass[0]");
        assert_eq!(state_component_name(STATE_LEN - 1), "time[0]");
    }
}
