//! Randomized engagement generation: target placement and velocity, the
//! gravity-corrected collision triangle in 3-D, heading and attitude error
//! injection, and retry on infeasible draws.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{gravity_accel, GravityModel, ManeuverKind, ManeuverSpec};
use crate::error::{Result, SimError};
use crate::mathkit::{orthogonal_unit, Mat3, Quaternion, RngStream, Vec3};
use crate::seeker::SensorErrorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { min: v, max: v }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        if self.min == self.max {
            // Keep the stream aligned whether or not a row is pinned.
            rng.unit();
            self.min
        } else {
            rng.uniform(self.min, self.max)
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Relative weights of the target maneuver kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManeuverMix {
    pub none: f64,
    pub bang_bang: f64,
    pub vertical_s: f64,
    pub barrel_roll: f64,
}

impl Default for ManeuverMix {
    fn default() -> Self {
        Self { none: 0.0, bang_bang: 0.5, vertical_s: 0.5, barrel_roll: 0.0 }
    }
}

impl ManeuverMix {
    pub fn only(kind: ManeuverKind) -> Self {
        let mut m = Self { none: 0.0, bang_bang: 0.0, vertical_s: 0.0, barrel_roll: 0.0 };
        match kind {
            ManeuverKind::None => m.none = 1.0,
            ManeuverKind::BangBang => m.bang_bang = 1.0,
            ManeuverKind::VerticalS => m.vertical_s = 1.0,
            ManeuverKind::BarrelRoll => m.barrel_roll = 1.0,
        }
        m
    }

    fn draw(&self, rng: &mut RngStream) -> Result<ManeuverKind> {
        let w = [self.none, self.bang_bang, self.vertical_s, self.barrel_roll];
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || w.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(SimError::ConfigFault("maneuver mix needs non-negative weights with a positive sum".into()));
        }
        let u = rng.unit() * total;
        let kinds = [ManeuverKind::None, ManeuverKind::BangBang, ManeuverKind::VerticalS, ManeuverKind::BarrelRoll];
        let mut acc = 0.0;
        for (k, wi) in kinds.iter().zip(w) {
            acc += wi;
            if u < acc {
                return Ok(*k);
            }
        }
        Ok(*kinds.iter().zip(w).rev().find(|(_, wi)| *wi > 0.0).map(|(k, _)| k).unwrap())
    }
}

/// Engagement frame anchor in degrees and meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub colatitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: f64,
}

impl Anchor {
    pub fn polar() -> Self {
        Self { colatitude_deg: 0.0, longitude_deg: 0.0, altitude_m: 50_000.0 }
    }

    pub fn equatorial() -> Self {
        Self { colatitude_deg: 90.0, longitude_deg: 0.0, altitude_m: 1.0e6 }
    }

    pub fn gravity_model(&self) -> GravityModel {
        GravityModel {
            colatitude: self.colatitude_deg.to_radians(),
            longitude: self.longitude_deg.to_radians(),
            altitude: self.altitude_m,
            ..GravityModel::polar()
        }
    }
}

/// Sampling bounds for one family of engagements. Angles are in degrees,
/// time constants in milliseconds, everything else SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub range_m: Range,
    pub missile_speed: Range,
    pub theta_deg: Range,
    pub phi_deg: Range,
    pub target_speed: Range,
    pub beta_deg: Range,
    pub alpha_deg: Range,
    pub heading_error_deg: Range,
    pub attitude_error_deg: Range,
    pub target_accel: Range,
    pub bang_bang_duration: Range,
    pub bang_bang_start: Range,
    pub maneuver_period: Range,
    pub maneuver_offset: Range,
    /// Per-axis center-of-mass offset at burnout, percent of h/2 (x) or r (y, z).
    pub com_percent: Range,
    pub e_theta: Range,
    pub sigma_theta: Range,
    pub e_omega: Range,
    pub sigma_omega: Range,
    pub tau_u_ms: Range,
    pub tau_theta_ms: Range,
    pub maneuver_mix: ManeuverMix,
    pub zero_init_filter: bool,
    /// `None` turns gravity off.
    pub anchor: Option<Anchor>,
    pub max_retries: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            range_m: Range::new(50_000.0, 55_000.0),
            missile_speed: Range::fixed(3000.0),
            theta_deg: Range::new(80.0, 100.0),
            phi_deg: Range::new(-10.0, 10.0),
            target_speed: Range::fixed(4000.0),
            beta_deg: Range::new(-10.0, 10.0),
            alpha_deg: Range::new(-10.0, 10.0),
            heading_error_deg: Range::new(0.0, 5.0),
            attitude_error_deg: Range::new(0.0, 5.0),
            target_accel: Range::new(0.0, 5.0 * 9.81),
            bang_bang_duration: Range::new(1.0, 4.0),
            bang_bang_start: Range::new(0.0, 6.0),
            maneuver_period: Range::new(1.0, 5.0),
            maneuver_offset: Range::new(1.0, 5.0),
            com_percent: Range::new(-2.5, 2.5),
            e_theta: Range::new(-1e-3, 1e-3),
            sigma_theta: Range::fixed(1e-3),
            e_omega: Range::new(-1e-3, 1e-3),
            sigma_omega: Range::fixed(1e-3),
            tau_u_ms: Range::fixed(20.0),
            tau_theta_ms: Range::fixed(20.0),
            maneuver_mix: ManeuverMix::default(),
            zero_init_filter: false,
            anchor: Some(Anchor::polar()),
            max_retries: 100,
        }
    }
}

impl ScenarioConfig {
    /// Optimization conditions: sensor errors off, ±2.5 % com drift.
    pub fn training() -> Self {
        Self { ..Self::default() }.with_sensor_errors(0.0, 0.0, 0.0, 0.0)
    }

    /// Overrides the four sensor error rows with `e ∈ [−v, v]`, `σ = v`.
    pub fn with_sensor_errors(mut self, e_theta: f64, e_omega: f64, sigma_theta: f64, sigma_omega: f64) -> Self {
        self.e_theta = Range::new(-e_theta, e_theta);
        self.e_omega = Range::new(-e_omega, e_omega);
        self.sigma_theta = Range::fixed(sigma_theta);
        self.sigma_omega = Range::fixed(sigma_omega);
        self
    }

    pub fn with_com_percent(mut self, bound: f64) -> Self {
        self.com_percent = Range::new(-bound, bound);
        self
    }

    pub fn with_lags_ms(mut self, tau_u: f64, tau_theta: f64) -> Self {
        self.tau_u_ms = Range::fixed(tau_u);
        self.tau_theta_ms = Range::fixed(tau_theta);
        self
    }

    /// No maneuver, no heading or attitude error, no sensor errors or lags.
    pub fn clean() -> Self {
        let mut c = Self::default().with_sensor_errors(0.0, 0.0, 0.0, 0.0).with_com_percent(0.0).with_lags_ms(0.0, 0.0);
        c.heading_error_deg = Range::fixed(0.0);
        c.attitude_error_deg = Range::fixed(0.0);
        c.maneuver_mix = ManeuverMix::only(ManeuverKind::None);
        c
    }

    pub fn gravity(&self) -> Option<GravityModel> {
        self.anchor.map(|a| a.gravity_model())
    }

    /// Largest |com offset| fraction, used as the slosh bound.
    pub fn com_bound_fraction(&self) -> f64 {
        self.com_percent.min.abs().max(self.com_percent.max.abs()) / 100.0
    }

    pub fn validate(&self) -> Result<()> {
        let rows = [
            ("range_m", self.range_m),
            ("missile_speed", self.missile_speed),
            ("theta_deg", self.theta_deg),
            ("phi_deg", self.phi_deg),
            ("target_speed", self.target_speed),
            ("beta_deg", self.beta_deg),
            ("alpha_deg", self.alpha_deg),
            ("heading_error_deg", self.heading_error_deg),
            ("attitude_error_deg", self.attitude_error_deg),
            ("target_accel", self.target_accel),
            ("bang_bang_duration", self.bang_bang_duration),
            ("bang_bang_start", self.bang_bang_start),
            ("maneuver_period", self.maneuver_period),
            ("maneuver_offset", self.maneuver_offset),
            ("com_percent", self.com_percent),
            ("e_theta", self.e_theta),
            ("sigma_theta", self.sigma_theta),
            ("e_omega", self.e_omega),
            ("sigma_omega", self.sigma_omega),
            ("tau_u_ms", self.tau_u_ms),
            ("tau_theta_ms", self.tau_theta_ms),
        ];
        for (name, r) in rows {
            if !(r.min.is_finite() && r.max.is_finite()) || r.min > r.max {
                return Err(SimError::ConfigFault(format!("{name}: min {} > max {} or non-finite", r.min, r.max)));
            }
        }
        let nonneg = [
            ("range_m", self.range_m),
            ("missile_speed", self.missile_speed),
            ("target_speed", self.target_speed),
            ("heading_error_deg", self.heading_error_deg),
            ("attitude_error_deg", self.attitude_error_deg),
            ("target_accel", self.target_accel),
            ("sigma_theta", self.sigma_theta),
            ("sigma_omega", self.sigma_omega),
            ("tau_u_ms", self.tau_u_ms),
            ("tau_theta_ms", self.tau_theta_ms),
        ];
        for (name, r) in nonneg {
            if r.min < 0.0 {
                return Err(SimError::ConfigFault(format!("{name} must be non-negative")));
            }
        }
        if self.target_accel.max > crate::dynamics::MAX_TARGET_ACCEL + 1e-9 {
            return Err(SimError::ConfigFault("target_accel above 5 g".into()));
        }
        if self.max_retries < 1 {
            return Err(SimError::ConfigFault("max_retries must be at least 1".into()));
        }
        Ok(())
    }
}

/// Collision-triangle solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementGeometry {
    /// Angle between the required missile velocity and the line of sight, rad.
    pub lead_angle: f64,
    /// Angle between the line of sight and the frame x axis, rad.
    pub los_angle: f64,
    pub time_of_flight: f64,
    pub closing_velocity: f64,
    pub plane_normal: Vec3,
}

/// Required lead angle for a target crossing the line of sight at
/// `sin_crossing` (the sine of the target velocity's angle off the LOS).
pub fn lead_angle(target_speed: f64, sin_crossing: f64, missile_speed: f64) -> Result<f64> {
    if !(missile_speed > 0.0) {
        return Err(SimError::InfeasibleGeometry("missile speed must be positive".into()));
    }
    let arg = target_speed * sin_crossing / missile_speed;
    if !(arg.abs() <= 1.0) {
        return Err(SimError::InfeasibleGeometry(format!("lead angle sine {arg} outside [-1, 1]")));
    }
    Ok(arg.asin())
}

fn planar_solution(r: &Vec3, v_t: &Vec3, missile_speed: f64) -> Result<(Vec3, EngagementGeometry)> {
    let range = r.norm();
    if !(range > 0.0) {
        return Err(SimError::DegenerateGeometry("zero initial range".into()));
    }
    let los = r / range;
    let speed_t = v_t.norm();
    let raw_normal = if speed_t > 0.0 { (v_t / speed_t).cross(&los) } else { Vec3::zeros() };
    let normal = if raw_normal.norm() > 1e-9 { raw_normal.normalize() } else { orthogonal_unit(&los) };
    let e2 = normal.cross(&los);
    let crossing = v_t.dot(&e2);
    let sin_crossing = if speed_t > 0.0 { crossing / speed_t } else { 0.0 };
    let lead = lead_angle(speed_t, sin_crossing, missile_speed)?;
    let v_m = (los * lead.cos() + e2 * lead.sin()) * missile_speed;
    let closing = (v_m - v_t).dot(&los);
    if !(closing > 0.0) {
        return Err(SimError::InfeasibleGeometry(format!("closing velocity {closing} is not positive")));
    }
    Ok((
        v_m,
        EngagementGeometry {
            lead_angle: lead,
            los_angle: los.x.clamp(-1.0, 1.0).acos(),
            time_of_flight: range / closing,
            closing_velocity: closing,
            plane_normal: normal,
        },
    ))
}

/// Missile velocity that puts a non-accelerating missile at `r_m` on a
/// collision course with the target.
///
/// A first pass ignores gravity to estimate the time of flight. The second
/// pass adds `t_f·(g_T − g_M)/3` to the target velocity: the relative
/// acceleration between the two vehicles grows out of the gravity gradient
/// and shrinks linearly with range, and a third of its initial value times
/// `t_f` is the velocity offset that cancels its double integral at `t_f`.
pub fn collision_triangle_velocity(
    r_m: &Vec3,
    r_t: &Vec3,
    v_t: &Vec3,
    missile_speed: f64,
    gravity: Option<&GravityModel>,
) -> Result<(Vec3, EngagementGeometry)> {
    let r = r_t - r_m;
    let (v0, g0) = planar_solution(&r, v_t, missile_speed)?;
    let Some(model) = gravity else {
        return Ok((v0, g0));
    };
    let dg = gravity_accel(r_t, model)? - gravity_accel(r_m, model)?;
    let v_eff = v_t + dg * (g0.time_of_flight / 3.0);
    planar_solution(&r, &v_eff, missile_speed)
}

fn cap_direction(axis: &Vec3, half_angle: f64, rng: &mut RngStream) -> Vec3 {
    let a = axis.normalize();
    let cos_t = rng.uniform(half_angle.cos(), 1.0);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let psi = rng.uniform(0.0, 2.0 * PI);
    let e1 = orthogonal_unit(&a);
    let e2 = a.cross(&e1);
    a * cos_t + (e1 * psi.cos() + e2 * psi.sin()) * sin_t
}

/// Rotates `v` to a direction drawn uniformly over the spherical cap of
/// half-angle `heading_error`, preserving its magnitude.
pub fn perturb_heading(v: &Vec3, heading_error: f64, rng: &mut RngStream) -> Result<Vec3> {
    if !(heading_error >= 0.0) {
        return Err(SimError::InvalidArgument("heading error must be non-negative".into()));
    }
    let n = v.norm();
    if !(n > 0.0) {
        return Err(SimError::InvalidArgument("cannot perturb a zero velocity".into()));
    }
    if heading_error == 0.0 {
        return Ok(*v);
    }
    Ok(cap_direction(v, heading_error, rng) * n)
}

/// Mean angle of a direction uniform over a cap of half-angle `h`.
pub fn cap_mean_angle(h: f64) -> f64 {
    (h.sin() - h * h.cos()) / (1.0 - h.cos())
}

/// Attitude with body x within `attitude_error` of `v` and a uniform roll.
pub fn initial_attitude(v: &Vec3, attitude_error: f64, rng: &mut RngStream) -> Result<Quaternion> {
    if !(v.norm() > 0.0) {
        return Err(SimError::InvalidArgument("cannot align with a zero velocity".into()));
    }
    let x = if attitude_error > 0.0 { cap_direction(v, attitude_error, rng) } else { v.normalize() };
    let roll = rng.uniform(0.0, 2.0 * PI);
    let e1 = orthogonal_unit(&x);
    let e2 = x.cross(&e1);
    let y = e1 * roll.cos() + e2 * roll.sin();
    let z = x.cross(&y);
    Ok(Quaternion::from_rotation_matrix(&Mat3::from_columns(&[x, y, z])))
}

/// Angle between a velocity and the body x axis of `q`.
pub fn boresight_velocity_angle(q: &Quaternion, v: &Vec3) -> f64 {
    let x = q.rotation_matrix().column(0).into_owned();
    x.cross(v).norm().atan2(x.dot(v))
}

/// One drawn engagement: initial states plus per-episode parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub missile_position: Vec3,
    pub missile_velocity: Vec3,
    pub attitude: Quaternion,
    pub target_position: Vec3,
    pub target_velocity: Vec3,
    /// Collision-course velocity before heading error.
    pub collision_velocity: Vec3,
    pub geometry: EngagementGeometry,
    pub maneuver: ManeuverSpec,
    pub sensor: SensorErrorConfig,
    pub ignition_lag: f64,
    /// Body com offset at burnout, m.
    pub com_offset: Vec3,
    pub heading_error: f64,
    pub attitude_error: f64,
    pub gravity: Option<GravityModel>,
    pub retries: u32,
}

/// Draws every parameter once; infeasible geometry is an error.
pub fn sample_scenario(cfg: &ScenarioConfig, geometry: &crate::airframe::Geometry, rng: &mut RngStream) -> Result<Scenario> {
    let range = cfg.range_m.sample(rng);
    let theta = cfg.theta_deg.sample(rng).to_radians();
    let phi = cfg.phi_deg.sample(rng).to_radians();
    let target_speed = cfg.target_speed.sample(rng);
    let alpha = cfg.alpha_deg.sample(rng).to_radians();
    let beta = cfg.beta_deg.sample(rng).to_radians();
    let missile_speed = cfg.missile_speed.sample(rng);
    let heading_error = cfg.heading_error_deg.sample(rng).to_radians();
    let attitude_error = cfg.attitude_error_deg.sample(rng).to_radians();

    let kind = cfg.maneuver_mix.draw(rng)?;
    let accel = cfg.target_accel.sample(rng);
    let duration = cfg.bang_bang_duration.sample(rng);
    let bb_start = cfg.bang_bang_start.sample(rng);
    let period = cfg.maneuver_period.sample(rng);
    let offset = cfg.maneuver_offset.sample(rng);

    let com_pct = Vec3::new(cfg.com_percent.sample(rng), cfg.com_percent.sample(rng), cfg.com_percent.sample(rng));
    let sensor = SensorErrorConfig {
        e_theta: cfg.e_theta.sample(rng),
        e_omega: cfg.e_omega.sample(rng),
        sigma_theta: cfg.sigma_theta.sample(rng),
        sigma_omega: cfg.sigma_omega.sample(rng),
        tau_theta: cfg.tau_theta_ms.sample(rng) / 1000.0,
        zero_init_filter: cfg.zero_init_filter,
    };
    let ignition_lag = cfg.tau_u_ms.sample(rng) / 1000.0;

    let target_position = Vec3::new(
        range * theta.sin() * phi.cos(),
        range * theta.sin() * phi.sin(),
        range * theta.cos(),
    );
    let target_velocity = Vec3::new(
        -target_speed * beta.cos() * alpha.cos(),
        -target_speed * beta.cos() * alpha.sin(),
        target_speed * beta.sin(),
    );
    let gravity = cfg.gravity();
    let missile_position = Vec3::zeros();
    let (collision_velocity, geom) =
        collision_triangle_velocity(&missile_position, &target_position, &target_velocity, missile_speed, gravity.as_ref())?;
    let missile_velocity = perturb_heading(&collision_velocity, heading_error, rng)?;
    let attitude = initial_attitude(&missile_velocity, attitude_error, rng)?;

    let maneuver = if kind == ManeuverKind::None || target_speed == 0.0 {
        ManeuverSpec::none()
    } else {
        let start = if kind == ManeuverKind::BangBang { bb_start } else { offset };
        ManeuverSpec::random(kind, accel, start, duration, period, &target_velocity, rng)?
    };
    let com_offset = Vec3::new(
        com_pct.x / 100.0 * geometry.length / 2.0,
        com_pct.y / 100.0 * geometry.radius,
        com_pct.z / 100.0 * geometry.radius,
    );

    Ok(Scenario {
        missile_position,
        missile_velocity,
        attitude,
        target_position,
        target_velocity,
        collision_velocity,
        geometry: geom,
        maneuver,
        sensor,
        ignition_lag,
        com_offset,
        heading_error,
        attitude_error,
        gravity,
        retries: 0,
    })
}

/// Redraws until the collision triangle exists.
pub fn sample_feasible(cfg: &ScenarioConfig, geometry: &crate::airframe::Geometry, rng: &mut RngStream) -> Result<Scenario> {
    cfg.validate()?;
    for attempt in 0..cfg.max_retries {
        match sample_scenario(cfg, geometry, rng) {
            Ok(mut s) => {
                s.retries = attempt;
                return Ok(s);
            }
            Err(SimError::InfeasibleGeometry(_)) | Err(SimError::DegenerateGeometry(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(SimError::InfeasibleConfig { retries: cfg.max_retries })
}
