//! Episode loop: sense, check termination, act, score, then hold the action
//! across the substeps of one guidance period.

use serde::{Deserialize, Serialize};

use crate::airframe::{ActionCommand, ComModel};
use crate::dynamics::{DynamicsConfig, EngagementState, Simulator};
use crate::error::{Result, SimError};
use crate::guidance::{ControlInput, Controller, TruthState};
use crate::mathkit::{Quaternion, RngStream, Vec3};
use crate::scenario::{boresight_velocity_angle, Scenario};
use crate::seeker::{body_los, build_observation, Seeker, SensorPacket};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationCause {
    InterceptWindowExit,
    FovViolation,
    RateLimit,
    FuelExhausted,
    MaxTime,
    /// Numerical or controller failure; the message is in `EpisodeResult::fault`.
    Fault,
}

impl TerminationCause {
    pub const ALL: [TerminationCause; 6] = [
        Self::InterceptWindowExit,
        Self::FovViolation,
        Self::RateLimit,
        Self::FuelExhausted,
        Self::MaxTime,
        Self::Fault,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::InterceptWindowExit => "intercept-window-exit",
            Self::FovViolation => "fov-violation",
            Self::RateLimit => "rate-limit",
            Self::FuelExhausted => "fuel-exhausted",
            Self::MaxTime => "max-time",
            Self::Fault => "fault",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub eta: f64,
    /// Rate scale in the seeker-rate shaping term, rad/s.
    pub sigma_rate: f64,
    /// Miss below which the terminal bonus is paid, m.
    pub miss_threshold: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { alpha: 1.0, beta: -0.02, delta: -0.1, eta: 10.0, sigma_rate: 0.04, miss_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerminationConfig {
    pub half_fov_deg: f64,
    /// Per-axis body rate limit, rad/s.
    pub rate_limit: f64,
    pub max_time: f64,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        Self { half_fov_deg: 45.0, rate_limit: 12.0, max_time: 20.0 }
    }
}

impl TerminationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_fov_deg > 0.0 && self.rate_limit > 0.0 && self.max_time > 0.0) {
            return Err(SimError::ConfigFault("termination limits must be positive".into()));
        }
        Ok(())
    }
}

/// Per-term reward values; sums of these are reported per episode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub rate: f64,
    pub control: f64,
    pub attitude: f64,
    pub terminal: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.rate + self.control + self.attitude + self.terminal
    }

    fn accumulate(&mut self, o: &RewardTerms) {
        self.rate += o.rate;
        self.control += o.control;
        self.attitude += o.attitude;
        self.terminal += o.terminal;
    }
}

/// Rotation angle between two attitudes, in `[0, π]`.
pub fn attitude_deviation(q: &Quaternion, q_init: &Quaternion) -> f64 {
    let d = q.normalized().dot(&q_init.normalized());
    (2.0 * d * d - 1.0).clamp(-1.0, 1.0).acos()
}

/// Shaping reward for one step; `terminal_miss` adds the bonus term.
pub fn reward(
    rates: [f64; 2],
    action: &ActionCommand,
    q: &Quaternion,
    q_init: &Quaternion,
    terminal_miss: Option<f64>,
    cfg: &RewardConfig,
) -> RewardTerms {
    let rate_norm = rates[0].hypot(rates[1]);
    RewardTerms {
        rate: cfg.alpha * (-rate_norm / cfg.sigma_rate).exp(),
        control: cfg.beta * action.attitude_count() as f64,
        attitude: cfg.delta * attitude_deviation(q, q_init),
        terminal: match terminal_miss {
            Some(m) if m < cfg.miss_threshold => cfg.eta,
            _ => 0.0,
        },
    }
}

/// Rule-based termination at a guidance boundary. Pass `None` for the
/// packet to skip the field-of-view rule.
pub fn check_termination(
    state: &EngagementState,
    packet: Option<&SensorPacket>,
    fuel_exhausted: bool,
    cfg: &TerminationConfig,
) -> Option<TerminationCause> {
    if let Some(p) = packet {
        let half = cfg.half_fov_deg.to_radians();
        if p.theta_body[0].abs() > half || p.theta_body[1].abs() > half || p.target_behind() {
            return Some(TerminationCause::FovViolation);
        }
    }
    if state.omega.iter().any(|w| w.abs() > cfg.rate_limit) {
        return Some(TerminationCause::RateLimit);
    }
    if fuel_exhausted {
        return Some(TerminationCause::FuelExhausted);
    }
    if state.time >= cfg.max_time - 1e-9 {
        return Some(TerminationCause::MaxTime);
    }
    None
}

/// Closest approach over the substep that just ended at relative state
/// `(r, v)`, assuming straight-line relative motion inside the step.
pub fn segment_min_range(r: &Vec3, v: &Vec3, dt: f64) -> f64 {
    let vv = v.norm_squared();
    if vv == 0.0 {
        return r.norm();
    }
    let s = (-r.dot(v) / vv).clamp(-dt, 0.0);
    (r + v * s).norm()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub dynamics: DynamicsConfig,
    pub reward: RewardConfig,
    pub termination: TerminationConfig,
    /// Translational benchmark: frozen attitude, no seeker, no FOV rule.
    pub benchmark: bool,
    pub record_trajectory: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            dynamics: DynamicsConfig::default(),
            reward: RewardConfig::default(),
            termination: TerminationConfig::default(),
            benchmark: false,
            record_trajectory: false,
        }
    }
}

impl EpisodeConfig {
    pub fn benchmark() -> Self {
        Self { benchmark: true, ..Self::default() }
    }

    /// Physics for one scenario: its lag, gravity and com offset.
    pub fn dynamics_for(&self, scenario: &Scenario) -> DynamicsConfig {
        let mut d = self.dynamics.clone();
        d.ignition_lag = scenario.ignition_lag;
        d.gravity = scenario.gravity;
        d.rotational = !self.benchmark;
        if let ComModel::FuelDrift { .. } = d.com_model {
            d.com_model = ComModel::FuelDrift { offset: scenario.com_offset };
        }
        d
    }
}

/// Independent random streams of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Scenario = 0,
    Sensor = 1,
    Physics = 2,
    Policy = 3,
    Inaccuracy = 4,
}

pub fn episode_stream(seed: u64, episode: u64, purpose: StreamPurpose) -> RngStream {
    RngStream::new(seed, episode * 8 + purpose as u64)
}

/// One row per executed guidance step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub time: f64,
    pub missile_position: Vec3,
    pub missile_velocity: Vec3,
    pub target_position: Vec3,
    pub target_velocity: Vec3,
    pub attitude: Quaternion,
    pub omega: Vec3,
    pub theta_true: [f64; 2],
    pub theta_body: [f64; 2],
    pub theta_stabilized: [f64; 2],
    pub theta_filtered: [f64; 2],
    pub theta_rate: [f64; 2],
    pub omega_hat: Vec3,
    pub observation: [f64; crate::seeker::OBS_DIM],
    pub action: String,
    pub mass: f64,
    pub fuel_used: f64,
    pub range: f64,
    pub reward: RewardTerms,
    /// Angle between velocity and boresight, rad.
    pub theta_bv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub miss: f64,
    pub fuel_used: f64,
    pub cause: TerminationCause,
    /// Number of actions taken.
    pub steps: usize,
    pub total_reward: f64,
    pub reward_terms: RewardTerms,
    /// Reward of each executed step, terminal bonus included.
    pub rewards: Vec<f64>,
    pub final_time: f64,
    pub reached_fine_phase: bool,
    pub fault: Option<String>,
    pub trajectory: Option<Vec<TrajectoryRow>>,
}

impl EpisodeResult {
    pub fn hit(&self, threshold: f64) -> bool {
        self.miss < threshold
    }
}

fn truth_packet(time: f64, state: &EngagementState) -> Result<SensorPacket> {
    let los = body_los(&state.missile_position, &state.target_position, &state.attitude)?;
    let angles = [los.y.clamp(-1.0, 1.0).asin(), los.z.clamp(-1.0, 1.0).asin()];
    Ok(SensorPacket {
        time,
        los_body: los,
        theta_true: angles,
        theta_body: angles,
        theta_stabilized: angles,
        theta_filtered: angles,
        theta_rate: [0.0; 2],
        omega_hat: state.omega,
        dq: Quaternion::IDENTITY,
        observation: build_observation(angles, angles, [0.0; 2], &Quaternion::IDENTITY, &state.omega),
    })
}

fn truth_of(sim: &Simulator) -> TruthState {
    let s = sim.state();
    TruthState {
        relative_position: s.relative_position(),
        relative_velocity: s.relative_velocity(),
        target_accel: sim.target_accel(),
        attitude: s.attitude,
        mass: s.mass.mass,
    }
}

struct Tracker {
    miss: f64,
}

/// Runs one episode to termination.
///
/// `sensor_rng` feeds seeker and gyro noise; `physics_rng` feeds per-step
/// center-of-mass redraws. Faults inside the loop end the episode with
/// cause [`TerminationCause::Fault`] rather than an error; only invalid
/// setup returns `Err`.
pub fn run_episode(
    scenario: &Scenario,
    controller: &mut dyn Controller,
    cfg: &EpisodeConfig,
    sensor_rng: RngStream,
    physics_rng: RngStream,
) -> Result<EpisodeResult> {
    cfg.termination.validate()?;
    let mut sensor_rng = sensor_rng;
    let dynamics = cfg.dynamics_for(scenario);
    let guidance_dt = dynamics.clock.guidance_dt;
    let mut sim = Simulator::new(
        dynamics,
        scenario.maneuver,
        scenario.missile_position,
        scenario.missile_velocity,
        scenario.attitude,
        scenario.target_position,
        scenario.target_velocity,
        physics_rng,
    )?;
    let mut seeker = Seeker::new(scenario.sensor, scenario.attitude, guidance_dt)?;
    controller.reset();

    let q_init = scenario.attitude;
    let mut track = Tracker { miss: sim.state().range() };
    let mut rewards: Vec<f64> = Vec::new();
    let mut sums = RewardTerms::default();
    let mut trajectory = cfg.record_trajectory.then(Vec::new);
    let mut fault = None;
    let mut step = 0usize;

    let cause = 'episode: loop {
        let time = step as f64 * guidance_dt;
        let sensed = if cfg.benchmark {
            truth_packet(time, sim.state())
        } else {
            let s = sim.state();
            seeker.sense(time, &s.missile_position, &s.target_position, &s.attitude, &s.omega, &mut sensor_rng)
        };
        let packet = match sensed {
            Ok(p) => p,
            Err(SimError::FovFault(_)) => break TerminationCause::FovViolation,
            Err(e) => {
                fault = Some(e.to_string());
                break TerminationCause::Fault;
            }
        };
        let fov_packet = (!cfg.benchmark).then_some(&packet);
        if let Some(c) = check_termination(sim.state(), fov_packet, sim.fuel_exhausted(), &cfg.termination) {
            break c;
        }

        let input = ControlInput { time, step, packet: &packet, truth: truth_of(&sim) };
        let action = match controller.act(&input) {
            Ok(a) => a,
            Err(e) => {
                fault = Some(e.to_string());
                break TerminationCause::Fault;
            }
        };
        let s = sim.state();
        let terms = reward(packet.theta_rate, &action, &s.attitude, &q_init, None, &cfg.reward);
        rewards.push(terms.total());
        sums.accumulate(&terms);
        if let Some(rows) = trajectory.as_mut() {
            rows.push(TrajectoryRow {
                step,
                time,
                missile_position: s.missile_position,
                missile_velocity: s.missile_velocity,
                target_position: s.target_position,
                target_velocity: s.target_velocity,
                attitude: s.attitude,
                omega: s.omega,
                theta_true: packet.theta_true,
                theta_body: packet.theta_body,
                theta_stabilized: packet.theta_stabilized,
                theta_filtered: packet.theta_filtered,
                theta_rate: packet.theta_rate,
                omega_hat: packet.omega_hat,
                observation: packet.observation.0,
                action: action.to_bit_string(),
                mass: s.mass.mass,
                fuel_used: s.mass.fuel_used,
                range: s.range(),
                reward: terms,
                theta_bv: boresight_velocity_angle(&s.attitude, &s.missile_velocity),
            });
        }
        step += 1;

        let until = step as f64 * guidance_dt;
        while sim.state().time < until {
            let dt = match sim.substep(&action, until) {
                Ok(dt) => dt,
                Err(e) => {
                    fault = Some(e.to_string());
                    break 'episode TerminationCause::Fault;
                }
            };
            let s = sim.state();
            let (r, v) = (s.relative_position(), s.relative_velocity());
            track.miss = track.miss.min(segment_min_range(&r, &v, dt));
            if sim.in_fine_phase() && r.dot(&v) >= 0.0 {
                break 'episode TerminationCause::InterceptWindowExit;
            }
        }
    };

    let miss = track.miss;
    if let Some(last) = rewards.last_mut() {
        if miss < cfg.reward.miss_threshold {
            *last += cfg.reward.eta;
            sums.terminal += cfg.reward.eta;
            if let Some(row) = trajectory.as_mut().and_then(|t| t.last_mut()) {
                row.reward.terminal = cfg.reward.eta;
            }
        }
    }
    let s = sim.state();
    Ok(EpisodeResult {
        miss,
        fuel_used: s.mass.fuel_used,
        cause,
        steps: rewards.len(),
        total_reward: rewards.iter().sum(),
        reward_terms: sums,
        rewards,
        final_time: s.time,
        reached_fine_phase: sim.in_fine_phase(),
        fault,
        trajectory,
    })
}
