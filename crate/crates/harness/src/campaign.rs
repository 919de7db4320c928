//! Monte Carlo campaigns over independent per-episode random streams.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use intercept_core::airframe::NUM_GROUPS;
use intercept_core::dynamics::ManeuverKind;
use intercept_core::engagement::{episode_stream, run_episode, EpisodeConfig, EpisodeResult, StreamPurpose, TerminationCause};
use intercept_core::guidance::{Controller, GuidanceConfig, GuidanceLaw, NullController, PnController};
use intercept_core::scenario::{sample_feasible, Scenario, ScenarioConfig};
use intercept_core::seeker::OBS_DIM;
use intercept_policy::controller::PolicyController;
use intercept_policy::{NetworkParams, SampleMode};

use crate::error::{HarnessError, Result};
use crate::inaccuracy::{apply_inaccuracy_models, InaccuracyConfig, Perturbation};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "INTERCEPT_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControllerSpec {
    Pn,
    Apn,
    Policy {
        weights: PathBuf,
        #[serde(default = "argmax")]
        mode: SampleMode,
    },
    /// Never fires; open-loop baseline.
    None,
    /// Zero-weight policy sampling every bit as a fair coin.
    Random,
}

fn argmax() -> SampleMode {
    SampleMode::Argmax
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub scenario: ScenarioConfig,
    pub episode: EpisodeConfig,
    pub controller: ControllerSpec,
    /// Gains and filter of the PN/APN controllers.
    pub guidance: GuidanceConfig,
    pub inaccuracy: InaccuracyConfig,
    pub episodes: usize,
    pub seed: u64,
    /// Stream index of the first episode.
    pub first_episode: u64,
    /// Worker threads; `None` reads the environment, then uses every core.
    pub workers: Option<usize>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            episode: EpisodeConfig::default(),
            controller: ControllerSpec::Pn,
            guidance: GuidanceConfig::default(),
            inaccuracy: InaccuracyConfig::default(),
            episodes: 1000,
            seed: 1,
            first_episode: 0,
            workers: None,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(HarnessError::Config("episode count must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(HarnessError::Config("worker count must be at least 1".into()));
        }
        self.scenario.validate()?;
        self.guidance.validate()?;
        self.inaccuracy.validate()?;
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Worker count: explicit value, else the environment variable, else all cores.
pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()))
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Controller spec with any weight file already loaded.
pub enum LoadedController {
    Guidance(GuidanceConfig),
    Policy(NetworkParams, SampleMode),
    None,
}

impl LoadedController {
    pub fn load(spec: &ControllerSpec, guidance: &GuidanceConfig) -> Result<Self> {
        Ok(match spec {
            ControllerSpec::Pn => Self::Guidance(GuidanceConfig { law: GuidanceLaw::Pn, ..*guidance }),
            ControllerSpec::Apn => Self::Guidance(GuidanceConfig { law: GuidanceLaw::Apn, ..*guidance }),
            ControllerSpec::Policy { weights, mode } => {
                Self::Policy(NetworkParams::load_expecting(weights, OBS_DIM, NUM_GROUPS)?, *mode)
            }
            ControllerSpec::None => Self::None,
            ControllerSpec::Random => Self::Policy(NetworkParams::zeros(OBS_DIM, NUM_GROUPS), SampleMode::Sample),
        })
    }

    pub fn build<'a>(&'a self, episode: &EpisodeConfig, seed: u64, index: u64) -> Result<Box<dyn Controller + 'a>> {
        Ok(match self {
            Self::Guidance(g) => Box::new(PnController::new(*g, episode.dynamics.airframe.thrusters.clone())?),
            Self::Policy(p, mode) => Box::new(PolicyController::new(p, *mode, episode_stream(seed, index, StreamPurpose::Policy))),
            Self::None => Box::new(NullController),
        })
    }
}

/// One finished episode with the context needed for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub index: u64,
    pub scenario: Scenario,
    pub perturbation: Perturbation,
    pub result: EpisodeResult,
}

/// Samples, perturbs and runs episode `index`.
pub fn run_one(cfg: &CampaignConfig, controller: &LoadedController, index: u64) -> Result<EpisodeOutcome> {
    let geometry = cfg.episode.dynamics.airframe.geometry;
    let scenario = sample_feasible(&cfg.scenario, &geometry, &mut episode_stream(cfg.seed, index, StreamPurpose::Scenario))?;
    let mut episode = cfg.episode.clone();
    let perturbation = apply_inaccuracy_models(
        &cfg.inaccuracy,
        &mut episode.dynamics,
        cfg.scenario.com_bound_fraction(),
        &mut episode_stream(cfg.seed, index, StreamPurpose::Inaccuracy),
    )?;
    let mut c = controller.build(&cfg.episode, cfg.seed, index)?;
    let result = run_episode(
        &scenario,
        c.as_mut(),
        &episode,
        episode_stream(cfg.seed, index, StreamPurpose::Sensor),
        episode_stream(cfg.seed, index, StreamPurpose::Physics),
    )?;
    Ok(EpisodeOutcome { index, scenario, perturbation, result })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CampaignStats {
    pub episodes: usize,
    /// Fraction with miss below 100 cm.
    pub hit_100: f64,
    /// Fraction with miss below 50 cm.
    pub hit_50: f64,
    pub fuel_mean: f64,
    pub fuel_std: f64,
    pub fuel_max: f64,
    pub miss_mean: f64,
    pub miss_median: f64,
    pub causes: BTreeMap<String, usize>,
    pub retries_total: u64,
    pub retries_max: u32,
}

/// Sum after sorting, so the result does not depend on input order.
fn ordered_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

impl CampaignStats {
    pub fn from_outcomes(outcomes: &[EpisodeOutcome]) -> Self {
        let n = outcomes.len();
        if n == 0 {
            return Self::default();
        }
        let nf = n as f64;
        let fuel: Vec<f64> = outcomes.iter().map(|o| o.result.fuel_used).collect();
        let mut miss: Vec<f64> = outcomes.iter().map(|o| o.result.miss).collect();
        let fuel_mean = ordered_sum(fuel.clone()) / nf;
        let fuel_var = ordered_sum(fuel.iter().map(|f| (f - fuel_mean).powi(2)).collect()) / nf;
        miss.sort_by(f64::total_cmp);
        let mut causes: BTreeMap<String, usize> = TerminationCause::ALL.iter().map(|c| (c.name().to_string(), 0)).collect();
        for o in outcomes {
            *causes.entry(o.result.cause.name().to_string()).or_insert(0) += 1;
        }
        Self {
            episodes: n,
            hit_100: miss.iter().filter(|m| **m < 1.0).count() as f64 / nf,
            hit_50: miss.iter().filter(|m| **m < 0.5).count() as f64 / nf,
            fuel_mean,
            fuel_std: fuel_var.sqrt(),
            fuel_max: fuel.iter().copied().fold(0.0, f64::max),
            miss_mean: ordered_sum(miss.clone()) / nf,
            miss_median: if n % 2 == 1 { miss[n / 2] } else { 0.5 * (miss[n / 2 - 1] + miss[n / 2]) },
            causes,
            retries_total: outcomes.iter().map(|o| o.scenario.retries as u64).sum(),
            retries_max: outcomes.iter().map(|o| o.scenario.retries).max().unwrap_or(0),
        }
    }
}

/// One row of the per-episode CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: u64,
    pub miss_m: f64,
    pub fuel_kg: f64,
    pub cause: String,
    pub steps: usize,
    pub final_time_s: f64,
    pub total_reward: f64,
    pub retries: u32,
    pub heading_error_deg: f64,
    pub attitude_error_deg: f64,
    pub maneuver: String,
    pub target_accel: f64,
    pub fault: String,
}

pub fn maneuver_name(k: ManeuverKind) -> &'static str {
    match k {
        ManeuverKind::None => "none",
        ManeuverKind::BangBang => "bang-bang",
        ManeuverKind::VerticalS => "vertical-s",
        ManeuverKind::BarrelRoll => "barrel-roll",
    }
}

impl From<&EpisodeOutcome> for EpisodeRow {
    fn from(o: &EpisodeOutcome) -> Self {
        Self {
            episode: o.index,
            miss_m: o.result.miss,
            fuel_kg: o.result.fuel_used,
            cause: o.result.cause.name().to_string(),
            steps: o.result.steps,
            final_time_s: o.result.final_time,
            total_reward: o.result.total_reward,
            retries: o.scenario.retries,
            heading_error_deg: o.scenario.heading_error.to_degrees(),
            attitude_error_deg: o.scenario.attitude_error.to_degrees(),
            maneuver: maneuver_name(o.scenario.maneuver.kind).to_string(),
            target_accel: o.scenario.maneuver.accel,
            fault: o.result.fault.clone().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOutput {
    pub stats: CampaignStats,
    /// In episode order.
    pub outcomes: Vec<EpisodeOutcome>,
}

impl CampaignOutput {
    pub fn rows(&self) -> Vec<EpisodeRow> {
        self.outcomes.iter().map(EpisodeRow::from).collect()
    }

    pub fn write_rows(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in self.rows() {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
        Ok(())
    }

    pub fn write_stats(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.stats)?;
        std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
    }
}

/// Runs every episode on a pool of `workers` threads. Results come back in
/// episode order, so the output does not depend on the worker count.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignOutput> {
    cfg.validate()?;
    let controller = LoadedController::load(&cfg.controller, &cfg.guidance)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_workers(cfg.workers))
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<EpisodeOutcome> = pool.install(|| {
        (0..cfg.episodes as u64)
            .into_par_iter()
            .map(|e| {
                let mut o = run_one(cfg, &controller, cfg.first_episode + e)?;
                o.result.trajectory = None;
                Ok(o)
            })
            .collect::<Result<_>>()
    })?;
    Ok(CampaignOutput { stats: CampaignStats::from_outcomes(&outcomes), outcomes })
}
