//! Alternating collection and update loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use intercept_core::RngStream;

use crate::dist::SampleMode;
use crate::error::{PolicyError, Result};
use crate::params::{NetworkParams, ObsScaler};
use crate::ppo::{ppo_update, Optimizer, PpoConfig};
use crate::rollout::{collect_rollouts, evaluate, Environment, EvalStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub env: Environment,
    pub ppo: PpoConfig,
    pub updates: usize,
    /// Seed of the training episode streams.
    pub seed: u64,
    /// Seed of the weight initialization.
    pub init_seed: u64,
    /// Fit a per-component observation scaler on a pilot batch.
    pub normalize_observations: bool,
    pub pilot_episodes: usize,
    /// Smallest scale the fitted scaler may use.
    pub scaler_floor: f64,
    /// Evaluation seed, kept apart from training streams.
    pub eval_seed: u64,
    pub eval_episodes: usize,
    /// Evaluate in argmax mode every this many updates (0 = only at the end).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: Environment::default(),
            ppo: PpoConfig::default(),
            updates: 2000,
            seed: 1,
            init_seed: 1,
            normalize_observations: true,
            pilot_episodes: 30,
            scaler_floor: 1e-6,
            eval_seed: 1_000_003,
            eval_episodes: 200,
            eval_every: 0,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct UpdateLog {
    pub update: usize,
    pub episodes: usize,
    pub faults: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_steps: f64,
    pub hit_rate: f64,
    pub mean_miss: f64,
    pub median_miss: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub epochs: usize,
    pub objective: f64,
    pub value_loss: f64,
    pub reverted: bool,
    pub aborted: bool,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalStats>,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub params: NetworkParams,
    pub opt: Optimizer,
    /// Updates completed so far.
    pub update: usize,
}

impl Trainer {
    /// Starts from `params` or a fresh initialization. A pilot batch fits
    /// the observation scaler when requested and not already set.
    pub fn new(cfg: TrainConfig, params: Option<NetworkParams>) -> Result<Self> {
        cfg.ppo.validate()?;
        let mut params = match params {
            Some(p) => p,
            None => NetworkParams::init(&mut RngStream::new(cfg.init_seed, 0))?,
        };
        if cfg.normalize_observations && params.scaler == ObsScaler::identity(params.obs_dim) {
            let pilot = collect_rollouts(&cfg.env, &params, cfg.seed ^ 0x9E37_79B9_7F4A_7C15, 0, cfg.pilot_episodes)?;
            let cols: Vec<&[f64]> = pilot.episodes.iter().flat_map(|e| e.obs.as_slice().chunks_exact(e.obs.nrows())).collect();
            if cols.is_empty() {
                return Err(PolicyError::ConfigFault("pilot batch produced no steps".into()));
            }
            params.scaler = ObsScaler::fit(&cols, cfg.scaler_floor)?;
        }
        let opt = Optimizer::new(&params);
        Ok(Self { cfg, params, opt, update: 0 })
    }

    /// Collects one batch and updates on it.
    pub fn step(&mut self) -> Result<UpdateLog> {
        let t0 = Instant::now();
        let n = self.cfg.ppo.episodes_per_update;
        let first = (self.update * n) as u64;
        let batch = collect_rollouts(&self.cfg.env, &self.params, self.cfg.seed, first, n)?;
        let mut log = UpdateLog { update: self.update, episodes: batch.episodes.len(), faults: batch.faults, ..Default::default() };
        if !batch.episodes.is_empty() {
            let m = batch.episodes.len() as f64;
            let rewards: Vec<f64> = batch.episodes.iter().map(|e| e.total_reward()).collect();
            log.mean_reward = rewards.iter().sum::<f64>() / m;
            log.std_reward = (rewards.iter().map(|r| (r - log.mean_reward).powi(2)).sum::<f64>() / m).sqrt();
            log.mean_steps = batch.steps() as f64 / m;
            let threshold = self.cfg.env.episode.reward.miss_threshold;
            log.hit_rate = batch.episodes.iter().filter(|e| e.miss < threshold).count() as f64 / m;
            log.mean_miss = batch.episodes.iter().map(|e| e.miss).sum::<f64>() / m;
            let mut misses: Vec<f64> = batch.episodes.iter().map(|e| e.miss).collect();
            misses.sort_by(f64::total_cmp);
            log.median_miss = misses[misses.len() / 2];
            let d = ppo_update(&mut self.params, &mut self.opt, &batch, &self.cfg.ppo)?;
            log.kl = d.kl;
            log.clip_fraction = d.clip_fraction;
            log.epochs = d.epochs_run;
            log.objective = d.objective_last;
            log.value_loss = d.value_loss_last;
            log.reverted = d.reverted;
            log.aborted = d.aborted;
        }
        self.update += 1;
        let every = self.cfg.eval_every;
        if (every > 0 && self.update % every == 0) || self.update == self.cfg.updates {
            log.eval = Some(self.evaluate()?);
        }
        log.seconds = t0.elapsed().as_secs_f64();
        Ok(log)
    }

    /// Argmax-mode evaluation on the held-out streams.
    pub fn evaluate(&self) -> Result<EvalStats> {
        evaluate(&self.cfg.env, &self.params, self.cfg.eval_seed, 0, self.cfg.eval_episodes, SampleMode::Argmax)
    }

    /// Runs the remaining updates, passing each log line to `sink`. The
    /// sink returns `false` to stop early.
    pub fn run(&mut self, mut sink: impl FnMut(&UpdateLog, &NetworkParams) -> bool) -> Result<Vec<UpdateLog>> {
        let mut history = Vec::new();
        while self.update < self.cfg.updates {
            let log = self.step()?;
            let go_on = sink(&log, &self.params);
            history.push(log);
            if !go_on {
                break;
            }
        }
        Ok(history)
    }
}

/// Mean reward over the first and last `k` updates of a history.
pub fn reward_trend(history: &[UpdateLog], k: usize) -> Option<(f64, f64)> {
    if history.len() < k || k == 0 {
        return None;
    }
    let mean = |s: &[UpdateLog]| s.iter().map(|l| l.mean_reward).sum::<f64>() / s.len() as f64;
    Some((mean(&history[..k]), mean(&history[history.len() - k..])))
}
