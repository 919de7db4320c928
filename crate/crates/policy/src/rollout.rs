//! Episode collection and evaluation on an immutable parameter snapshot.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use intercept_core::engagement::{episode_stream, run_episode, EpisodeConfig, EpisodeResult, StreamPurpose, TerminationCause};
use intercept_core::guidance::Controller;
use intercept_core::scenario::{sample_feasible, ScenarioConfig};
use intercept_core::seeker::OBS_DIM;

use crate::controller::{PolicyController, StepRecord};
use crate::dist::SampleMode;
use crate::error::{PolicyError, Result};
use crate::params::NetworkParams;
use crate::ppo::{EpisodeRollout, RolloutBatch};

/// Scenario distribution plus episode rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Environment {
    pub scenario: ScenarioConfig,
    pub episode: EpisodeConfig,
}

impl Environment {
    pub fn new(scenario: ScenarioConfig, episode: EpisodeConfig) -> Self {
        Self { scenario, episode }
    }

    /// Samples episode `index` of `seed` and runs it under `controller`.
    pub fn run(&self, seed: u64, index: u64, controller: &mut dyn Controller) -> Result<EpisodeResult> {
        let geometry = self.episode.dynamics.airframe.geometry;
        let scenario =
            sample_feasible(&self.scenario, &geometry, &mut episode_stream(seed, index, StreamPurpose::Scenario))?;
        Ok(run_episode(
            &scenario,
            controller,
            &self.episode,
            episode_stream(seed, index, StreamPurpose::Sensor),
            episode_stream(seed, index, StreamPurpose::Physics),
        )?)
    }

    /// Runs episode `index` under the policy, returning the step record too.
    pub fn run_policy(
        &self,
        params: &NetworkParams,
        seed: u64,
        index: u64,
        mode: SampleMode,
    ) -> Result<(EpisodeResult, StepRecord)> {
        let rng = episode_stream(seed, index, StreamPurpose::Policy);
        let mut c = PolicyController::new(params, mode, rng).recording();
        let result = self.run(seed, index, &mut c)?;
        Ok((result, c.take_record().unwrap_or_default()))
    }
}

/// Splits the per-step rewards into shaping and terminal channels and
/// attaches value estimates.
pub fn to_rollout(params: &NetworkParams, result: &EpisodeResult, record: StepRecord) -> Result<EpisodeRollout> {
    let t = record.len();
    if t != result.rewards.len() {
        return Err(PolicyError::ConfigFault(format!("{t} recorded actions for {} rewards", result.rewards.len())));
    }
    let mut terminal = vec![0.0; t];
    let mut shaping = result.rewards.clone();
    if t > 0 {
        terminal[t - 1] = result.reward_terms.terminal;
        shaping[t - 1] -= result.reward_terms.terminal;
    }
    let obs = DMatrix::from_column_slice(params.obs_dim, t, &record.obs);
    let logits = DMatrix::from_column_slice(2 * params.act_dim, t, &record.logits);
    let values = if t > 0 {
        params.value.forward_seq(&params.scaler.apply_matrix(&obs))?.out.row(0).iter().copied().collect()
    } else {
        Vec::new()
    };
    Ok(EpisodeRollout {
        obs,
        actions: record.actions,
        logp: record.logp,
        logits,
        shaping,
        terminal,
        values,
        miss: result.miss,
        fuel_used: result.fuel_used,
        cause: result.cause,
    })
}

/// Collects `count` sampling-mode episodes starting at stream index
/// `first`. Faulted and empty episodes are dropped and counted.
pub fn collect_rollouts(env: &Environment, params: &NetworkParams, seed: u64, first: u64, count: usize) -> Result<RolloutBatch> {
    if params.obs_dim != OBS_DIM {
        return Err(PolicyError::ConfigFault(format!("policy expects {} observations, simulator gives {OBS_DIM}", params.obs_dim)));
    }
    let results: Vec<Result<(EpisodeResult, StepRecord)>> = (0..count as u64)
        .into_par_iter()
        .map(|e| env.run_policy(params, seed, first + e, SampleMode::Sample))
        .collect();
    let mut batch = RolloutBatch::default();
    for r in results {
        let (result, record) = r?;
        if result.cause == TerminationCause::Fault || record.is_empty() {
            batch.faults += 1;
            continue;
        }
        batch.episodes.push(to_rollout(params, &result, record)?);
    }
    Ok(batch)
}

/// Outcome summary of a set of episodes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalStats {
    pub episodes: usize,
    /// Fraction with miss below the reward miss threshold.
    pub hit_rate: f64,
    pub hit_rate_100: f64,
    pub mean_miss: f64,
    pub median_miss: f64,
    pub mean_reward: f64,
    pub mean_steps: f64,
    pub mean_fuel: f64,
    pub causes: BTreeMap<String, usize>,
}

impl EvalStats {
    pub fn from_results(results: &[EpisodeResult], hit_threshold: f64) -> Self {
        let n = results.len();
        if n == 0 {
            return Self::default();
        }
        let nf = n as f64;
        let mut misses: Vec<f64> = results.iter().map(|r| r.miss).collect();
        misses.sort_by(f64::total_cmp);
        let median_miss = if n % 2 == 1 { misses[n / 2] } else { 0.5 * (misses[n / 2 - 1] + misses[n / 2]) };
        let mut causes = BTreeMap::new();
        for r in results {
            *causes.entry(r.cause.name().to_string()).or_insert(0) += 1;
        }
        Self {
            episodes: n,
            hit_rate: results.iter().filter(|r| r.miss < hit_threshold).count() as f64 / nf,
            hit_rate_100: results.iter().filter(|r| r.miss < 1.0).count() as f64 / nf,
            mean_miss: results.iter().map(|r| r.miss).sum::<f64>() / nf,
            median_miss,
            mean_reward: results.iter().map(|r| r.total_reward).sum::<f64>() / nf,
            mean_steps: results.iter().map(|r| r.steps as f64).sum::<f64>() / nf,
            mean_fuel: results.iter().map(|r| r.fuel_used).sum::<f64>() / nf,
            causes,
        }
    }
}

/// Runs episodes `first..first+count` with a fresh controller per episode.
pub fn evaluate_with<C, F>(env: &Environment, seed: u64, first: u64, count: usize, make: F) -> Result<EvalStats>
where
    C: Controller,
    F: Fn(u64) -> C + Sync,
{
    let results: Vec<EpisodeResult> = (0..count as u64)
        .into_par_iter()
        .map(|e| {
            let mut c = make(first + e);
            env.run(seed, first + e, &mut c)
        })
        .collect::<Result<_>>()?;
    Ok(EvalStats::from_results(&results, env.episode.reward.miss_threshold))
}

/// Evaluates the policy in the given sampling mode.
pub fn evaluate(env: &Environment, params: &NetworkParams, seed: u64, first: u64, count: usize, mode: SampleMode) -> Result<EvalStats> {
    evaluate_with(env, seed, first, count, |e| PolicyController::new(params, mode, episode_stream(seed, e, StreamPurpose::Policy)))
}
