//! Clipped-surrogate policy optimization with full-episode backprop
//! through time, dual-discount returns, and Adam.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use intercept_core::engagement::TerminationCause;

use crate::dist::{log_prob, log_prob_grad, ActionDistribution};
use crate::error::{PolicyError, Result};
use crate::network::{Packing, RecurrentNet, SeqCache};
use crate::params::{NetworkParams, ObsScaler};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    /// Discount on the per-step shaping rewards.
    pub gamma_shaping: f64,
    /// Discount on the terminal bonus.
    pub gamma_terminal: f64,
    pub episodes_per_update: usize,
    pub epochs: usize,
    pub lr_policy: f64,
    pub lr_value: f64,
    /// Stop the epoch loop once mean KL to the collection policy exceeds this.
    pub kl_stop: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.1,
            gamma_shaping: 0.90,
            gamma_terminal: 0.995,
            episodes_per_update: 30,
            epochs: 20,
            lr_policy: 1e-4,
            lr_value: 1e-3,
            kl_stop: 0.02,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.clip > 0.0
            && self.clip < 1.0
            && self.gamma_shaping > 0.0
            && self.gamma_shaping <= 1.0
            && self.gamma_terminal > 0.0
            && self.gamma_terminal <= 1.0
            && self.episodes_per_update >= 1
            && self.epochs >= 1
            && self.lr_policy > 0.0
            && self.lr_value > 0.0
            && self.kl_stop > 0.0;
        if ok {
            Ok(())
        } else {
            Err(PolicyError::ConfigFault(format!("invalid PPO config {self:?}")))
        }
    }
}

/// One episode collected under the sampling policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRollout {
    /// Raw observations, one column per step.
    pub obs: DMatrix<f64>,
    pub actions: Vec<Vec<bool>>,
    /// Log-probability of each action under the collection policy.
    pub logp: Vec<f64>,
    /// Collection-policy logits, one column per step.
    pub logits: DMatrix<f64>,
    pub shaping: Vec<f64>,
    pub terminal: Vec<f64>,
    pub values: Vec<f64>,
    pub miss: f64,
    pub fuel_used: f64,
    pub cause: TerminationCause,
}

impl EpisodeRollout {
    pub fn len(&self) -> usize {
        self.logp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logp.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.shaping.iter().sum::<f64>() + self.terminal.iter().sum::<f64>()
    }

    pub fn check(&self) -> Result<()> {
        let t = self.len();
        let ok = self.obs.ncols() == t
            && self.actions.len() == t
            && self.logits.ncols() == t
            && self.shaping.len() == t
            && self.terminal.len() == t
            && self.values.len() == t
            && self.logp.iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(PolicyError::ConfigFault("rollout sequences have inconsistent lengths or non-finite log-probs".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBatch {
    pub episodes: Vec<EpisodeRollout>,
    /// Episodes dropped because they ended in a fault.
    pub faults: usize,
}

impl RolloutBatch {
    pub fn steps(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }
}

/// `R_k = Σ_{l≥k} γ₁^{l−k} shaping_l + Σ_{l≥k} γ₂^{l−k} terminal_l`.
pub fn dual_discount_return(shaping: &[f64], terminal: &[f64], gamma_shaping: f64, gamma_terminal: f64) -> Vec<f64> {
    assert_eq!(shaping.len(), terminal.len(), "reward channels differ in length");
    let mut out = vec![0.0; shaping.len()];
    let (mut a, mut b) = (0.0, 0.0);
    for k in (0..shaping.len()).rev() {
        a = shaping[k] + gamma_shaping * a;
        b = terminal[k] + gamma_terminal * b;
        out[k] = a + b;
    }
    out
}

/// `A = R − V`, optionally normalized to zero mean and unit variance over
/// the whole batch (skipped when the variance vanishes).
pub fn advantages(returns: &[Vec<f64>], values: &[Vec<f64>], normalize: bool) -> Vec<Vec<f64>> {
    let mut adv: Vec<Vec<f64>> =
        returns.iter().zip(values).map(|(r, v)| r.iter().zip(v).map(|(r, v)| r - v).collect()).collect();
    if normalize {
        let n: usize = adv.iter().map(|a| a.len()).sum();
        if n > 0 {
            let mean = adv.iter().flatten().sum::<f64>() / n as f64;
            let var = adv.iter().flatten().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd > 1e-12 {
                for a in adv.iter_mut().flatten() {
                    *a = (*a - mean) / sd;
                }
            }
        }
    }
    adv
}

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: RecurrentNet,
    pub v: RecurrentNet,
    pub t: u64,
}

impl Adam {
    pub fn new(like: &RecurrentNet) -> Self {
        Self { m: RecurrentNet::zeros(like.sizes), v: RecurrentNet::zeros(like.sizes), t: 0 }
    }

    /// Descent step on `net` along `grad`.
    pub fn step(&mut self, net: &mut RecurrentNet, grad: &RecurrentNet, lr: f64, cfg: &PpoConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, g), m), v) in net.tensors_mut().into_iter().zip(grad.tensors()).zip(self.m.tensors_mut()).zip(self.v.tensors_mut()) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.adam_eps);
            }
        }
    }
}

/// Optimizer state for both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub policy: Adam,
    pub value: Adam,
}

impl Optimizer {
    pub fn new(params: &NetworkParams) -> Self {
        Self { policy: Adam::new(&params.policy), value: Adam::new(&params.value) }
    }
}

/// Clipped surrogate at one step and its derivative with respect to the
/// new log-probability. The unclipped branch wins ties.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SurrogateStats {
    /// Mean clipped surrogate over all steps.
    pub objective: f64,
    /// Mean KL(collection ‖ current) per step.
    pub kl: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
}

/// Runs every episode of the batch through `net` in one packed pass.
fn packed_forward(net: &RecurrentNet, scaler: &ObsScaler, batch: &RolloutBatch) -> Result<SeqCache> {
    let lens: Vec<usize> = batch.episodes.iter().map(EpisodeRollout::len).collect();
    let packing = Packing::new(&lens);
    let seqs: Vec<DMatrix<f64>> = batch.episodes.iter().map(|ep| scaler.apply_matrix(&ep.obs)).collect();
    net.forward_packed(&packing.pack(&seqs), packing)
}

/// Mean clipped surrogate over the batch and, if requested, its gradient.
pub fn policy_objective(
    net: &RecurrentNet,
    scaler: &ObsScaler,
    batch: &RolloutBatch,
    adv: &[Vec<f64>],
    clip: f64,
    with_grad: bool,
) -> Result<(SurrogateStats, Option<RecurrentNet>)> {
    let n = batch.steps();
    if n == 0 {
        return Err(PolicyError::ConfigFault("empty rollout batch".into()));
    }
    let inv_n = 1.0 / n as f64;
    let cache = packed_forward(net, scaler, batch)?;
    let out = &cache.out;
    let mut s = SurrogateStats::default();
    let mut d_out = DMatrix::zeros(out.nrows(), out.ncols());
    let mut g = vec![0.0; out.nrows()];
    for (e, (ep, a)) in batch.episodes.iter().zip(adv).enumerate() {
        for t in 0..ep.len() {
            let col = cache.packing.column(e, t);
            let logits: Vec<f64> = out.column(col).iter().copied().collect();
            let lp = log_prob(&logits, &ep.actions[t]);
            let ratio = (lp - ep.logp[t]).exp();
            let (sur, d_lp) = clipped_surrogate(ratio, a[t], clip);
            s.objective += sur * inv_n;
            s.mean_ratio += ratio * inv_n;
            if (ratio - 1.0).abs() > clip {
                s.clip_fraction += inv_n;
            }
            let old = ActionDistribution::new(ep.logits.column(t).iter().copied().collect());
            s.kl += old.kl(&ActionDistribution::new(logits.clone())) * inv_n;
            if with_grad && d_lp != 0.0 {
                log_prob_grad(&logits, &ep.actions[t], &mut g);
                for (i, gi) in g.iter().enumerate() {
                    d_out[(i, col)] = d_lp * gi * inv_n;
                }
            }
        }
    }
    let grad = with_grad.then(|| net.backward_seq(&cache, &d_out));
    Ok((s, grad))
}

/// Mean squared value error over the batch and, if requested, its gradient.
pub fn value_loss(
    net: &RecurrentNet,
    scaler: &ObsScaler,
    batch: &RolloutBatch,
    returns: &[Vec<f64>],
    with_grad: bool,
) -> Result<(f64, Option<RecurrentNet>)> {
    let n = batch.steps();
    if n == 0 {
        return Err(PolicyError::ConfigFault("empty rollout batch".into()));
    }
    let inv_n = 1.0 / n as f64;
    let cache = packed_forward(net, scaler, batch)?;
    let mut loss = 0.0;
    let mut d_out = DMatrix::zeros(1, cache.out.ncols());
    for (e, (ep, r)) in batch.episodes.iter().zip(returns).enumerate() {
        for t in 0..ep.len() {
            let col = cache.packing.column(e, t);
            let err = cache.out[(0, col)] - r[t];
            loss += err * err * inv_n;
            d_out[(0, col)] = 2.0 * err * inv_n;
        }
    }
    Ok((loss, with_grad.then(|| net.backward_seq(&cache, &d_out))))
}

/// Value predictions for every step of every episode.
pub fn predict_values(net: &RecurrentNet, scaler: &ObsScaler, batch: &RolloutBatch) -> Result<Vec<Vec<f64>>> {
    let cache = packed_forward(net, scaler, batch)?;
    Ok(batch
        .episodes
        .iter()
        .enumerate()
        .map(|(e, ep)| (0..ep.len()).map(|t| cache.out[(0, cache.packing.column(e, t))]).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub epochs_run: usize,
    /// KL between the collection policy and the updated policy.
    pub kl: f64,
    pub clip_fraction: f64,
    pub objective_first: f64,
    pub objective_last: f64,
    pub value_loss_first: f64,
    pub value_loss_last: f64,
    /// The last policy step overshot twice the KL limit and was undone.
    pub reverted: bool,
    /// A non-finite loss stopped the update; parameters were restored.
    pub aborted: bool,
}

/// Runs the epoch loop of one update on `params` in place.
pub fn ppo_update(params: &mut NetworkParams, opt: &mut Optimizer, batch: &RolloutBatch, cfg: &PpoConfig) -> Result<UpdateDiagnostics> {
    cfg.validate()?;
    if batch.steps() == 0 {
        return Err(PolicyError::ConfigFault("empty rollout batch".into()));
    }
    for ep in &batch.episodes {
        ep.check()?;
    }
    let returns: Vec<Vec<f64>> = batch
        .episodes
        .iter()
        .map(|e| dual_discount_return(&e.shaping, &e.terminal, cfg.gamma_shaping, cfg.gamma_terminal))
        .collect();
    let values = predict_values(&params.value, &params.scaler, batch)?;
    let adv = advantages(&returns, &values, true);

    let start = (params.clone(), opt.clone());
    let mut diag = UpdateDiagnostics::default();
    let mut before_last: Option<(RecurrentNet, Adam)> = None;
    let mut last_stats = SurrogateStats::default();
    for epoch in 0..cfg.epochs {
        let (stats, grad) = policy_objective(&params.policy, &params.scaler, batch, &adv, cfg.clip, true)?;
        let (vloss, vgrad) = value_loss(&params.value, &params.scaler, batch, &returns, true)?;
        if !stats.objective.is_finite() || !vloss.is_finite() {
            (*params, *opt) = start;
            diag.aborted = true;
            return Ok(diag);
        }
        if epoch == 0 {
            diag.objective_first = stats.objective;
            diag.value_loss_first = vloss;
        }
        diag.objective_last = stats.objective;
        diag.value_loss_last = vloss;
        last_stats = stats;
        if epoch > 0 && stats.kl > cfg.kl_stop {
            break;
        }
        before_last = Some((params.policy.clone(), opt.policy.clone()));
        let mut ascent = grad.expect("gradient requested");
        for t in ascent.tensors_mut() {
            t.neg_mut();
        }
        opt.policy.step(&mut params.policy, &ascent, cfg.lr_policy, cfg);
        opt.value.step(&mut params.value, &vgrad.expect("gradient requested"), cfg.lr_value, cfg);
        diag.epochs_run += 1;
    }
    let (mut final_stats, _) = policy_objective(&params.policy, &params.scaler, batch, &adv, cfg.clip, false)?;
    if !final_stats.kl.is_finite() || !params.is_finite() {
        (*params, *opt) = start;
        diag.aborted = true;
        return Ok(diag);
    }
    if final_stats.kl > 2.0 * cfg.kl_stop {
        if let Some((net, adam)) = before_last {
            params.policy = net;
            opt.policy = adam;
            diag.reverted = true;
            final_stats = policy_objective(&params.policy, &params.scaler, batch, &adv, cfg.clip, false)?.0;
        }
    }
    diag.kl = final_stats.kl;
    diag.clip_fraction = if diag.epochs_run > 0 { final_stats.clip_fraction } else { last_stats.clip_fraction };
    Ok(diag)
}
