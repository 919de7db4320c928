//! Central-difference verification of the backprop-through-time gradients.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use intercept_core::engagement::TerminationCause;
use intercept_core::RngStream;

use crate::dist::log_prob;
use crate::error::Result;
use crate::network::{NetSizes, RecurrentNet, TENSOR_NAMES};
use crate::params::NetworkParams;
use crate::ppo::{dual_discount_return, policy_objective, value_loss, EpisodeRollout, RolloutBatch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub max_abs_error: f64,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-10)`.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }

    pub fn get(&self, name: &str) -> Option<&TensorCheck> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// A small synthetic problem: network, batch, advantages and returns.
#[derive(Debug, Clone)]
pub struct TinyProblem {
    pub params: NetworkParams,
    pub batch: RolloutBatch,
    pub advantages: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
    pub clip: f64,
}

impl TinyProblem {
    /// obs 3, act 2, recurrent width 3 (policy) and 2 (value). The batch is
    /// collected under a perturbed copy of the policy so that ratios differ
    /// from one and some steps sit on the clipped branch.
    pub fn new(seed: u64, lengths: &[usize]) -> Result<Self> {
        let mut rng = RngStream::new(seed, 0);
        let params = NetworkParams::init_with(
            NetSizes { input: 3, h1: 4, h2: 3, h3: 4, output: 4 },
            NetSizes { input: 3, h1: 4, h2: 2, h3: 2, output: 1 },
            &mut rng,
        )?;
        let mut old = params.policy.clone();
        for t in old.tensors_mut() {
            for x in t.iter_mut() {
                *x += rng.uniform(-0.3, 0.3);
            }
        }
        let mut episodes = Vec::new();
        let mut advantages = Vec::new();
        let mut returns = Vec::new();
        for &len in lengths {
            let obs = DMatrix::from_fn(3, len, |_, _| rng.uniform(-1.5, 1.5));
            let logits = old.forward_seq(&obs)?.out;
            let actions: Vec<Vec<bool>> = (0..len).map(|_| (0..2).map(|_| rng.unit() < 0.5).collect()).collect();
            let logp =
                (0..len).map(|k| log_prob(logits.column(k).as_slice(), &actions[k])).collect();
            let shaping: Vec<f64> = (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mut terminal = vec![0.0; len];
            terminal[len - 1] = if rng.unit() < 0.5 { 10.0 } else { 0.0 };
            returns.push(dual_discount_return(&shaping, &terminal, 0.9, 0.995));
            advantages.push((0..len).map(|_| rng.uniform(-2.0, 2.0)).collect());
            episodes.push(EpisodeRollout {
                obs,
                actions,
                logp,
                logits,
                shaping,
                terminal,
                values: vec![0.0; len],
                miss: 0.0,
                fuel_used: 0.0,
                cause: TerminationCause::InterceptWindowExit,
            });
        }
        Ok(Self { params, batch: RolloutBatch { episodes, faults: 0 }, advantages, returns, clip: 0.1 })
    }

    pub fn policy_objective(&self, net: &RecurrentNet) -> Result<(f64, Option<RecurrentNet>)> {
        let (s, g) = policy_objective(net, &self.params.scaler, &self.batch, &self.advantages, self.clip, true)?;
        Ok((s.objective, g))
    }

    pub fn value_loss(&self, net: &RecurrentNet) -> Result<(f64, Option<RecurrentNet>)> {
        value_loss(net, &self.params.scaler, &self.batch, &self.returns, true)
    }
}

fn check_net(
    prefix: &str,
    net: &RecurrentNet,
    step: f64,
    f: impl Fn(&RecurrentNet) -> Result<(f64, Option<RecurrentNet>)>,
) -> Result<Vec<TensorCheck>> {
    let analytic = f(net)?.1.expect("gradient requested");
    let mut out = Vec::new();
    for (ti, name) in TENSOR_NAMES.iter().enumerate() {
        let a = analytic.tensors()[ti];
        let mut numeric = vec![0.0; a.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut up = net.clone();
            up.tensors_mut()[ti][i] += step;
            let mut dn = net.clone();
            dn.tensors_mut()[ti][i] -= step;
            *slot = (f(&up)?.0 - f(&dn)?.0) / (2.0 * step);
        }
        let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let an = a.norm();
        let nn = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        out.push(TensorCheck {
            name: format!("{prefix}.{name}"),
            analytic_norm: an,
            numeric_norm: nn,
            max_abs_error: a.iter().zip(&numeric).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
            rel_error: diff / an.max(nn).max(1e-10),
        });
    }
    Ok(out)
}

/// Compares analytic policy-surrogate and value-loss gradients with
/// central differences for every entry of every tensor.
pub fn gradient_check(problem: &TinyProblem, step: f64) -> Result<GradCheckReport> {
    let mut tensors = check_net("pi", &problem.params.policy, step, |n| problem.policy_objective(n))?;
    tensors.extend(check_net("vf", &problem.params.value, step, |n| problem.value_loss(n))?);
    let max_rel_error = tensors.iter().map(|t| t.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { step, tensors, max_rel_error })
}
