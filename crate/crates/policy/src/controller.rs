//! The learned policy as an engagement controller.

use nalgebra::DVector;

use intercept_core::airframe::ActionCommand;
use intercept_core::guidance::{ControlInput, Controller};
use intercept_core::{RngStream, SimError};

use crate::dist::{to_command, ActionDistribution, SampleMode};
use crate::params::NetworkParams;

/// What the controller saw and did at each step of one episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepRecord {
    /// Raw (unscaled) observations, concatenated.
    pub obs: Vec<f64>,
    pub actions: Vec<Vec<bool>>,
    pub logp: Vec<f64>,
    /// Logits, concatenated.
    pub logits: Vec<f64>,
}

impl StepRecord {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Runs the policy network forward once per guidance step, carrying the
/// recurrent state through the episode. The state is cleared on `reset`.
pub struct PolicyController<'a> {
    params: &'a NetworkParams,
    hidden: DVector<f64>,
    mode: SampleMode,
    rng: RngStream,
    record: Option<StepRecord>,
}

impl<'a> PolicyController<'a> {
    pub fn new(params: &'a NetworkParams, mode: SampleMode, rng: RngStream) -> Self {
        Self { params, hidden: params.policy.zero_hidden(), mode, rng, record: None }
    }

    /// Keep a [`StepRecord`] of the episode for training.
    pub fn recording(mut self) -> Self {
        self.record = Some(StepRecord::default());
        self
    }

    pub fn hidden(&self) -> &DVector<f64> {
        &self.hidden
    }

    pub fn take_record(&mut self) -> Option<StepRecord> {
        self.record.as_mut().map(std::mem::take)
    }
}

impl Controller for PolicyController<'_> {
    fn reset(&mut self) {
        self.hidden = self.params.policy.zero_hidden();
        if let Some(r) = self.record.as_mut() {
            *r = StepRecord::default();
        }
    }

    fn act(&mut self, input: &ControlInput) -> intercept_core::Result<ActionCommand> {
        let raw = input.packet.observation.as_slice();
        let x = self.params.scaler.apply(raw);
        let (out, h) = self.params.policy.step(&x, &self.hidden).map_err(|e| SimError::ConfigFault(e.to_string()))?;
        if !out.iter().all(|v| v.is_finite()) {
            return Err(SimError::ConfigFault("policy produced non-finite logits".into()));
        }
        self.hidden = h;
        let dist = ActionDistribution::new(out.iter().copied().collect());
        let (bits, lp) = dist.sample(&mut self.rng, self.mode);
        if let Some(r) = self.record.as_mut() {
            r.obs.extend_from_slice(raw);
            r.logits.extend_from_slice(&dist.logits);
            r.actions.push(bits.clone());
            r.logp.push(lp);
        }
        Ok(to_command(&bits))
    }
}
