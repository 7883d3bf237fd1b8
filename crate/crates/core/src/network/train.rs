//! Minibatch SGD on randomly cropped, augmented patches.
//!
//! Step `s` draws its batch from the random stream `(batch_seed, s)`, so a run
//! resumed from a checkpoint at step `s` sees exactly the batches an
//! uninterrupted run would have seen.

use serde::{Deserialize, Serialize};

use super::{init_weights, loss_and_gradients, NetworkConfig, NetworkWeights};
use crate::dataset::{augment, sample_patch, PatchSpec, TrainingPair};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{sgd_step, LossConfig, SgdConfig, SgdState, Tensor5};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Patches per batch, `N`.
    pub batch_size: usize,
    /// Total optimiser steps; a resumed run stops at the same total.
    pub steps: u64,
    pub sgd: SgdConfig,
    pub loss: LossConfig,
    pub seed: u64,
    /// Checkpoint every this many steps; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub patch: PatchSpec,
    pub augment: bool,
    /// Multiply the learning rate by `decay_factor` every `decay_every`
    /// steps; 0 keeps it constant.
    #[serde(default)]
    pub decay_every: u64,
    #[serde(default = "unit")]
    pub decay_factor: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            steps: 1000,
            sgd: SgdConfig::default(),
            loss: LossConfig::default(),
            seed: 0,
            checkpoint_every: 0,
            patch: PatchSpec::default(),
            augment: true,
            decay_every: 0,
            decay_factor: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, net: &NetworkConfig) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be >= 1".into()));
        }
        self.sgd.validate()?;
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Domain(format!("decay_factor must lie in (0, 1], got {}", self.decay_factor)));
        }
        self.loss.validate()?;
        self.patch.check_context(net.num_blocks)
    }

    /// Optimiser settings in effect for step `step` (0-based).
    pub fn sgd_at(&self, step: u64) -> SgdConfig {
        let mut sgd = self.sgd;
        if let Some(k) = step.checked_div(self.decay_every) {
            let k = k.min(i32::MAX as u64) as i32;
            sgd.learning_rate *= self.decay_factor.powi(k);
        }
        sgd
    }

    fn batch_seed(&self) -> u64 {
        rng::child_seed(self.seed, 1)
    }
}

/// Everything needed to continue training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub weights: NetworkWeights,
    pub optimizer: SgdState,
    /// Steps completed so far.
    pub step: u64,
}

impl TrainState {
    /// Freshly initialised weights for `cfg.seed`.
    pub fn fresh(net: &NetworkConfig, cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            weights: init_weights(net, cfg.seed)?,
            optimizer: SgdState::default(),
            step: 0,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Total multi-block loss of every step run by this call.
    pub losses: Vec<f64>,
}

/// Input and target batches `(N, 1, T, H, W)` for step `step`.
pub fn make_batch(pairs: &[TrainingPair], cfg: &TrainConfig, step: u64) -> Result<(Tensor5, Tensor5)> {
    if pairs.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    let mut r = rng::stream(cfg.batch_seed(), step);
    let patches = (0..cfg.batch_size)
        .map(|_| {
            let pair = &pairs[rng::below(&mut r, pairs.len() as u64) as usize];
            let patch = sample_patch(pair, &cfg.patch, &mut r)?;
            Ok(if cfg.augment { augment(&patch, &mut r) } else { patch })
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<_> = patches.iter().map(|p| p.input.frames()).collect();
    let targets: Vec<_> = patches.iter().map(|p| p.target.frames()).collect();
    Ok((Tensor5::from_sequences(&inputs)?, Tensor5::from_sequences(&targets)?))
}

/// Runs SGD from `state` until `cfg.steps` total steps are done.
///
/// `on_checkpoint` is called with the current state every
/// `cfg.checkpoint_every` steps.
pub fn train(
    pairs: &[TrainingPair],
    net: &NetworkConfig,
    cfg: &TrainConfig,
    state: TrainState,
    mut on_checkpoint: impl FnMut(&TrainState) -> Result<()>,
) -> Result<TrainOutcome> {
    net.validate()?;
    cfg.validate(net)?;
    if pairs.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    state.weights.check_config(net)?;
    let mut state = state;
    let mut losses = Vec::with_capacity(cfg.steps.saturating_sub(state.step) as usize);
    while state.step < cfg.steps {
        let (input, target) = make_batch(pairs, cfg, state.step)?;
        let lg = loss_and_gradients(&state.weights, net, &input, &target, &cfg.loss)?;
        let sgd = cfg.sgd_at(state.step);
        if !lg.loss.is_finite() {
            return Err(Error::Diverged {
                step: state.step,
                learning_rate: sgd.learning_rate,
                loss: lg.loss,
            });
        }
        sgd_step(&mut state.weights, &lg.gradients, &sgd, &mut state.optimizer)?;
        if !state.weights.is_finite() {
            return Err(Error::Diverged {
                step: state.step,
                learning_rate: sgd.learning_rate,
                loss: f64::NAN,
            });
        }
        state.step += 1;
        losses.push(lg.loss);
        log::debug!("step {} loss {:.6}", state.step, lg.loss);
        if cfg.checkpoint_every > 0 && state.step.is_multiple_of(cfg.checkpoint_every) {
            on_checkpoint(&state)?;
        }
    }
    Ok(TrainOutcome { state, losses })
}
