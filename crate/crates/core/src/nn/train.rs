use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad_unchecked, LossKind, Targets};
use super::model::check_batch;
use super::optim::{lr_at_step, sgd_step};
use super::{Matrix, ModelParams};
use crate::error::{FudaError, Result};

/// Mini-batch SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Source-client recipe: 20 epochs, batch 32, lr 3e-2 with 5% warmup, momentum 0.9.
    pub fn client_default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 3e-2,
            momentum: 0.9,
            warmup_fraction: 0.05,
            seed: 0,
        }
    }

    /// Target adaptation recipe: as the client recipe but 10 epochs.
    pub fn adaptation_default() -> Self {
        TrainConfig {
            epochs: 10,
            ..Self::client_default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(FudaError::invalid("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FudaError::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(FudaError::invalid("momentum must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(FudaError::invalid("warmup_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub steps: usize,
    /// Sample-weighted mean loss over the last epoch; `None` when no epoch ran.
    pub final_epoch_loss: Option<f64>,
}

/// Train `params` in place. Samples are reshuffled every epoch with the
/// seed `cfg.seed ^ epoch`, so a run is a pure function of its inputs.
pub fn fit(
    params: &mut ModelParams,
    features: &Matrix,
    targets: &Targets,
    kind: LossKind,
    cfg: &TrainConfig,
) -> Result<FitSummary> {
    cfg.validate()?;
    kind.validate()?;
    let n = features.rows();
    if n == 0 {
        return Err(FudaError::invalid("cannot train on an empty dataset"));
    }
    check_batch(params, features)?;
    params.architecture()?;
    targets.validate(n, params.num_classes(), kind)?;

    let steps_per_epoch = cfg.steps_per_epoch(n);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut velocity = params.zeros_like();
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    let mut final_epoch_loss = None;

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = features.select_rows(chunk);
            let batch_targets = targets.select(chunk);
            let (loss, grads) = loss_and_grad_unchecked(params, &batch, &batch_targets, kind);
            let lr = lr_at_step(step, total_steps, cfg.learning_rate, cfg.warmup_fraction)?;
            sgd_step(params, &grads, &mut velocity, lr, cfg.momentum)?;
            epoch_loss += loss * chunk.len() as f64;
            step += 1;
        }
        let mean = epoch_loss / n as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(FudaError::Numeric(format!("training diverged in epoch {epoch}")));
        }
        final_epoch_loss = Some(mean);
    }
    Ok(FitSummary {
        steps: step,
        final_epoch_loss,
    })
}
