//! Multi-source pseudo-labeling: every source model scores the unlabeled
//! target samples, the averaged logits become soft pseudo labels, and the
//! aggregated global model is fine-tuned on them with smoothed soft-label
//! cross-entropy (SSCE).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregation::entropy_unchecked;
use crate::data::UnlabeledDataset;
use crate::error::{FudaError, Result};
use crate::nn::{fit, forward, smooth_distribution, softmax_rows, LossKind, Matrix, ModelParams, Targets, TrainConfig};

/// Target-side loss used during adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MsplLoss {
    /// Smoothed soft-label cross-entropy.
    Ssce,
    /// Hard cross-entropy on the argmax of each pseudo label.
    Ce,
    /// Soft-label cross-entropy without smoothing.
    SoftCe,
}

impl MsplLoss {
    pub fn name(self) -> &'static str {
        match self {
            MsplLoss::Ssce => "ssce",
            MsplLoss::Ce => "ce",
            MsplLoss::SoftCe => "softce",
        }
    }
}

impl fmt::Display for MsplLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MsplLoss {
    type Err = FudaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ssce" => Ok(MsplLoss::Ssce),
            "ce" => Ok(MsplLoss::Ce),
            "softce" => Ok(MsplLoss::SoftCe),
            _ => Err(FudaError::Config(format!("unknown MSPL loss {s:?} (ssce|ce|softce)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsplConfig {
    pub epsilon: f64,
    pub train: TrainConfig,
    #[serde(default = "default_loss")]
    pub loss: MsplLoss,
}

fn default_loss() -> MsplLoss {
    MsplLoss::Ssce
}

impl Default for MsplConfig {
    /// SSCE with epsilon 0.9, 10 epochs of the client recipe.
    fn default() -> Self {
        MsplConfig {
            epsilon: 0.9,
            train: TrainConfig::adaptation_default(),
            loss: MsplLoss::Ssce,
        }
    }
}

impl MsplConfig {
    pub fn loss_kind(&self) -> LossKind {
        match self.loss {
            MsplLoss::Ssce => LossKind::Ssce { epsilon: self.epsilon },
            MsplLoss::Ce => LossKind::HardCe,
            MsplLoss::SoftCe => LossKind::SoftCe,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(FudaError::invalid(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        self.train.validate()
    }
}

/// One probability vector per target sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub per_sample: Matrix,
    pub source_count: usize,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.per_sample.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample.rows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.per_sample.cols()
    }

    /// Most probable class of every sample; ties go to the lowest index.
    pub fn argmax_labels(&self) -> Vec<usize> {
        self.per_sample.iter_rows().map(argmax).collect()
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Average the logits of every source model per target sample, then
/// softmax the average.
pub fn generate_pseudo_labels(models: &[ModelParams], target: &UnlabeledDataset) -> Result<PseudoLabelSet> {
    let first = models
        .first()
        .ok_or_else(|| FudaError::invalid("pseudo labeling needs at least one model"))?;
    for (i, m) in models.iter().enumerate() {
        first.ensure_same_shape(m, &format!("pseudo-label source {i}"))?;
    }
    if first.num_classes() != target.num_classes() {
        return Err(FudaError::dim(format!(
            "models emit {} classes, target has {}",
            first.num_classes(),
            target.num_classes()
        )));
    }
    let mut sum = Matrix::zeros(target.len(), first.num_classes());
    for model in models {
        let logits = forward(model, target.features())?;
        for i in 0..logits.rows() {
            for (s, z) in sum.row_mut(i).iter_mut().zip(logits.row(i)) {
                *s += z;
            }
        }
    }
    let scale = 1.0 / models.len() as f64;
    for i in 0..sum.rows() {
        sum.row_mut(i).iter_mut().for_each(|v| *v *= scale);
    }
    Ok(PseudoLabelSet {
        per_sample: softmax_rows(&sum),
        source_count: models.len(),
    })
}

/// `v <- (1 - epsilon) v + epsilon / C` for every sample.
pub fn smooth_labels(pl: &PseudoLabelSet, epsilon: f64) -> Result<PseudoLabelSet> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(FudaError::invalid(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let mut out = pl.per_sample.clone();
    for i in 0..out.rows() {
        let smoothed = smooth_distribution(pl.per_sample.row(i), epsilon);
        out.row_mut(i).copy_from_slice(&smoothed);
    }
    Ok(PseudoLabelSet {
        per_sample: out,
        source_count: pl.source_count,
    })
}

/// `H(smoothed) - H(original)` per sample.
pub fn entropy_increase_of_smoothing(pl: &PseudoLabelSet, epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(FudaError::invalid(format!("epsilon {epsilon} outside (0, 1]")));
    }
    Ok(pl
        .per_sample
        .iter_rows()
        .map(|v| entropy_unchecked(&smooth_distribution(v, epsilon)) - entropy_unchecked(v))
        .collect())
}

/// Fine-tune `global` on the target against fixed pseudo labels. For SSCE
/// the raw pseudo labels go in and the loss applies the smoothing.
pub fn adapt_global(
    global: &ModelParams,
    target: &UnlabeledDataset,
    pl: &PseudoLabelSet,
    cfg: &MsplConfig,
) -> Result<ModelParams> {
    cfg.validate()?;
    if pl.len() != target.len() {
        return Err(FudaError::invalid(format!(
            "{} pseudo labels for {} target samples",
            pl.len(),
            target.len()
        )));
    }
    let targets = match cfg.loss {
        MsplLoss::Ce => Targets::Classes(pl.argmax_labels()),
        MsplLoss::Ssce | MsplLoss::SoftCe => Targets::Distributions(pl.per_sample.clone()),
    };
    let mut params = global.clone();
    fit(&mut params, target.features(), &targets, cfg.loss_kind(), &cfg.train)?;
    Ok(params)
}
