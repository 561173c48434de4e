use serde::{Deserialize, Serialize};

use super::model::{backward, check_batch, forward_cached};
use super::{Matrix, ModelParams};
use crate::error::{FudaError, Result};

/// Smallest probability allowed inside a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Cross-entropy variants used for source training and target adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// Cross-entropy against integer class labels.
    HardCe,
    /// Cross-entropy against probability-vector targets.
    SoftCe,
    /// Soft cross-entropy with the target mixed toward uniform:
    /// `t' = (1 - epsilon) t + epsilon / C`.
    Ssce { epsilon: f64 },
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::Ssce { epsilon } if !(0.0..=1.0).contains(&epsilon) => Err(FudaError::invalid(format!(
                "SSCE epsilon must lie in [0, 1], got {epsilon}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::HardCe => "ce",
            LossKind::SoftCe => "softce",
            LossKind::Ssce { .. } => "ssce",
        }
    }
}

/// Training targets for a batch: one label or one distribution per row.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Distributions(Matrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Distributions(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Classes(v) => Targets::Classes(indices.iter().map(|&i| v[i]).collect()),
            Targets::Distributions(m) => Targets::Distributions(m.select_rows(indices)),
        }
    }

    /// Checks the targets against the batch size, class count and loss kind.
    pub fn validate(&self, n: usize, num_classes: usize, kind: LossKind) -> Result<()> {
        if self.len() != n {
            return Err(FudaError::dim(format!("{} targets for {n} samples", self.len())));
        }
        match (self, kind) {
            (Targets::Classes(labels), LossKind::HardCe) => {
                if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
                    return Err(FudaError::dim(format!(
                        "label {bad} out of range for {num_classes} classes"
                    )));
                }
            }
            (Targets::Distributions(m), LossKind::SoftCe | LossKind::Ssce { .. }) => {
                if m.cols() != num_classes {
                    return Err(FudaError::dim(format!(
                        "target distributions have {} classes, model has {num_classes}",
                        m.cols()
                    )));
                }
                for (i, row) in m.iter_rows().enumerate() {
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|&v| v < 0.0 || !v.is_finite()) || (sum - 1.0).abs() > 1e-6 {
                        return Err(FudaError::invalid(format!(
                            "target row {i} is not a probability vector"
                        )));
                    }
                }
            }
            (Targets::Classes(_), _) => {
                return Err(FudaError::dim(format!(
                    "{} loss needs probability-vector targets",
                    kind.name()
                )))
            }
            (Targets::Distributions(_), _) => {
                return Err(FudaError::dim("hard cross-entropy needs class-index targets"))
            }
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(FudaError::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(FudaError::invalid("softmax input contains NaN or Inf"));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    Ok(out)
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Row-wise softmax of a logit matrix.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        softmax_into(logits.row(i), out.row_mut(i));
    }
    out
}

/// Per-sample cross-entropy against `target` with the log floored at
/// `ln(PROB_FLOOR)`. Writes d(loss)/d(logits) into `grad`.
///
/// A floored term is constant in the logits, so it contributes nothing to
/// the gradient; this keeps the gradient exact for the returned value.
fn soft_ce_row(logits: &[f64], target: &[f64], grad: &mut [f64]) -> f64 {
    let floor = PROB_FLOOR.ln();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_sum = sum.ln();
    let mut loss = 0.0;
    let mut live_mass = 0.0;
    for (k, (&z, &t)) in logits.iter().zip(target).enumerate() {
        let log_p = z - max - log_sum;
        if log_p >= floor {
            loss -= t * log_p;
            live_mass += t;
            grad[k] = -t;
        } else {
            loss -= t * floor;
            grad[k] = 0.0;
        }
    }
    for (g, &z) in grad.iter_mut().zip(logits) {
        *g += (z - max).exp() / sum * live_mass;
    }
    loss
}

fn hard_ce_row(logits: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let floor = PROB_FLOOR.ln();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_p = logits[label] - max - sum.ln();
    if log_p < floor {
        grad.iter_mut().for_each(|g| *g = 0.0);
        return -floor;
    }
    for (k, (g, &z)) in grad.iter_mut().zip(logits).enumerate() {
        *g = (z - max).exp() / sum - if k == label { 1.0 } else { 0.0 };
    }
    -log_p
}

/// Smoothed target `(1 - epsilon) t + epsilon / C`.
pub fn smooth_distribution(target: &[f64], epsilon: f64) -> Vec<f64> {
    let c = target.len() as f64;
    target.iter().map(|&t| (1.0 - epsilon) * t + epsilon / c).collect()
}

/// Mean loss over the batch and `d(loss)/d(logits)` for every row.
pub(crate) fn loss_and_logit_grad(logits: &Matrix, targets: &Targets, kind: LossKind) -> (f64, Matrix) {
    let n = logits.rows();
    let mut d_logits = Matrix::zeros(n, logits.cols());
    let mut total = 0.0;
    for i in 0..n {
        let z = logits.row(i);
        let grad = d_logits.row_mut(i);
        total += match (targets, kind) {
            (Targets::Classes(labels), _) => hard_ce_row(z, labels[i], grad),
            (Targets::Distributions(m), LossKind::Ssce { epsilon }) => {
                soft_ce_row(z, &smooth_distribution(m.row(i), epsilon), grad)
            }
            (Targets::Distributions(m), _) => soft_ce_row(z, m.row(i), grad),
        };
    }
    let scale = 1.0 / n as f64;
    for i in 0..n {
        d_logits.row_mut(i).iter_mut().for_each(|g| *g *= scale);
    }
    (total * scale, d_logits)
}

fn check_inputs(params: &ModelParams, batch: &Matrix, targets: &Targets, kind: LossKind) -> Result<()> {
    check_batch(params, batch)?;
    params.architecture()?;
    kind.validate()?;
    if batch.rows() == 0 {
        return Err(FudaError::invalid("empty batch"));
    }
    targets.validate(batch.rows(), params.num_classes(), kind)
}

/// Batch-mean loss and its exact gradient with respect to every parameter.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &Matrix,
    targets: &Targets,
    kind: LossKind,
) -> Result<(f64, ModelParams)> {
    check_inputs(params, batch, targets, kind)?;
    Ok(loss_and_grad_unchecked(params, batch, targets, kind))
}

pub(crate) fn loss_and_grad_unchecked(
    params: &ModelParams,
    batch: &Matrix,
    targets: &Targets,
    kind: LossKind,
) -> (f64, ModelParams) {
    let cache = forward_cached(params, batch);
    let (loss, d_logits) = loss_and_logit_grad(&cache.logits, targets, kind);
    (loss, backward(params, &cache, d_logits))
}

/// Batch-mean loss without the backward pass.
pub fn loss_value(params: &ModelParams, batch: &Matrix, targets: &Targets, kind: LossKind) -> Result<f64> {
    check_inputs(params, batch, targets, kind)?;
    let logits = forward_cached(params, batch).logits;
    Ok(loss_and_logit_grad(&logits, targets, kind).0)
}
