//! Client confidence on the target domain and weighted parameter averaging.
//!
//! Confidence is the mean prediction entropy of a client model over the
//! unlabeled target samples. Scaled Entropy Attention (SEA) turns these
//! into weights by inverting each entropy, dividing by the mean inverse,
//! squaring, and normalizing, which works out to `w'_i^2 / Σ_j w'_j^2` with
//! `w'_i = 1 / H_i`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::UnlabeledDataset;
use crate::error::{FudaError, Result};
use crate::nn::{forward, softmax_rows, ModelParams, PROB_FLOOR};

/// Mean entropies are clamped to at least this before inversion.
pub const ENTROPY_FLOOR: f64 = 1e-6;

/// Tolerance on `Σ w = 1` accepted by [`aggregate`].
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggregatorKind {
    /// `w_i = 1/M`
    #[serde(rename = "uniform")]
    UniformAverage,
    /// FedAvg: `w_i = N_i / Σ N_j`
    #[serde(rename = "fedavg")]
    SampleCount,
    /// `w_i = (1/H_i) / Σ (1/H_j)`
    #[serde(rename = "entropy")]
    EntropyUnscaled,
    /// Scaled Entropy Attention.
    #[serde(rename = "sea")]
    Sea,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 4] = [
        AggregatorKind::UniformAverage,
        AggregatorKind::SampleCount,
        AggregatorKind::EntropyUnscaled,
        AggregatorKind::Sea,
    ];

    /// Name used on the command line and in config files.
    pub fn cli_name(self) -> &'static str {
        match self {
            AggregatorKind::UniformAverage => "uniform",
            AggregatorKind::SampleCount => "fedavg",
            AggregatorKind::EntropyUnscaled => "entropy",
            AggregatorKind::Sea => "sea",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            AggregatorKind::UniformAverage => "UniformAverage",
            AggregatorKind::SampleCount => "FedAvg",
            AggregatorKind::EntropyUnscaled => "EntropyUnscaled",
            AggregatorKind::Sea => "SEA",
        }
    }
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for AggregatorKind {
    type Err = FudaError;

    fn from_str(s: &str) -> Result<Self> {
        AggregatorKind::ALL
            .into_iter()
            .find(|k| k.cli_name() == s)
            .ok_or_else(|| FudaError::Config(format!("unknown aggregator {s:?} (uniform|fedavg|entropy|sea)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEntropy {
    pub client_id: String,
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyStats {
    pub per_client: Vec<ClientEntropy>,
}

impl EntropyStats {
    pub fn from_values<S: Into<String>>(ids: impl IntoIterator<Item = S>, entropies: &[f64]) -> Self {
        EntropyStats {
            per_client: ids
                .into_iter()
                .zip(entropies)
                .map(|(id, &h)| ClientEntropy {
                    client_id: id.into(),
                    mean_entropy: h,
                })
                .collect(),
        }
    }

    /// Anonymous stats (`client0`, `client1`, ...) for a list of entropies.
    pub fn anonymous(entropies: &[f64]) -> Self {
        Self::from_values((0..entropies.len()).map(|i| format!("client{i}")), entropies)
    }

    pub fn values(&self) -> Vec<f64> {
        self.per_client.iter().map(|c| c.mean_entropy).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientWeight {
    pub client_id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationWeights {
    pub per_client: Vec<ClientWeight>,
    pub strategy: AggregatorKind,
}

impl AggregationWeights {
    pub fn values(&self) -> Vec<f64> {
        self.per_client.iter().map(|c| c.weight).collect()
    }

    /// Weights given directly, e.g. for tests or externally chosen mixes.
    pub fn explicit(weights: &[f64], strategy: AggregatorKind) -> Self {
        AggregationWeights {
            per_client: weights
                .iter()
                .enumerate()
                .map(|(i, &w)| ClientWeight {
                    client_id: format!("client{i}"),
                    weight: w,
                })
                .collect(),
            strategy,
        }
    }
}

/// `-Σ p ln p`, with each `p` floored at [`PROB_FLOOR`] inside the log.
pub fn prediction_entropy(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(FudaError::invalid("entropy of an empty distribution"));
    }
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-6 {
        return Err(FudaError::invalid("entropy input is not a probability distribution"));
    }
    Ok(entropy_unchecked(probs))
}

pub(crate) fn entropy_unchecked(probs: &[f64]) -> f64 {
    -probs.iter().map(|&p| p * p.max(PROB_FLOOR).ln()).sum::<f64>()
}

/// Average prediction entropy of `params` over every target sample.
pub fn mean_entropy(params: &ModelParams, target: &UnlabeledDataset) -> Result<f64> {
    if target.is_empty() {
        return Err(FudaError::invalid("mean entropy over an empty target"));
    }
    let probs = softmax_rows(&forward(params, target.features())?);
    let total: f64 = probs.iter_rows().map(entropy_unchecked).sum();
    Ok(total / probs.rows() as f64)
}

/// Client weights under `kind`. `sample_counts` is only read by
/// [`AggregatorKind::SampleCount`] but must match the client count.
pub fn compute_weights(
    stats: &EntropyStats,
    sample_counts: &[usize],
    kind: AggregatorKind,
) -> Result<AggregationWeights> {
    let m = stats.per_client.len();
    if m == 0 {
        return Err(FudaError::invalid("no clients to weight"));
    }
    if sample_counts.len() != m {
        return Err(FudaError::dim(format!(
            "{} sample counts for {m} clients",
            sample_counts.len()
        )));
    }
    let entropies = stats.values();
    let raw: Vec<f64> = match kind {
        AggregatorKind::UniformAverage => vec![1.0; m],
        AggregatorKind::SampleCount => {
            if sample_counts.contains(&0) {
                return Err(FudaError::invalid("FedAvg weighting needs positive sample counts"));
            }
            sample_counts.iter().map(|&n| n as f64).collect()
        }
        AggregatorKind::EntropyUnscaled => inverse_entropies(&entropies)?,
        AggregatorKind::Sea => {
            let inv = inverse_entropies(&entropies)?;
            let mean = inv.iter().sum::<f64>() / m as f64;
            inv.iter().map(|w| (w / mean).powi(2)).collect()
        }
    };
    let total: f64 = raw.iter().sum();
    Ok(AggregationWeights {
        per_client: stats
            .per_client
            .iter()
            .zip(&raw)
            .map(|(c, &w)| ClientWeight {
                client_id: c.client_id.clone(),
                weight: w / total,
            })
            .collect(),
        strategy: kind,
    })
}

fn inverse_entropies(entropies: &[f64]) -> Result<Vec<f64>> {
    entropies
        .iter()
        .map(|&h| {
            if h < 0.0 || !h.is_finite() {
                Err(FudaError::invalid(format!(
                    "mean entropy {h} must be finite and nonnegative"
                )))
            } else {
                Ok(1.0 / h.max(ENTROPY_FLOOR))
            }
        })
        .collect()
}

/// Element-wise `Σ_i w_i θ_i` over every weight and bias.
pub fn aggregate(models: &[ModelParams], weights: &AggregationWeights) -> Result<ModelParams> {
    let w = weights.values();
    let first = models
        .first()
        .ok_or_else(|| FudaError::invalid("no models to aggregate"))?;
    if w.len() != models.len() {
        return Err(FudaError::dim(format!(
            "{} weights for {} models",
            w.len(),
            models.len()
        )));
    }
    for (i, m) in models.iter().enumerate() {
        first.ensure_same_shape(m, &format!("aggregate model {i}"))?;
    }
    if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(FudaError::invalid("aggregation weights must be finite and nonnegative"));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(FudaError::invalid(format!("aggregation weights sum to {sum}, not 1")));
    }
    let mut out = first.zeros_like();
    for (model, &wi) in models.iter().zip(&w) {
        for (o, v) in out.values_mut().zip(model.values()) {
            *o += wi * v;
        }
    }
    Ok(out)
}
