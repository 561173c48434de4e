use crate::data::DomainDataset;
use crate::error::{FudaError, Result};
use crate::mspl::argmax;
use crate::nn::{forward, ModelParams};

/// Fraction of samples whose argmax logit (lowest index on ties) equals
/// the label.
pub fn accuracy(params: &ModelParams, labeled: &DomainDataset) -> Result<f64> {
    let labels = labeled.require_labels()?;
    let logits = forward(params, labeled.features())?;
    let correct = logits.iter_rows().zip(labels).filter(|(z, &y)| argmax(z) == y).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Pearson correlation of `(entropy, accuracy)` pairs.
pub fn entropy_accuracy_correlation(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 3 {
        return Err(FudaError::UndefinedCorrelation(format!(
            "need at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= f64::EPSILON * mean_x.abs().max(1.0) * n || syy <= f64::EPSILON * mean_y.abs().max(1.0) * n {
        return Err(FudaError::UndefinedCorrelation(
            "zero variance in entropy or accuracy".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
