use super::loss::{loss_value, LossKind, Targets};
use super::model::activation_pattern;
use super::{loss_and_grad, Matrix, ModelParams};
use crate::error::{FudaError, Result};

/// Gradients smaller than this are compared in absolute rather than
/// relative terms; finite-difference round-off dominates below it.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Index (canonical parameter order) of the worst entry.
    pub worst_index: usize,
    pub checked: usize,
    /// Entries skipped because the probe flipped a ReLU on or off.
    pub skipped_at_kinks: usize,
}

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares `analytic` against central differences of the loss.
pub fn check_gradients_with(
    params: &ModelParams,
    analytic: &ModelParams,
    batch: &Matrix,
    targets: &Targets,
    kind: LossKind,
    h: f64,
) -> Result<GradCheckReport> {
    if h.is_nan() || h <= 0.0 {
        return Err(FudaError::invalid("finite-difference step must be positive"));
    }
    params.ensure_same_shape(analytic, "gradient check")?;
    let base_pattern = activation_pattern(params, batch);
    let analytic = analytic.to_flat();
    let mut probe = params.clone();
    let mut report = GradCheckReport::default();

    for (idx, &a) in analytic.iter().enumerate() {
        let original = *probe.values_mut().nth(idx).expect("index within parameter count");
        set(&mut probe, idx, original + h);
        let crossed_up = activation_pattern(&probe, batch) != base_pattern;
        let plus = loss_value(&probe, batch, targets, kind)?;
        set(&mut probe, idx, original - h);
        let crossed_down = activation_pattern(&probe, batch) != base_pattern;
        let minus = loss_value(&probe, batch, targets, kind)?;
        set(&mut probe, idx, original);

        if crossed_up || crossed_down {
            report.skipped_at_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(a, numeric);
        report.checked += 1;
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = idx;
        }
    }
    Ok(report)
}

fn set(params: &mut ModelParams, idx: usize, value: f64) {
    *params.values_mut().nth(idx).expect("index within parameter count") = value;
}

/// Worst relative error between `loss_and_grad` and central differences.
pub fn check_gradients(params: &ModelParams, batch: &Matrix, targets: &Targets, kind: LossKind, h: f64) -> Result<f64> {
    let (_, grads) = loss_and_grad(params, batch, targets, kind)?;
    Ok(check_gradients_with(params, &grads, batch, targets, kind, h)?.max_relative_error)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::ArchitectureSpec;

    fn setup(seed: u64) -> (ModelParams, Matrix, Targets) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = ArchitectureSpec::new(4, vec![5], 3).unwrap();
        let params = ModelParams::init(&arch, seed);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels = (0..6).map(|_| rng.random_range(0..3)).collect();
        (params, Matrix::from_rows(&rows).unwrap(), Targets::Classes(labels))
    }

    #[test]
    fn small_random_net_passes() {
        for seed in 0..5 {
            let (p, x, t) = setup(seed);
            let err = check_gradients(&p, &x, &t, LossKind::HardCe, 1e-5).unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let (p, x, t) = setup(7);
        let (_, mut grads) = loss_and_grad(&p, &x, &t, LossKind::HardCe).unwrap();
        grads.layers[0].weights[3] += 0.1;
        let report = check_gradients_with(&p, &grads, &x, &t, LossKind::HardCe, 1e-5).unwrap();
        assert!(report.max_relative_error > 1e-2, "{report:?}");
        assert_eq!(report.worst_index, 3);
    }

    #[test]
    fn step_must_be_positive() {
        let (p, x, t) = setup(1);
        assert!(check_gradients(&p, &x, &t, LossKind::HardCe, 0.0).is_err());
    }
}
