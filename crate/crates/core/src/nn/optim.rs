use super::ModelParams;
use crate::error::{FudaError, Result};

/// Heavy-ball momentum SGD:
/// `velocity <- momentum * velocity + grads`, `params <- params - lr * velocity`.
pub fn sgd_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    velocity: &mut ModelParams,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    params.ensure_same_shape(grads, "sgd_step gradients")?;
    params.ensure_same_shape(velocity, "sgd_step velocity")?;
    for ((p, v), g) in params.values_mut().zip(velocity.values_mut()).zip(grads.values()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// Number of warmup steps for a schedule of `total_steps`.
pub fn warmup_steps(total_steps: usize, warmup_fraction: f64) -> usize {
    // The small offset keeps products like 0.07 * 100 = 7.000000000000001 at 7.
    (warmup_fraction * total_steps as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Linear warmup from `base_lr / warmup` up to `base_lr`, then constant.
pub fn lr_at_step(step: usize, total_steps: usize, base_lr: f64, warmup_fraction: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(FudaError::invalid("learning-rate schedule needs total_steps > 0"));
    }
    if !(0.0..1.0).contains(&warmup_fraction) {
        return Err(FudaError::invalid(format!(
            "warmup_fraction {warmup_fraction} outside [0, 1)"
        )));
    }
    if step >= total_steps {
        return Err(FudaError::invalid(format!(
            "step {step} beyond schedule of {total_steps}"
        )));
    }
    let warmup = warmup_steps(total_steps, warmup_fraction);
    if step < warmup {
        Ok(base_lr * (step + 1) as f64 / warmup as f64)
    } else {
        Ok(base_lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DenseLayer;

    fn scalar(v: f64) -> ModelParams {
        // A 1x1 head with zero bias acts as a single scalar parameter.
        ModelParams {
            layers: vec![DenseLayer {
                in_dim: 1,
                out_dim: 1,
                weights: vec![v],
                bias: vec![0.0],
            }],
        }
    }

    #[test]
    fn plain_sgd() {
        let mut p = scalar(1.0);
        let mut v = p.zeros_like();
        sgd_step(&mut p, &scalar(0.5), &mut v, 0.1, 0.0).unwrap();
        assert_eq!(p.layers[0].weights[0], 0.95);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = scalar(3.25);
        let mut v = p.zeros_like();
        sgd_step(&mut p, &scalar(0.0), &mut v, 0.5, 0.9).unwrap();
        assert_eq!(p, scalar(3.25));
    }

    #[test]
    fn momentum_unrolled_two_steps() {
        let (g, lr) = (0.3, 0.05);
        let mut p = scalar(1.0);
        let mut v = p.zeros_like();
        sgd_step(&mut p, &scalar(g), &mut v, lr, 0.9).unwrap();
        let after_one = p.layers[0].weights[0];
        assert!((after_one - (1.0 - lr * g)).abs() < 1e-15);
        sgd_step(&mut p, &scalar(g), &mut v, lr, 0.9).unwrap();
        assert!((p.layers[0].weights[0] - after_one + lr * 1.9 * g).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = scalar(1.0);
        let mut v = p.zeros_like();
        let wide = ModelParams {
            layers: vec![DenseLayer::zeros(2, 1)],
        };
        assert!(sgd_step(&mut p, &wide, &mut v, 0.1, 0.0).is_err());
    }

    #[test]
    fn warmup_schedule() {
        assert_eq!(warmup_steps(100, 0.05), 5);
        assert_eq!(warmup_steps(100, 0.07), 7);
        assert!((lr_at_step(0, 100, 1.0, 0.05).unwrap() - 0.2).abs() < 1e-15);
        assert!((lr_at_step(3, 100, 0.03, 0.05).unwrap() - 0.03 * 4.0 / 5.0).abs() < 1e-15);
        for step in 5..100 {
            assert_eq!(lr_at_step(step, 100, 0.03, 0.05).unwrap(), 0.03);
        }
        for step in 0..10 {
            assert_eq!(lr_at_step(step, 10, 0.03, 0.0).unwrap(), 0.03);
        }
        assert!(lr_at_step(0, 0, 0.03, 0.05).is_err());
    }
}
