use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::DomainDataset;
use crate::error::{FudaError, Result};
use crate::nn::Matrix;

/// Multi-domain Gaussian-cluster benchmark with per-domain rotation,
/// translation and label noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticShiftConfig {
    pub num_domains: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub samples_per_domain: usize,
    pub class_separation: f64,
    /// Largest rotation angle (radians) in any plane.
    pub shift_rotation_max: f64,
    /// Largest translation norm.
    pub shift_translation_max: f64,
    pub label_noise_rate: f64,
    pub seed: u64,
}

impl SyntheticShiftConfig {
    /// The standard benchmark: 4 domains, 5 classes, 16-dim features,
    /// 600 samples per domain.
    pub fn standard() -> Self {
        SyntheticShiftConfig {
            num_domains: 4,
            num_classes: 5,
            feature_dim: 16,
            samples_per_domain: 600,
            class_separation: 4.0,
            shift_rotation_max: 0.6,
            shift_translation_max: 1.0,
            label_noise_rate: 0.05,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_domains < 2 {
            return Err(FudaError::invalid("need at least two domains"));
        }
        if self.num_classes < 2 {
            return Err(FudaError::invalid("need at least two classes"));
        }
        if self.feature_dim == 0 || self.samples_per_domain == 0 {
            return Err(FudaError::invalid(
                "feature_dim and samples_per_domain must be positive",
            ));
        }
        if self.num_classes > self.feature_dim {
            return Err(FudaError::invalid(format!(
                "{} orthogonal class centers do not fit in {} dimensions",
                self.num_classes, self.feature_dim
            )));
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return Err(FudaError::invalid("class_separation must be positive"));
        }
        if !(self.shift_rotation_max >= 0.0 && self.shift_rotation_max.is_finite())
            || !(self.shift_translation_max >= 0.0 && self.shift_translation_max.is_finite())
        {
            return Err(FudaError::invalid("shift magnitudes must be finite and nonnegative"));
        }
        if self.shift_rotation_max > 0.0 && self.feature_dim < 2 {
            return Err(FudaError::invalid("rotation needs feature_dim >= 2"));
        }
        if !(0.0..0.5).contains(&self.label_noise_rate) {
            return Err(FudaError::invalid("label_noise_rate must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

/// A generated domain together with its labels before noise was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDomain {
    pub dataset: DomainDataset,
    pub clean_labels: Vec<usize>,
}

/// Generate `num_domains` datasets. See [`generate_domains_with_clean_labels`].
pub fn generate_domains(cfg: &SyntheticShiftConfig) -> Result<Vec<DomainDataset>> {
    Ok(generate_domains_with_clean_labels(cfg)?
        .into_iter()
        .map(|d| d.dataset)
        .collect())
}

/// Domain 0 holds `N` samples from C unit-covariance Gaussian clusters whose
/// centers are `class_separation` times C orthonormal directions. Domain
/// `m >= 1` applies its own rotation (every plane angle within
/// `shift_rotation_max`) and translation (norm within
/// `shift_translation_max`) to those same samples, and resamples each label
/// uniformly with probability `label_noise_rate`.
///
/// Every domain draws from its own ChaCha stream, and the draws do not
/// depend on the shift magnitudes, so changing a magnitude rescales a
/// fixed shift instead of sampling a new one.
pub fn generate_domains_with_clean_labels(cfg: &SyntheticShiftConfig) -> Result<Vec<SyntheticDomain>> {
    cfg.validate()?;
    let (c, d, n) = (cfg.num_classes, cfg.feature_dim, cfg.samples_per_domain);

    let mut base_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let basis = random_orthonormal(d, &mut base_rng);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let mut base = Matrix::zeros(n, d);
    for (i, &y) in labels.iter().enumerate() {
        let row = base.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            let noise: f64 = base_rng.sample(StandardNormal);
            *v = cfg.class_separation * basis[y][j] + noise;
        }
    }

    let mut out = Vec::with_capacity(cfg.num_domains);
    out.push(SyntheticDomain {
        dataset: DomainDataset::new("domain0", base.clone(), Some(labels.clone()), c)?,
        clean_labels: labels.clone(),
    });

    for m in 1..cfg.num_domains {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(m as u64);

        let planes = random_orthonormal(d, &mut rng);
        let angles: Vec<f64> = (0..d / 2)
            .map(|_| rng.random_range(-1.0..=1.0) * cfg.shift_rotation_max)
            .collect();
        let direction = random_orthonormal(d, &mut rng).swap_remove(0);
        let magnitude = rng.random_range(0.0..=1.0) * cfg.shift_translation_max;

        let mut features = base.clone();
        if cfg.shift_rotation_max > 0.0 {
            let rotation = plane_rotation(&planes, &angles);
            for i in 0..n {
                let rotated = mat_vec(&rotation, features.row(i));
                features.row_mut(i).copy_from_slice(&rotated);
            }
        }
        if magnitude > 0.0 {
            for i in 0..n {
                for (v, u) in features.row_mut(i).iter_mut().zip(&direction) {
                    *v += magnitude * u;
                }
            }
        }

        let mut noisy = labels.clone();
        for y in noisy.iter_mut() {
            // Both draws happen for every sample so the stream stays aligned
            // across noise rates.
            let flip: f64 = rng.random();
            let replacement = rng.random_range(0..c);
            if flip < cfg.label_noise_rate {
                *y = replacement;
            }
        }

        out.push(SyntheticDomain {
            dataset: DomainDataset::new(format!("domain{m}"), features, Some(noisy), c)?,
            clean_labels: labels.clone(),
        });
    }
    Ok(out)
}

/// Rows of a random orthonormal basis (Gram-Schmidt on Gaussian vectors).
fn random_orthonormal(d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// `R = Σ_j` rotation by `angles[j]` in the plane spanned by basis vectors
/// `2j` and `2j + 1`, identity on any leftover direction.
fn plane_rotation(basis: &[Vec<f64>], angles: &[f64]) -> Vec<Vec<f64>> {
    let d = basis.len();
    let mut r = vec![vec![0.0; d]; d];
    let mut add_outer = |a: &[f64], b: &[f64], scale: f64| {
        for i in 0..d {
            for j in 0..d {
                r[i][j] += scale * a[i] * b[j];
            }
        }
    };
    for (j, &theta) in angles.iter().enumerate() {
        let (u, v) = (&basis[2 * j], &basis[2 * j + 1]);
        let (s, c) = theta.sin_cos();
        add_outer(u, u, c);
        add_outer(v, v, c);
        add_outer(v, u, s);
        add_outer(u, v, -s);
    }
    if d % 2 == 1 {
        let w = &basis[d - 1];
        add_outer(w, w, 1.0);
    }
    r
}

fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}
