use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{FudaError, Result};

/// Widths of a bottleneck + head classifier operating on precomputed features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub bottleneck_widths: Vec<usize>,
    pub num_classes: usize,
}

impl ArchitectureSpec {
    pub fn new(input_dim: usize, bottleneck_widths: Vec<usize>, num_classes: usize) -> Result<Self> {
        let arch = ArchitectureSpec {
            input_dim,
            bottleneck_widths,
            num_classes,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Desk-scale default: two bottleneck layers of 64 and 32 units.
    pub fn desk_default(input_dim: usize, num_classes: usize) -> Self {
        ArchitectureSpec {
            input_dim,
            bottleneck_widths: vec![64, 32],
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(FudaError::invalid("input_dim must be >= 1"));
        }
        if self.num_classes < 2 {
            return Err(FudaError::invalid("num_classes must be >= 2"));
        }
        if self.bottleneck_widths.contains(&0) {
            return Err(FudaError::invalid("bottleneck widths must be positive"));
        }
        Ok(())
    }

    /// (in, out) pairs of each dense layer, input to head.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.bottleneck_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.bottleneck_widths);
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// One fully connected layer. `weights` is row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn weight(&self, out: usize, input: usize) -> f64 {
        self.weights[out * self.in_dim + input]
    }

    /// `out[o] = b[o] + Σ_i W[o,i] x[i]`
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *out_v = acc;
        }
    }
}

/// Trainable parameters of one client or global model: bottleneck layers
/// followed by the classification head. Also used as the gradient and
/// momentum-buffer container, since those share the parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<DenseLayer>,
}

impl ModelParams {
    pub fn zeros(arch: &ArchitectureSpec) -> Self {
        ModelParams {
            layers: arch
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| DenseLayer::zeros(i, o))
                .collect(),
        }
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(arch: &ArchitectureSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(arch);
        for layer in &mut params.layers {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..=bound);
            }
        }
        params
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    /// Recover the architecture; fails if layer shapes do not chain.
    pub fn architecture(&self) -> Result<ArchitectureSpec> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| FudaError::invalid("model has no layers"))?;
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != layer.in_dim * layer.out_dim || layer.bias.len() != layer.out_dim {
                return Err(FudaError::dim(format!("layer {k} buffers do not match its shape")));
            }
            if k > 0 && self.layers[k - 1].out_dim != layer.in_dim {
                return Err(FudaError::dim(format!(
                    "layer {k} expects {} inputs but previous layer emits {}",
                    layer.in_dim,
                    self.layers[k - 1].out_dim
                )));
            }
        }
        let arch = ArchitectureSpec {
            input_dim: first.in_dim,
            bottleneck_widths: self.layers[..self.layers.len() - 1].iter().map(|l| l.out_dim).collect(),
            num_classes: self.layers[self.layers.len() - 1].out_dim,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// All scalars in canonical order: layer by layer, weights then bias.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().collect()
    }

    pub(crate) fn ensure_same_shape(&self, other: &ModelParams, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(FudaError::dim(format!("{what}: parameter shapes differ")))
        }
    }

    pub(crate) fn validate(&self) -> Result<ArchitectureSpec> {
        let arch = self.architecture()?;
        if !self.is_finite() {
            return Err(FudaError::invalid("model parameters contain NaN or Inf"));
        }
        Ok(arch)
    }
}

/// Intermediate values kept from a forward pass for backpropagation.
pub(crate) struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the batch itself.
    pub inputs: Vec<Matrix>,
    /// Pre-activation of every bottleneck layer (ReLU applied after).
    pub pre_activations: Vec<Matrix>,
    pub logits: Matrix,
}

pub(crate) fn check_batch(params: &ModelParams, batch: &Matrix) -> Result<()> {
    if params.layers.is_empty() {
        return Err(FudaError::invalid("model has no layers"));
    }
    if batch.cols() != params.input_dim() {
        return Err(FudaError::dim(format!(
            "batch has {} features, model expects {}",
            batch.cols(),
            params.input_dim()
        )));
    }
    if !batch.is_finite() {
        return Err(FudaError::invalid("batch contains NaN or Inf"));
    }
    Ok(())
}

pub(crate) fn forward_cached(params: &ModelParams, batch: &Matrix) -> ForwardCache {
    let n = batch.rows();
    let last = params.layers.len() - 1;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pre_activations = Vec::with_capacity(last);
    let mut current = batch.clone();
    for (k, layer) in params.layers.iter().enumerate() {
        let mut z = Matrix::zeros(n, layer.out_dim);
        for i in 0..n {
            layer.apply(current.row(i), z.row_mut(i));
        }
        inputs.push(current);
        if k == last {
            return ForwardCache {
                inputs,
                pre_activations,
                logits: z,
            };
        }
        let mut a = z.clone();
        for i in 0..n {
            for v in a.row_mut(i) {
                *v = v.max(0.0);
            }
        }
        pre_activations.push(z);
        current = a;
    }
    unreachable!("loop returns on the head layer")
}

/// Raw head outputs (pre-softmax) for every row of `batch`.
pub fn forward(params: &ModelParams, batch: &Matrix) -> Result<Matrix> {
    check_batch(params, batch)?;
    params.architecture()?;
    Ok(forward_cached(params, batch).logits)
}

/// Backpropagate `d_logits` (already scaled by the loss) into a gradient
/// with the shape of `params`.
pub(crate) fn backward(params: &ModelParams, cache: &ForwardCache, d_logits: Matrix) -> ModelParams {
    let mut grads = params.zeros_like();
    let n = d_logits.rows();
    let mut delta = d_logits;
    for k in (0..params.layers.len()).rev() {
        let layer = &params.layers[k];
        let input = &cache.inputs[k];
        let g = &mut grads.layers[k];
        for i in 0..n {
            let d = delta.row(i);
            let x = input.row(i);
            for (o, &d_o) in d.iter().enumerate() {
                if d_o == 0.0 {
                    continue;
                }
                g.bias[o] += d_o;
                let g_row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, xi) in g_row.iter_mut().zip(x) {
                    *gw += d_o * xi;
                }
            }
        }
        if k == 0 {
            break;
        }
        let pre = &cache.pre_activations[k - 1];
        let mut next = Matrix::zeros(n, layer.in_dim);
        for i in 0..n {
            let d = delta.row(i);
            let z = pre.row(i);
            let out = next.row_mut(i);
            for (o, &d_o) in d.iter().enumerate() {
                if d_o == 0.0 {
                    continue;
                }
                let w_row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (acc, w) in out.iter_mut().zip(w_row) {
                    *acc += d_o * w;
                }
            }
            for (acc, &zv) in out.iter_mut().zip(z) {
                if zv <= 0.0 {
                    *acc = 0.0;
                }
            }
        }
        delta = next;
    }
    grads
}

/// ReLU on/off pattern for every bottleneck unit and sample. Used to detect
/// when a finite-difference probe crosses a kink.
pub(crate) fn activation_pattern(params: &ModelParams, batch: &Matrix) -> Vec<bool> {
    forward_cached(params, batch)
        .pre_activations
        .iter()
        .flat_map(|m| m.as_slice().iter().map(|&z| z > 0.0))
        .collect()
}
