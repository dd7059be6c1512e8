use serde::{Deserialize, Serialize};

use super::data::{Batch, Targets};
use super::layer::BasisLinear;
use crate::error::{BsiError, Result};
use crate::numkit::{Matrix, RngStream};

/// Smooth hidden-layer nonlinearity. The output layer is always linear
/// (logits go straight into softmax cross-entropy).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    /// tanh approximation of GELU.
    Gelu,
    Identity,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_A: f64 = 0.044_715;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Gelu => {
                let inner = GELU_C * (x + GELU_A * x * x * x);
                let t = inner.tanh();
                let dinner = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Gelu => "gelu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "tanh" => Some(Activation::Tanh),
            "gelu" => Some(Activation::Gelu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Bias-free MLP whose every linear map is a [`BasisLinear`]. The last layer
/// plays the role of the lm_head: it produces logits for softmax CE.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<BasisLinear>,
    activation: Activation,
}

/// Per-layer values saved by [`MlpModel::forward`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (batch × in_dim).
    pub layer_inputs: Vec<Matrix>,
    /// Pre-activation output of each hidden layer (batch × out_dim).
    pub pre_activations: Vec<Matrix>,
    /// Effective weights used for this pass.
    pub weights: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Matrix,
    pub cache: ForwardCache,
}

/// Loss and gradients w.r.t. every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub loss: f64,
    /// `∂ℓ/∂σ` per layer (0 for pruned bases).
    pub sigma: Vec<Vec<f64>>,
    /// `∂ℓ/∂ũ` per layer (n × r̃).
    pub aux_u: Vec<Matrix>,
    /// `∂ℓ/∂ṽ` per layer (m × r̃).
    pub aux_v: Vec<Matrix>,
}

impl MlpModel {
    pub fn new(layers: Vec<BasisLinear>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(BsiError::invalid("model needs at least one layer"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(BsiError::invalid(format!(
                    "layer {l} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    l + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Reparameterizes dense weights (`W_l` is out×in) into basis form.
    pub fn from_dense(
        weights: &[Matrix],
        activation: Activation,
        aux_rank: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let layers = weights
            .iter()
            .map(|w| BasisLinear::reparameterize(w, aux_rank, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, activation)
    }

    /// Random dense init (`N(0, 1/fan_in)`) followed by reparameterization.
    pub fn random(
        layer_sizes: &[usize],
        activation: Activation,
        aux_rank: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(BsiError::invalid(format!(
                "layer sizes {layer_sizes:?} must list at least input and output widths, all > 0"
            )));
        }
        let weights: Vec<Matrix> = layer_sizes
            .windows(2)
            .map(|p| {
                let scale = 1.0 / (p[0] as f64).sqrt();
                Matrix::from_fn(p[1], p[0], |_, _| rng.standard_normal() * scale)
            })
            .collect();
        Self::from_dense(&weights, activation, aux_rank, rng)
    }

    pub fn layers(&self) -> &[BasisLinear] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &BasisLinear {
        &self.layers[l]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut BasisLinear {
        &mut self.layers[l]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// `[in, hidden..., out]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(BasisLinear::out_dim))
            .collect()
    }

    pub fn sigmas(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| l.sigma().to_vec()).collect()
    }

    pub fn set_sigmas(&mut self, sigmas: &[Vec<f64>]) -> Result<()> {
        if sigmas.len() != self.layers.len() {
            return Err(BsiError::invalid("one sigma vector per layer required"));
        }
        for (layer, s) in self.layers.iter_mut().zip(sigmas) {
            layer.set_sigma(s)?;
        }
        Ok(())
    }

    pub fn active_bases_total(&self) -> usize {
        self.layers.iter().map(BasisLinear::active_count).sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(BasisLinear::param_count).sum()
    }

    pub fn basis_param_count(&self) -> usize {
        self.layers.iter().map(BasisLinear::basis_param_count).sum()
    }

    pub fn dense_param_count(&self) -> usize {
        self.layers.iter().map(|l| l.in_dim() * l.out_dim()).sum()
    }

    pub fn sigma_max(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.sigma().iter())
            .fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<Forward> {
        if inputs.cols() != self.input_dim() {
            return Err(BsiError::invalid(format!(
                "input has {} features, model expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        let weights: Vec<Matrix> = self.layers.iter().map(BasisLinear::weight).collect();
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut x = inputs.clone();
        let last = self.layers.len() - 1;
        for (l, w) in weights.iter().enumerate() {
            let pre = x.matmul_t(w)?;
            layer_inputs.push(x);
            if l == last {
                x = pre.clone();
            } else {
                let mut act = pre.clone();
                act.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = self.activation.apply(*v));
                x = act;
            }
            pre_activations.push(pre);
        }
        if !x.is_finite() {
            return Err(BsiError::invalid("forward pass produced non-finite logits"));
        }
        Ok(Forward {
            logits: x,
            cache: ForwardCache {
                layer_inputs,
                pre_activations,
                weights,
            },
        })
    }

    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let fwd = self.forward(&batch.inputs)?;
        Ok(softmax_cross_entropy(&fwd.logits, &batch.targets)?.0)
    }

    /// Fraction of rows whose argmax logit matches the target class (or the
    /// argmax of the target distribution).
    pub fn accuracy(&self, batch: &Batch) -> Result<f64> {
        let fwd = self.forward(&batch.inputs)?;
        let rows = fwd.logits.rows();
        if rows == 0 {
            return Ok(0.0);
        }
        let correct = (0..rows)
            .filter(|&r| argmax(fwd.logits.row(r)) == batch.targets.class_of(r))
            .count();
        Ok(correct as f64 / rows as f64)
    }

    /// Mean softmax cross-entropy and exact gradients by backprop.
    pub fn loss_and_grads(&self, batch: &Batch) -> Result<GradBundle> {
        let fwd = self.forward(&batch.inputs)?;
        let (loss, dlogits) = softmax_cross_entropy(&fwd.logits, &batch.targets)?;
        self.backward(&fwd.cache, dlogits, loss)
    }

    /// Backprop from `∂ℓ/∂logits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: Matrix, loss: f64) -> Result<GradBundle> {
        let n_layers = self.layers.len();
        let mut sigma = vec![Vec::new(); n_layers];
        let mut aux_u = vec![Matrix::zeros(0, 0); n_layers];
        let mut aux_v = vec![Matrix::zeros(0, 0); n_layers];
        let mut dy = dlogits;
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let x = &cache.layer_inputs[l];
            // G = dYᵀ X
            let g = dy.t_matmul(x)?;
            sigma[l] = layer.sigma_grad_from_weight_grad(&g)?;
            aux_u[l] = g.matmul(layer.aux_v())?;
            aux_v[l] = g.t_matmul(layer.aux_u())?;
            if l > 0 {
                let mut dx = dy.matmul(&cache.weights[l])?;
                let pre = &cache.pre_activations[l - 1];
                for (d, &p) in dx.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *d *= self.activation.derivative(p);
                }
                dy = dx;
            }
        }
        Ok(GradBundle {
            loss,
            sigma,
            aux_u,
            aux_v,
        })
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise log-softmax via log-sum-exp.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    row.iter().map(|z| z - lse).collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    log_softmax(row).into_iter().map(f64::exp).collect()
}

/// Mean over rows of `−p̂ᵀ log softmax(z)`, and `∂ℓ/∂z = (p − p̂)/B`.
pub fn softmax_cross_entropy(logits: &Matrix, targets: &Targets) -> Result<(f64, Matrix)> {
    let (rows, classes) = logits.shape();
    if targets.len() != rows {
        return Err(BsiError::invalid(format!(
            "{} targets for {rows} logit rows",
            targets.len()
        )));
    }
    if let Targets::Distributions(p) = targets {
        if p.cols() != classes {
            return Err(BsiError::invalid("target distribution width mismatch"));
        }
    }
    let mut grad = Matrix::zeros(rows, classes);
    if rows == 0 {
        return Ok((0.0, grad));
    }
    let inv_b = 1.0 / rows as f64;
    let mut total = 0.0;
    for r in 0..rows {
        let logp = log_softmax(logits.row(r));
        let g = grad.row_mut(r);
        match targets {
            Targets::Classes(c) => {
                let c = c[r];
                if c >= classes {
                    return Err(BsiError::invalid(format!(
                        "class {c} out of range for {classes} logits"
                    )));
                }
                total -= logp[c];
                for (k, (gk, lp)) in g.iter_mut().zip(&logp).enumerate() {
                    let target = if k == c { 1.0 } else { 0.0 };
                    *gk = (lp.exp() - target) * inv_b;
                }
            }
            Targets::Distributions(p) => {
                let phat = p.row(r);
                total -= phat.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>();
                for ((gk, lp), t) in g.iter_mut().zip(&logp).zip(phat) {
                    *gk = (lp.exp() - t) * inv_b;
                }
            }
        }
    }
    Ok((total * inv_b, grad))
}
