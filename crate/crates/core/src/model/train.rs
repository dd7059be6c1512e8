use serde::{Deserialize, Serialize};

use super::data::Batch;
use super::mlp::{GradBundle, MlpModel};
use crate::error::Result;
use crate::numkit::Matrix;

/// SGD with optional heavy-ball momentum over σ and the auxiliary factors.
/// The bases `U`, `V` are never touched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SgdState {
    sigma: Vec<Vec<f64>>,
    aux_u: Vec<Matrix>,
    aux_v: Vec<Matrix>,
}

impl Sgd {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            momentum: 0.0,
        }
    }

    /// Applies one update from precomputed gradients.
    pub fn apply(&self, model: &mut MlpModel, grads: &GradBundle, state: &mut SgdState) {
        if state.sigma.len() != model.num_layers() {
            state.sigma = grads.sigma.iter().map(|g| vec![0.0; g.len()]).collect();
            state.aux_u = grads.aux_u.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
            state.aux_v = grads.aux_v.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
        }
        let lr = self.learning_rate;
        let mu = self.momentum;
        for l in 0..model.num_layers() {
            let active = model.layer(l).active().to_vec();
            let layer = model.layer_mut(l);
            let vel = &mut state.sigma[l];
            for (i, s) in layer.sigma_mut().iter_mut().enumerate() {
                if !active[i] {
                    vel[i] = 0.0;
                    continue;
                }
                vel[i] = mu * vel[i] + grads.sigma[l][i];
                *s -= lr * vel[i];
            }
            let (au, av) = layer.aux_mut();
            step(au, &grads.aux_u[l], &mut state.aux_u[l], lr, mu);
            step(av, &grads.aux_v[l], &mut state.aux_v[l], lr, mu);
        }
    }
}

fn step(param: &mut Matrix, grad: &Matrix, vel: &mut Matrix, lr: f64, mu: f64) {
    for ((p, g), v) in param
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(vel.as_mut_slice())
    {
        *v = mu * *v + g;
        *p -= lr * *v;
    }
}

/// Computes gradients on `batch` and applies one SGD update; returns the
/// pre-update loss.
pub fn train_step(
    model: &mut MlpModel,
    batch: &Batch,
    opt: &Sgd,
    state: &mut SgdState,
) -> Result<f64> {
    let grads = model.loss_and_grads(batch)?;
    opt.apply(model, &grads, state);
    Ok(grads.loss)
}
