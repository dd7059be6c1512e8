//! Brute-force reference computations: central finite differences, dense
//! σ-space Hessians and exact pruning loss changes. These never share code
//! paths with backprop or the randomized estimators they are used to check.

use rayon::prelude::*;

use crate::error::{BsiError, Result};
use crate::model::{Batch, GradBundle, MlpModel};
use crate::numkit::Matrix;

/// Default step for first differences.
pub const GRAD_STEP: f64 = 1e-5;
/// Default step for second differences.
pub const SECOND_STEP: f64 = 1e-4;

/// Finite-difference settings. Only the central scheme is provided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    step: f64,
}

impl FdConfig {
    pub fn new(step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(BsiError::invalid(format!("finite-difference step {step} must be > 0")));
        }
        Ok(Self { step })
    }

    pub fn step(&self) -> f64 {
        self.step
    }
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { step: GRAD_STEP }
    }
}

fn finite(v: f64, coord: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(BsiError::NumericalFailure {
            probe: coord,
            detail: format!("non-finite evaluation while differencing coordinate {coord}"),
        })
    }
}

/// `(ℓ(σ+he_i) − ℓ(σ−he_i)) / 2h` for every coordinate.
pub fn fd_grad(loss: impl Fn(&[f64]) -> f64, sigma: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut x = sigma.to_vec();
    (0..sigma.len())
        .map(|i| {
            x[i] = sigma[i] + h;
            let plus = finite(loss(&x), i)?;
            x[i] = sigma[i] - h;
            let minus = finite(loss(&x), i)?;
            x[i] = sigma[i];
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

/// `(ℓ(σ+he_i) − 2ℓ(σ) + ℓ(σ−he_i)) / h²` for every coordinate.
pub fn fd_hessian_diag(loss: impl Fn(&[f64]) -> f64, sigma: &[f64], h: f64) -> Result<Vec<f64>> {
    let center = finite(loss(sigma), 0)?;
    let mut x = sigma.to_vec();
    (0..sigma.len())
        .map(|i| {
            x[i] = sigma[i] + h;
            let plus = finite(loss(&x), i)?;
            x[i] = sigma[i] - h;
            let minus = finite(loss(&x), i)?;
            x[i] = sigma[i];
            Ok((plus - 2.0 * center + minus) / (h * h))
        })
        .collect()
}

/// Hessian by central differences of a gradient, columns
/// `(g(σ+he_j) − g(σ−he_j)) / 2h`, before symmetrization.
pub fn dense_hessian_unsymmetrized(
    grad: impl Fn(&[f64]) -> Vec<f64> + Sync,
    sigma: &[f64],
    h: f64,
) -> Result<Matrix> {
    let n = sigma.len();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut x = sigma.to_vec();
            x[j] = sigma[j] + h;
            let plus = grad(&x);
            x[j] = sigma[j] - h;
            let minus = grad(&x);
            if plus.len() != n || minus.len() != n {
                return Err(BsiError::invalid("gradient length does not match sigma"));
            }
            plus.iter()
                .zip(&minus)
                .map(|(p, m)| finite((p - m) / (2.0 * h), j))
                .collect()
        })
        .collect::<Result<_>>()?;
    Matrix::from_columns(n, &columns)
}

/// Symmetrized finite-difference Hessian `(H + Hᵀ)/2`.
pub fn dense_hessian(
    grad: impl Fn(&[f64]) -> Vec<f64> + Sync,
    sigma: &[f64],
    h: f64,
) -> Result<Matrix> {
    Ok(dense_hessian_unsymmetrized(grad, sigma, h)?.symmetrized())
}

/// `ℓ(σ − σ_i e_i) − ℓ(σ)`.
pub fn exact_delta_loss_fn(loss: impl Fn(&[f64]) -> f64, sigma: &[f64], i: usize) -> f64 {
    let mut pruned = sigma.to_vec();
    pruned[i] = 0.0;
    loss(&pruned) - loss(sigma)
}

/// Mean batch loss over `batches`.
pub fn mean_loss(model: &MlpModel, batches: &[Batch]) -> Result<f64> {
    if batches.is_empty() {
        return Err(BsiError::invalid("no batches to evaluate"));
    }
    let mut total = 0.0;
    for b in batches {
        total += model.loss(b)?;
    }
    Ok(total / batches.len() as f64)
}

/// Loss change from zeroing `σ_i` of `layer`, averaged over the slice. The
/// model is not modified.
pub fn exact_delta_loss(
    model: &MlpModel,
    batches: &[Batch],
    layer: usize,
    index: usize,
) -> Result<f64> {
    let l = model
        .layers()
        .get(layer)
        .ok_or_else(|| BsiError::invalid(format!("layer {layer} out of range")))?;
    if index >= l.rank() {
        return Err(BsiError::invalid(format!("basis {index} out of range")));
    }
    if l.sigma()[index] == 0.0 {
        return Ok(0.0);
    }
    let mut pruned = model.clone();
    pruned.layer_mut(layer).sigma_mut()[index] = 0.0;
    Ok(mean_loss(&pruned, batches)? - mean_loss(model, batches)?)
}

/// A selection of σ coordinates `(layer, basis index)` viewed as a flat
/// parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmaCoords(pub Vec<(usize, usize)>);

impl SigmaCoords {
    /// Every active basis of every layer.
    pub fn all_active(model: &MlpModel) -> Self {
        Self(
            model
                .layers()
                .iter()
                .enumerate()
                .flat_map(|(l, layer)| layer.active_indices().into_iter().map(move |i| (l, i)))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn read(&self, model: &MlpModel) -> Vec<f64> {
        self.0.iter().map(|&(l, i)| model.layer(l).sigma()[i]).collect()
    }

    pub(crate) fn write(&self, model: &mut MlpModel, values: &[f64]) {
        for (&(l, i), &v) in self.0.iter().zip(values) {
            model.layer_mut(l).sigma_mut()[i] = v;
        }
    }

    /// Mean loss as a function of the selected coordinates (others fixed).
    pub fn loss_fn<'a>(&'a self, model: &'a MlpModel, batches: &'a [Batch]) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
        move |x: &[f64]| {
            let mut m = model.clone();
            self.write(&mut m, x);
            mean_loss(&m, batches).unwrap_or(f64::NAN)
        }
    }

    /// Mean backprop gradient restricted to the selected coordinates.
    pub fn grad_fn<'a>(&'a self, model: &'a MlpModel, batches: &'a [Batch]) -> impl Fn(&[f64]) -> Vec<f64> + Sync + 'a {
        move |x: &[f64]| {
            let mut m = model.clone();
            self.write(&mut m, x);
            let mut out = vec![0.0; self.len()];
            for b in batches {
                match m.loss_and_grads(b) {
                    Ok(g) => {
                        for (o, &(l, i)) in out.iter_mut().zip(&self.0) {
                            *o += g.sigma[l][i];
                        }
                    }
                    Err(_) => return vec![f64::NAN; self.len()],
                }
            }
            let k = batches.len().max(1) as f64;
            out.iter_mut().for_each(|v| *v /= k);
            out
        }
    }
}

/// Central-difference gradients of every trainable parameter (σ of active
/// bases, ũ, ṽ) on one batch, laid out like a [`GradBundle`].
pub fn fd_model_grads(model: &MlpModel, batch: &Batch, h: f64) -> Result<GradBundle> {
    let loss_at = |m: &MlpModel| m.loss(batch);
    let mut scratch = model.clone();
    let mut sigma = Vec::new();
    let mut aux_u = Vec::new();
    let mut aux_v = Vec::new();
    for l in 0..model.num_layers() {
        let layer = model.layer(l);
        let mut gs = vec![0.0; layer.rank()];
        for (i, g) in gs.iter_mut().enumerate() {
            if !layer.active()[i] {
                continue;
            }
            let s0 = layer.sigma()[i];
            scratch.layer_mut(l).sigma_mut()[i] = s0 + h;
            let plus = loss_at(&scratch)?;
            scratch.layer_mut(l).sigma_mut()[i] = s0 - h;
            let minus = loss_at(&scratch)?;
            scratch.layer_mut(l).sigma_mut()[i] = s0;
            *g = (plus - minus) / (2.0 * h);
        }
        sigma.push(gs);
        for which in 0..2 {
            let (rows, cols) = if which == 0 {
                layer.aux_u().shape()
            } else {
                layer.aux_v().shape()
            };
            let mut gm = Matrix::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    let x0 = *aux_entry(&mut scratch, l, which, r, c);
                    *aux_entry(&mut scratch, l, which, r, c) = x0 + h;
                    let plus = loss_at(&scratch)?;
                    *aux_entry(&mut scratch, l, which, r, c) = x0 - h;
                    let minus = loss_at(&scratch)?;
                    *aux_entry(&mut scratch, l, which, r, c) = x0;
                    gm[(r, c)] = (plus - minus) / (2.0 * h);
                }
            }
            if which == 0 {
                aux_u.push(gm);
            } else {
                aux_v.push(gm);
            }
        }
    }
    Ok(GradBundle {
        loss: loss_at(model)?,
        sigma,
        aux_u,
        aux_v,
    })
}

fn aux_entry(m: &mut MlpModel, l: usize, which: usize, r: usize, c: usize) -> &mut f64 {
    let (au, av) = m.layer_mut(l).aux_mut();
    if which == 0 {
        &mut au[(r, c)]
    } else {
        &mut av[(r, c)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad<'a>(a: &'a Matrix, b: &'a [f64]) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
        let b = b.to_vec();
        move |x: &[f64]| {
            let ax = a.matvec(x).unwrap();
            0.5 * x.iter().zip(&ax).map(|(p, q)| p * q).sum::<f64>()
                + b.iter().zip(x).map(|(p, q)| p * q).sum::<f64>()
        }
    }

    fn spd() -> Matrix {
        Matrix::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, -0.25],
            vec![0.5, -0.25, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn linear_gradient_is_exact() {
        let b = [1.5, -2.0, 0.25];
        let f = |x: &[f64]| b.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        let g = fd_grad(f, &[0.3, 0.1, -0.7], 1e-5).unwrap();
        for (gi, bi) in g.iter().zip(&b) {
            assert!((gi - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_oracles() {
        let a = spd();
        let b = [0.1, 0.2, 0.3];
        let x = [0.5, -1.0, 2.0];
        let f = quad(&a, &b);
        let g = fd_grad(&f, &x, 1e-5).unwrap();
        let exact: Vec<f64> = a.matvec(&x).unwrap().iter().zip(&b).map(|(p, q)| p + q).collect();
        for (gi, ei) in g.iter().zip(&exact) {
            assert!((gi - ei).abs() < 1e-9);
        }
        let d = fd_hessian_diag(&f, &x, 1e-4).unwrap();
        for (di, ai) in d.iter().zip(a.diagonal()) {
            assert!((di - ai).abs() < 1e-6);
        }
        let grad = |y: &[f64]| -> Vec<f64> {
            a.matvec(y).unwrap().iter().zip(&b).map(|(p, q)| p + q).collect()
        };
        let h = dense_hessian(grad, &x, 1e-5).unwrap();
        assert!(h.sub(&a).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn exp_second_derivative() {
        let d = fd_hessian_diag(|x: &[f64]| x[0].exp(), &[0.0], 1e-4).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn central_difference_error_is_second_order() {
        // f = sin, f'(x) = cos; error ratio at h and h/2 ≈ 4.
        let f = |x: &[f64]| x[0].sin();
        let x = [0.7];
        let e1 = (fd_grad(f, &x, 1e-2).unwrap()[0] - 0.7f64.cos()).abs();
        let e2 = (fd_grad(f, &x, 5e-3).unwrap()[0] - 0.7f64.cos()).abs();
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn non_finite_is_reported() {
        let f = |x: &[f64]| if x[0] > 0.0 { f64::NAN } else { 0.0 };
        assert!(matches!(
            fd_grad(f, &[0.0], 1e-3),
            Err(BsiError::NumericalFailure { .. })
        ));
    }

    #[test]
    fn delta_loss_closed_form_for_quadratics() {
        let a = spd();
        let b = [0.1, -0.2, 0.3];
        let x = [0.5, -1.0, 2.0];
        let f = quad(&a, &b);
        let g: Vec<f64> = a.matvec(&x).unwrap().iter().zip(&b).map(|(p, q)| p + q).collect();
        for i in 0..3 {
            let exact = exact_delta_loss_fn(&f, &x, i);
            let taylor = -x[i] * g[i] + 0.5 * x[i] * x[i] * a[(i, i)];
            assert!((exact - taylor).abs() < 1e-12);
        }
        let mut zeroed = x;
        zeroed[1] = 0.0;
        assert_eq!(exact_delta_loss_fn(&f, &zeroed, 1), 0.0);
    }
}
