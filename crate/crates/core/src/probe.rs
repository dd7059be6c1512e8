//! Randomized Hessian-diagonal estimation.
//!
//! Two estimators live here:
//!
//! * [`hutchinson_diag`] for an explicit symmetric operator `A`:
//!   `D = (1/s) Σ_k z⁽ᵏ⁾ ⊙ (A z⁽ᵏ⁾)` with Rademacher probes.
//! * The gradient-difference estimator for a loss in σ-space, which needs
//!   only gradients: for each probe, `g± = ∇ℓ(σ* ± (ε/2) z)` on the same
//!   batch and `D_i += (g⁺ − g⁻)_i · z_i / ε`. For a quadratic loss the
//!   difference is exactly `ε A z`, so the two estimators coincide; in
//!   general the bias is `O(ε²)`.
//!
//! Only candidate (masked-in) active σ entries are perturbed. Auxiliary
//! factors are never perturbed.

use rayon::prelude::*;

use crate::error::{BsiError, Result};
use crate::model::{Batch, MlpModel};
use crate::numkit::{mix_stream, rademacher, rademacher_on, streams, Matrix, RngStream};

/// Perturbed σ magnitudes beyond this multiple of the model's largest
/// singular value are treated as a configuration error.
pub const SIGMA_GUARD_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    epsilon: f64,
    num_probes: usize,
    seed: u64,
    /// Per layer, the σ indices eligible for probing.
    candidates: Vec<Vec<usize>>,
}

impl ProbeConfig {
    pub fn new(epsilon: f64, num_probes: usize, seed: u64, candidates: Vec<Vec<usize>>) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(BsiError::InvalidConfig(format!(
                "perturbation intensity {epsilon} must lie in (0, 1)"
            )));
        }
        if num_probes == 0 {
            return Err(BsiError::InvalidConfig("num_probes must be >= 1".into()));
        }
        Ok(Self {
            epsilon,
            num_probes,
            seed,
            candidates,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn num_probes(&self) -> usize {
        self.num_probes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn candidates(&self) -> &[Vec<usize>] {
        &self.candidates
    }

    pub fn with_candidates(mut self, candidates: Vec<Vec<usize>>) -> Self {
        self.candidates = candidates;
        self
    }
}

/// Diagonal estimate over an explicit set of probed indices. Unprobed
/// indices have no entry at all.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagEstimate {
    indices: Vec<usize>,
    values: Vec<f64>,
    samples: usize,
}

impl DiagEstimate {
    pub fn new(indices: Vec<usize>, values: Vec<f64>, samples: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(BsiError::invalid("one value per probed index required"));
        }
        Ok(Self {
            indices,
            values,
            samples,
        })
    }

    /// Zero-valued running accumulator over `indices`.
    pub fn zeros(indices: Vec<usize>) -> Self {
        let values = vec![0.0; indices.len()];
        Self {
            indices,
            values,
            samples: 0,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn samples_used(&self) -> usize {
        self.samples
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.indices
            .iter()
            .position(|&i| i == index)
            .map(|p| self.values[p])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

fn non_finite(probe: usize, what: &str) -> BsiError {
    BsiError::NumericalFailure {
        probe,
        detail: format!("{what} returned a non-finite value"),
    }
}

/// Hutchinson diagonal estimator for a symmetric linear operator on `ℝⁿ`.
pub fn hutchinson_diag(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    n: usize,
    s: usize,
    rng: &mut RngStream,
) -> Result<DiagEstimate> {
    if s == 0 {
        return Err(BsiError::invalid("hutchinson_diag needs at least one probe"));
    }
    let mut acc = vec![0.0; n];
    for k in 0..s {
        let z = rademacher(rng, n, None);
        let az = apply(&z);
        if az.len() != n {
            return Err(BsiError::invalid("operator output has the wrong length"));
        }
        if az.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(k, "operator"));
        }
        for ((a, zi), azi) in acc.iter_mut().zip(&z).zip(&az) {
            *a += zi * azi;
        }
    }
    let inv = 1.0 / s as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(DiagEstimate {
        indices: (0..n).collect(),
        values: acc,
        samples: s,
    })
}

/// [`hutchinson_diag`] on an explicit square matrix.
pub fn hutchinson_diag_matrix(a: &Matrix, s: usize, rng: &mut RngStream) -> Result<DiagEstimate> {
    if !a.is_square() {
        return Err(BsiError::invalid("hutchinson_diag_matrix needs a square matrix"));
    }
    hutchinson_diag(|z| a.matvec(z).expect("square"), a.rows(), s, rng)
}

/// Gradient-difference Hessian-diagonal estimate of a loss with gradient
/// `grad`, probing only `candidates`. `guard` bounds the magnitude of any
/// perturbed coordinate.
pub fn gradient_difference_diag(
    mut grad: impl FnMut(&[f64]) -> Vec<f64>,
    sigma: &[f64],
    candidates: &[usize],
    epsilon: f64,
    num_probes: usize,
    rng: &mut RngStream,
) -> Result<DiagEstimate> {
    let n = sigma.len();
    if let Some(&bad) = candidates.iter().find(|&&i| i >= n) {
        return Err(BsiError::invalid(format!("candidate {bad} out of range")));
    }
    let mut acc = vec![0.0; candidates.len()];
    let mut plus = sigma.to_vec();
    let mut minus = sigma.to_vec();
    let half = 0.5 * epsilon;
    for k in 0..num_probes {
        let z = rademacher_on(rng, n, candidates);
        for &i in candidates {
            plus[i] = sigma[i] + half * z[i];
            minus[i] = sigma[i] - half * z[i];
        }
        let gp = grad(&plus);
        let gm = grad(&minus);
        if gp.len() != n || gm.len() != n {
            return Err(BsiError::invalid("gradient has the wrong length"));
        }
        for (a, &i) in acc.iter_mut().zip(candidates) {
            let d = (gp[i] - gm[i]) * z[i] / epsilon;
            if !d.is_finite() {
                return Err(non_finite(k, "gradient"));
            }
            *a += d;
        }
    }
    let inv = 1.0 / num_probes as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(DiagEstimate {
        indices: candidates.to_vec(),
        values: acc,
        samples: num_probes,
    })
}

/// Stateful per-layer prober: owns one independent random stream per layer
/// so successive profiling iterations draw fresh probes.
#[derive(Debug, Clone)]
pub struct HessianProber {
    config: ProbeConfig,
    streams: Vec<RngStream>,
}

impl HessianProber {
    pub fn new(config: ProbeConfig, num_layers: usize) -> Self {
        let streams = (0..num_layers)
            .map(|l| RngStream::new(config.seed, mix_stream(streams::PROBE, l as u64)))
            .collect();
        Self { config, streams }
    }

    pub fn config(&self) -> &ProbeConfig {
        &self.config
    }

    pub fn set_candidates(&mut self, candidates: Vec<Vec<usize>>) {
        self.config.candidates = candidates;
    }

    /// Estimates `∂²ℓ/∂σ_i²` on `batch` for every candidate of every layer.
    /// Layers with no active candidates yield `None`. Each layer is perturbed
    /// on its own scratch copy; `model` is never written.
    pub fn probe(&mut self, model: &MlpModel, batch: &Batch) -> Result<Vec<Option<DiagEstimate>>> {
        let n_layers = model.num_layers();
        if self.streams.len() != n_layers {
            return Err(BsiError::invalid("prober was built for a different layer count"));
        }
        let epsilon = self.config.epsilon;
        let num_probes = self.config.num_probes;
        let limit = SIGMA_GUARD_FACTOR * model.sigma_max();
        let candidates: Vec<Vec<usize>> = (0..n_layers)
            .map(|l| {
                let layer = model.layer(l);
                self.config
                    .candidates
                    .get(l)
                    .map(|c| {
                        c.iter()
                            .copied()
                            .filter(|&i| i < layer.rank() && layer.active()[i])
                            .collect()
                    })
                    .unwrap_or_default()
            })
            .collect();

        self.streams
            .par_iter_mut()
            .enumerate()
            .map(|(l, rng)| -> Result<Option<DiagEstimate>> {
                let cand = &candidates[l];
                if cand.is_empty() {
                    return Ok(None);
                }
                let sigma = model.layer(l).sigma().to_vec();
                let max_shift = sigma
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| cand.contains(i))
                    .map(|(_, s)| s.abs() + 0.5 * epsilon)
                    .fold(0.0, f64::max);
                if limit > 0.0 && max_shift > limit {
                    return Err(BsiError::PerturbationTooLarge {
                        layer: l,
                        value: max_shift,
                        limit,
                    });
                }
                let mut scratch = model.clone();
                let grad = |s: &[f64]| -> Vec<f64> {
                    scratch.layer_mut(l).sigma_mut().copy_from_slice(s);
                    match scratch.loss_and_grads(batch) {
                        Ok(g) => g.sigma[l].clone(),
                        Err(_) => vec![f64::NAN; s.len()],
                    }
                };
                gradient_difference_diag(grad, &sigma, cand, epsilon, num_probes, rng).map(Some)
            })
            .collect()
    }
}

/// One-shot probe with fresh streams derived from `config.seed`.
pub fn hessian_diag_probe(
    model: &MlpModel,
    batch: &Batch,
    config: &ProbeConfig,
) -> Result<Vec<Option<DiagEstimate>>> {
    if config.candidates.iter().all(Vec::is_empty) {
        return Err(BsiError::invalid("candidate mask is empty for every layer"));
    }
    HessianProber::new(config.clone(), model.num_layers()).probe(model, batch)
}

/// Perturbation intensity that keeps the rounding error of `σ ± ε` within a
/// relative tolerance `rel_tol` of `ε` for a float with `fraction_bits`
/// mantissa bits, capped at `eps_max`:
/// `min((1/rel_tol) · 2^{−(f+1)} · σ_max, eps_max)`.
pub fn choose_epsilon(sigma_max: f64, fraction_bits: u32, rel_tol: f64, eps_max: f64) -> Result<f64> {
    if !(sigma_max > 0.0) || !(rel_tol > 0.0 && rel_tol < 1.0) || !(eps_max > 0.0 && eps_max < 1.0) {
        return Err(BsiError::DomainError(format!(
            "choose_epsilon needs sigma_max > 0, 0 < rel_tol < 1, 0 < eps_max < 1 \
             (got {sigma_max}, {rel_tol}, {eps_max})"
        )));
    }
    let formula = (-(fraction_bits as f64 + 1.0)).exp2() * sigma_max / rel_tol;
    Ok(formula.min(eps_max))
}

/// `running + new / num_profiling_iter`, over identical index sets.
pub fn accumulate_profile(
    running: &DiagEstimate,
    new: &DiagEstimate,
    num_profiling_iter: usize,
) -> Result<DiagEstimate> {
    let mut out = running.clone();
    accumulate_into(&mut out, new, num_profiling_iter)?;
    Ok(out)
}

pub fn accumulate_into(
    running: &mut DiagEstimate,
    new: &DiagEstimate,
    num_profiling_iter: usize,
) -> Result<()> {
    if running.indices != new.indices {
        return Err(BsiError::invalid(format!(
            "probe index sets differ: {:?} vs {:?}",
            running.indices, new.indices
        )));
    }
    if num_profiling_iter == 0 {
        return Err(BsiError::invalid("num_profiling_iter must be >= 1"));
    }
    let w = 1.0 / num_profiling_iter as f64;
    for (r, v) in running.values.iter_mut().zip(&new.values) {
        *r += w * v;
    }
    running.samples += new.samples;
    Ok(())
}
