//! Spectral tools and closed-form bounds for the Hessian-diagonal estimator
//! and the pruning loss change.

use serde::Serialize;

use crate::error::{BsiError, Result};
use crate::model::{softmax, Batch, MlpModel};
use crate::numkit::{dot, svd, sym_eig, Matrix, RngStream};
use crate::oracles::{dense_hessian, SigmaCoords, GRAD_STEP};

/// Relative floor below which eigenvalue magnitudes are treated as
/// eigendecomposition noise when fitting an envelope.
pub const DEFAULT_FLOOR_REL: f64 = 1e-10;

/// `Σ_{k=1}^n k^{−s}`, summed smallest term first.
pub fn harmonic(n: usize, s: f64) -> f64 {
    (1..=n).rev().map(|k| (k as f64).powf(-s)).sum()
}

/// Riemann zeta for `s > 1`.
///
/// Partial sum to `N` plus the midpoint of the integral bounds on the tail,
/// `[∫_{N+1}^∞ x^{−s}dx, ∫_N^∞ x^{−s}dx]`. The midpoint error is about
/// `s·N^{−s−1}/6`; `N` is chosen to keep it below 1e-11.
pub fn zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(BsiError::DomainError(format!("zeta needs s > 1, got {s}")));
    }
    let n = ((s / 6e-11).powf(1.0 / (s + 1.0)).ceil() as usize).clamp(64, 50_000_000);
    let nf = n as f64;
    let upper = nf.powf(1.0 - s) / (s - 1.0);
    let lower = (nf + 1.0).powf(1.0 - s) / (s - 1.0);
    Ok(harmonic(n, s) + 0.5 * (upper + lower))
}

/// Power-law envelope `|λ_k| ≤ λ₁·k^{−α}` fitted to a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumFit {
    pub lambda1_abs: f64,
    pub alpha: f64,
    /// Number of magnitudes above `floor` (the fitted prefix).
    pub n: usize,
    pub floor: f64,
    /// Whether `α > ½`, the regime where the variance bound is dimension-free.
    pub alpha_above_half: bool,
}

impl SpectrumFit {
    pub fn envelope(&self, k: usize) -> f64 {
        self.lambda1_abs * (k as f64).powf(-self.alpha)
    }
}

/// Largest `α` such that the envelope holds for every magnitude above
/// `floor`: `α = min_{k≥2} ln(|λ₁|/|λ_k|)/ln k`.
pub fn fit_power_law(magnitudes: &[f64], floor: f64) -> Result<SpectrumFit> {
    if magnitudes.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(BsiError::invalid("magnitudes must be finite and non-negative"));
    }
    if magnitudes.windows(2).any(|w| w[1] > w[0]) {
        return Err(BsiError::invalid("magnitudes must be sorted in descending order"));
    }
    let above: Vec<f64> = magnitudes.iter().copied().take_while(|&m| m > floor).collect();
    if above.len() < 2 {
        return Err(BsiError::InsufficientSpectrum(format!(
            "{} magnitude(s) above floor {floor:e}; need at least 2",
            above.len()
        )));
    }
    let l1 = above[0];
    let alpha = above
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &m)| (l1 / m).ln() / ((i + 1) as f64).ln())
        .fold(f64::INFINITY, f64::min);
    Ok(SpectrumFit {
        lambda1_abs: l1,
        alpha,
        n: above.len(),
        floor,
        alpha_above_half: alpha > 0.5,
    })
}

fn need_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.5 && alpha.is_finite() {
        Ok(())
    } else {
        Err(BsiError::DomainError(format!("decay exponent must exceed 1/2, got {alpha}")))
    }
}

/// `|λ₁|²·ζ(2α)/s`: dimension-free bound on the estimator's total variance.
pub fn variance_bound(lambda1_abs: f64, alpha: f64, s: usize) -> Result<f64> {
    need_alpha(alpha)?;
    if s == 0 {
        return Err(BsiError::DomainError("probe count must be >= 1".into()));
    }
    Ok(lambda1_abs * lambda1_abs * zeta(2.0 * alpha)? / s as f64)
}

/// `(1/s)·Σ_i Σ_{j≠i} h_ij²`, the exact total variance of the
/// Rademacher diagonal estimator.
pub fn total_variance_exact(h: &Matrix, s: usize) -> Result<f64> {
    if h.rows() != h.cols() {
        return Err(BsiError::invalid("matrix must be square"));
    }
    if s == 0 {
        return Err(BsiError::DomainError("probe count must be >= 1".into()));
    }
    Ok(off_diagonal_sq(h).iter().sum::<f64>() / s as f64)
}

/// Per-row `Σ_{j≠i} h_ij²`.
pub fn off_diagonal_sq(h: &Matrix) -> Vec<f64> {
    (0..h.rows())
        .map(|i| {
            h.row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v * v)
                .sum()
        })
        .collect()
}

fn need_eps_delta(eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(BsiError::DomainError(format!(
            "need eps > 0 and 0 < delta < 1, got eps={eps}, delta={delta}"
        )));
    }
    Ok(())
}

/// Probe count above which the estimator is a relative `(ε, δ)`
/// approximator: `2(|λ₁|²H_{n,2α}/(Tr²/n) − 1)·ln(2n/δ)/ε²`. May be
/// negative for flat spectra; see [`BoundReport`] for the clamped form.
pub fn sample_complexity(
    lambda1_abs: f64,
    alpha: f64,
    n: usize,
    trace_h: f64,
    eps: f64,
    delta: f64,
) -> Result<f64> {
    need_alpha(alpha)?;
    need_eps_delta(eps, delta)?;
    if trace_h == 0.0 || !trace_h.is_finite() {
        return Err(BsiError::DomainError("trace must be finite and non-zero".into()));
    }
    if n == 0 {
        return Err(BsiError::DomainError("dimension must be >= 1".into()));
    }
    let nf = n as f64;
    let ratio = lambda1_abs * lambda1_abs * harmonic(n, 2.0 * alpha) / (trace_h * trace_h / nf);
    Ok(2.0 * (ratio - 1.0) * (2.0 * nf / delta).ln() / (eps * eps))
}

/// PSD relaxation: `2(n·ζ(2α) − 1)·ln(2n/δ)/ε²`.
pub fn sample_complexity_psd(n: usize, alpha: f64, eps: f64, delta: f64) -> Result<f64> {
    need_alpha(alpha)?;
    need_eps_delta(eps, delta)?;
    if n == 0 {
        return Err(BsiError::DomainError("dimension must be >= 1".into()));
    }
    let nf = n as f64;
    Ok(2.0 * (nf * zeta(2.0 * alpha)? - 1.0) * (2.0 * nf / delta).ln() / (eps * eps))
}

/// `|−g·s + ½h·s²| + (ρ/6)|s|³`.
pub fn loss_change_bound(g: f64, h: f64, s: f64, rho: f64) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(BsiError::DomainError(format!("rho must be >= 0, got {rho}")));
    }
    Ok((-g * s + 0.5 * h * s * s).abs() + rho / 6.0 * s.abs().powi(3))
}

/// Loss-change bound when the Hessian diagonal is known only up to relative
/// error `eps_rel`: adds `eps_rel/(2(1−eps_rel))·|ĥ|·s²`.
pub fn loss_change_bound_rel(g: f64, h_hat: f64, s: f64, rho: f64, eps_rel: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eps_rel) {
        return Err(BsiError::DomainError(format!("eps_rel must lie in [0, 1), got {eps_rel}")));
    }
    let base = loss_change_bound(g, h_hat, s, rho)?;
    Ok(base + eps_rel / (2.0 * (1.0 - eps_rel)) * h_hat.abs() * s * s)
}

/// Closed-form `∂²ℓ/∂σ_i²` for a softmax cross-entropy output layer:
/// `(vᵀx)²·Σ_k p_k(u_k − pᵀu)²` with `p = softmax(logits)`. Never negative.
pub fn lm_head_hessian_diag(u: &[f64], v: &[f64], x: &[f64], logits: &[f64]) -> Result<f64> {
    if u.len() != logits.len() || v.len() != x.len() {
        return Err(BsiError::invalid(format!(
            "length mismatch: u {} vs logits {}, v {} vs x {}",
            u.len(),
            logits.len(),
            v.len(),
            x.len()
        )));
    }
    let p = softmax(logits);
    let mean = dot(&p, u);
    let var: f64 = p.iter().zip(u).map(|(pk, uk)| pk * (uk - mean) * (uk - mean)).sum();
    let a = dot(v, x);
    Ok(a * a * var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Variance,
    SampleComplexity,
    SampleComplexityPsd,
    LossChange,
    LossChangeRelError,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Variance => "variance",
            BoundKind::SampleComplexity => "sample_complexity",
            BoundKind::SampleComplexityPsd => "sample_complexity_psd",
            BoundKind::LossChange => "loss_change",
            BoundKind::LossChangeRelError => "loss_change_rel_error",
        }
    }
}

/// A bound evaluation with its inputs. `value` is finite and non-negative;
/// `raw` keeps the unclamped formula output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub value: f64,
    pub raw: f64,
    pub inputs: Vec<(String, f64)>,
}

impl BoundReport {
    fn new(kind: BoundKind, raw: f64, inputs: &[(&str, f64)]) -> Result<Self> {
        if !raw.is_finite() {
            return Err(BsiError::NumericalFailure {
                probe: 0,
                detail: format!("{} bound is not finite", kind.name()),
            });
        }
        let value = match kind {
            // A negative requirement means one probe already suffices.
            BoundKind::SampleComplexity | BoundKind::SampleComplexityPsd => raw.max(1.0),
            _ => raw.max(0.0),
        };
        Ok(Self {
            kind,
            value,
            raw,
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        })
    }

    pub fn variance(lambda1_abs: f64, alpha: f64, s: usize) -> Result<Self> {
        let raw = variance_bound(lambda1_abs, alpha, s)?;
        Self::new(
            BoundKind::Variance,
            raw,
            &[("lambda1_abs", lambda1_abs), ("alpha", alpha), ("s", s as f64)],
        )
    }

    pub fn sample_complexity(
        lambda1_abs: f64,
        alpha: f64,
        n: usize,
        trace_h: f64,
        eps: f64,
        delta: f64,
    ) -> Result<Self> {
        let raw = sample_complexity(lambda1_abs, alpha, n, trace_h, eps, delta)?;
        Self::new(
            BoundKind::SampleComplexity,
            raw,
            &[
                ("lambda1_abs", lambda1_abs),
                ("alpha", alpha),
                ("n", n as f64),
                ("trace", trace_h),
                ("eps", eps),
                ("delta", delta),
            ],
        )
    }

    pub fn sample_complexity_psd(n: usize, alpha: f64, eps: f64, delta: f64) -> Result<Self> {
        let raw = sample_complexity_psd(n, alpha, eps, delta)?;
        Self::new(
            BoundKind::SampleComplexityPsd,
            raw,
            &[("n", n as f64), ("alpha", alpha), ("eps", eps), ("delta", delta)],
        )
    }

    pub fn loss_change(g: f64, h: f64, s: f64, rho: f64) -> Result<Self> {
        let raw = loss_change_bound(g, h, s, rho)?;
        Self::new(BoundKind::LossChange, raw, &[("g", g), ("h", h), ("s", s), ("rho", rho)])
    }

    pub fn loss_change_rel(g: f64, h_hat: f64, s: f64, rho: f64, eps_rel: f64) -> Result<Self> {
        let raw = loss_change_bound_rel(g, h_hat, s, rho, eps_rel)?;
        Self::new(
            BoundKind::LossChangeRelError,
            raw,
            &[("g", g), ("h_hat", h_hat), ("s", s), ("rho", rho), ("eps_rel", eps_rel)],
        )
    }
}

/// Haar-like random orthogonal matrix: the left singular vectors of a
/// Gaussian matrix.
pub fn random_orthogonal(n: usize, rng: &mut RngStream) -> Result<Matrix> {
    let g = Matrix::from_fn(n, n, |_, _| rng.standard_normal());
    Ok(svd(&g)?.u)
}

/// `Q·diag(eigs)·Qᵀ` with a random orthogonal `Q`, exactly symmetrized.
pub fn synthetic_symmetric(eigs: &[f64], rng: &mut RngStream) -> Result<Matrix> {
    let n = eigs.len();
    let q = random_orthogonal(n, rng)?;
    let scaled = Matrix::from_fn(n, n, |i, j| q[(i, j)] * eigs[j]);
    Ok(scaled.matmul_t(&q)?.symmetrized())
}

/// `λ_k = k^{−α}` for `k = 1..=n`.
pub fn power_law_spectrum(n: usize, alpha: f64) -> Vec<f64> {
    (1..=n).map(|k| (k as f64).powf(-alpha)).collect()
}

/// Eigenvalue magnitudes of each block, merged and sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpectrum {
    /// Per block, eigenvalues sorted by descending magnitude.
    pub blocks: Vec<Vec<f64>>,
    pub magnitudes: Vec<f64>,
    pub fit: Option<SpectrumFit>,
}

impl BlockSpectrum {
    /// `(rank, |λ|)` pairs, rank starting at 1.
    pub fn rank_magnitude(&self) -> Vec<(usize, f64)> {
        self.magnitudes.iter().enumerate().map(|(k, &m)| (k + 1, m)).collect()
    }
}

/// Eigenvalues (descending magnitude) of a symmetric matrix.
pub fn eigenvalues(h: &Matrix) -> Result<Vec<f64>> {
    Ok(sym_eig(h)?.values)
}

/// Merges per-block eigenvalues into one descending magnitude sequence and
/// fits the envelope above `1e-10·|λ₁|`. The fit is `None` when fewer than
/// two magnitudes clear the floor.
pub fn merge_blocks(blocks: Vec<Vec<f64>>) -> BlockSpectrum {
    let mut magnitudes: Vec<f64> = blocks.iter().flatten().map(|v| v.abs()).collect();
    magnitudes.sort_by(|a, b| b.total_cmp(a));
    let floor = magnitudes.first().copied().unwrap_or(0.0) * DEFAULT_FLOOR_REL;
    let fit = fit_power_law(&magnitudes, floor).ok();
    BlockSpectrum { blocks, magnitudes, fit }
}

/// Top-`k` active bases of a layer by `|σ|`, ties by index.
pub fn top_k_bases(model: &MlpModel, layer: usize, k: usize) -> Vec<usize> {
    let l = model.layer(layer);
    let mut idx = l.active_indices();
    idx.sort_by(|&a, &b| l.sigma()[b].abs().total_cmp(&l.sigma()[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Layer-wise block-diagonal σ-space Hessian spectrum.
///
/// For each layer the dense Hessian over its `top_k` largest-`|σ|` active
/// bases is built by central differences of the backprop gradient (all
/// other parameters frozen), eigendecomposed, and the block eigenvalues are
/// merged by magnitude.
pub fn block_diag_sv_spectrum(model: &MlpModel, batches: &[Batch], top_k: usize) -> Result<BlockSpectrum> {
    if top_k == 0 {
        return Err(BsiError::InvalidConfig("top_k must be >= 1".into()));
    }
    if batches.is_empty() {
        return Err(BsiError::InvalidConfig("spectrum needs at least one batch".into()));
    }
    for (l, layer) in model.layers().iter().enumerate() {
        if top_k > layer.active_count() {
            return Err(BsiError::InvalidConfig(format!(
                "top_k {top_k} exceeds active rank {} of layer {l}",
                layer.active_count()
            )));
        }
    }
    let blocks = (0..model.num_layers())
        .map(|l| {
            let coords = SigmaCoords(top_k_bases(model, l, top_k).into_iter().map(|i| (l, i)).collect());
            let h = dense_hessian(coords.grad_fn(model, batches), &coords.read(model), GRAD_STEP)?;
            eigenvalues(&h)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge_blocks(blocks))
}

/// Several models trained on their own data whose losses are summed. The
/// σ-space Hessian of the sum is exactly block-diagonal, one block per part.
#[derive(Debug, Clone)]
pub struct DecoupledModels {
    pub parts: Vec<(MlpModel, Vec<Batch>)>,
}

impl DecoupledModels {
    fn coords(&self) -> Vec<SigmaCoords> {
        self.parts.iter().map(|(m, _)| SigmaCoords::all_active(m)).collect()
    }

    /// Concatenated active σ of all parts.
    pub fn sigma(&self) -> Vec<f64> {
        self.parts
            .iter()
            .zip(self.coords())
            .flat_map(|((m, _), c)| c.read(m))
            .collect()
    }

    /// Index ranges of each part in the concatenated vector.
    pub fn blocks(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.coords()
            .iter()
            .map(|c| {
                let r = start..start + c.len();
                start = r.end;
                r
            })
            .collect()
    }

    /// Gradient of the summed loss with respect to the concatenated σ.
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let coords = self.coords();
        let mut out = Vec::with_capacity(x.len());
        for (((m, b), c), r) in self.parts.iter().zip(&coords).zip(self.blocks()) {
            out.extend(c.grad_fn(m, b)(&x[r]));
        }
        out
    }

    /// Dense Hessian of the summed loss over every coordinate.
    pub fn full_hessian(&self) -> Result<Matrix> {
        dense_hessian(|x: &[f64]| self.grad(x), &self.sigma(), GRAD_STEP)
    }

    /// Per-part Hessian blocks, eigendecomposed and merged.
    pub fn block_spectrum(&self) -> Result<BlockSpectrum> {
        let blocks = self
            .parts
            .iter()
            .zip(self.coords())
            .map(|((m, b), c)| eigenvalues(&dense_hessian(c.grad_fn(m, b), &c.read(m), GRAD_STEP)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(merge_blocks(blocks))
    }
}

/// Lower estimate of the Hessian Lipschitz constant on the segment from
/// `start` to `end`: the largest `‖H(x_{k+1}) − H(x_k)‖₂ / ‖x_{k+1} − x_k‖`
/// over `samples` equal steps, with Hessians by central differences.
pub fn segment_hessian_lipschitz(
    grad: impl Fn(&[f64]) -> Vec<f64> + Sync,
    start: &[f64],
    end: &[f64],
    samples: usize,
) -> Result<f64> {
    if start.len() != end.len() || samples == 0 {
        return Err(BsiError::invalid("segment endpoints must match and samples >= 1"));
    }
    let point = |t: f64| -> Vec<f64> { start.iter().zip(end).map(|(a, b)| a + t * (b - a)).collect() };
    let step_len = start
        .iter()
        .zip(end)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt()
        / samples as f64;
    if step_len == 0.0 {
        return Ok(0.0);
    }
    let mut prev = dense_hessian(&grad, &point(0.0), GRAD_STEP)?;
    let mut rho: f64 = 0.0;
    for k in 1..=samples {
        let cur = dense_hessian(&grad, &point(k as f64 / samples as f64), GRAD_STEP)?;
        let diff = cur.sub(&prev)?;
        let norm = eigenvalues(&diff)?.first().map_or(0.0, |v| v.abs());
        rho = rho.max(norm / step_len);
        prev = cur;
    }
    Ok(rho)
}
