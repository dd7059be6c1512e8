//! Importance scores, candidate pools, prune-set selection and the iterative
//! compression driver.
//!
//! The importance of basis `i` is the second-order Taylor estimate of the
//! loss increase caused by zeroing its singular value:
//! `I_i = −σ_i·E[∂ℓ/∂σ_i] + ½·σ_i²·E[∂²ℓ/∂σ_i²]`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{BsiError, Result};
use crate::model::{Batch, MlpModel, Sgd, SgdState};
use crate::numkit::{streams, RngStream};
use crate::probe::{accumulate_into, choose_epsilon, DiagEstimate, HessianProber, ProbeConfig};

/// Relative slack when comparing a kept score mass against its target, so
/// that e.g. `0.7 × 10` is reached by a kept sum of exactly `7`.
const MASS_TOL: f64 = 1e-12;

/// `−σ·g + ½σ²·h`
pub fn importance_score(sigma: f64, grad_mean: f64, hess_mean: f64) -> f64 {
    -sigma * grad_mean + 0.5 * sigma * sigma * hess_mean
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Full second-order score.
    #[default]
    Bsi,
    /// First-order term only: `−σ·g`.
    #[serde(alias = "gradient-only")]
    GradientOnly,
    /// `|σ|`, no profiling.
    Magnitude,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Bsi => "bsi",
            Policy::GradientOnly => "gradient-only",
            Policy::Magnitude => "magnitude",
        }
    }

    pub fn needs_profiling(self) -> bool {
        !matches!(self, Policy::Magnitude)
    }

    fn score(self, sigma: f64, grad_mean: f64, hess_mean: f64) -> f64 {
        match self {
            Policy::Bsi => importance_score(sigma, grad_mean, hess_mean),
            Policy::GradientOnly => importance_score(sigma, grad_mean, 0.0),
            Policy::Magnitude => sigma.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceEntry {
    pub index: usize,
    pub sigma: f64,
    pub grad_mean: f64,
    pub hess_mean: f64,
    pub score: f64,
}

impl ImportanceEntry {
    pub fn new(index: usize, sigma: f64, grad_mean: f64, hess_mean: f64) -> Self {
        Self {
            index,
            sigma,
            grad_mean,
            hess_mean,
            score: importance_score(sigma, grad_mean, hess_mean),
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.score == importance_score(self.sigma, self.grad_mean, self.hess_mean)
    }
}

/// Scores for the candidate-pool bases of each layer at one pruning round.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImportanceTable {
    pub layers: Vec<Vec<ImportanceEntry>>,
}

impl ImportanceTable {
    pub fn is_consistent(&self) -> bool {
        self.layers.iter().flatten().all(ImportanceEntry::is_consistent)
    }
}

/// Iterative pruning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneSchedule {
    pub pruning_epochs: usize,
    pub pruning_rounds: usize,
    pub num_iter_per_epoch: usize,
    pub sampling_iter_ratio: f64,
    pub keep_ratio: f64,
    /// Candidate-pool exponent: `ρ_cand = keep_ratio^{γ/T}`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    1.0
}

impl PruneSchedule {
    pub fn total_iterations(&self) -> usize {
        self.num_iter_per_epoch * self.pruning_epochs
    }

    pub fn iter_per_pruning(&self) -> usize {
        if self.pruning_rounds == 0 {
            return 0;
        }
        (self.total_iterations() as f64 / self.pruning_rounds as f64).round() as usize
    }

    pub fn keep_ratio_per_pruning(&self) -> f64 {
        self.keep_ratio.powf(1.0 / self.pruning_rounds as f64)
    }

    pub fn num_profiling_iter(&self) -> usize {
        (self.sampling_iter_ratio * self.iter_per_pruning() as f64).round() as usize
    }

    pub fn rho_cand(&self) -> f64 {
        self.keep_ratio.powf(self.gamma / self.pruning_rounds as f64)
    }

    pub fn validate(&self, policy: Policy) -> Result<()> {
        let bad = |m: String| Err(BsiError::InvalidConfig(m));
        if self.pruning_rounds == 0 {
            return bad("pruning_rounds must be >= 1".into());
        }
        if !(self.keep_ratio > 0.0 && self.keep_ratio <= 1.0) {
            return bad(format!("keep_ratio {} must lie in (0, 1]", self.keep_ratio));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma {} must be > 0", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.sampling_iter_ratio) {
            return bad(format!(
                "sampling_iter_ratio {} must lie in [0, 1]",
                self.sampling_iter_ratio
            ));
        }
        let ipp = self.iter_per_pruning();
        if ipp == 0 {
            return bad("schedule yields zero iterations per pruning round".into());
        }
        let npi = self.num_profiling_iter();
        if npi == 0 && policy.needs_profiling() {
            return bad(format!(
                "schedule yields zero profiling iterations per round (iter_per_pruning {ipp}, \
                 sampling_iter_ratio {}); {} needs at least one",
                self.sampling_iter_ratio,
                policy.name()
            ));
        }
        if npi > ipp {
            return bad("num_profiling_iter exceeds iter_per_pruning".into());
        }
        Ok(())
    }
}

/// Per-layer split of the active bases into a protected keep-set `K` and
/// the prunable candidate pool `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPool {
    pub keep: Vec<usize>,
    pub candidates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub rho_cand: f64,
    pub layers: Vec<LayerPool>,
}

/// Active `(index, σ)` pairs of each layer.
pub fn active_sigmas(model: &MlpModel) -> Vec<Vec<(usize, f64)>> {
    model
        .layers()
        .iter()
        .map(|l| l.active_indices().into_iter().map(|i| (i, l.sigma()[i])).collect())
        .collect()
}

/// Minimal prefix of the `|σ|`-descending order whose `|σ|` mass reaches
/// `rho` of the layer total is kept; the rest forms the candidate pool.
pub fn split_layer(active: &[(usize, f64)], rho: f64) -> LayerPool {
    let mut order: Vec<(usize, f64)> = active.iter().map(|&(i, s)| (i, s.abs())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let total: f64 = order.iter().map(|p| p.1).sum();
    let target = rho * total;
    let mut sum = 0.0;
    let mut cut = 0;
    while cut < order.len() && sum < target {
        sum += order[cut].1;
        cut += 1;
    }
    let mut keep: Vec<usize> = order[..cut].iter().map(|p| p.0).collect();
    let mut candidates: Vec<usize> = order[cut..].iter().map(|p| p.0).collect();
    keep.sort_unstable();
    candidates.sort_unstable();
    LayerPool { keep, candidates }
}

pub fn build_candidate_pool(
    active: &[Vec<(usize, f64)>],
    keep_ratio: f64,
    gamma: f64,
    rounds: usize,
) -> Result<CandidatePool> {
    if rounds == 0 || !(keep_ratio > 0.0 && keep_ratio <= 1.0) || !(gamma > 0.0) {
        return Err(BsiError::InvalidConfig(format!(
            "candidate pool needs rounds >= 1, keep_ratio in (0,1], gamma > 0 \
             (got {rounds}, {keep_ratio}, {gamma})"
        )));
    }
    let rho_cand = keep_ratio.powf(gamma / rounds as f64);
    Ok(CandidatePool {
        rho_cand,
        layers: active.iter().map(|a| split_layer(a, rho_cand)).collect(),
    })
}

/// One candidate with its score; `sigma` breaks ties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBasis {
    pub index: usize,
    pub sigma: f64,
    pub score: f64,
}

/// Chooses which pool members to prune.
///
/// With `P` the total positive score, the smallest set of highest-scoring
/// bases whose score sum reaches `keep_ratio_per_pruning · P` is kept and
/// the rest pruned. If no score is positive the whole pool is pruned. Ties
/// keep the larger `|σ|`, then the lower index. Returned indices are sorted.
pub fn select_prune_set(pool: &[ScoredBasis], keep_ratio_per_pruning: f64) -> Vec<usize> {
    let mut order: Vec<ScoredBasis> = pool.to_vec();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.sigma.abs().total_cmp(&a.sigma.abs()))
            .then(a.index.cmp(&b.index))
    });
    let positive: f64 = order.iter().map(|b| b.score).filter(|&s| s > 0.0).sum();
    let keep = if positive > 0.0 {
        let target = keep_ratio_per_pruning * positive;
        let mut sum = 0.0;
        let mut cut = 0;
        while cut < order.len() && sum < target * (1.0 - MASS_TOL) {
            sum += order[cut].score;
            cut += 1;
        }
        cut
    } else {
        0
    };
    let mut pruned: Vec<usize> = order[keep..].iter().map(|b| b.index).collect();
    pruned.sort_unstable();
    pruned
}

/// Perturbation intensity: fixed, or derived from σ_max and the float format.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Epsilon {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for Epsilon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Epsilon::Auto => s.serialize_str("auto"),
            Epsilon::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Epsilon::Fixed(v)),
            Raw::Int(v) => Ok(Epsilon::Fixed(v as f64)),
            Raw::Word(w) if w == "auto" => Ok(Epsilon::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "epsilon must be a number or \"auto\", got \"{w}\""
            ))),
        }
    }
}

/// Perturbation settings for the compression driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSettings {
    pub epsilon: Epsilon,
    #[serde(default = "default_num_probes")]
    pub num_probes: usize,
    /// Mantissa bits of the modelled float format.
    #[serde(default = "default_fraction_bits")]
    pub fraction_bits: u32,
    /// Relative rounding-error tolerance used to derive ε.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_eps_max")]
    pub eps_max: f64,
}

fn default_num_probes() -> usize {
    1
}
fn default_fraction_bits() -> u32 {
    23
}
fn default_rel_tol() -> f64 {
    0.01
}
fn default_eps_max() -> f64 {
    0.1
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            epsilon: Epsilon::Auto,
            num_probes: default_num_probes(),
            fraction_bits: default_fraction_bits(),
            rel_tol: default_rel_tol(),
            eps_max: default_eps_max(),
        }
    }
}

impl ProbeSettings {
    pub fn resolve_epsilon(&self, sigma_max: f64) -> Result<f64> {
        match self.epsilon {
            Epsilon::Fixed(e) => Ok(e),
            Epsilon::Auto => choose_epsilon(sigma_max, self.fraction_bits, self.rel_tol, self.eps_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionConfig {
    pub schedule: PruneSchedule,
    pub policy: Policy,
    pub probe: ProbeSettings,
    pub optimizer: Sgd,
    pub seed: u64,
}

/// State of the model after one pruning round (round 0 is the start).
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub iteration: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub active_bases_total: usize,
    pub param_count: usize,
    pub wall_time_ms: u128,
    pub pruned_per_layer: Vec<usize>,
    /// Per layer: (kept score sum, total positive score) in the pool.
    pub kept_mass: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionReport {
    pub epsilon: f64,
    pub keep_ratio_per_pruning: f64,
    pub rounds: Vec<RoundRecord>,
    pub tables: Vec<ImportanceTable>,
    /// Number of probe calls after which σ was verified bit-identical.
    pub probes_verified: usize,
}

/// Cycles through the batches, reshuffling the order on every pass.
#[derive(Debug)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: RngStream,
}

impl BatchSampler {
    pub fn new(num_batches: usize, rng: RngStream) -> Self {
        Self {
            order: (0..num_batches).collect(),
            pos: num_batches,
            rng,
        }
    }

    pub fn next_index(&mut self) -> usize {
        if self.pos >= self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let i = self.order[self.pos];
        self.pos += 1;
        i
    }
}

fn sigma_bits(model: &MlpModel) -> Vec<Vec<u64>> {
    model
        .layers()
        .iter()
        .map(|l| l.sigma().iter().map(|s| s.to_bits()).collect())
        .collect()
}

/// Loss and accuracy over the whole dataset.
pub fn evaluate(model: &MlpModel, data: &[Batch]) -> Result<(f64, f64)> {
    let full = Batch::concat(data)?;
    Ok((model.loss(&full)?, model.accuracy(&full)?))
}

fn record(
    model: &MlpModel,
    data: &[Batch],
    round: usize,
    iteration: usize,
    started: Instant,
) -> Result<RoundRecord> {
    let (loss, accuracy) = evaluate(model, data)?;
    Ok(RoundRecord {
        round,
        iteration,
        loss,
        accuracy,
        active_bases_total: model.active_bases_total(),
        param_count: model.param_count(),
        wall_time_ms: started.elapsed().as_millis(),
        pruned_per_layer: vec![0; model.num_layers()],
        kept_mass: Vec::new(),
    })
}

/// Iterative train / profile / prune loop.
///
/// Iterations are grouped into blocks of `iter_per_pruning`; in each block
/// the first `iter_per_pruning − num_profiling_iter` iterations train σ and
/// the auxiliary factors, the rest accumulate `E[∂ℓ/∂σ]` (and, for
/// [`Policy::Bsi`], the gradient-difference Hessian diagonal over the
/// candidate pool). At the end of each block every layer's pool is scored
/// and pruned with [`select_prune_set`], and the accumulators reset.
pub fn run_compression(
    model: &mut MlpModel,
    data: &[Batch],
    cfg: &CompressionConfig,
) -> Result<CompressionReport> {
    let sched = &cfg.schedule;
    sched.validate(cfg.policy)?;
    if data.is_empty() {
        return Err(BsiError::InvalidConfig("compression needs a non-empty dataset".into()));
    }
    let started = Instant::now();
    let n_layers = model.num_layers();
    let total = sched.total_iterations();
    let ipp = sched.iter_per_pruning();
    let npi = sched.num_profiling_iter();
    let krp = sched.keep_ratio_per_pruning();
    let sigma_max = model.sigma_max();
    let epsilon = if cfg.policy == Policy::Bsi {
        cfg.probe.resolve_epsilon(sigma_max)?
    } else {
        match cfg.probe.epsilon {
            Epsilon::Fixed(e) => e,
            Epsilon::Auto => f64::NAN,
        }
    };
    let mut prober = if cfg.policy == Policy::Bsi {
        let pc = ProbeConfig::new(epsilon, cfg.probe.num_probes, cfg.seed, vec![Vec::new(); n_layers])?;
        Some(HessianProber::new(pc, n_layers))
    } else {
        None
    };

    let mut sampler = BatchSampler::new(data.len(), RngStream::new(cfg.seed, streams::TRAIN));
    let mut opt_state = SgdState::default();
    let mut grad_mean: Vec<Vec<f64>> = model.layers().iter().map(|l| vec![0.0; l.rank()]).collect();
    let mut hess_mean: Vec<Option<DiagEstimate>> = vec![None; n_layers];
    let mut pool: Option<CandidatePool> = None;
    let mut report = CompressionReport {
        epsilon,
        keep_ratio_per_pruning: krp,
        rounds: vec![record(model, data, 0, 0, started)?],
        tables: Vec::new(),
        probes_verified: 0,
    };

    for iter in 1..=total {
        let batch = &data[sampler.next_index()];
        let in_block = (iter - 1) % ipp + 1;
        if in_block <= ipp - npi {
            let grads = model.loss_and_grads(batch)?;
            cfg.optimizer.apply(model, &grads, &mut opt_state);
        } else if cfg.policy.needs_profiling() {
            let grads = model.loss_and_grads(batch)?;
            let w = 1.0 / npi as f64;
            for (acc, g) in grad_mean.iter_mut().zip(&grads.sigma) {
                for (a, gi) in acc.iter_mut().zip(g) {
                    *a += w * gi;
                }
            }
            if let Some(prober) = prober.as_mut() {
                let p = pool.get_or_insert_with(|| {
                    build_candidate_pool(&active_sigmas(model), sched.keep_ratio, sched.gamma, sched.pruning_rounds)
                        .expect("schedule validated")
                });
                prober.set_candidates(p.layers.iter().map(|lp| lp.candidates.clone()).collect());
                let before = sigma_bits(model);
                let est = prober.probe(model, batch)?;
                if sigma_bits(model) != before {
                    return Err(BsiError::NumericalFailure {
                        probe: iter,
                        detail: "singular values changed across a probe".into(),
                    });
                }
                report.probes_verified += 1;
                for (run, new) in hess_mean.iter_mut().zip(est) {
                    if let Some(new) = new {
                        let r = run.get_or_insert_with(|| DiagEstimate::zeros(new.indices().to_vec()));
                        accumulate_into(r, &new, npi)?;
                    }
                }
            }
        }

        if in_block == ipp {
            let round = report.rounds.len();
            let p = match pool.take() {
                Some(p) => p,
                None => build_candidate_pool(&active_sigmas(model), sched.keep_ratio, sched.gamma, sched.pruning_rounds)?,
            };
            let mut table = ImportanceTable::default();
            let mut pruned_per_layer = Vec::with_capacity(n_layers);
            let mut kept_mass = Vec::with_capacity(n_layers);
            for l in 0..n_layers {
                let layer = model.layer(l);
                let entries: Vec<ImportanceEntry> = p.layers[l]
                    .candidates
                    .iter()
                    .map(|&i| {
                        let h = hess_mean[l].as_ref().and_then(|d| d.get(i)).unwrap_or(0.0);
                        ImportanceEntry::new(i, layer.sigma()[i], grad_mean[l][i], h)
                    })
                    .collect();
                let scored: Vec<ScoredBasis> = entries
                    .iter()
                    .map(|e| ScoredBasis {
                        index: e.index,
                        sigma: e.sigma,
                        score: cfg.policy.score(e.sigma, e.grad_mean, e.hess_mean),
                    })
                    .collect();
                let prune = select_prune_set(&scored, krp);
                let positive: f64 = scored.iter().map(|s| s.score).filter(|&s| s > 0.0).sum();
                let kept: f64 = scored
                    .iter()
                    .filter(|s| !prune.contains(&s.index))
                    .map(|s| s.score)
                    .sum();
                kept_mass.push((kept, positive));
                pruned_per_layer.push(model.layer_mut(l).prune(&prune)?);
                table.layers.push(entries);
            }
            report.tables.push(table);
            grad_mean.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            hess_mean.iter_mut().for_each(|h| *h = None);
            let mut rec = record(model, data, round, iter, started)?;
            rec.pruned_per_layer = pruned_per_layer;
            rec.kept_mass = kept_mass;
            report.rounds.push(rec);
        }
    }
    Ok(report)
}

/// One-shot truncation baseline: each layer keeps its `max(1, ⌊keep_ratio·r⌋)`
/// largest active singular values. Returns how many bases each layer lost.
pub fn svd_truncate(model: &mut MlpModel, keep_ratio: f64) -> Result<Vec<usize>> {
    if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
        return Err(BsiError::InvalidConfig(format!("keep_ratio {keep_ratio} must lie in (0, 1]")));
    }
    (0..model.num_layers())
        .map(|l| {
            let layer = model.layer(l);
            let mut order: Vec<usize> = layer.active_indices();
            let keep = ((keep_ratio * order.len() as f64 + MASS_TOL).floor() as usize).max(1).min(order.len());
            order.sort_by(|&a, &b| {
                layer.sigma()[b].abs().total_cmp(&layer.sigma()[a].abs()).then(a.cmp(&b))
            });
            let drop: Vec<usize> = order[keep..].to_vec();
            model.layer_mut(l).prune(&drop)
        })
        .collect()
}

/// Plain SGD for `iterations` steps with the shared batch sampler.
pub fn fine_tune(
    model: &mut MlpModel,
    data: &[Batch],
    opt: &Sgd,
    iterations: usize,
    seed: u64,
) -> Result<()> {
    if data.is_empty() {
        return Ok(());
    }
    let mut sampler = BatchSampler::new(data.len(), RngStream::new(seed, streams::TRAIN).derive(1));
    let mut state = SgdState::default();
    for _ in 0..iterations {
        let grads = model.loss_and_grads(&data[sampler.next_index()])?;
        opt.apply(model, &grads, &mut state);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(scores: &[f64]) -> Vec<ScoredBasis> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| ScoredBasis { index: i, sigma: 1.0, score: s })
            .collect()
    }

    #[test]
    fn score_formula() {
        assert_eq!(importance_score(0.0, 3.0, -7.0), 0.0);
        assert_eq!(importance_score(1.0, 0.0, 2.0), 1.0);
        assert_eq!(importance_score(2.0, 0.5, 1.0), -1.0 + 2.0);
    }

    #[test]
    fn candidate_pool_examples() {
        let s = PruneSchedule {
            pruning_epochs: 1,
            pruning_rounds: 4,
            num_iter_per_epoch: 8,
            sampling_iter_ratio: 0.5,
            keep_ratio: 0.25,
            gamma: 2.0,
        };
        assert_eq!(s.rho_cand(), 0.5);
        let active = vec![vec![(0, 4.0), (1, 3.0), (2, 2.0), (3, 1.0)]];
        let pool = build_candidate_pool(&active, 0.25, 2.0, 4).unwrap();
        assert_eq!(pool.rho_cand, 0.5);
        assert_eq!(pool.layers[0].keep, vec![0, 1]);
        assert_eq!(pool.layers[0].candidates, vec![2, 3]);
        let full = build_candidate_pool(&active, 1.0, 2.0, 4).unwrap();
        assert_eq!(full.layers[0].keep, vec![0, 1, 2, 3]);
        assert!(full.layers[0].candidates.is_empty());
        let empty = build_candidate_pool(&[vec![]], 0.5, 1.0, 2).unwrap();
        assert!(empty.layers[0].keep.is_empty() && empty.layers[0].candidates.is_empty());
    }

    #[test]
    fn pool_ranks_by_magnitude() {
        let pool = split_layer(&[(0, -5.0), (1, 1.0), (2, 2.0)], 0.6);
        assert_eq!(pool.keep, vec![0]);
        assert_eq!(pool.candidates, vec![1, 2]);
    }

    #[test]
    fn prune_set_examples() {
        assert_eq!(select_prune_set(&scored(&[4.0, 3.0, 2.0, 1.0]), 0.7), vec![2, 3]);
        assert_eq!(select_prune_set(&scored(&[-1.0, -0.5, -3.0]), 0.9), vec![0, 1, 2]);
        assert!(select_prune_set(&scored(&[5.0, 1.0, 3.0]), 1.0).is_empty());
        // Negative scores go first even at ratio 1.
        assert_eq!(select_prune_set(&scored(&[2.0, -1.0, 1.0]), 1.0), vec![1]);
    }

    #[test]
    fn prune_ties_keep_larger_sigma_then_lower_index() {
        let pool = vec![
            ScoredBasis { index: 0, sigma: 1.0, score: 1.0 },
            ScoredBasis { index: 1, sigma: 3.0, score: 1.0 },
            ScoredBasis { index: 2, sigma: 3.0, score: 1.0 },
        ];
        // Target 0.3 · 3 = 0.9: a single basis is kept.
        assert_eq!(select_prune_set(&pool, 0.3), vec![0, 2]);
    }

    #[test]
    fn schedule_derivations() {
        let s = PruneSchedule {
            pruning_epochs: 3,
            pruning_rounds: 2,
            num_iter_per_epoch: 10,
            sampling_iter_ratio: 0.2,
            keep_ratio: 0.25,
            gamma: 1.0,
        };
        assert_eq!(s.iter_per_pruning(), 15);
        assert_eq!(s.keep_ratio_per_pruning(), 0.5);
        assert_eq!(s.num_profiling_iter(), 3);
        assert!(s.validate(Policy::Bsi).is_ok());
        let none = PruneSchedule { sampling_iter_ratio: 0.0, ..s.clone() };
        assert!(matches!(none.validate(Policy::Bsi), Err(BsiError::InvalidConfig(_))));
        assert!(matches!(none.validate(Policy::GradientOnly), Err(BsiError::InvalidConfig(_))));
        assert!(none.validate(Policy::Magnitude).is_ok());
    }
}
