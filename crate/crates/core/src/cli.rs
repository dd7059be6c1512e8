//! Command-line front end. Parsing lives here so the binary stays a thin
//! wrapper and the commands can be driven from tests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{BsiError, Result};
use crate::importance::{
    evaluate, fine_tune, run_compression, svd_truncate, BatchSampler, CompressionConfig, Policy,
};
use crate::model::{make_dataset, Batch, MlpModel, Sgd, SgdState};
use crate::numkit::{streams, Matrix, RngStream};
use crate::oracles::{dense_hessian, exact_delta_loss, SigmaCoords};
use crate::persist::{
    load_checkpoint, read_metrics, save_checkpoint, write_csv_rows, write_metrics, write_spectrum_csv,
    write_text, MetricsLog, MetricsRow, RunConfig,
};
use crate::probe::hutchinson_diag_matrix;
use crate::spectra::{
    block_diag_sv_spectrum, harmonic, lm_head_hessian_diag, loss_change_bound, loss_change_bound_rel,
    power_law_spectrum, sample_complexity, sample_complexity_psd, segment_hessian_lipschitz,
    synthetic_symmetric, total_variance_exact, variance_bound, zeta,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_BOUND_VIOLATION: i32 = 4;

const DEFAULT_CONFIG: &str = include_str!("../../../configs/blobs.toml");

#[derive(Debug, Parser)]
#[command(
    name = "bsi",
    version,
    about = "Basis selection with second-order importance for basis-form MLPs",
    after_help = "Configuration precedence: built-in defaults < --config file < --set overrides < \
                  --seed/--out flags."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration. The bundled blobs config is used when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set schedule.keep_ratio=0.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Caps worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Write zero in every wall-time column so outputs compare byte-for-byte.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Bsi,
    GradientOnly,
    Magnitude,
    Svd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bsi => "bsi",
            Method::GradientOnly => "gradient-only",
            Method::Magnitude => "magnitude",
            Method::Svd => "svd",
        }
    }

    fn policy(self) -> Option<Policy> {
        match self {
            Method::Bsi => Some(Policy::Bsi),
            Method::GradientOnly => Some(Policy::GradientOnly),
            Method::Magnitude => Some(Policy::Magnitude),
            Method::Svd => None,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a basis-form model and write `model.ckpt` and `train_metrics.csv`.
    Train,
    /// Prune a trained checkpoint.
    Compress {
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Input checkpoint (default: OUT/model.ckpt).
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint and compare metrics logs.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Metrics CSVs to tabulate side by side. Repeatable.
        #[arg(long = "metrics", value_name = "CSV")]
        metrics: Vec<PathBuf>,
    },
    /// Empirical vs theoretical variance of the Rademacher diagonal estimator.
    EstimatorBench,
    /// Run the bound-soundness suites and write `bounds_report.txt`.
    BoundsCheck {
        #[arg(long, hide = true, default_value_t = 1.0)]
        fault_scale: f64,
    },
    /// Layer-wise block-diagonal σ-space Hessian spectrum.
    Spectrum {
        #[arg(long, value_name = "N")]
        top_k: Option<usize>,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
}

/// Process exit code for an error.
pub fn exit_code(e: &BsiError) -> i32 {
    match e {
        BsiError::NumericalFailure { .. }
        | BsiError::PerturbationTooLarge { .. }
        | BsiError::DomainError(_)
        | BsiError::InsufficientSpectrum(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Resolved configuration plus the run-wide flags.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub no_timing: bool,
}

impl Context {
    pub fn from_args(g: &GlobalArgs) -> Result<Self> {
        let mut config = match &g.config {
            Some(p) => RunConfig::load(p, &g.overrides)?,
            None => RunConfig::parse(DEFAULT_CONFIG, &g.overrides)?,
        };
        if let Some(s) = g.seed {
            config.seed = s;
        }
        if let Some(o) = &g.out {
            config.out_dir = o.clone();
        }
        Ok(Self {
            config,
            no_timing: g.no_timing,
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn ms(&self, started: Instant) -> u64 {
        if self.no_timing {
            0
        } else {
            started.elapsed().as_millis() as u64
        }
    }

    pub fn dataset(&self) -> Result<Vec<Batch>> {
        make_dataset(&self.config.dataset, &mut RngStream::new(self.config.seed, streams::DATASET))
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.global.threads {
        // A second initialization attempt (e.g. repeated in-process runs) is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let ctx = Context::from_args(&cli.global)?;
    match &cli.command {
        Command::Train => cmd_train(&ctx).map(|_| EXIT_OK),
        Command::Compress { method, checkpoint } => {
            let method = method.unwrap_or(match ctx.config.compress.policy {
                Policy::Bsi => Method::Bsi,
                Policy::GradientOnly => Method::GradientOnly,
                Policy::Magnitude => Method::Magnitude,
            });
            cmd_compress(&ctx, method, checkpoint.as_deref()).map(|_| EXIT_OK)
        }
        Command::Eval { checkpoint, metrics } => {
            let table = cmd_eval(&ctx, checkpoint.as_deref(), metrics)?;
            print!("{table}");
            Ok(EXIT_OK)
        }
        Command::EstimatorBench => cmd_estimator_bench(&ctx).map(|_| EXIT_OK),
        Command::BoundsCheck { fault_scale } => {
            let report = cmd_bounds_check(&ctx, *fault_scale)?;
            if report.all_passed() {
                Ok(EXIT_OK)
            } else {
                for c in report.checks.iter().filter(|c| !c.passed) {
                    eprintln!("bound violation: {} ({})", c.id, c.detail);
                }
                Ok(EXIT_BOUND_VIOLATION)
            }
        }
        Command::Spectrum { top_k, checkpoint } => {
            cmd_spectrum(&ctx, top_k.unwrap_or(ctx.config.spectrum.top_k), checkpoint.as_deref())
                .map(|_| EXIT_OK)
        }
    }
}

fn metrics_row(
    model: &MlpModel,
    data: &[Batch],
    round: usize,
    iteration: usize,
    wall_time_ms: u64,
) -> Result<MetricsRow> {
    let (loss, accuracy) = evaluate(model, data)?;
    Ok(MetricsRow {
        round,
        iteration,
        loss,
        accuracy,
        active_bases_total: model.active_bases_total(),
        param_count: model.param_count(),
        wall_time_ms,
    })
}

/// Trains from a seeded initialization; returns the model and its log.
pub fn cmd_train(ctx: &Context) -> Result<(MlpModel, MetricsLog)> {
    let cfg = &ctx.config;
    let started = Instant::now();
    let data = ctx.dataset()?;
    let mut model = MlpModel::random(
        &cfg.model.layer_sizes,
        cfg.model.activation,
        cfg.model.aux_rank,
        &mut RngStream::new(cfg.seed, streams::INIT),
    )?;
    let opt = Sgd {
        learning_rate: cfg.train.learning_rate,
        momentum: cfg.train.momentum,
    };
    let mut log = MetricsLog::new();
    log.push(metrics_row(&model, &data, 0, 0, ctx.ms(started))?)?;
    let mut sampler = BatchSampler::new(data.len(), RngStream::new(cfg.seed, streams::TRAIN));
    let mut state = SgdState::default();
    let mut iteration = 0;
    for _ in 0..cfg.train.epochs {
        for _ in 0..data.len() {
            let grads = model.loss_and_grads(&data[sampler.next_index()])?;
            opt.apply(&mut model, &grads, &mut state);
            iteration += 1;
        }
        log.push(metrics_row(&model, &data, 0, iteration, ctx.ms(started))?)?;
    }
    save_checkpoint(&model, Some(cfg.seed), ctx.out("model.ckpt"))?;
    write_metrics(&log, ctx.out("train_metrics.csv"))?;
    let last = log.last().expect("initial row");
    println!(
        "train: {} epochs, loss {:.6}, accuracy {:.4}, params {}",
        cfg.train.epochs, last.loss, last.accuracy, last.param_count
    );
    Ok((model, log))
}

#[derive(Debug, Serialize)]
struct RoundDetail {
    round: usize,
    layer: usize,
    pruned: usize,
    active_after: usize,
    kept_score: f64,
    positive_score: f64,
    target_ratio: f64,
}

/// Compresses a checkpoint; writes `compressed-<method>.ckpt`,
/// `compress-<method>.csv` and a per-layer round breakdown.
pub fn cmd_compress(ctx: &Context, method: Method, checkpoint: Option<&Path>) -> Result<(MlpModel, MetricsLog)> {
    let cfg = &ctx.config;
    let started = Instant::now();
    let input = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| ctx.out("model.ckpt"));
    let mut model = load_checkpoint(&input)?;
    let data = ctx.dataset()?;
    let opt = Sgd {
        learning_rate: cfg.compress.learning_rate,
        momentum: cfg.compress.momentum,
    };
    let original_basis = model.basis_param_count();
    let mut log = MetricsLog::new();
    let mut details = Vec::new();
    let mut iteration;
    match method.policy() {
        Some(policy) => {
            let report = run_compression(
                &mut model,
                &data,
                &CompressionConfig {
                    schedule: cfg.schedule.clone(),
                    policy,
                    probe: cfg.probe.clone(),
                    optimizer: opt.clone(),
                    seed: cfg.seed,
                },
            )?;
            for r in &report.rounds {
                log.push(MetricsRow {
                    round: r.round,
                    iteration: r.iteration,
                    loss: r.loss,
                    accuracy: r.accuracy,
                    active_bases_total: r.active_bases_total,
                    param_count: r.param_count,
                    wall_time_ms: if ctx.no_timing { 0 } else { r.wall_time_ms as u64 },
                })?;
                for (l, (&pruned, &(kept, pos))) in r.pruned_per_layer.iter().zip(&r.kept_mass).enumerate() {
                    details.push(RoundDetail {
                        round: r.round,
                        layer: l,
                        pruned,
                        active_after: 0,
                        kept_score: kept,
                        positive_score: pos,
                        target_ratio: report.keep_ratio_per_pruning,
                    });
                }
            }
            iteration = report.rounds.last().map_or(0, |r| r.iteration);
            if policy == Policy::Bsi {
                println!(
                    "compress: epsilon {:.6e}, {} probes verified state-preserving",
                    report.epsilon, report.probes_verified
                );
            }
        }
        None => {
            log.push(metrics_row(&model, &data, 0, 0, ctx.ms(started))?)?;
            let pruned = svd_truncate(&mut model, cfg.schedule.keep_ratio)?;
            for (l, &p) in pruned.iter().enumerate() {
                details.push(RoundDetail {
                    round: 1,
                    layer: l,
                    pruned: p,
                    active_after: 0,
                    kept_score: f64::NAN,
                    positive_score: f64::NAN,
                    target_ratio: cfg.schedule.keep_ratio,
                });
            }
            log.push(metrics_row(&model, &data, 1, 0, ctx.ms(started))?)?;
            iteration = cfg.schedule.total_iterations();
            fine_tune(&mut model, &data, &opt, iteration, cfg.seed)?;
            log.push(metrics_row(&model, &data, 1, iteration, ctx.ms(started))?)?;
        }
    }
    if cfg.compress.finetune_epochs > 0 && method != Method::Svd {
        let iters = cfg.compress.finetune_epochs * data.len();
        fine_tune(&mut model, &data, &opt, iters, cfg.seed)?;
        iteration += iters;
        let round = log.last().map_or(0, |r| r.round);
        log.push(metrics_row(&model, &data, round, iteration, ctx.ms(started))?)?;
    }
    // Fill in active counts per layer now that the trajectory is known.
    let per_layer: Vec<usize> = model.layers().iter().map(|l| l.active_count()).collect();
    let mut running: Vec<usize> = per_layer.clone();
    for d in details.iter_mut().rev() {
        d.active_after = running[d.layer];
        running[d.layer] += d.pruned;
    }
    let name = method.name();
    save_checkpoint(&model, Some(cfg.seed), ctx.out(&format!("compressed-{name}.ckpt")))?;
    write_metrics(&log, ctx.out(&format!("compress-{name}.csv")))?;
    write_csv_rows(
        &details,
        &["round", "layer", "pruned", "active_after", "kept_score", "positive_score", "target_ratio"],
        ctx.out(&format!("compress-{name}-rounds.csv")),
    )?;
    let basis = model.basis_param_count();
    let aux: usize = model.param_count() - basis;
    println!(
        "compress[{name}]: active bases {} , basis params {basis} / original {original_basis} \
         (ratio {:.4}, target {}), aux params {aux}, accuracy {:.4}",
        model.active_bases_total(),
        basis as f64 / original_basis.max(1) as f64,
        cfg.schedule.keep_ratio,
        log.last().map_or(f64::NAN, |r| r.accuracy)
    );
    Ok((model, log))
}

/// Evaluates a checkpoint (if any) and tabulates final rows of metrics logs.
pub fn cmd_eval(ctx: &Context, checkpoint: Option<&Path>, metrics: &[PathBuf]) -> Result<String> {
    let mut out = String::new();
    let ckpt = checkpoint.map(Path::to_path_buf).or_else(|| {
        let p = ctx.out("model.ckpt");
        (metrics.is_empty() && p.exists()).then_some(p)
    });
    if let Some(path) = ckpt {
        let model = load_checkpoint(&path)?;
        let data = ctx.dataset()?;
        let (loss, acc) = evaluate(&model, &data)?;
        writeln!(
            out,
            "{}: loss {loss:.6}, accuracy {acc:.4}, active bases {}, params {}",
            path.display(),
            model.active_bases_total(),
            model.param_count()
        )
        .expect("string write");
    }
    if !metrics.is_empty() {
        let mut rows = Vec::new();
        for p in metrics {
            let log = read_metrics(p)?;
            let last = log
                .last()
                .ok_or_else(|| BsiError::invalid(format!("{}: metrics log is empty", p.display())))?
                .clone();
            rows.push((p.display().to_string(), last));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(3).max(3);
        writeln!(
            out,
            "{:width$}  {:>5}  {:>9}  {:>10}  {:>8}  {:>7}  {:>8}",
            "run", "round", "iteration", "loss", "accuracy", "bases", "params"
        )
        .expect("string write");
        for (name, r) in &rows {
            writeln!(
                out,
                "{name:width$}  {:>5}  {:>9}  {:>10.6}  {:>8.4}  {:>7}  {:>8}",
                r.round, r.iteration, r.loss, r.accuracy, r.active_bases_total, r.param_count
            )
            .expect("string write");
        }
        write_text(ctx.out("comparison.txt"), &out)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub matrix_id: String,
    pub s: usize,
    pub empirical_total_variance: f64,
    pub theoretical_variance: f64,
    pub variance_bound: Option<f64>,
    pub wall_time: u64,
}

/// Test matrices with controlled spectra: `(id, matrix, decay exponent)`.
pub fn bench_matrices(n: usize, seed: u64) -> Result<Vec<(String, Matrix, Option<f64>)>> {
    let base = RngStream::new(seed, streams::BENCH);
    let flat: Vec<f64> = (0..n).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    Ok(vec![
        ("diagonal".into(), Matrix::from_diag(&power_law_spectrum(n, 1.0)), Some(1.0)),
        ("flat".into(), synthetic_symmetric(&flat, &mut base.derive(1))?, None),
        ("power1".into(), synthetic_symmetric(&power_law_spectrum(n, 1.0), &mut base.derive(2))?, Some(1.0)),
        ("power2".into(), synthetic_symmetric(&power_law_spectrum(n, 2.0), &mut base.derive(3))?, Some(2.0)),
    ])
}

/// Sum over coordinates of the sample variance of `trials` independent
/// `s`-probe estimates.
pub fn empirical_total_variance(a: &Matrix, s: usize, trials: usize, rng: &mut RngStream) -> Result<f64> {
    let n = a.rows();
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for t in 0..trials {
        let est = hutchinson_diag_matrix(a, s, rng)?;
        for (i, &v) in est.values().iter().enumerate() {
            let d = v - mean[i];
            mean[i] += d / (t + 1) as f64;
            m2[i] += d * (v - mean[i]);
        }
    }
    Ok(m2.iter().sum::<f64>() / (trials.max(2) - 1) as f64)
}

pub fn cmd_estimator_bench(ctx: &Context) -> Result<Vec<BenchRow>> {
    let b = &ctx.config.bench;
    if b.n < 2 || b.trials < 2 || b.probe_counts.contains(&0) {
        return Err(BsiError::InvalidConfig("bench needs n >= 2, trials >= 2, probe counts >= 1".into()));
    }
    let mut rows = Vec::new();
    let base = RngStream::new(ctx.config.seed, streams::BENCH).derive(100);
    for (m, (id, a, alpha)) in bench_matrices(b.n, ctx.config.seed)?.into_iter().enumerate() {
        for (c, &s) in b.probe_counts.iter().enumerate() {
            let started = Instant::now();
            let mut rng = base.derive((m * 1000 + c) as u64);
            let emp = empirical_total_variance(&a, s, b.trials, &mut rng)?;
            rows.push(BenchRow {
                matrix_id: id.clone(),
                s,
                empirical_total_variance: emp,
                theoretical_variance: total_variance_exact(&a, s)?,
                variance_bound: alpha.map(|al| variance_bound(1.0, al, s)).transpose()?,
                wall_time: ctx.ms(started),
            });
        }
    }
    write_csv_rows(
        &rows,
        &["matrix_id", "s", "empirical_total_variance", "theoretical_variance", "variance_bound", "wall_time"],
        ctx.out("estimator_bench.csv"),
    )?;
    for id in rows.iter().map(|r| r.matrix_id.clone()).collect::<std::collections::BTreeSet<_>>() {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.matrix_id == id && r.empirical_total_variance > 0.0)
            .map(|r| ((r.s as f64).ln(), r.empirical_total_variance.ln()))
            .collect();
        match log_log_slope(&pts) {
            Some(k) => println!("estimator-bench: {id} variance-vs-s log-log slope {k:.4}"),
            None => println!("estimator-bench: {id} variance identically zero"),
        }
    }
    Ok(rows)
}

/// Least-squares slope of `y` on `x`.
pub fn log_log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// One line of the bounds report.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub id: &'static str,
    pub inputs: String,
    pub bound: f64,
    pub observed: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundsReport {
    pub checks: Vec<BoundCheck>,
}

impl BoundsReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, id: &'static str, inputs: String, bound: f64, observed: f64, passed: bool, detail: impl Into<String>) {
        self.checks.push(BoundCheck {
            id,
            inputs,
            bound,
            observed,
            passed,
            detail: detail.into(),
        });
    }

    pub fn render(&self) -> String {
        let mut s = String::from("id\tstatus\tbound\tobserved\tinputs\tdetail\n");
        for c in &self.checks {
            writeln!(
                s,
                "{}\t{}\t{:.12e}\t{:.12e}\t{}\t{}",
                c.id,
                if c.passed { "PASS" } else { "FAIL" },
                c.bound,
                c.observed,
                c.inputs,
                c.detail
            )
            .expect("string write");
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        writeln!(s, "summary\t{}\t{} checks, {failed} failed", if failed == 0 { "PASS" } else { "FAIL" }, self.checks.len())
            .expect("string write");
        s
    }
}

/// Scalar test functions `f` with derivatives and a Lipschitz constant of
/// `f''` on `[−3, 3]`.
struct ScalarCase {
    name: &'static str,
    f: fn(f64) -> f64,
    df: fn(f64) -> f64,
    d2f: fn(f64) -> f64,
    rho: f64,
}

fn scalar_cases() -> Vec<ScalarCase> {
    vec![
        ScalarCase { name: "cubic", f: |x| x.powi(3) / 6.0, df: |x| x * x / 2.0, d2f: |x| x, rho: 1.0 },
        ScalarCase {
            name: "quadratic",
            f: |x| 1.5 * x * x - 0.5 * x,
            df: |x| 3.0 * x - 0.5,
            d2f: |_| 3.0,
            rho: 0.0,
        },
        ScalarCase { name: "sin", f: f64::sin, df: f64::cos, d2f: |x| -x.sin(), rho: 1.0 },
        ScalarCase {
            name: "softplus",
            f: |x| (1.0 + x.exp()).ln(),
            df: |x| 1.0 / (1.0 + (-x).exp()),
            d2f: |x| {
                let p = 1.0 / (1.0 + (-x).exp());
                p * (1.0 - p)
            },
            // max |p(1−p)(1−2p)| = 1/(6√3)
            rho: 1.0 / (6.0 * 3f64.sqrt()),
        },
    ]
}

/// Small slack for rounding in the exact loss difference.
fn le(observed: f64, bound: f64) -> bool {
    observed <= bound * (1.0 + 1e-12) + 1e-14
}

/// Every soundness suite; `fault_scale` multiplies each bound.
pub fn bounds_suite(seed: u64, cfg: &crate::persist::BoundsConfig, fault_scale: f64) -> Result<BoundsReport> {
    let mut rep = BoundsReport::default();
    let root = RngStream::new(seed, streams::BOUNDS);

    // Loss change on scalar functions with known ρ, pruning s = σ.
    for case in scalar_cases() {
        let mut ok = true;
        let mut tight = (0.0, f64::INFINITY);
        for k in -12..=12 {
            let sigma = k as f64 * 0.25;
            let exact = ((case.f)(0.0) - (case.f)(sigma)).abs();
            let b = fault_scale * loss_change_bound((case.df)(sigma), (case.d2f)(sigma), sigma, case.rho)?;
            ok &= le(exact, b);
            if b > 0.0 && exact / b > tight.0 / tight.1 {
                tight = (exact, b);
            }
        }
        rep.push("loss_change", format!("f={} rho={} s=-3..3", case.name, case.rho), tight.1, tight.0, ok, "tightest grid point");
        for eps_rel in [0.1, 0.5] {
            let mut ok = true;
            let mut tight = (0.0, f64::INFINITY);
            for k in -12..=12 {
                let sigma = k as f64 * 0.25;
                let (g, h) = ((case.df)(sigma), (case.d2f)(sigma));
                let exact = ((case.f)(0.0) - (case.f)(sigma)).abs();
                let base = fault_scale * loss_change_bound(g, h, sigma, case.rho)?;
                for h_hat in [h * (1.0 + eps_rel), h * (1.0 - eps_rel)] {
                    let b = fault_scale * loss_change_bound_rel(g, h_hat, sigma, case.rho, eps_rel)?;
                    ok &= le(exact, b) && le(base, b);
                    if b > 0.0 && exact / b > tight.0 / tight.1 {
                        tight = (exact, b);
                    }
                }
            }
            rep.push(
                "loss_change_rel_error",
                format!("f={} rho={} eps_rel={eps_rel}", case.name, case.rho),
                tight.1,
                tight.0,
                ok,
                "bounds exact change and the exact-h bound",
            );
        }
    }

    // Loss change on a small trained model with a sampled ρ.
    toy_model_loss_bounds(&mut rep, seed, fault_scale)?;

    // Exact total variance against the dimension-free bound.
    for (m, alpha) in [0.75, 1.0, 2.0].into_iter().enumerate() {
        for n in [32usize, 64] {
            let h = synthetic_symmetric(&power_law_spectrum(n, alpha), &mut root.derive(10 + m as u64 * 2 + (n == 64) as u64))?;
            for s in [1usize, 4, 16, 64] {
                let exact = total_variance_exact(&h, s)?;
                let b = fault_scale * variance_bound(1.0, alpha, s)?;
                rep.push("variance", format!("alpha={alpha} n={n} s={s}"), b, exact, le(exact, b), "exact total variance");
            }
        }
    }

    // Sample-complexity formulas against an independent evaluation.
    let (n, alpha, eps, delta) = (cfg.n, cfg.alpha, cfg.eps, cfg.delta);
    let nf = n as f64;
    let spectrum = power_law_spectrum(n, alpha);
    let trace: f64 = spectrum.iter().sum();
    let sc = sample_complexity(1.0, alpha, n, trace, eps, delta)?;
    let h2: f64 = spectrum.iter().map(|l| l * l).sum();
    let reference = 2.0 * (h2 * nf / (trace * trace) - 1.0) * (2.0 * nf / delta).ln() / (eps * eps);
    rep.push(
        "sample_complexity",
        format!("lambda1=1 alpha={alpha} n={n} trace={trace:.6} eps={eps} delta={delta}"),
        sc,
        reference,
        (sc - reference).abs() <= 1e-9 * reference.abs().max(1.0),
        "formula vs direct evaluation",
    );
    let psd = sample_complexity_psd(n, alpha, eps, delta)?;
    let z = zeta(2.0 * alpha)?;
    let reference = 2.0 * (nf * z - 1.0) * (2.0 * nf / delta).ln() / (eps * eps);
    rep.push(
        "sample_complexity_psd",
        format!("n={n} alpha={alpha} eps={eps} delta={delta}"),
        psd,
        reference,
        (psd - reference).abs() <= 1e-9 * reference,
        "formula vs direct evaluation",
    );
    rep.push(
        "sample_complexity_psd",
        format!("n={n} alpha={alpha} trace={trace:.6}"),
        psd,
        sc,
        sc <= psd || trace < 1.0,
        "relaxation dominates when trace >= lambda1",
    );

    // Empirical (ε, δ) failure rate at s = ⌈psd bound⌉ on an exact PSD spectrum.
    let s = (fault_scale * psd).ceil().max(1.0) as usize;
    let h = synthetic_symmetric(&spectrum, &mut root.derive(1))?;
    let diag = h.diagonal();
    let dnorm = diag.iter().map(|d| d * d).sum::<f64>().sqrt();
    let mut rng = root.derive(2);
    let mut failures = 0usize;
    for _ in 0..cfg.trials {
        let est = hutchinson_diag_matrix(&h, s, &mut rng)?;
        let err = est.values().iter().zip(&diag).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if err > eps * dnorm {
            failures += 1;
        }
    }
    let rate = failures as f64 / cfg.trials.max(1) as f64;
    rep.push(
        "sample_complexity_psd",
        format!("empirical n={n} s={s} trials={} eps={eps}", cfg.trials),
        delta,
        rate,
        rate <= delta,
        format!("{failures} failures"),
    );

    // Output-layer Hessian diagonal is never negative.
    let mut rng = root.derive(3);
    let mut min_val = f64::INFINITY;
    for _ in 0..2000 {
        let c = 2 + rng.below(6);
        let d = 1 + rng.below(6);
        let draw = |rng: &mut RngStream, k: usize, sc: f64| -> Vec<f64> { (0..k).map(|_| sc * rng.standard_normal()).collect() };
        let u = draw(&mut rng, c, 1.0);
        let v = draw(&mut rng, d, 1.0);
        let x = draw(&mut rng, d, 2.0);
        let logits = draw(&mut rng, c, 3.0);
        min_val = min_val.min(lm_head_hessian_diag(&u, &v, &x, &logits)?);
    }
    rep.push("lm_head_nonneg", "2000 random draws".into(), 0.0, min_val, min_val >= 0.0, "minimum value");

    // Partial sums never exceed the infinite sum.
    let z2 = zeta(2.0)?;
    let h_big = harmonic(10_000, 2.0);
    rep.push("variance", "H_{10000,2} <= zeta(2)".into(), z2, h_big, h_big <= z2, "partial sum below zeta");
    Ok(rep)
}

fn toy_model_loss_bounds(rep: &mut BoundsReport, seed: u64, fault_scale: f64) -> Result<()> {
    let mut rng = RngStream::new(seed, streams::BOUNDS).derive(50);
    let data = make_dataset(&crate::model::DatasetSpec::blobs(3, 4, 48, 48), &mut rng)?;
    let mut model = MlpModel::random(&[4, 5, 3], crate::model::Activation::Tanh, 0, &mut rng)?;
    let opt = Sgd::new(0.2);
    let mut st = SgdState::default();
    for _ in 0..100 {
        let g = model.loss_and_grads(&data[0])?;
        opt.apply(&mut model, &g, &mut st);
    }
    let coords = SigmaCoords::all_active(&model);
    let sigma = coords.read(&model);
    let grad = coords.grad_fn(&model, &data);
    let g0 = grad(&sigma);
    let hess = dense_hessian(&grad, &sigma, crate::oracles::GRAD_STEP)?;
    let mut ok = true;
    let mut tight = (0.0, f64::INFINITY);
    for (k, &(l, i)) in coords.0.iter().enumerate() {
        let exact = exact_delta_loss(&model, &data, l, i)?.abs();
        let mut end = sigma.clone();
        end[k] = 0.0;
        let rho = 2.0 * segment_hessian_lipschitz(&grad, &sigma, &end, 8)?;
        let b = fault_scale * loss_change_bound(g0[k], hess[(k, k)], sigma[k], rho)?;
        ok &= le(exact, b);
        if b > 0.0 && exact / b > tight.0 / tight.1 {
            tight = (exact, b);
        }
    }
    rep.push(
        "loss_change",
        format!("toy mlp [4,5,3], {} coordinates, rho sampled x2", coords.len()),
        tight.1,
        tight.0,
        ok,
        "tightest coordinate",
    );
    Ok(())
}

pub fn cmd_bounds_check(ctx: &Context, fault_scale: f64) -> Result<BoundsReport> {
    let rep = bounds_suite(ctx.config.seed, &ctx.config.bounds, fault_scale)?;
    write_text(ctx.out("bounds_report.txt"), &rep.render())?;
    println!(
        "bounds-check: {} checks, {} failed",
        rep.checks.len(),
        rep.checks.iter().filter(|c| !c.passed).count()
    );
    Ok(rep)
}

pub fn cmd_spectrum(ctx: &Context, top_k: usize, checkpoint: Option<&Path>) -> Result<crate::spectra::BlockSpectrum> {
    let input = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| ctx.out("model.ckpt"));
    let model = load_checkpoint(&input)?;
    let data = ctx.dataset()?;
    let take = ctx.config.spectrum.batches.clamp(1, data.len().max(1));
    let spec = block_diag_sv_spectrum(&model, &data[..take.min(data.len())], top_k)?;
    write_spectrum_csv(&spec.rank_magnitude(), ctx.out("spectrum.csv"))?;
    let summary = match &spec.fit {
        Some(f) => format!(
            "lambda1_abs={:.12e} alpha={:.6} n={} floor={:.3e} alpha_above_half={} top_k={top_k} batches={take}\n",
            f.lambda1_abs, f.alpha, f.n, f.floor, f.alpha_above_half
        ),
        None => format!("insufficient spectrum above floor; top_k={top_k} batches={take}\n"),
    };
    write_text(ctx.out("spectrum_summary.txt"), &summary)?;
    print!("spectrum: {summary}");
    Ok(spec)
}
