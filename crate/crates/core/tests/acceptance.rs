//! Acceptance harness. Runs every criterion in order, prints one PASS/FAIL
//! line per criterion and exits non-zero if any failed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bsi::cli::main_with_args;
use bsi::importance::{run_compression, CompressionConfig, Policy};
use bsi::model::{make_dataset, Activation, Batch, DatasetSpec, MlpModel, Sgd, SgdState};
use bsi::numkit::{streams, Matrix, RngStream};
use bsi::oracles::{dense_hessian, exact_delta_loss, fd_model_grads, SigmaCoords, GRAD_STEP};
use bsi::persist::RunConfig;
use bsi::probe::{gradient_difference_diag, hutchinson_diag_matrix};
use bsi::spectra::{
    block_diag_sv_spectrum, lm_head_hessian_diag, loss_change_bound, loss_change_bound_rel,
    power_law_spectrum, random_orthogonal, sample_complexity, sample_complexity_psd,
    segment_hessian_lipschitz, synthetic_symmetric, variance_bound, DecoupledModels,
};

const SEED: u64 = 20_240_601;
const DEFAULT_CONFIG: &str = include_str!("../../../configs/blobs.toml");

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

type Check = fn(&Path) -> Outcome;

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Independent ζ(s): partial sum plus an Euler–Maclaurin tail.
fn zeta_ref(s: f64) -> f64 {
    let n = 1000.0_f64;
    let head: f64 = (1..1000).map(|k| (k as f64).powf(-s)).sum();
    head + n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s * n.powf(-s - 1.0) / 12.0
}

fn harmonic_ref(n: usize, s: f64) -> f64 {
    (1..=n).rev().map(|k| (k as f64).powf(-s)).sum()
}

fn random_symmetric(n: usize, rng: &mut RngStream) -> Matrix {
    let mut m = Matrix::from_fn(n, n, |_, _| rng.standard_normal());
    m = m.add(&m.transpose()).unwrap().scale(0.5);
    m
}

fn off_diag_sq(a: &Matrix, i: usize) -> f64 {
    (0..a.cols()).filter(|&j| j != i).map(|j| a[(i, j)] * a[(i, j)]).sum()
}

fn c1_diagonal_exactness(_: &Path) -> Outcome {
    let mut rng = RngStream::new(SEED, streams::BENCH);
    let mut worst: f64 = 0.0;
    for n in [1usize, 7, 64, 257] {
        let diag: Vec<f64> = (0..n).map(|_| rng.standard_normal() * 10.0).collect();
        let est = hutchinson_diag_matrix(&Matrix::from_diag(&diag), 1, &mut rng).unwrap();
        for (e, d) in est.values().iter().zip(&diag) {
            worst = worst.max(rel_err(*e, *d, f64::MIN_POSITIVE));
        }
    }
    Outcome::new(worst <= 1e-14, format!("max relative error {worst:.2e}"))
}

fn c2_variance_identity(_: &Path) -> Outcome {
    let mut rng = RngStream::new(SEED, streams::BENCH).derive(2);
    let trials = 10_000;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let a = random_symmetric(16, &mut rng);
        let mut sum = [0.0; 16];
        let mut sum_sq = [0.0; 16];
        for _ in 0..trials {
            let est = hutchinson_diag_matrix(&a, 1, &mut rng).unwrap();
            for (i, v) in est.values().iter().enumerate() {
                sum[i] += v;
                sum_sq[i] += v * v;
            }
        }
        for i in 0..16 {
            let mean = sum[i] / trials as f64;
            let var = (sum_sq[i] - trials as f64 * mean * mean) / (trials - 1) as f64;
            worst = worst.max(rel_err(var, off_diag_sq(&a, i), 0.0));
        }
    }
    Outcome::new(worst <= 0.10, format!("max per-entry relative deviation {worst:.4}"))
}

/// Per-coordinate sample variances of single-probe estimates over `trials`
/// probes. Each probe is drawn at the larger width and truncated for `a`,
/// so nested matrices share their probes.
fn shared_probe_variance(mats: &[&Matrix], width: usize, trials: usize, rng: &mut RngStream) -> Vec<f64> {
    let mut sums: Vec<(Vec<f64>, Vec<f64>)> = mats.iter().map(|m| (vec![0.0; m.rows()], vec![0.0; m.rows()])).collect();
    for _ in 0..trials {
        let z = bsi::numkit::rademacher(rng, width, None);
        for (m, (s, sq)) in mats.iter().zip(sums.iter_mut()) {
            let n = m.rows();
            let az = m.matvec(&z[..n]).unwrap();
            for i in 0..n {
                let v = z[i] * az[i];
                s[i] += v;
                sq[i] += v * v;
            }
        }
    }
    let t = trials as f64;
    sums.iter()
        .map(|(s, sq)| s.iter().zip(sq).map(|(a, b)| (b - a * a / t) / (t - 1.0)).sum())
        .collect()
}

fn c3_variance_bound(_: &Path) -> Outcome {
    let root = RngStream::new(SEED, streams::BENCH).derive(3);
    let mut ok = true;
    let mut notes = String::new();
    for (m, alpha) in [0.75, 1.0, 2.0].into_iter().enumerate() {
        // The wider matrix extends the narrow one block-diagonally with the
        // next 32 terms of the same spectrum.
        let small = synthetic_symmetric(&power_law_spectrum(32, alpha), &mut root.derive(m as u64)).unwrap();
        let tail_eigs: Vec<f64> = (33..=64).map(|k| (k as f64).powf(-alpha)).collect();
        let tail = synthetic_symmetric(&tail_eigs, &mut root.derive(100 + m as u64)).unwrap();
        let big = Matrix::from_fn(64, 64, |i, j| match (i < 32, j < 32) {
            (true, true) => small[(i, j)],
            (false, false) => tail[(i - 32, j - 32)],
            _ => 0.0,
        });
        let increment = harmonic_ref(64, 2.0 * alpha) - harmonic_ref(32, 2.0 * alpha);
        for s in [1usize, 4, 16, 64] {
            let b32 = variance_bound(1.0, alpha, s).unwrap();
            let b64 = variance_bound(1.0, alpha, s).unwrap();
            let oracle = zeta_ref(2.0 * alpha) / s as f64;
            // Averaging s probes divides the single-probe variance by s.
            let mut rng = root.derive(1000 + 10 * m as u64 + s as u64);
            let v = shared_probe_variance(&[&small, &big], 64, 20_000, &mut rng);
            let (v32, v64) = (v[0] / s as f64, v[1] / s as f64);
            let stable = b32.to_bits() == b64.to_bits() && (v64 - v32).abs() < increment / s as f64;
            let within = v32 <= b32 && v64 <= b64 && rel_err(b32, oracle, 0.0) < 1e-9;
            ok &= stable && within;
            let _ = write!(notes, "a={alpha},s={s}: {v64:.3e}<={b64:.3e}; ");
        }
    }
    Outcome::new(ok, notes.trim_end().to_string())
}

/// `f(x) = Σ sin(xᵢ) + exp(q·x)`, smooth and not quadratic.
struct SmoothFn {
    q: Vec<f64>,
}

impl SmoothFn {
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let e = x.iter().zip(&self.q).map(|(a, b)| a * b).sum::<f64>().exp();
        x.iter().zip(&self.q).map(|(xi, qi)| xi.cos() + qi * e).collect()
    }

    fn hess_diag(&self, x: &[f64]) -> Vec<f64> {
        let e = x.iter().zip(&self.q).map(|(a, b)| a * b).sum::<f64>().exp();
        x.iter().zip(&self.q).map(|(xi, qi)| -xi.sin() + qi * qi * e).collect()
    }
}

/// Single-probe estimate for one sign vector.
fn probe_value(f: &SmoothFn, x: &[f64], z: &[f64], eps: f64) -> Vec<f64> {
    let plus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + 0.5 * eps * b).collect();
    let minus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - 0.5 * eps * b).collect();
    let (gp, gm) = (f.grad(&plus), f.grad(&minus));
    (0..x.len()).map(|i| (gp[i] - gm[i]) * z[i] / eps).collect()
}

fn all_signs(n: usize) -> Vec<Vec<f64>> {
    (0..1usize << n)
        .map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect())
        .collect()
}

fn c4_estimator(dir: &Path) -> Outcome {
    let mut csv = String::from("part,case,index,estimate,reference\n");
    // (a) Quadratic loss: the estimate is exact per probe up to the
    // Hutchinson term, so the mean sits within the Monte-Carlo interval.
    let mut rng = RngStream::new(SEED, streams::PROBE).derive(4);
    let mut worst_z: f64 = 0.0;
    for case in 0..3 {
        let a = random_symmetric(12, &mut rng);
        let b: Vec<f64> = (0..12).map(|_| rng.standard_normal()).collect();
        let sigma: Vec<f64> = (0..12).map(|_| rng.standard_normal()).collect();
        let grad = |x: &[f64]| -> Vec<f64> { a.matvec(x).unwrap().iter().zip(&b).map(|(p, q)| p + q).collect() };
        let all: Vec<usize> = (0..12).collect();
        let s = 10_000;
        let est = gradient_difference_diag(grad, &sigma, &all, 1e-3, s, &mut rng).unwrap();
        for (i, v) in est.values().iter().enumerate() {
            let se = (off_diag_sq(&a, i) / s as f64).sqrt();
            worst_z = worst_z.max((v - a[(i, i)]).abs() / se);
            let _ = writeln!(csv, "quadratic,{case},{i},{v:.17e},{:.17e}", a[(i, i)]);
        }
    }
    let part_a = worst_z <= 4.5;

    // (b) Smooth non-quadratic function: exact expectation over all 2⁴ sign
    // vectors, so the bias carries no sampling noise.
    let f = SmoothFn {
        q: vec![0.4, -0.3, 0.25, 0.1],
    };
    let x = [0.3, -0.7, 1.1, 0.5];
    let truth = f.hess_diag(&x);
    let signs = all_signs(4);
    let bias = |eps: f64| -> f64 {
        let mut mean = [0.0; 4];
        for z in &signs {
            for (m, v) in mean.iter_mut().zip(probe_value(&f, &x, z, eps)) {
                *m += v / signs.len() as f64;
            }
        }
        mean.iter().zip(&truth).map(|(m, t)| (m - t) * (m - t)).sum::<f64>().sqrt()
    };
    let ratios: Vec<f64> = [0.4, 0.2, 0.1].iter().map(|&e| bias(e) / bias(e / 2.0)).collect();
    let part_b = ratios.iter().all(|r| (3.5..=4.5).contains(r));

    // The library estimator must produce exactly one of the enumerated values.
    let mut matches = true;
    let all: Vec<usize> = (0..4).collect();
    for t in 0..64 {
        let v = gradient_difference_diag(|p: &[f64]| f.grad(p), &x, &all, 0.1, 1, &mut rng).unwrap();
        matches &= signs.iter().any(|z| {
            probe_value(&f, &x, z, 0.1).iter().zip(v.values()).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
        });
        let _ = writeln!(csv, "smooth,{t},0,{:.17e},{:.17e}", v.values()[0], truth[0]);
    }
    for (k, r) in ratios.iter().enumerate() {
        let _ = writeln!(csv, "bias_ratio,{k},0,{r:.17e},4");
    }
    fs::write(dir.join("criterion4.csv"), csv).unwrap();
    Outcome::new(
        part_a && part_b && matches,
        format!("max |z| {worst_z:.2}; bias ratios {ratios:.3?}; library matches enumeration {matches}"),
    )
}

fn c5_gradients(_: &Path) -> Outcome {
    let archs: [(&[usize], Activation, usize); 3] = [
        (&[3, 4, 2], Activation::Tanh, 1),
        (&[5, 6, 6, 3], Activation::Gelu, 2),
        (&[4, 7, 5], Activation::Identity, 1),
    ];
    let mut worst: f64 = 0.0;
    for (k, (sizes, act, aux)) in archs.into_iter().enumerate() {
        let mut rng = RngStream::new(SEED + k as u64, streams::INIT);
        let mut model = MlpModel::random(sizes, act, aux, &mut rng).unwrap();
        // Move the auxiliary factors off their tiny init so their gradients matter.
        for l in 0..model.num_layers() {
            let layer = model.layer(l).clone();
            let au = Matrix::from_fn(layer.aux_u().rows(), layer.aux_u().cols(), |_, _| 0.5 * rng.standard_normal());
            let av = Matrix::from_fn(layer.aux_v().rows(), layer.aux_v().cols(), |_, _| 0.5 * rng.standard_normal());
            let rebuilt = bsi::model::BasisLinear::from_parts(
                layer.u().clone(),
                layer.v().clone(),
                layer.sigma().to_vec(),
                au,
                av,
                layer.active().to_vec(),
            )
            .unwrap();
            *model.layer_mut(l) = rebuilt;
        }
        let spec = DatasetSpec::blobs(*sizes.last().unwrap(), sizes[0], 20, 20);
        let batch = make_dataset(&spec, &mut rng).unwrap().remove(0);
        let exact = model.loss_and_grads(&batch).unwrap();
        let fd = fd_model_grads(&model, &batch, 1e-5).unwrap();
        for (a, b) in exact.sigma.iter().flatten().zip(fd.sigma.iter().flatten()) {
            worst = worst.max(rel_err(*a, *b, 1e-4));
        }
        for (ma, mb) in exact.aux_u.iter().chain(&exact.aux_v).zip(fd.aux_u.iter().chain(&fd.aux_v)) {
            for (a, b) in ma.as_slice().iter().zip(mb.as_slice()) {
                worst = worst.max(rel_err(*a, *b, 1e-4));
            }
        }
    }
    Outcome::new(worst <= 1e-4, format!("max relative error {worst:.2e} over sigma and aux factors"))
}

fn c6_importance_oracle(_: &Path) -> Outcome {
    let mut rng = RngStream::new(SEED, streams::PROBE).derive(6);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let n = 10;
        let h = random_symmetric(n, &mut rng);
        let g: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let c = rng.standard_normal();
        let f = |x: &[f64]| c + bsi::numkit::dot(&g, x) + 0.5 * bsi::numkit::dot(x, &h.matvec(x).unwrap());
        let sigma: Vec<f64> = (0..n).map(|_| 2.0 * rng.standard_normal()).collect();
        let grad: Vec<f64> = h.matvec(&sigma).unwrap().iter().zip(&g).map(|(a, b)| a + b).collect();
        for i in 0..n {
            let score = bsi::importance::importance_score(sigma[i], grad[i], h[(i, i)]);
            let exact = bsi::oracles::exact_delta_loss_fn(f, &sigma, i);
            worst = worst.max((score - exact).abs());
        }
    }
    Outcome::new(worst <= 1e-10, format!("max |I - exact change| {worst:.2e}"))
}

fn trained_toy(sizes: &[usize], seed: u64) -> (MlpModel, Vec<Batch>) {
    let mut rng = RngStream::new(seed, streams::INIT);
    let spec = DatasetSpec::blobs(*sizes.last().unwrap(), sizes[0], 48, 48);
    let data = make_dataset(&spec, &mut rng).unwrap();
    let mut model = MlpModel::random(sizes, Activation::Tanh, 0, &mut rng).unwrap();
    let opt = Sgd::new(0.2);
    let mut st = SgdState::default();
    for _ in 0..80 {
        let g = model.loss_and_grads(&data[0]).unwrap();
        opt.apply(&mut model, &g, &mut st);
    }
    (model, data)
}

fn c7_loss_change_soundness(_: &Path) -> Outcome {
    let mut ok = true;
    let mut violations = 0usize;
    let mut checked = 0usize;
    // Cubics meet the bound with equality, so allow rounding in the last bits.
    let le = |a: f64, b: f64| a <= b * (1.0 + 1e-12) + 1e-15;
    let mut check = |exact: f64, g: f64, h: f64, s: f64, rho: f64| {
        let base = loss_change_bound(g, h, s, rho).unwrap();
        let mut good = le(exact, base);
        for eps_rel in [0.1, 0.5] {
            for h_hat in [h * (1.0 + eps_rel), h * (1.0 - eps_rel), h * (1.0 + 0.3 * eps_rel)] {
                let b = loss_change_bound_rel(g, h_hat, s, rho, eps_rel).unwrap();
                good &= le(exact, b) && le(base, b);
            }
        }
        checked += 1;
        if !good {
            violations += 1;
        }
        good
    };
    // Cubics a·x³ + b·x² + c·x have a constant ρ = 6|a|.
    for a in [-1.5, -0.2, 0.0, 0.7, 2.0] {
        for b in [-1.0, 0.0, 0.5] {
            for c in [-0.5, 0.0, 1.0] {
                let f = |x: f64| a * x * x * x + b * x * x + c * x;
                for k in -8..=8 {
                    let s = k as f64 * 0.375;
                    let exact = (f(0.0) - f(s)).abs();
                    ok &= check(exact, 3.0 * a * s * s + 2.0 * b * s + c, 6.0 * a * s + 2.0 * b, s, 6.0 * a.abs());
                }
            }
        }
    }
    for (k, sizes) in [&[4usize, 5, 3][..], &[3, 6, 2], &[5, 4, 4, 3]].into_iter().enumerate() {
        let (model, data) = trained_toy(sizes, SEED + 70 + k as u64);
        let coords = SigmaCoords::all_active(&model);
        let sigma = coords.read(&model);
        let grad = coords.grad_fn(&model, &data);
        let g0 = grad(&sigma);
        let hess = dense_hessian(&grad, &sigma, GRAD_STEP).unwrap();
        for (j, &(l, i)) in coords.0.iter().enumerate() {
            let exact = exact_delta_loss(&model, &data, l, i).unwrap().abs();
            let mut end = sigma.clone();
            end[j] = 0.0;
            let rho = 2.0 * segment_hessian_lipschitz(&grad, &sigma, &end, 8).unwrap();
            ok &= check(exact, g0[j], hess[(j, j)], sigma[j], rho);
        }
    }
    Outcome::new(ok, format!("{checked} pruned coordinates, {violations} violations"))
}

fn c8_sample_complexity(dir: &Path) -> Outcome {
    let (n, alpha, eps, delta) = (10usize, 1.0, 0.5, 0.1);
    let psd = sample_complexity_psd(n, alpha, eps, delta).unwrap();
    let psd_ref = 2.0 * (n as f64 * zeta_ref(2.0 * alpha) - 1.0) * (2.0 * n as f64 / delta).ln() / (eps * eps);
    let trace = harmonic_ref(n, 1.0);
    let sc = sample_complexity(1.0, alpha, n, trace, eps, delta).unwrap();
    let sc_ref = 2.0 * (harmonic_ref(n, 2.0) / (trace * trace / n as f64) - 1.0) * (2.0 * n as f64 / delta).ln() / (eps * eps);
    let formulas = rel_err(psd, psd_ref, 0.0) < 1e-9
        && (psd - 654.8).abs() < 0.1
        && rel_err(sc, sc_ref, 0.0) < 1e-9
        && (sc - 34.19).abs() < 0.01;

    let mut rng = RngStream::new(SEED, streams::BOUNDS).derive(8);
    let q = random_orthogonal(n, &mut rng).unwrap();
    let eigs = power_law_spectrum(n, 1.0);
    let h = Matrix::from_fn(n, n, |i, j| (0..n).map(|k| q[(i, k)] * eigs[k] * q[(j, k)]).sum());
    let diag = h.diagonal();
    let dnorm = bsi::numkit::norm2(&diag);
    let s = psd.ceil() as usize;
    let trials = 1000;
    let mut failures = 0;
    let mut csv = String::from("trial,relative_error,failed\n");
    for t in 0..trials {
        let est = hutchinson_diag_matrix(&h, s, &mut rng).unwrap();
        let err: Vec<f64> = est.values().iter().zip(&diag).map(|(a, b)| a - b).collect();
        let rel = bsi::numkit::norm2(&err) / dnorm;
        let failed = rel > eps;
        failures += failed as usize;
        let _ = writeln!(csv, "{t},{rel:.17e},{}", failed as u8);
    }
    fs::write(dir.join("criterion8.csv"), csv).unwrap();
    let rate = failures as f64 / trials as f64;
    Outcome::new(
        formulas && rate <= delta,
        format!("psd bound {psd:.3} (ref {psd_ref:.3}), general {sc:.3}; failure rate {rate:.3} at s={s}"),
    )
}

fn c9_lm_head(_: &Path) -> Outcome {
    let mut rng = RngStream::new(SEED, streams::BOUNDS).derive(9);
    let draw = |k: usize, sc: f64, rng: &mut RngStream| -> Vec<f64> { (0..k).map(|_| sc * rng.standard_normal()).collect() };
    let mut min_val = f64::INFINITY;
    let mut worst: f64 = 0.0;
    for t in 0..10_000 {
        let c = 2 + rng.below(8);
        let d = 1 + rng.below(8);
        let u = draw(c, 1.0, &mut rng);
        let v = draw(d, 1.0, &mut rng);
        let x = draw(d, 1.0, &mut rng);
        let logits = draw(c, 2.0, &mut rng);
        let h = lm_head_hessian_diag(&u, &v, &x, &logits).unwrap();
        min_val = min_val.min(h);
        if t < 100 {
            // ℓ(t) is cross-entropy of logits + t·u·(vᵀx); its derivative is
            // (p − e_y)ᵀu·(vᵀx), differenced centrally here.
            let vx = bsi::numkit::dot(&v, &x);
            let y = t % c;
            let dl = |step: f64| -> f64 {
                let z: Vec<f64> = logits.iter().zip(&u).map(|(l, ui)| l + step * ui * vx).collect();
                let p = bsi::model::softmax(&z);
                (p.iter().zip(&u).map(|(pi, ui)| pi * ui).sum::<f64>() - u[y]) * vx
            };
            let step = 1e-5;
            let fd = (dl(step) - dl(-step)) / (2.0 * step);
            worst = worst.max(rel_err(h, fd, 1e-12));
        }
    }
    Outcome::new(
        min_val >= 0.0 && worst <= 1e-6,
        format!("min over 1e4 draws {min_val:.3e}; max relative FD error {worst:.2e}"),
    )
}

/// Symmetric eigenvalues by nalgebra, sorted ascending.
fn nalgebra_eigs(h: &Matrix) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_row_slice(h.rows(), h.cols(), h.as_slice());
    let mut v: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

fn c10_spectrum(_: &Path) -> Outcome {
    // (a) The shipped default configuration at its own seed.
    let cfg = RunConfig::parse(DEFAULT_CONFIG, &[]).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap().to_string();
    assert_eq!(main_with_args(["bsi", "--out", &out, "--no-timing", "train"]), 0);
    let model = bsi::persist::load_checkpoint(tmp.path().join("model.ckpt")).unwrap();
    let data = make_dataset(&cfg.dataset, &mut RngStream::new(cfg.seed, streams::DATASET)).unwrap();
    let spec = block_diag_sv_spectrum(&model, &data[..cfg.spectrum.batches], cfg.spectrum.top_k).unwrap();
    let monotone = spec.magnitudes.windows(2).all(|w| w[0] >= w[1]);
    let (alpha, above) = spec.fit.as_ref().map_or((f64::NAN, false), |f| (f.alpha, f.alpha > 0.5));

    // (b) Decoupled layers: the summed loss has an exactly block-diagonal Hessian.
    let parts = (0..3)
        .map(|k| trained_toy(&[[3usize, 4, 2], [4, 3, 3], [2, 5, 2]][k], SEED + 100 + k as u64))
        .collect();
    let dm = DecoupledModels { parts };
    let full = dm.full_hessian().unwrap();
    let mut merged: Vec<f64> = dm.block_spectrum().unwrap().blocks.into_iter().flatten().collect();
    merged.sort_by(f64::total_cmp);
    let dense = nalgebra_eigs(&full);
    let diff = merged.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let part_b = merged.len() == dense.len() && diff < 1e-8;

    Outcome::new(
        monotone && above && part_b,
        format!(
            "default config seed {}: monotone {monotone}, alpha {alpha:.4} (> 1/2: {above}); \
             decoupled set difference {diff:.2e} over {} eigenvalues",
            cfg.seed,
            dense.len()
        ),
    )
}

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["bsi"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn c11_pipeline(dir: &Path) -> Outcome {
    // Library-level checks on the default configuration.
    let cfg = RunConfig::parse(DEFAULT_CONFIG, &[]).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path().to_str().unwrap().to_string();
    assert_eq!(cli(&["--out", &base, "--no-timing", "train"]), 0);
    let mut model = bsi::persist::load_checkpoint(tmp.path().join("model.ckpt")).unwrap();
    let data = make_dataset(&cfg.dataset, &mut RngStream::new(cfg.seed, streams::DATASET)).unwrap();
    let ccfg = CompressionConfig {
        schedule: cfg.schedule.clone(),
        policy: Policy::Bsi,
        probe: cfg.probe.clone(),
        optimizer: Sgd {
            learning_rate: cfg.compress.learning_rate,
            momentum: cfg.compress.momentum,
        },
        seed: cfg.seed,
    };
    let report = run_compression(&mut model, &data, &ccfg).unwrap();
    let t = cfg.schedule.pruning_rounds;
    let target = 0.25_f64.powf(1.0 / t as f64);
    let ratio_ok = cfg.schedule.keep_ratio == 0.25 && (report.keep_ratio_per_pruning - target).abs() < 1e-15;
    let mass_ok = report.rounds.iter().skip(1).all(|r| {
        r.kept_mass
            .iter()
            .all(|&(kept, pos)| pos <= 0.0 || kept >= target * pos * (1.0 - 1e-12))
    });
    let counts: Vec<usize> = report.rounds.iter().map(|r| r.active_bases_total).collect();
    let decreasing = counts.len() == t + 1 && counts.windows(2).all(|w| w[1] < w[0]);
    let expected_probes = t * cfg.schedule.num_profiling_iter();
    let restored = report.probes_verified == expected_probes;

    // CLI runs over ten seeds for the directional comparison; the seed-1
    // metrics feed the determinism check.
    let methods = ["bsi", "gradient-only", "magnitude"];
    let mut table = String::from("seed,method,final_accuracy,active_bases\n");
    let mut means = [0.0; 3];
    for seed in 1..=10u64 {
        let out = dir.join(format!("seed{seed}"));
        let o = out.to_str().unwrap();
        let s = seed.to_string();
        assert_eq!(cli(&["--out", o, "--seed", &s, "--no-timing", "train"]), 0);
        for (k, m) in methods.iter().enumerate() {
            assert_eq!(cli(&["--out", o, "--seed", &s, "--no-timing", "compress", "--method", m]), 0);
            let log = bsi::persist::read_metrics(out.join(format!("compress-{m}.csv"))).unwrap();
            let last = log.last().unwrap();
            means[k] += last.accuracy / 10.0;
            let _ = writeln!(table, "{seed},{m},{:.6},{}", last.accuracy, last.active_bases_total);
        }
    }
    fs::write(dir.join("criterion11_seeds.csv"), &table).unwrap();
    println!("criterion 11 per-seed final accuracies:\n{table}");
    let ordering = means[0] >= means[1] && means[1] >= means[2];
    Outcome::new(
        ratio_ok && mass_ok && decreasing && restored,
        format!(
            "per-round ratio {:.6}, active bases {counts:?}, {} probes restored bit-exactly; \
             mean accuracy bsi {:.4} gradient-only {:.4} magnitude {:.4} (ordering holds: {ordering}, not gated)",
            report.keep_ratio_per_pruning, report.probes_verified, means[0], means[1], means[2]
        ),
    )
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(csv_files(&p));
        } else if p.extension().is_some_and(|e| e == "csv") {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn c12_determinism(first: &Path) -> Outcome {
    let second = tempfile::tempdir().unwrap();
    c4_estimator(second.path());
    c8_sample_complexity(second.path());
    c11_pipeline(second.path());
    let a = csv_files(first);
    let b = csv_files(second.path());
    let mut same = a.len() == b.len() && !a.is_empty();
    for (pa, pb) in a.iter().zip(&b) {
        same &= pa.strip_prefix(first).unwrap() == pb.strip_prefix(second.path()).unwrap();
        same &= fs::read(pa).unwrap() == fs::read(pb).unwrap();
    }
    Outcome::new(same, format!("{} CSV files compared byte-for-byte", a.len()))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let criteria: [(&str, Check, Duration); 12] = [
        ("diagonal exactness", c1_diagonal_exactness, Duration::from_secs(1)),
        ("variance identity", c2_variance_identity, Duration::from_secs(30)),
        ("dimension-free variance bound", c3_variance_bound, Duration::from_secs(60)),
        ("gradient-difference estimator", c4_estimator, Duration::from_secs(30)),
        ("gradient correctness", c5_gradients, Duration::from_secs(10)),
        ("importance oracle", c6_importance_oracle, Duration::from_secs(5)),
        ("loss-change bound soundness", c7_loss_change_soundness, Duration::from_secs(30)),
        ("sample complexity", c8_sample_complexity, Duration::from_secs(300)),
        ("output-layer curvature", c9_lm_head, Duration::from_secs(30)),
        ("block-diagonal spectrum", c10_spectrum, Duration::from_secs(120)),
        ("end-to-end pipeline", c11_pipeline, Duration::from_secs(600)),
        ("determinism", c12_determinism, Duration::from_secs(900)),
    ];
    let mut failed = 0;
    for (k, (name, check, limit)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let outcome = check(dir.path());
        let elapsed = started.elapsed();
        let passed = outcome.passed && elapsed <= limit;
        failed += !passed as usize;
        println!(
            "criterion {:>2} {name}: {} ({:.2}s / {}s) {}",
            k + 1,
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            outcome.detail
        );
    }
    println!("acceptance: {} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
