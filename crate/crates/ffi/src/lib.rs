//! C ABI over the core library.
//!
//! Every fallible function returns a [`BsiStatus`] and writes results
//! through out-pointers. On failure a message is kept per thread and can be
//! read with [`bsi_last_error_message`]. Models cross the boundary as
//! opaque [`BsiModel`] handles that must be released with
//! [`bsi_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bsi::model::{Activation, MlpModel};
use bsi::numkit::{Matrix, RngStream};
use bsi::persist::{load_checkpoint, save_checkpoint};
use bsi::BsiError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    NumericalFailure = 3,
    DomainError = 4,
    Io = 5,
    CorruptCheckpoint = 6,
    UnsupportedVersion = 7,
    InvalidConfig = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Opaque model handle.
pub struct BsiModel {
    inner: MlpModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &BsiError) -> BsiStatus {
    match e {
        BsiError::InvalidInput(_) => BsiStatus::InvalidInput,
        BsiError::NumericalFailure { .. } | BsiError::PerturbationTooLarge { .. } => BsiStatus::NumericalFailure,
        BsiError::DomainError(_) | BsiError::InsufficientSpectrum(_) => BsiStatus::DomainError,
        BsiError::InvalidConfig(_) => BsiStatus::InvalidConfig,
        BsiError::CorruptHeader(_) | BsiError::TruncatedPayload { .. } => BsiStatus::CorruptCheckpoint,
        BsiError::UnsupportedVersion { .. } => BsiStatus::UnsupportedVersion,
        BsiError::Io { .. } | BsiError::Csv { .. } => BsiStatus::Io,
    }
}

struct Fail(BsiStatus, String);

impl From<BsiError> for Fail {
    fn from(e: BsiError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(BsiStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BsiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BsiStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BsiStatus::Panic
        }
    }
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `out` is valid for writes when non-null.
    unsafe { out.write(value) };
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees `len` writable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

unsafe fn path_arg(p: *const c_char) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    // SAFETY: caller passes a NUL-terminated string.
    let s = unsafe { CStr::from_ptr(p) };
    s.to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(BsiStatus::InvalidInput, "path is not valid UTF-8".into()))
}

unsafe fn model_ref<'a>(m: *const BsiModel) -> Result<&'a MlpModel, Fail> {
    if m.is_null() {
        return Err(null("model"));
    }
    // SAFETY: non-null handles come from this library and are live.
    Ok(unsafe { &(*m).inner })
}

unsafe fn model_mut<'a>(m: *mut BsiModel) -> Result<&'a mut MlpModel, Fail> {
    if m.is_null() {
        return Err(null("model"));
    }
    // SAFETY: as above, and the caller does not share the handle across threads.
    Ok(unsafe { &mut (*m).inner })
}

/// Length in bytes of the calling thread's last error message, excluding
/// the terminating NUL.
#[no_mangle]
pub extern "C" fn bsi_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `cap − 1` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be valid for `cap` bytes or null with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn bsi_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            // SAFETY: `buf` holds `cap` bytes and `n < cap`.
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Random basis-form model. `activation`: 0 tanh, 1 gelu, 2 identity.
///
/// # Safety
/// `layer_sizes` must hold `num_sizes` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_model_random(
    layer_sizes: *const usize,
    num_sizes: usize,
    activation: u32,
    aux_rank: usize,
    seed: u64,
    out: *mut *mut BsiModel,
) -> BsiStatus {
    guard(|| {
        if layer_sizes.is_null() {
            return Err(null("layer_sizes"));
        }
        // SAFETY: caller guarantees `num_sizes` readable values.
        let sizes = unsafe { std::slice::from_raw_parts(layer_sizes, num_sizes) };
        let act = match activation {
            0 => Activation::Tanh,
            1 => Activation::Gelu,
            2 => Activation::Identity,
            other => return Err(Fail(BsiStatus::InvalidInput, format!("unknown activation {other}"))),
        };
        let model = MlpModel::random(sizes, act, aux_rank, &mut RngStream::new(seed, bsi::numkit::streams::INIT))?;
        unsafe { write_out(out, Box::into_raw(Box::new(BsiModel { inner: model })), "out") }
    })
}

/// Loads a checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_model_load(path: *const c_char, out: *mut *mut BsiModel) -> BsiStatus {
    guard(|| {
        let p = unsafe { path_arg(path)? };
        let model = load_checkpoint(p)?;
        unsafe { write_out(out, Box::into_raw(Box::new(BsiModel { inner: model })), "out") }
    })
}

/// Saves a checkpoint without a recorded seed.
///
/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bsi_model_save(model: *const BsiModel, path: *const c_char) -> BsiStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        let p = unsafe { path_arg(path)? };
        save_checkpoint(m, None, p)?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bsi_model_free(model: *mut BsiModel) {
    if !model.is_null() {
        // SAFETY: handle was created by Box::into_raw in this library.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// # Safety
/// `model` live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_model_num_layers(model: *const BsiModel, out: *mut usize) -> BsiStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        unsafe { write_out(out, m.num_layers(), "out") }
    })
}

/// Trainable parameter count of the basis form (active bases plus
/// auxiliary factors).
///
/// # Safety
/// `model` live, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_model_param_count(model: *const BsiModel, out: *mut usize) -> BsiStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        unsafe { write_out(out, m.param_count(), "out") }
    })
}

/// Shape and rank of one layer. Any out-pointer may be null to skip it.
///
/// # Safety
/// `model` live; non-null outs writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_model_layer_dims(
    model: *const BsiModel,
    layer: usize,
    out_dim: *mut usize,
    in_dim: *mut usize,
    rank: *mut usize,
    active: *mut usize,
) -> BsiStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        let l = m
            .layers()
            .get(layer)
            .ok_or_else(|| Fail(BsiStatus::InvalidInput, format!("layer {layer} out of range")))?;
        for (p, v) in [(out_dim, l.out_dim()), (in_dim, l.in_dim()), (rank, l.rank()), (active, l.active_count())] {
            if !p.is_null() {
                // SAFETY: non-null outs are writable by contract.
                unsafe { p.write(v) };
            }
        }
        Ok(())
    })
}

/// Copies the singular values of `layer` (pruned entries are 0).
///
/// # Safety
/// `model` live; `out` holds `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn bsi_model_sigma(model: *const BsiModel, layer: usize, out: *mut f64, cap: usize) -> BsiStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        let l = m
            .layers()
            .get(layer)
            .ok_or_else(|| Fail(BsiStatus::InvalidInput, format!("layer {layer} out of range")))?;
        if cap < l.rank() {
            return Err(Fail(BsiStatus::BufferTooSmall, format!("need {} values, buffer holds {cap}", l.rank())));
        }
        unsafe { slice_mut(out, l.rank(), "out")? }.copy_from_slice(l.sigma());
        Ok(())
    })
}

/// Prunes bases of one layer.
///
/// # Safety
/// `model` live and not shared; `indices` holds `count` values.
#[no_mangle]
pub unsafe extern "C" fn bsi_model_prune(
    model: *mut BsiModel,
    layer: usize,
    indices: *const usize,
    count: usize,
) -> BsiStatus {
    guard(|| {
        let m = unsafe { model_mut(model)? };
        if layer >= m.num_layers() {
            return Err(Fail(BsiStatus::InvalidInput, format!("layer {layer} out of range")));
        }
        let idx: &[usize] = if count == 0 {
            &[]
        } else if indices.is_null() {
            return Err(null("indices"));
        } else {
            // SAFETY: caller guarantees `count` readable values.
            unsafe { std::slice::from_raw_parts(indices, count) }
        };
        m.layer_mut(layer).prune(idx)?;
        Ok(())
    })
}

/// Logits for `rows` inputs stored row-major (`rows × cols`). `out` must
/// hold `rows × output_dim` doubles.
///
/// # Safety
/// Buffers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn bsi_model_forward(
    model: *const BsiModel,
    inputs: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    out_len: usize,
) -> BsiStatus {
    guard(|| {
        let m = unsafe { model_ref(model)? };
        let x = unsafe { slice(inputs, rows * cols, "inputs")? };
        let need = rows * m.output_dim();
        if out_len < need {
            return Err(Fail(BsiStatus::BufferTooSmall, format!("need {need} values, buffer holds {out_len}")));
        }
        let fwd = m.forward(&Matrix::new(rows, cols, x.to_vec())?)?;
        unsafe { slice_mut(out, need, "out")? }.copy_from_slice(fwd.logits.as_slice());
        Ok(())
    })
}

/// Rademacher diagonal estimate of a row-major `n × n` matrix with `s`
/// probes drawn from `seed`.
///
/// # Safety
/// `matrix` holds `n²` doubles; `out` holds `n`.
#[no_mangle]
pub unsafe extern "C" fn bsi_hutchinson_diag(matrix: *const f64, n: usize, s: usize, seed: u64, out: *mut f64) -> BsiStatus {
    guard(|| {
        let a = Matrix::new(n, n, unsafe { slice(matrix, n * n, "matrix")? }.to_vec())?;
        let est = bsi::probe::hutchinson_diag_matrix(&a, s, &mut RngStream::new(seed, bsi::numkit::streams::BENCH))?;
        unsafe { slice_mut(out, n, "out")? }.copy_from_slice(est.values());
        Ok(())
    })
}

/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_choose_epsilon(
    sigma_max: f64,
    fraction_bits: u32,
    rel_tol: f64,
    eps_max: f64,
    out: *mut f64,
) -> BsiStatus {
    guard(|| {
        let v = bsi::probe::choose_epsilon(sigma_max, fraction_bits, rel_tol, eps_max)?;
        unsafe { write_out(out, v, "out") }
    })
}

/// `−σ·g + ½σ²·h`.
#[no_mangle]
pub extern "C" fn bsi_importance_score(sigma: f64, grad_mean: f64, hess_mean: f64) -> f64 {
    bsi::importance::importance_score(sigma, grad_mean, hess_mean)
}

#[no_mangle]
pub extern "C" fn bsi_harmonic(n: usize, s: f64) -> f64 {
    bsi::spectra::harmonic(n, s)
}

/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_zeta(s: f64, out: *mut f64) -> BsiStatus {
    guard(|| unsafe { write_out(out, bsi::spectra::zeta(s)?, "out") })
}

/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_variance_bound(lambda1_abs: f64, alpha: f64, s: usize, out: *mut f64) -> BsiStatus {
    guard(|| unsafe { write_out(out, bsi::spectra::variance_bound(lambda1_abs, alpha, s)?, "out") })
}

/// Raw (unclamped) probe-count requirement for a relative approximation.
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_sample_complexity(
    lambda1_abs: f64,
    alpha: f64,
    n: usize,
    trace: f64,
    eps: f64,
    delta: f64,
    out: *mut f64,
) -> BsiStatus {
    guard(|| unsafe {
        write_out(out, bsi::spectra::sample_complexity(lambda1_abs, alpha, n, trace, eps, delta)?, "out")
    })
}

/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_sample_complexity_psd(n: usize, alpha: f64, eps: f64, delta: f64, out: *mut f64) -> BsiStatus {
    guard(|| unsafe { write_out(out, bsi::spectra::sample_complexity_psd(n, alpha, eps, delta)?, "out") })
}

/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_loss_change_bound(g: f64, h: f64, s: f64, rho: f64, out: *mut f64) -> BsiStatus {
    guard(|| unsafe { write_out(out, bsi::spectra::loss_change_bound(g, h, s, rho)?, "out") })
}

/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_loss_change_bound_rel(
    g: f64,
    h_hat: f64,
    s: f64,
    rho: f64,
    eps_rel: f64,
    out: *mut f64,
) -> BsiStatus {
    guard(|| unsafe { write_out(out, bsi::spectra::loss_change_bound_rel(g, h_hat, s, rho, eps_rel)?, "out") })
}

/// Closed-form output-layer Hessian diagonal entry. `u` and `logits` have
/// `classes` entries; `v` and `x` have `dim`.
///
/// # Safety
/// Buffers valid for the stated lengths; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsi_lm_head_hessian_diag(
    u: *const f64,
    logits: *const f64,
    classes: usize,
    v: *const f64,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> BsiStatus {
    guard(|| unsafe {
        let val = bsi::spectra::lm_head_hessian_diag(
            slice(u, classes, "u")?,
            slice(v, dim, "v")?,
            slice(x, dim, "x")?,
            slice(logits, classes, "logits")?,
        )?;
        write_out(out, val, "out")
    })
}
