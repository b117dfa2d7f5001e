//! C ABI over the alp-eval toolkit.
//!
//! Models and datasets are opaque heap handles created by `alp_*_init`,
//! `alp_model_load` or `alp_dataset_*` and released with the matching
//! `*_free`. Every fallible call returns an [`AlpStatus`]; on failure the
//! message is available from [`alp_last_error_message`] on the same thread.
//! Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::slice;

use alp_eval::{
    checkpoint, clean_accuracy, gen_gaussian_blobs, gen_two_spirals, init_params, pgd,
    AttackConfig, AttackMode, Dataset, Error, Example, ModelSpec, Parameters,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    /// Malformed or mismatching file contents.
    Format = 5,
    Panic = 6,
}

/// Opaque model handle.
pub struct AlpModel {
    params: Parameters,
}

/// Opaque dataset handle.
pub struct AlpDataset {
    data: Dataset,
}

/// Summary of one PGD attack.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AlpAttackOutcome {
    pub success: bool,
    pub steps_taken: usize,
    /// -1 when the attack never succeeded.
    pub first_success_step: i64,
    pub final_objective: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(AlpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => AlpStatus::Io,
            Error::DimensionMismatch { .. } => AlpStatus::DimensionMismatch,
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::CountMismatch { .. }
            | Error::Checkpoint(_)
            | Error::SpecMismatch { .. }
            | Error::Json(_) => AlpStatus::Format,
            _ => AlpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AlpStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(AlpStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AlpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            AlpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            AlpStatus::Panic
        }
    }
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(m: *const AlpModel) -> Result<&'a Parameters, Failure> {
    m.as_ref().map(|m| &m.params).ok_or_else(|| null("model"))
}

unsafe fn dataset_ref<'a>(d: *const AlpDataset) -> Result<&'a Dataset, Failure> {
    d.as_ref().map(|d| &d.data).ok_or_else(|| null("dataset"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn check_len(expected: usize, actual: usize) -> Result<(), Failure> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual }.into());
    }
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn alp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn alp_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Fresh ReLU network with `n_hidden` hidden layers of the given widths.
#[no_mangle]
pub unsafe extern "C" fn alp_model_init(
    input_dim: usize,
    hidden_widths: *const usize,
    n_hidden: usize,
    num_classes: usize,
    seed: u64,
    out: *mut *mut AlpModel,
) -> AlpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let widths = in_slice(hidden_widths, n_hidden, "hidden_widths")?;
        let spec = ModelSpec::new(input_dim, widths, num_classes)?;
        let params = init_params(&spec, seed)?;
        out.write(Box::into_raw(Box::new(AlpModel { params })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn alp_model_load(path: *const c_char, out: *mut *mut AlpModel) -> AlpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = checkpoint::load_checkpoint(&path_arg(path)?)?;
        out.write(Box::into_raw(Box::new(AlpModel { params })));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn alp_model_save(model: *const AlpModel, path: *const c_char) -> AlpStatus {
    guard(|| {
        let params = model_ref(model)?;
        checkpoint::save_checkpoint(params, &path_arg(path)?)?;
        Ok(())
    })
}

/// Releases a model; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn alp_model_free(model: *mut AlpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input dimension, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn alp_model_input_dim(model: *const AlpModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.input_dim())
}

/// Number of classes, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn alp_model_num_classes(model: *const AlpModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.num_classes())
}

/// Writes the `num_classes` logits of input `x` to `logits_out`.
#[no_mangle]
pub unsafe extern "C" fn alp_model_forward(
    model: *const AlpModel,
    x: *const f64,
    x_len: usize,
    logits_out: *mut f64,
    logits_len: usize,
) -> AlpStatus {
    guard(|| {
        let params = model_ref(model)?;
        let x = in_slice(x, x_len, "x")?;
        check_len(params.num_classes(), logits_len)?;
        let logits = params.logits(x)?;
        out_slice(logits_out, logits_len, "logits_out")?.copy_from_slice(&logits);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn alp_model_predict(
    model: *const AlpModel,
    x: *const f64,
    x_len: usize,
    label_out: *mut usize,
) -> AlpStatus {
    guard(|| {
        let params = model_ref(model)?;
        let label = params.predict_slice(in_slice(x, x_len, "x")?)?;
        put(label_out, label, "label_out")
    })
}

/// Cross-entropy of `x` against `label`.
#[no_mangle]
pub unsafe extern "C" fn alp_model_loss(
    model: *const AlpModel,
    x: *const f64,
    x_len: usize,
    label: usize,
    loss_out: *mut f64,
) -> AlpStatus {
    guard(|| {
        let params = model_ref(model)?;
        let loss = params.loss_at(in_slice(x, x_len, "x")?, label)?;
        put(loss_out, loss, "loss_out")
    })
}

/// Gradient of the cross-entropy against `label` with respect to `x`.
#[no_mangle]
pub unsafe extern "C" fn alp_model_grad_input(
    model: *const AlpModel,
    x: *const f64,
    x_len: usize,
    label: usize,
    grad_out: *mut f64,
    grad_len: usize,
) -> AlpStatus {
    guard(|| {
        let params = model_ref(model)?;
        check_len(x_len, grad_len)?;
        let (_, g) = params.loss_and_input_grad(in_slice(x, x_len, "x")?, label)?;
        out_slice(grad_out, grad_len, "grad_out")?.copy_from_slice(&g);
        Ok(())
    })
}

/// L∞ PGD from `x` (entries in `[0, 1]`) with true class `label`.
///
/// `target < 0` runs the untargeted attack; otherwise the attack pushes
/// towards class `target`. Step size `alpha <= 0` selects `epsilon / 10`.
/// Early stopping uses the library defaults.
#[no_mangle]
pub unsafe extern "C" fn alp_pgd(
    model: *const AlpModel,
    x: *const f64,
    x_len: usize,
    label: usize,
    target: i64,
    epsilon: f64,
    alpha: f64,
    max_steps: usize,
    seed: u64,
    x_adv_out: *mut f64,
    outcome_out: *mut AlpAttackOutcome,
) -> AlpStatus {
    guard(|| {
        let params = model_ref(model)?;
        let ex = Example::from_vec(in_slice(x, x_len, "x")?.to_vec(), label)?;
        let mode = if target < 0 {
            AttackMode::Untargeted
        } else {
            AttackMode::Targeted {
                target: target as usize,
            }
        };
        let mut cfg = AttackConfig::with_epsilon(epsilon);
        if alpha > 0.0 {
            cfg.alpha = alpha;
        }
        cfg.max_steps = max_steps;
        cfg.seed = seed;
        let r = pgd(params, &ex, mode, &cfg)?;
        out_slice(x_adv_out, x_len, "x_adv_out")?.copy_from_slice(r.x_adv.data());
        put(
            outcome_out,
            AlpAttackOutcome {
                success: r.success,
                steps_taken: r.steps_taken,
                first_success_step: r.first_success_step.map_or(-1, |s| s as i64),
                final_objective: r.final_objective,
            },
            "outcome_out",
        )
    })
}

fn boxed(data: Dataset) -> *mut AlpDataset {
    Box::into_raw(Box::new(AlpDataset { data }))
}

#[no_mangle]
pub unsafe extern "C" fn alp_dataset_blobs(
    n_per_class: usize,
    dim: usize,
    num_classes: usize,
    spread: f64,
    seed: u64,
    out: *mut *mut AlpDataset,
) -> AlpStatus {
    guard(|| {
        let ds = gen_gaussian_blobs(n_per_class, dim, num_classes, spread, seed)?;
        put(out, boxed(ds), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn alp_dataset_spirals(
    n_per_class: usize,
    noise: f64,
    seed: u64,
    out: *mut *mut AlpDataset,
) -> AlpStatus {
    guard(|| {
        let ds = gen_two_spirals(n_per_class, noise, seed)?;
        put(out, boxed(ds), "out")
    })
}

/// Number of examples, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn alp_dataset_len(ds: *const AlpDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.data.len())
}

#[no_mangle]
pub unsafe extern "C" fn alp_dataset_input_dim(ds: *const AlpDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.data.input_dim())
}

/// Copies example `index` into `x_out` (length `input_dim`) and `label_out`.
#[no_mangle]
pub unsafe extern "C" fn alp_dataset_get(
    ds: *const AlpDataset,
    index: usize,
    x_out: *mut f64,
    x_len: usize,
    label_out: *mut usize,
) -> AlpStatus {
    guard(|| {
        let data = dataset_ref(ds)?;
        let ex = data.examples.get(index).ok_or_else(|| {
            invalid(format!(
                "index {index} out of range ({} examples)",
                data.len()
            ))
        })?;
        check_len(ex.x.len(), x_len)?;
        out_slice(x_out, x_len, "x_out")?.copy_from_slice(ex.x.data());
        put(label_out, ex.y, "label_out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn alp_dataset_free(ds: *mut AlpDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

#[no_mangle]
pub unsafe extern "C" fn alp_clean_accuracy(
    model: *const AlpModel,
    ds: *const AlpDataset,
    accuracy_out: *mut f64,
) -> AlpStatus {
    guard(|| {
        let acc = clean_accuracy(model_ref(model)?, dataset_ref(ds)?)?;
        put(accuracy_out, acc, "accuracy_out")
    })
}
