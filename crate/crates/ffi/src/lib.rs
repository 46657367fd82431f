//! C ABI over the neurostate library.
//!
//! Models are opaque `NsModel` handles created by `ns_model_build` or
//! `ns_model_load` and released with `ns_model_free`. Every fallible call
//! returns an `NsStatus`; on failure `ns_last_error_message` describes the
//! most recent error on the calling thread. Strings returned by the library
//! are released with `ns_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use neurostate::behavior::{pearson_r, welch_t};
use neurostate::data::expected_segment_count;
use neurostate::metrics::confusion;
use neurostate::models::{load_checkpoint, save_checkpoint, Model, ModelConfig, ModelKind};
use neurostate::{Error, Real, Tensor, MIN_SEGMENT_LEN, N_CLASSES, SEGMENT_LEN};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Numeric = 4,
    Panic = 5,
}

/// Model architecture selector for `ns_model_build`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsModelKind {
    Cnn = 0,
    Bilstm = 1,
}

/// Opaque model handle.
pub struct NsModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("no interior nul"));
}

fn status_of(err: &Error) -> NsStatus {
    match err {
        Error::Io { .. } | Error::MissingArtifact(_) | Error::Data { .. } | Error::Csv(_) | Error::Json(_) => {
            NsStatus::Io
        }
        Error::NonFinite(_) | Error::NoForwardRecord | Error::MissingGrad(_) => NsStatus::Numeric,
        Error::Shape { .. } | Error::InvalidArgument(_) | Error::Insufficient(_) | Error::Config(_) => {
            NsStatus::InvalidArgument
        }
    }
}

struct Fail(NsStatus);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let s = status_of(&e);
        set_error(e.to_string());
        Fail(s)
    }
}

fn fail(status: NsStatus, msg: &str) -> Fail {
    set_error(msg);
    Fail(status)
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NsStatus::Ok
        }
        Ok(Err(Fail(s))) => s,
        Err(_) => {
            set_error("panic inside neurostate");
            NsStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(fail(NsStatus::NullPointer, &format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, Fail> {
    non_null(path, "path")?;
    let s = unsafe { CStr::from_ptr(path) }
        .to_str()
        .map_err(|_| fail(NsStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(Path::new(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, name: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(unsafe { std::slice::from_raw_parts(p, n) })
}

fn model_ref<'a>(m: *const NsModel) -> Result<&'a NsModel, Fail> {
    non_null(m, "model")?;
    Ok(unsafe { &*m })
}

/// Message describing the last failed call on this thread; empty after a
/// success. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ns_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a freshly initialized model with the default dropout rate.
#[no_mangle]
pub extern "C" fn ns_model_build(kind: NsModelKind, seed: u64, out: *mut *mut NsModel) -> NsStatus {
    guard(|| {
        non_null(out, "out")?;
        let kind = match kind {
            NsModelKind::Cnn => ModelKind::Cnn,
            NsModelKind::Bilstm => ModelKind::Bilstm,
        };
        let model = Model::build(ModelConfig::new(kind, seed))?;
        unsafe { *out = Box::into_raw(Box::new(NsModel { model })) };
        Ok(())
    })
}

/// Loads a checkpoint written by `ns_model_save` or the CLI.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_model_load(path: *const c_char, out: *mut *mut NsModel) -> NsStatus {
    guard(|| {
        non_null(out, "out")?;
        let model = load_checkpoint(unsafe { path_arg(path)? })?;
        unsafe { *out = Box::into_raw(Box::new(NsModel { model })) };
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn ns_model_save(model: *const NsModel, path: *const c_char) -> NsStatus {
    guard(|| {
        let m = model_ref(model)?;
        save_checkpoint(&m.model, unsafe { path_arg(path)? })?;
        Ok(())
    })
}

/// Releases a model handle; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ns_model_free(model: *mut NsModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Expected `(seq_len, channels)` of each input sample.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ns_model_input_shape(
    model: *const NsModel,
    seq_len: *mut usize,
    channels: *mut usize,
) -> NsStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(seq_len, "seq_len")?;
        non_null(channels, "channels")?;
        let c = m.model.config();
        unsafe {
            *seq_len = c.seq_len;
            *channels = c.channels;
        }
        Ok(())
    })
}

/// Class probabilities for `batch` row-major `[seq_len, channels]` samples.
///
/// `probs_out` receives `batch * 6` values; `labels_out` (optional) receives
/// `batch` argmax labels in the order PVT, VWM, DOT, MOD, DYN, REST.
///
/// # Safety
/// `data` must hold `batch * seq_len * channels` values and the outputs must
/// have room for the results.
#[no_mangle]
pub unsafe extern "C" fn ns_model_predict(
    model: *const NsModel,
    data: *const f64,
    batch: usize,
    seq_len: usize,
    channels: usize,
    probs_out: *mut f64,
    labels_out: *mut u32,
) -> NsStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(probs_out, "probs_out")?;
        if batch == 0 {
            return Err(fail(NsStatus::InvalidArgument, "batch must be positive"));
        }
        let n = batch
            .checked_mul(seq_len)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| fail(NsStatus::InvalidArgument, "input size overflows"))?;
        let input = unsafe { slice_arg(data, n, "data")? };
        let x = Tensor::from_vec(&[batch, seq_len, channels], input.iter().map(|&v| v as Real).collect())?;
        let pred = m.model.predict(&x)?;
        let probs = unsafe { std::slice::from_raw_parts_mut(probs_out, batch * N_CLASSES) };
        for (o, &p) in probs.iter_mut().zip(pred.probs.data()) {
            *o = p as f64;
        }
        if !labels_out.is_null() {
            let labels = unsafe { std::slice::from_raw_parts_mut(labels_out, batch) };
            for (o, &l) in labels.iter_mut().zip(&pred.labels) {
                *o = l as u32;
            }
        }
        Ok(())
    })
}

/// Layer table of the model as JSON; release with `ns_string_free`.
///
/// # Safety
/// `model` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ns_model_summary_json(model: *const NsModel, out: *mut *mut c_char) -> NsStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        let json = serde_json::to_string(&m.model.summary()).map_err(Error::from)?;
        let s = CString::new(json).map_err(|_| fail(NsStatus::InvalidArgument, "summary contains nul"))?;
        unsafe { *out = s.into_raw() };
        Ok(())
    })
}

/// Releases a string returned by the library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ns_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Welch's unequal-variance t-test with a two-tailed p-value.
///
/// # Safety
/// `a` and `b` must hold `na` and `nb` values; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn ns_welch_t(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    t: *mut f64,
    p: *mut f64,
    dof: *mut f64,
) -> NsStatus {
    guard(|| {
        for (ptr, name) in [(t, "t"), (p, "p"), (dof, "dof")] {
            non_null(ptr, name)?;
        }
        let r = welch_t(unsafe { slice_arg(a, na, "a")? }, unsafe { slice_arg(b, nb, "b")? })?;
        unsafe {
            *t = r.t;
            *p = r.p;
            *dof = r.dof;
        }
        Ok(())
    })
}

/// Pearson correlation with a two-tailed p-value on n - 2 degrees of freedom.
///
/// # Safety
/// `x` and `y` must hold `n` values; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn ns_pearson_r(x: *const f64, y: *const f64, n: usize, r: *mut f64, p: *mut f64) -> NsStatus {
    guard(|| {
        non_null(r, "r")?;
        non_null(p, "p")?;
        let res = pearson_r(unsafe { slice_arg(x, n, "x")? }, unsafe { slice_arg(y, n, "y")? })?;
        unsafe {
            *r = res.r;
            *p = res.p;
        }
        Ok(())
    })
}

/// Number of 277-point segments a recording of `t` time points yields.
#[no_mangle]
pub extern "C" fn ns_segment_count(t: usize) -> usize {
    expected_segment_count(t, SEGMENT_LEN, MIN_SEGMENT_LEN)
}

/// Confusion matrix and per-class metrics of `n` label pairs (classes 0..6).
///
/// `counts_out` receives 36 row-major counts (rows = true class). Precision,
/// recall and F1 arrays receive 6 values each; undefined ratios are 0.
///
/// # Safety
/// Inputs must hold `n` values; every output must be valid.
#[no_mangle]
pub unsafe extern "C" fn ns_confusion_metrics(
    truth: *const u32,
    predicted: *const u32,
    n: usize,
    counts_out: *mut u64,
    accuracy: *mut f64,
    precision: *mut f64,
    recall: *mut f64,
    f1: *mut f64,
) -> NsStatus {
    guard(|| {
        non_null(counts_out, "counts_out")?;
        non_null(accuracy, "accuracy")?;
        for (ptr, name) in [(precision, "precision"), (recall, "recall"), (f1, "f1")] {
            non_null(ptr, name)?;
        }
        let t: Vec<usize> = unsafe { slice_arg(truth, n, "truth")? }.iter().map(|&v| v as usize).collect();
        let pr: Vec<usize> = unsafe { slice_arg(predicted, n, "predicted")? }
            .iter()
            .map(|&v| v as usize)
            .collect();
        let cm = confusion(&t, &pr)?;
        unsafe {
            let counts = std::slice::from_raw_parts_mut(counts_out, N_CLASSES * N_CLASSES);
            for (i, row) in cm.counts.iter().enumerate() {
                counts[i * N_CLASSES..(i + 1) * N_CLASSES].copy_from_slice(row);
            }
            *accuracy = cm.accuracy();
            for c in 0..N_CLASSES {
                *precision.add(c) = cm.precision(c).value;
                *recall.add(c) = cm.recall(c).value;
                *f1.add(c) = cm.f1(c).value;
            }
        }
        Ok(())
    })
}
