//! C interface to the titletopic classifier: load a trained checkpoint,
//! score titles, explain predictions, and a few standalone utilities.
//!
//! Every fallible function returns a [`TtStatus`]; on failure the message is
//! available from [`tt_last_error`] on the same thread. Strings returned
//! through `char **` are owned by the caller and released with
//! [`tt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use titletopic::corpus::LabelSchema;
use titletopic::models::Model;
use titletopic::saliency::{token_saliency, Normalization, SaliencyMap};
use titletopic::textpipe::{encode, preprocess_title, Vocabulary};
use titletopic::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Contract = 6,
    Index = 7,
    UndefinedMetric = 8,
    Unsupported = 9,
    Config = 10,
    Data = 11,
    Panic = 12,
}

/// A loaded classifier with its vocabulary.
pub struct TtModel {
    model: Model,
    vocab: Vocabulary,
    labels: Vec<CString>,
}

/// Token saliency for one title.
pub struct TtSaliency {
    map: SaliencyMap,
    tokens: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> TtStatus {
    match err {
        Error::Shape { .. } => TtStatus::Shape,
        Error::Contract(_) => TtStatus::Contract,
        Error::Index { .. } => TtStatus::Index,
        Error::UndefinedMetric(_) => TtStatus::UndefinedMetric,
        Error::Unsupported(_) => TtStatus::Unsupported,
        Error::Config(_) => TtStatus::Config,
        Error::Format(_) => TtStatus::Format,
        Error::Io(_) => TtStatus::Io,
        _ => TtStatus::Data,
    }
}

fn fail(status: TtStatus, msg: &str) -> TtStatus {
    set_error(msg);
    status
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), TtStatus>) -> TtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TtStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(TtStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: titletopic::Result<T>) -> Result<T, TtStatus> {
    r.map_err(|e| fail(status_of(&e), &e.to_string()))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, TtStatus> {
    if p.is_null() {
        return Err(fail(TtStatus::NullArgument, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(TtStatus::InvalidUtf8, &format!("{what} is not valid UTF-8")))
}

fn owned(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .unwrap_or_default()
        .into_raw()
}

/// Message of the last failure on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn tt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Normalized form of a raw title.
///
/// # Safety
/// `raw` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_preprocess_title(
    raw: *const c_char,
    out: *mut *mut c_char,
) -> TtStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(TtStatus::NullArgument, "out is null"));
        }
        let raw = text(raw, "raw")?;
        *out = owned(&preprocess_title(raw));
        Ok(())
    })
}

/// Area under the ROC curve of `n` scores against 0/1 labels.
///
/// # Safety
/// `scores` and `labels` must point to `n` readable elements; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn tt_auroc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> TtStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() || out.is_null() {
            return Err(fail(TtStatus::NullArgument, "null argument"));
        }
        let s = std::slice::from_raw_parts(scores, n);
        let l = std::slice::from_raw_parts(labels, n);
        *out = lift(titletopic::metrics::binary_auroc(s, l))?;
        Ok(())
    })
}

/// Load a checkpoint directory written by `titletopic train`.
///
/// # Safety
/// `dir` must be a NUL-terminated path; `out` must be writable. The handle
/// is released with [`tt_model_free`].
#[no_mangle]
pub unsafe extern "C" fn tt_model_load(dir: *const c_char, out: *mut *mut TtModel) -> TtStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(TtStatus::NullArgument, "out is null"));
        }
        *out = ptr::null_mut();
        let dir = Path::new(text(dir, "dir")?);
        let model = lift(Model::load(dir))?;
        let vocab = lift(Vocabulary::load(&dir.join("vocab.tsv")))?;
        let schema = LabelSchema::default();
        let mut labels: Vec<CString> = schema
            .trainable_names()
            .iter()
            .map(|n| CString::new(*n).unwrap_or_default())
            .collect();
        labels.resize(model.config.n_labels, CString::default());
        *out = Box::into_raw(Box::new(TtModel {
            model,
            vocab,
            labels,
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`tt_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tt_model_free(model: *mut TtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of labels the model scores; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tt_model_n_labels(model: *const TtModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.n_labels)
}

/// Name of label `index`, borrowed from the handle.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_model_label_name(
    model: *const TtModel,
    index: usize,
    out: *mut *const c_char,
) -> TtStatus {
    guard(|| {
        let m = model
            .as_ref()
            .ok_or_else(|| fail(TtStatus::NullArgument, "model is null"))?;
        if out.is_null() {
            return Err(fail(TtStatus::NullArgument, "out is null"));
        }
        let name = m
            .labels
            .get(index)
            .ok_or_else(|| fail(TtStatus::Index, &format!("label {index} out of range")))?;
        *out = name.as_ptr();
        Ok(())
    })
}

/// Per-label probabilities for a raw title into `probs[0..len]`; `len` must
/// equal [`tt_model_n_labels`].
///
/// # Safety
/// `model` must be a live handle, `title` NUL-terminated, `probs` writable
/// for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn tt_model_predict(
    model: *const TtModel,
    title: *const c_char,
    probs: *mut f64,
    len: usize,
) -> TtStatus {
    guard(|| {
        let m = model
            .as_ref()
            .ok_or_else(|| fail(TtStatus::NullArgument, "model is null"))?;
        let title = text(title, "title")?;
        if probs.is_null() {
            return Err(fail(TtStatus::NullArgument, "probs is null"));
        }
        let n = m.model.config.n_labels;
        if len != n {
            return Err(fail(
                TtStatus::Shape,
                &format!("buffer holds {len} values, model has {n} labels"),
            ));
        }
        let seq = encode(
            &preprocess_title(title),
            &m.vocab,
            m.model.config.max_len,
            m.model.config.uses_cls(),
        );
        let logits = lift(m.model.predict_logits(&[seq], 1))?;
        let out = std::slice::from_raw_parts_mut(probs, len);
        for (o, z) in out.iter_mut().zip(&logits[0]) {
            *o = titletopic::autodiff::sigmoid(*z);
        }
        Ok(())
    })
}

/// Token saliency of a raw title. `target < 0` explains the best label.
///
/// # Safety
/// `model` must be a live handle, `title` NUL-terminated, `out` writable.
/// The result is released with [`tt_saliency_free`].
#[no_mangle]
pub unsafe extern "C" fn tt_model_explain(
    model: *const TtModel,
    title: *const c_char,
    target: i64,
    out: *mut *mut TtSaliency,
) -> TtStatus {
    guard(|| {
        let m = model
            .as_ref()
            .ok_or_else(|| fail(TtStatus::NullArgument, "model is null"))?;
        let title = text(title, "title")?;
        if out.is_null() {
            return Err(fail(TtStatus::NullArgument, "out is null"));
        }
        *out = ptr::null_mut();
        let seq = encode(
            &preprocess_title(title),
            &m.vocab,
            m.model.config.max_len,
            m.model.config.uses_cls(),
        );
        let target = usize::try_from(target).ok();
        let map = lift(token_saliency(
            &m.model,
            &m.vocab,
            &seq,
            target,
            Normalization::Max,
        ))?;
        let tokens = map
            .tokens
            .iter()
            .map(|t| CString::new(t.as_str()).unwrap_or_default())
            .collect();
        *out = Box::into_raw(Box::new(TtSaliency { map, tokens }));
        Ok(())
    })
}

/// Number of scored tokens; 0 for null.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tt_saliency_len(s: *const TtSaliency) -> usize {
    s.as_ref().map_or(0, |s| s.tokens.len())
}

/// Label whose logit was differentiated.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tt_saliency_target(s: *const TtSaliency) -> usize {
    s.as_ref().map_or(0, |s| s.map.target_label)
}

/// Token `i` (borrowed from the handle) and its score.
///
/// # Safety
/// `s` must be a live handle; `token` and `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_saliency_get(
    s: *const TtSaliency,
    i: usize,
    token: *mut *const c_char,
    score: *mut f64,
) -> TtStatus {
    guard(|| {
        let s = s
            .as_ref()
            .ok_or_else(|| fail(TtStatus::NullArgument, "saliency is null"))?;
        if token.is_null() || score.is_null() {
            return Err(fail(TtStatus::NullArgument, "null output"));
        }
        let tok = s
            .tokens
            .get(i)
            .ok_or_else(|| fail(TtStatus::Index, &format!("token {i} out of range")))?;
        *token = tok.as_ptr();
        *score = s.map.scores[i];
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`tt_model_explain`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tt_saliency_free(s: *mut TtSaliency) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}
