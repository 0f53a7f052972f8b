//! C ABI over `textattr`.
//!
//! Every fallible function returns a [`TaStatus`]; on failure the message is
//! available from [`ta_last_error`] on the same thread. Strings returned
//! through `out` pointers are owned by the caller and released with
//! [`ta_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use textattr::config::{Environment, RunConfig};
use textattr::gateway::Gateway;
use textattr::pipeline::{build_tree, evaluate_with, explain_tree, self_explain_tree, ExplanationOutput};
use textattr::scalarize::ScalarizerResources;
use textattr::segment::{DocumentInput, ParseDocument};
use textattr::{Error, ErrorKind};

/// Result codes. Nonzero codes match the CLI exit codes where one exists.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaStatus {
    Ok = 0,
    Config = 2,
    Input = 3,
    Gateway = 4,
    Contract = 5,
    /// A required pointer argument was null or a string was not UTF-8.
    InvalidArgument = 6,
    /// A Rust panic was caught at the boundary.
    Internal = 7,
}

/// Gateway call counters.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TaLedger {
    pub generate_calls: u64,
    pub logprob_calls: u64,
    pub cache_hits: u64,
}

/// Opaque explainer: a run configuration plus a gateway whose cache and
/// counters persist across calls.
pub struct TaExplainer {
    config: RunConfig,
    gateway: Arc<Gateway>,
    resources: ScalarizerResources,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TaStatus {
    match e.kind() {
        ErrorKind::Config => TaStatus::Config,
        ErrorKind::Input => TaStatus::Input,
        ErrorKind::Gateway => TaStatus::Gateway,
        ErrorKind::Contract => TaStatus::Contract,
    }
}

enum Failure {
    Lib(Error),
    Arg(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TaStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Arg(what))) => {
            set_error(format!("invalid argument: {what}"));
            TaStatus::InvalidArgument
        }
        Err(_) => {
            set_error("internal error: panic in textattr".into());
            TaStatus::Internal
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char, what: &'static str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p).to_str().map(Some).map_err(|_| Failure::Arg(what))
}

unsafe fn req_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    opt_str(p, what)?.ok_or(Failure::Arg(what))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure::Arg("output contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Arg(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ta_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ta_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an explainer from a run configuration in JSON (null for the
/// defaults). API key, cache directory and scorer URL come from the
/// environment.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ta_explainer_new(config_json: *const c_char, out: *mut *mut TaExplainer) -> TaStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Arg("out"));
        }
        let config = match opt_str(config_json, "config_json")? {
            Some(s) => RunConfig::from_json(s)?,
            None => RunConfig::default(),
        };
        config.refine_config()?;
        let env = Environment::from_process(&config);
        let gateway = config.gateway(&env)?;
        let resources = config.resources(&env)?;
        *out = Box::into_raw(Box::new(TaExplainer {
            config,
            gateway,
            resources,
        }));
        Ok(())
    })
}

/// # Safety
/// `explainer` must be null or come from [`ta_explainer_new`], and is not
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ta_explainer_free(explainer: *mut TaExplainer) {
    if !explainer.is_null() {
        drop(Box::from_raw(explainer));
    }
}

unsafe fn run_document(
    explainer: *mut TaExplainer,
    document_json: *const c_char,
    parse_json: *const c_char,
    out: *mut *mut c_char,
    self_explain: bool,
) -> TaStatus {
    guard(|| {
        let ex = explainer.as_ref().ok_or(Failure::Arg("explainer"))?;
        if out.is_null() {
            return Err(Failure::Arg("out"));
        }
        let doc = DocumentInput::from_json(req_str(document_json, "document_json")?)?;
        let parse = match opt_str(parse_json, "parse_json")? {
            Some(p) => Some(ParseDocument::from_json(p)?),
            None => None,
        };
        let tree = build_tree(&ex.config, &doc, parse.as_ref())?;
        let result = if self_explain {
            self_explain_tree(&ex.config, ex.gateway.clone(), &tree)?
        } else {
            explain_tree(&ex.config, ex.gateway.clone(), &ex.resources, &tree)?
        };
        put_string(out, result.to_json()?)
    })
}

/// Attributes the model output for a document given as JSON
/// (`{"text": ...}` plus optional fields). `parse_json` may be null.
/// Writes the explanation JSON to `out`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ta_explain(
    explainer: *mut TaExplainer,
    document_json: *const c_char,
    parse_json: *const c_char,
    out: *mut *mut c_char,
) -> TaStatus {
    run_document(explainer, document_json, parse_json, out, false)
}

/// As [`ta_explain`], with scores from the model's own ranking.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ta_self_explain(
    explainer: *mut TaExplainer,
    document_json: *const c_char,
    parse_json: *const c_char,
    out: *mut *mut c_char,
) -> TaStatus {
    run_document(explainer, document_json, parse_json, out, true)
}

/// Evaluates a JSON array of explanations and writes the report JSON.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ta_evaluate(
    explainer: *mut TaExplainer,
    explanations_json: *const c_char,
    out: *mut *mut c_char,
) -> TaStatus {
    guard(|| {
        let ex = explainer.as_ref().ok_or(Failure::Arg("explainer"))?;
        if out.is_null() {
            return Err(Failure::Arg("out"));
        }
        let items: Vec<serde_json::Value> = serde_json::from_str(req_str(explanations_json, "explanations_json")?)
            .map_err(|e| Error::input("evaluator", format!("explanation array: {e}")))?;
        let mut inputs = Vec::with_capacity(items.len());
        for (i, v) in items.iter().enumerate() {
            inputs.push((format!("#{i}"), ExplanationOutput::from_json(&v.to_string())?));
        }
        let report = evaluate_with(&ex.config, ex.gateway.clone(), &ex.resources, &inputs)?;
        put_string(out, report.to_json()?)
    })
}

/// Counters accumulated by the explainer's gateway.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ta_explainer_ledger(explainer: *const TaExplainer, out: *mut TaLedger) -> TaStatus {
    guard(|| {
        let ex = explainer.as_ref().ok_or(Failure::Arg("explainer"))?;
        let out = out.as_mut().ok_or(Failure::Arg("out"))?;
        let l = ex.gateway.ledger();
        *out = TaLedger {
            generate_calls: l.generate_calls,
            logprob_calls: l.logprob_calls,
            cache_hits: l.cache_hits,
        };
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ta_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Affine map of `n` scores onto [-1, 1]; `out` holds `n` values.
///
/// # Safety
/// `scores` and `out` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ta_normalize_scores(scores: *const f64, n: usize, out: *mut f64) -> TaStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        if out.is_null() {
            return Err(Failure::Arg("out"));
        }
        let v = textattr::normalize_scores(s)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&v);
        Ok(())
    })
}

/// Spearman rank correlation of two length-`n` vectors.
///
/// # Safety
/// `a` and `b` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ta_spearman(a: *const f64, b: *const f64, n: usize, out: *mut f64) -> TaStatus {
    guard(|| {
        let a = slice(a, n, "a")?;
        let b = slice(b, n, "b")?;
        let out = out.as_mut().ok_or(Failure::Arg("out"))?;
        *out = textattr::eval::spearman(a, b)?;
        Ok(())
    })
}

/// Area under a perturbation curve given as `n` (fraction, drop) points,
/// scaled by `100 / cutoff`.
///
/// # Safety
/// `xs` and `ys` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ta_aupc(xs: *const f64, ys: *const f64, n: usize, cutoff: f64, out: *mut f64) -> TaStatus {
    guard(|| {
        let xs = slice(xs, n, "xs")?;
        let ys = slice(ys, n, "ys")?;
        let out = out.as_mut().ok_or(Failure::Arg("out"))?;
        if !(cutoff > 0.0) {
            return Err(Failure::Lib(Error::Config(format!("cutoff {cutoff} must be positive"))));
        }
        if xs.windows(2).any(|w| w[0] > w[1]) {
            return Err(Failure::Lib(Error::contract("evaluator", "curve fractions must be nondecreasing")));
        }
        let pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        *out = textattr::eval::aupc_points(&pts, cutoff);
        Ok(())
    })
}
