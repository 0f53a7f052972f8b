use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use textattr_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn new_explainer(cfg: &str) -> *mut TaExplainer {
    let mut ex = ptr::null_mut();
    let cfg = c(cfg);
    assert_eq!(unsafe { ta_explainer_new(cfg.as_ptr(), &mut ex) }, TaStatus::Ok);
    ex
}

fn take(s: *mut std::ffi::c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { ta_string_free(s) };
    out
}

const DOC: &str = r#"{"text": "The weather was mild. The KEY fact is that sales rose. Nobody expected it."}"#;

#[test]
fn explain_round_trip() {
    let ex = new_explainer(r#"{"algorithm": "loo"}"#);
    let doc = c(DOC);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ta_explain(ex, doc.as_ptr(), ptr::null(), &mut out) }, TaStatus::Ok);
    let json: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    let scores: Vec<f64> = serde_json::from_value(json["result"]["scores"].clone()).unwrap();
    assert_eq!(scores.len(), 3);
    assert!(scores[1] > 0.0 && scores[0].abs() < 1e-9 && scores[2].abs() < 1e-9);

    let mut ledger = TaLedger::default();
    assert_eq!(unsafe { ta_explainer_ledger(ex, &mut ledger) }, TaStatus::Ok);
    assert_eq!(ledger.generate_calls, 1);
    assert_eq!(ledger.logprob_calls, 4);

    // Same document again: everything comes from the cache.
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ta_explain(ex, doc.as_ptr(), ptr::null(), &mut out) }, TaStatus::Ok);
    let explanation = take(out);
    assert_eq!(unsafe { ta_explainer_ledger(ex, &mut ledger) }, TaStatus::Ok);
    assert_eq!(ledger.logprob_calls, 4);
    assert_eq!(ledger.cache_hits, 5);

    let arr = c(&format!("[{explanation}]"));
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ta_evaluate(ex, arr.as_ptr(), &mut out) }, TaStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(report["methods"][0]["method"], "loo/logprob");
    unsafe { ta_explainer_free(ex) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut ex = ptr::null_mut();
    let bad = c(r#"{"algorithm": "nope"}"#);
    assert_eq!(unsafe { ta_explainer_new(bad.as_ptr(), &mut ex) }, TaStatus::Config);
    let msg = unsafe { CStr::from_ptr(ta_last_error()) }.to_str().unwrap();
    assert!(msg.contains("nope"), "{msg}");
    assert!(ex.is_null());

    let ex = new_explainer(r#"{"levels": ["sentence", "phrase"]}"#);
    let doc = c(DOC);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ta_explain(ex, doc.as_ptr(), ptr::null(), &mut out) }, TaStatus::Input);
    assert!(out.is_null());
    assert_eq!(unsafe { ta_explain(ex, ptr::null(), ptr::null(), &mut out) }, TaStatus::InvalidArgument);
    unsafe { ta_explainer_free(ex) };

    let ex = new_explainer(r#"{"tier": "text"}"#);
    assert_eq!(unsafe { ta_explain(ex, doc.as_ptr(), ptr::null(), &mut out) }, TaStatus::Config);
    unsafe { ta_explainer_free(ex) };
}

#[test]
fn numeric_helpers() {
    let s = [0.9, 0.1, -0.5];
    let mut out = [0.0; 3];
    assert_eq!(unsafe { ta_normalize_scores(s.as_ptr(), 3, out.as_mut_ptr()) }, TaStatus::Ok);
    assert_eq!(out[0], 1.0);
    assert!((out[1] + 1.0 / 7.0).abs() < 1e-12);
    assert_eq!(out[2], -1.0);

    let mut r = 0.0;
    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [1.0, 3.0, 2.0, 4.0];
    assert_eq!(unsafe { ta_spearman(a.as_ptr(), b.as_ptr(), 4, &mut r) }, TaStatus::Ok);
    assert!((r - 0.8).abs() < 1e-12);
    let flat = [1.0; 4];
    assert_eq!(unsafe { ta_spearman(a.as_ptr(), flat.as_ptr(), 4, &mut r) }, TaStatus::Contract);

    let xs = [0.1];
    let ys = [2.0];
    assert_eq!(unsafe { ta_aupc(xs.as_ptr(), ys.as_ptr(), 1, 0.2, &mut r) }, TaStatus::Ok);
    assert!((r - 150.0).abs() < 1e-12);
    assert_eq!(unsafe { ta_aupc(xs.as_ptr(), ys.as_ptr(), 1, 0.0, &mut r) }, TaStatus::Config);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/textattr.h")).unwrap();
    for name in [
        "typedef struct TaExplainer TaExplainer;",
        "TA_STATUS_CONTRACT = 5",
        "ta_explainer_new(",
        "ta_explain(",
        "ta_self_explain(",
        "ta_evaluate(",
        "ta_explainer_ledger(",
        "ta_explainer_free(",
        "ta_string_free(",
        "ta_normalize_scores(",
        "ta_spearman(",
        "ta_aupc(",
        "ta_last_error(",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let lib = target_dir().join("libtextattr_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "textattr.h"
int main(void) {
    TaExplainer *ex = NULL;
    if (ta_explainer_new("{\"algorithm\": \"loo\"}", &ex) != TA_STATUS_OK) return 10;
    char *out = NULL;
    TaStatus st = ta_explain(ex, "{\"text\": \"Filler here. The KEY part.\"}", NULL, &out);
    if (st != TA_STATUS_OK) { fprintf(stderr, "%s\n", ta_last_error()); return 11; }
    if (strstr(out, "\"algorithm\": \"loo\"") == NULL) return 12;
    ta_string_free(out);
    TaLedger l;
    ta_explainer_ledger(ex, &l);
    ta_explainer_free(ex);
    double a[3] = {1, 2, 3}, r = 0;
    if (ta_spearman(a, a, 3, &r) != TA_STATUS_OK || r != 1.0) return 13;
    printf("%llu\n", (unsigned long long)l.logprob_calls);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("cc");
    assert!(status.success());
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "{:?}", run);
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "3");
}
