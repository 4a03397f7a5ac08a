use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use titletopic::corpus::{make_synthetic_corpus, stratified_split, LabelSchema};
use titletopic::models::{Family, ModelConfig};
use titletopic::trainer::{save_trial, train, TrainConfig};
use titletopic_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(tt_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn trained_checkpoint(dir: &Path) {
    let schema = LabelSchema::default();
    let records = make_synthetic_corpus(&schema, 8, 1);
    let split = stratified_split(&records, [0.6, 0.2, 0.2], 2).unwrap();
    let mut cfg = ModelConfig::new(Family::Gru, 8, 1, 1);
    cfg.embed_dim = 8;
    let tc = TrainConfig {
        lr: 1e-2,
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let trial = train(&cfg, &tc, &split, &schema).unwrap();
    save_trial(dir, &trial, &schema).unwrap();
}

#[test]
fn preprocess_round_trip() {
    let raw = CString::new("  Deep  Residual-Learning, for IMAGES! ").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { tt_preprocess_title(raw.as_ptr(), &mut out) },
        TtStatus::Ok
    );
    let got = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { tt_string_free(out) };
    assert_eq!(
        got,
        titletopic::textpipe::preprocess_title(" Deep  Residual-Learning, for IMAGES! ")
    );
    assert_eq!(
        unsafe { tt_preprocess_title(ptr::null(), &mut out) },
        TtStatus::NullArgument
    );
    assert!(last_error().contains("null"));
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { tt_preprocess_title(bad.as_ptr().cast(), &mut out) },
        TtStatus::InvalidUtf8
    );
}

#[test]
fn auroc_through_the_boundary() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    let mut v = 0.0;
    assert_eq!(
        unsafe { tt_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut v) },
        TtStatus::Ok
    );
    assert_eq!(v, 0.75);
    let one_class = [1u8; 4];
    assert_eq!(
        unsafe { tt_auroc(scores.as_ptr(), one_class.as_ptr(), 4, &mut v) },
        TtStatus::UndefinedMetric
    );
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { tt_auroc(ptr::null(), labels.as_ptr(), 4, &mut v) },
        TtStatus::NullArgument
    );
}

#[test]
fn model_handle_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    trained_checkpoint(dir.path());
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { tt_model_load(path.as_ptr(), &mut model) },
        TtStatus::Ok
    );
    assert!(!model.is_null());
    let n = unsafe { tt_model_n_labels(model) };
    assert_eq!(n, 15);

    let mut name = ptr::null();
    assert_eq!(
        unsafe { tt_model_label_name(model, 0, &mut name) },
        TtStatus::Ok
    );
    assert_eq!(
        unsafe { CStr::from_ptr(name) }.to_str().unwrap(),
        "adversarial"
    );
    assert_eq!(
        unsafe { tt_model_label_name(model, 15, &mut name) },
        TtStatus::Index
    );

    let title = CString::new("Graph kernels for molecules").unwrap();
    let mut probs = vec![0.0; n];
    assert_eq!(
        unsafe { tt_model_predict(model, title.as_ptr(), probs.as_mut_ptr(), n) },
        TtStatus::Ok
    );
    assert!(probs.iter().all(|p| *p > 0.0 && *p < 1.0));
    assert_eq!(
        unsafe { tt_model_predict(model, title.as_ptr(), probs.as_mut_ptr(), 3) },
        TtStatus::Shape
    );

    let mut sal = ptr::null_mut();
    assert_eq!(
        unsafe { tt_model_explain(model, title.as_ptr(), -1, &mut sal) },
        TtStatus::Ok
    );
    let len = unsafe { tt_saliency_len(sal) };
    assert_eq!(len, 4);
    let mut best: f64 = 0.0;
    for i in 0..len {
        let (mut tok, mut score) = (ptr::null(), 0.0);
        assert_eq!(
            unsafe { tt_saliency_get(sal, i, &mut tok, &mut score) },
            TtStatus::Ok
        );
        assert!(!unsafe { CStr::from_ptr(tok) }.to_bytes().is_empty());
        best = best.max(score);
    }
    assert_eq!(best, 1.0);
    let top = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert_eq!(unsafe { tt_saliency_target(sal) }, top);
    unsafe { tt_saliency_free(sal) };

    assert_eq!(
        unsafe { tt_model_explain(model, title.as_ptr(), 99, &mut sal) },
        TtStatus::Index
    );
    assert!(sal.is_null());
    unsafe { tt_model_free(model) };

    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { tt_model_load(missing.as_ptr(), &mut model) },
        TtStatus::Io
    );
    assert!(model.is_null());
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/titletopic.h")
}

#[test]
fn header_declares_the_interface() {
    let h = std::fs::read_to_string(header()).unwrap();
    for f in [
        "tt_model_load",
        "tt_model_free",
        "tt_model_predict",
        "tt_model_explain",
        "tt_saliency_get",
        "tt_preprocess_title",
        "tt_auroc",
        "tt_string_free",
        "tt_last_error",
        "TT_STATUS_OK",
        "typedef struct TtModel TtModel",
    ] {
        assert!(h.contains(f), "header lacks {f}");
    }
}

const C_SMOKE: &str = r#"
#include <stdio.h>
#include <string.h>
#include "titletopic.h"

int main(void) {
    char *clean = NULL;
    if (tt_preprocess_title("Attention Is All You Need!", &clean) != TT_STATUS_OK) return 1;
    if (strcmp(clean, "attention is all you need") != 0) return 2;
    tt_string_free(clean);
    double s[4] = {0.1, 0.4, 0.35, 0.8};
    unsigned char y[4] = {0, 0, 1, 1};
    double a = 0.0;
    if (tt_auroc(s, y, 4, &a) != TT_STATUS_OK || a != 0.75) return 3;
    TtModel *m = NULL;
    if (tt_model_load("/nonexistent", &m) != TT_STATUS_IO || m != NULL) return 4;
    if (strlen(tt_last_error()) == 0) return 5;
    puts("ok");
    return 0;
}
"#;

/// Compile a C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libtitletopic_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let work = tempfile::tempdir().unwrap();
    let src = work.path().join("smoke.c");
    std::fs::write(&src, C_SMOKE).unwrap();
    let bin = work.path().join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(status.success(), "compiling the C smoke test failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(
        out.status.success(),
        "C smoke test exited with {:?}",
        out.status.code()
    );
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
