use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use ensemblier_ffi::*;

fn matrix(scores: &[f64], labels: &[usize], c: usize) -> *mut EnsScoreMatrix {
    let mut out = ptr::null_mut();
    let s = unsafe { ens_score_matrix_new(labels.len(), c, scores.as_ptr(), labels.as_ptr(), &mut out) };
    assert_eq!(s, EnsStatus::Ok);
    out
}

fn last_error() -> String {
    let p = ens_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn metrics_match_hand_counts() {
    let preds = [0usize, 1, 1, 2];
    let labels = [0usize, 1, 2, 2];
    let mut m = EnsMetrics::default();
    assert_eq!(unsafe { ens_metrics(preds.as_ptr(), labels.as_ptr(), 4, 3, &mut m) }, EnsStatus::Ok);
    assert_eq!(m.acc_overall, 0.75);
    // per class F: 1, 2/3, 2/3
    assert!((m.f_macro - (1.0 + 2.0 / 3.0 + 2.0 / 3.0) / 3.0).abs() < 1e-15);
}

#[test]
fn out_of_range_prediction_reports_message() {
    let preds = [3usize];
    let labels = [0usize];
    let mut m = EnsMetrics::default();
    let s = unsafe { ens_metrics(preds.as_ptr(), labels.as_ptr(), 1, 2, &mut m) };
    assert_eq!(s, EnsStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));
}

#[test]
fn sum_rule_predict_and_dims() {
    let a = matrix(&[0.9, 0.1, 0.4, 0.6], &[0, 1], 2);
    let b = matrix(&[0.2, 0.8, 0.3, 0.7], &[0, 1], 2);
    let members = [a as *const _, b as *const _];
    let mut fused = ptr::null_mut();
    assert_eq!(unsafe { ens_sum_rule(members.as_ptr(), 2, &mut fused) }, EnsStatus::Ok);
    let (mut n, mut c) = (0, 0);
    assert_eq!(unsafe { ens_score_matrix_dims(fused, &mut n, &mut c) }, EnsStatus::Ok);
    assert_eq!((n, c), (2, 2));
    let mut preds = [9usize; 2];
    assert_eq!(unsafe { ens_score_matrix_predict(fused, preds.as_mut_ptr(), 1) }, EnsStatus::BufferTooSmall);
    assert_eq!(unsafe { ens_score_matrix_predict(fused, preds.as_mut_ptr(), 2) }, EnsStatus::Ok);
    // softmax of (0.9,0.1)+(0.2,0.8) favours class 0 by a hair, row 2 is class 1
    assert_eq!(preds[1], 1);
    unsafe {
        ens_score_matrix_free(fused);
        ens_score_matrix_free(a);
        ens_score_matrix_free(b);
        ens_score_matrix_free(ptr::null_mut());
    }
}

#[test]
fn misaligned_members_are_rejected() {
    let a = matrix(&[0.9, 0.1], &[0], 2);
    let b = matrix(&[0.2, 0.8, 0.3, 0.7], &[0, 1], 2);
    let members = [a as *const _, b as *const _];
    let mut fused = ptr::null_mut();
    let s = unsafe { ens_sum_rule(members.as_ptr(), 2, &mut fused) };
    assert_ne!(s, EnsStatus::Ok);
    assert!(fused.is_null());
    unsafe {
        ens_score_matrix_free(a);
        ens_score_matrix_free(b);
    }
}

#[test]
fn sffs_picks_the_perfect_member() {
    let labels = [0usize, 1, 0, 1];
    let good = matrix(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0], &labels, 2);
    let bad = matrix(&[0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0], &labels, 2);
    let members = [bad as *const _, good as *const _];
    let mut idx = [0usize; 2];
    let mut len = 0;
    let mut obj = 0.0;
    let s = unsafe {
        ens_sffs(members.as_ptr(), 2, 1, EnsObjective::AccuracyOverall, idx.as_mut_ptr(), 2, &mut len, &mut obj)
    };
    assert_eq!(s, EnsStatus::Ok);
    assert_eq!((len, idx[0], obj), (1, 1, 1.0));
    unsafe {
        ens_score_matrix_free(good);
        ens_score_matrix_free(bad);
    }
}

#[test]
fn ws_weights_lie_on_simplex() {
    let labels = [0usize, 1, 1];
    let a = matrix(&[0.8, 0.2, 0.3, 0.7, 0.6, 0.4], &labels, 2);
    let b = matrix(&[0.6, 0.4, 0.5, 0.5, 0.2, 0.8], &labels, 2);
    let members = [a as *const _, b as *const _];
    let mut params = ens_ws_params_default();
    params.epochs = 20;
    let mut w = [0.0; 2];
    assert_eq!(unsafe { ens_ws_optimize(members.as_ptr(), 2, &params, w.as_mut_ptr()) }, EnsStatus::Ok);
    assert!((w[0] + w[1] - 1.0).abs() < 1e-12);
    assert!(w.iter().all(|&x| x > 0.0));
    params.gamma = 1.5;
    assert_eq!(unsafe { ens_ws_optimize(members.as_ptr(), 2, &params, w.as_mut_ptr()) }, EnsStatus::InvalidArgument);
    unsafe {
        ens_score_matrix_free(a);
        ens_score_matrix_free(b);
    }
}

#[test]
fn load_reports_missing_file() {
    let path = CString::new("/nonexistent/scores.csv").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ens_score_matrix_load(path.as_ptr(), 3, &mut out) }, EnsStatus::Io);
    assert!(last_error().contains("nonexistent"));
}

#[test]
fn load_reads_score_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    std::fs::write(&p, "sample_id,label,score_0,score_1\na,1,0.25,0.75\nb,0,0.5,0.5\n").unwrap();
    let path = CString::new(p.to_str().unwrap()).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ens_score_matrix_load(path.as_ptr(), 2, &mut out) }, EnsStatus::Ok);
    let mut preds = [9usize; 2];
    assert_eq!(unsafe { ens_score_matrix_predict(out, preds.as_mut_ptr(), 2) }, EnsStatus::Ok);
    assert_eq!(preds, [1, 0]);
    unsafe { ens_score_matrix_free(out) };
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ensemblier.h")
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "ens_last_error",
        "ens_score_matrix_new",
        "ens_score_matrix_free",
        "ens_metrics",
        "ens_sum_rule",
        "ens_sffs",
        "ens_ws_optimize",
        "ens_preprocess_png",
        "typedef struct EnsScoreMatrix EnsScoreMatrix",
        "EnsStatus_Ok = 0",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

/// Compiles a small C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let Ok(exe) = std::env::current_exe() else { return };
    // Test builds refresh the archive under deps/, the uplifted copy may be stale.
    let Some(deps) = exe.parent() else { return };
    let lib = deps.join("libensemblier_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "ensemblier.h"
int main(void) {
    double s[] = {0.9, 0.1, 0.2, 0.8};
    size_t y[] = {0, 1};
    EnsScoreMatrix *m = NULL;
    if (ens_score_matrix_new(2, 2, s, y, &m) != EnsStatus_Ok) return 1;
    size_t p[2];
    if (ens_score_matrix_predict(m, p, 2) != EnsStatus_Ok) return 2;
    EnsMetrics r;
    if (ens_metrics(p, y, 2, 2, &r) != EnsStatus_Ok) return 3;
    ens_score_matrix_free(m);
    if (ens_score_matrix_new(2, 1, s, y, &m) == EnsStatus_Ok) return 4;
    printf("%.4f %s\n", r.acc_overall, ens_last_error() ? "err" : "none");
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "1.0000 err\n");
}
