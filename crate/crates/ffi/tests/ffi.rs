use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use neurostate_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ns_last_error_message()) }.to_string_lossy().into_owned()
}

fn build(kind: NsModelKind, seed: u64) -> *mut NsModel {
    let mut m = ptr::null_mut();
    assert_eq!(ns_model_build(kind, seed, &mut m), NsStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn summary_matches_architecture() {
    for (kind, total) in [(NsModelKind::Cnn, 1_197_254u64), (NsModelKind::Bilstm, 2_412_486)] {
        let m = build(kind, 1);
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { ns_model_summary_json(m, &mut s) }, NsStatus::Ok);
        let json: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(s) }.to_str().unwrap()).unwrap();
        assert_eq!(json["total_params"].as_u64().unwrap(), total);
        unsafe {
            ns_string_free(s);
            ns_model_free(m);
        }
    }
}

#[test]
fn predict_save_load_round_trip() {
    let m = build(NsModelKind::Cnn, 3);
    let (mut t, mut c) = (0usize, 0usize);
    assert_eq!(unsafe { ns_model_input_shape(m, &mut t, &mut c) }, NsStatus::Ok);
    assert_eq!((t, c), (277, 214));
    let x: Vec<f64> = (0..2 * t * c).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
    let mut probs = vec![0.0; 12];
    let mut labels = vec![9u32; 2];
    let st = unsafe { ns_model_predict(m, x.as_ptr(), 2, t, c, probs.as_mut_ptr(), labels.as_mut_ptr()) };
    assert_eq!(st, NsStatus::Ok);
    for row in probs.chunks(6) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert!(labels.iter().all(|&l| l < 6));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.nsm").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ns_model_save(m, path.as_ptr()) }, NsStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { ns_model_load(path.as_ptr(), &mut loaded) }, NsStatus::Ok);
    let mut again = vec![0.0; 12];
    let st = unsafe { ns_model_predict(loaded, x.as_ptr(), 2, t, c, again.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(st, NsStatus::Ok);
    assert_eq!(probs, again);
    unsafe {
        ns_model_free(m);
        ns_model_free(loaded);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut out = ptr::null_mut();
    let missing = CString::new("/no/such/model.nsm").unwrap();
    assert_eq!(unsafe { ns_model_load(missing.as_ptr(), &mut out) }, NsStatus::Io);
    assert!(last_error().contains("model.nsm"));
    assert!(out.is_null());

    assert_eq!(unsafe { ns_model_load(ptr::null(), &mut out) }, NsStatus::NullPointer);
    assert!(last_error().contains("path"));

    let m = build(NsModelKind::Cnn, 1);
    assert_eq!(last_error(), "");
    let x = vec![0.0; 10 * 214];
    let mut probs = vec![0.0; 6];
    let st = unsafe { ns_model_predict(m, x.as_ptr(), 1, 10, 214, probs.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(st, NsStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    unsafe { ns_model_free(m) };
    unsafe { ns_model_free(ptr::null_mut()) };
}

#[test]
fn statistics_and_counts() {
    let a = [1.0, 2.0, 3.0, 4.5];
    let b = [2.0, 2.5, 7.0];
    let (mut t, mut p, mut dof) = (0.0, 0.0, 0.0);
    assert_eq!(
        unsafe { ns_welch_t(a.as_ptr(), 4, b.as_ptr(), 3, &mut t, &mut p, &mut dof) },
        NsStatus::Ok
    );
    let want = neurostate::behavior::welch_t(&a, &b).unwrap();
    assert_eq!((t, p, dof), (want.t, want.p, want.dof));
    assert_eq!(
        unsafe { ns_welch_t(a.as_ptr(), 1, b.as_ptr(), 3, &mut t, &mut p, &mut dof) },
        NsStatus::InvalidArgument
    );

    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [2.0, 4.0, 6.0, 8.0];
    let (mut r, mut pr) = (0.0, 0.0);
    assert_eq!(unsafe { ns_pearson_r(x.as_ptr(), y.as_ptr(), 4, &mut r, &mut pr) }, NsStatus::Ok);
    assert!((r - 1.0).abs() < 1e-12 && pr < 1e-6);

    assert_eq!(ns_segment_count(824), 3);
    assert_eq!(ns_segment_count(266), 0);
    assert_eq!(ns_segment_count(267), 1);
}

#[test]
fn confusion_metrics_through_abi() {
    let truth = [0u32, 0, 1, 2, 5];
    let pred = [0u32, 1, 1, 2, 5];
    let mut counts = [0u64; 36];
    let (mut acc, mut p, mut r, mut f) = (0.0, [0.0; 6], [0.0; 6], [0.0; 6]);
    let st = unsafe {
        ns_confusion_metrics(
            truth.as_ptr(),
            pred.as_ptr(),
            5,
            counts.as_mut_ptr(),
            &mut acc,
            p.as_mut_ptr(),
            r.as_mut_ptr(),
            f.as_mut_ptr(),
        )
    };
    assert_eq!(st, NsStatus::Ok);
    assert_eq!(counts[1], 1);
    assert_eq!(counts[0], 1);
    assert_eq!(acc, 0.8);
    assert_eq!(p[1], 0.5);
    assert_eq!(r[0], 0.5);
    assert_eq!(f[3], 0.0);
    let bad = [7u32];
    let st = unsafe {
        ns_confusion_metrics(
            bad.as_ptr(),
            bad.as_ptr(),
            1,
            counts.as_mut_ptr(),
            &mut acc,
            p.as_mut_ptr(),
            r.as_mut_ptr(),
            f.as_mut_ptr(),
        )
    };
    assert_eq!(st, NsStatus::InvalidArgument);
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "neurostate.h"
int main(void) {
    NsModel *m = NULL;
    if (ns_model_build(NS_MODEL_KIND_BILSTM, 5, &m) != NS_STATUS_OK) return 1;
    char *json = NULL;
    if (ns_model_summary_json(m, &json) != NS_STATUS_OK) return 2;
    printf("%s\n", json);
    ns_string_free(json);
    ns_model_free(m);
    if (ns_model_load("/no/such/file", &m) != NS_STATUS_IO) return 3;
    if (ns_last_error_message()[0] == '\0') return 4;
    if (ns_segment_count(824) != 3) return 5;
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let header_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(header_dir.join("neurostate.h")).unwrap();
    for f in ["ns_model_build", "ns_model_predict", "ns_welch_t", "ns_last_error_message", "NS_STATUS_PANIC"] {
        assert!(header.contains(f), "header lacks {f}");
    }
    let lib = target_dir().join("libneurostate_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping C link check: no C compiler or {} missing", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header_dir)
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["kind"], "bilstm");
}
