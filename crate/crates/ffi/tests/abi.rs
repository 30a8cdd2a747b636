use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use bagmil::bagcore::write_bags_jsonl;
use bagmil::datagen::{generate_additive_bags, AdditiveSpec};
use bagmil_ffi::*;

const CONFIG: &str = r#"{"kind": "neural", "task": "regression", "encoder_hidden": [8],
    "attention_hidden": 4, "head_hidden": [], "epochs": 5, "seed": 1}"#;

fn dataset_file(dir: &Path) -> PathBuf {
    let spec = AdditiveSpec {
        num_bags: 30,
        bag_size_min: 2,
        bag_size_max: 4,
        dim: 3,
        seed: 5,
    };
    let path = dir.join("bags.jsonl");
    write_bags_jsonl(&generate_additive_bags(&spec).unwrap().dataset, &path).unwrap();
    path
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = mil_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn fit_predict_save_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(dataset_file(dir.path()).to_str().unwrap());
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(mil_dataset_read_jsonl(path.as_ptr(), &mut ds), MilStatus::Ok);
        assert_eq!(mil_dataset_len(ds), 30);
        assert_eq!(mil_dataset_dim(ds), 3);
        let mut labels = vec![0.0; 30];
        assert_eq!(mil_dataset_labels(ds, labels.as_mut_ptr(), 30), MilStatus::Ok);

        let config = cstr(CONFIG);
        let mut model = ptr::null_mut();
        assert_eq!(mil_model_fit(ds, config.as_ptr(), &mut model), MilStatus::Ok);
        let mut preds = vec![0.0; 30];
        assert_eq!(mil_model_predict(model, ds, preds.as_mut_ptr(), 30), MilStatus::Ok);
        assert!(preds.iter().all(|v| v.is_finite()));

        let mut n = 0usize;
        assert_eq!(mil_dataset_bag_len(ds, 0, &mut n), MilStatus::Ok);
        let mut w = vec![0.0; n];
        assert_eq!(
            mil_model_instance_weights(model, ds, 0, w.as_mut_ptr(), n),
            MilStatus::Ok
        );
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(w.iter().all(|&x| x >= 0.0));

        let saved = cstr(dir.path().join("m.json").to_str().unwrap());
        assert_eq!(mil_model_save(model, saved.as_ptr()), MilStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(mil_model_load(saved.as_ptr(), &mut loaded), MilStatus::Ok);
        let mut again = vec![0.0; 30];
        assert_eq!(mil_model_predict(loaded, ds, again.as_mut_ptr(), 30), MilStatus::Ok);
        assert_eq!(preds, again);

        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(mil_model_to_json(model, &mut a), MilStatus::Ok);
        assert_eq!(mil_model_to_json(loaded, &mut b), MilStatus::Ok);
        assert_eq!(CStr::from_ptr(a), CStr::from_ptr(b));
        mil_string_free(a);
        mil_string_free(b);

        mil_model_free(loaded);
        mil_model_free(model);
        mil_dataset_free(ds);
    }
}

#[test]
fn raw_bag_matches_dataset_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let file = dataset_file(dir.path());
    let path = cstr(file.to_str().unwrap());
    let rust_ds = bagmil::bagcore::read_bags_jsonl(&file).unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(mil_dataset_read_jsonl(path.as_ptr(), &mut ds), MilStatus::Ok);
        let config = cstr(CONFIG);
        let mut model = ptr::null_mut();
        assert_eq!(mil_model_fit(ds, config.as_ptr(), &mut model), MilStatus::Ok);
        let mut preds = vec![0.0; 30];
        assert_eq!(mil_model_predict(model, ds, preds.as_mut_ptr(), 30), MilStatus::Ok);
        for (i, bag) in rust_ds.bags().iter().enumerate() {
            let mut v = f64::NAN;
            let st = mil_model_predict_bag(model, bag.as_flat().as_ptr(), bag.len(), bag.dim(), &mut v);
            assert_eq!(st, MilStatus::Ok);
            assert!((v - preds[i]).abs() < 1e-12);
        }
        let mut v = 0.0;
        let st = mil_model_predict_bag(model, [1.0, 2.0].as_ptr(), 1, 2, &mut v);
        assert_eq!(st, MilStatus::DataError);
        mil_model_free(model);
        mil_dataset_free(ds);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(mil_dataset_read_jsonl(ptr::null(), &mut ds), MilStatus::NullPointer);
        assert!(last_error().contains("path"));
        let missing = cstr("/nonexistent/bags.jsonl");
        assert_eq!(mil_dataset_read_jsonl(missing.as_ptr(), &mut ds), MilStatus::IoError);
        assert!(ds.is_null());

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.jsonl");
        std::fs::write(&bad, "{\"bag_id\": 0, \"instances\": [[1.0]]}\n").unwrap();
        let bad = cstr(bad.to_str().unwrap());
        assert_eq!(mil_dataset_read_jsonl(bad.as_ptr(), &mut ds), MilStatus::FormatError);

        let path = cstr(dataset_file(dir.path()).to_str().unwrap());
        assert_eq!(mil_dataset_read_jsonl(path.as_ptr(), &mut ds), MilStatus::Ok);
        let mut model = ptr::null_mut();
        let cfg = cstr(r#"{"kind": "neural", "task": "regression", "epochs": 0}"#);
        assert_eq!(mil_model_fit(ds, cfg.as_ptr(), &mut model), MilStatus::ConfigError);
        let cfg = cstr(r#"{"kind": "boosting"}"#);
        assert_eq!(mil_model_fit(ds, cfg.as_ptr(), &mut model), MilStatus::ConfigError);
        let cfg = cstr(CONFIG);
        assert_eq!(mil_model_fit(ds, cfg.as_ptr(), &mut model), MilStatus::Ok);
        let mut short = [0.0; 3];
        assert_eq!(
            mil_model_predict(model, ds, short.as_mut_ptr(), 3),
            MilStatus::InvalidArgument
        );
        assert!(last_error().contains("expected 30"));
        let mut n = 0;
        assert_eq!(mil_dataset_bag_len(ds, 99, &mut n), MilStatus::InvalidArgument);
        assert_eq!(mil_dataset_len(ptr::null()), 0);
        mil_model_free(model);
        mil_dataset_free(ds);
        mil_dataset_free(ptr::null_mut());
        mil_model_free(ptr::null_mut());
        mil_string_free(ptr::null_mut());
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "bagmil.h"

int main(int argc, char **argv) {
    MilDataset *ds = NULL;
    MilModel *model = NULL;
    if (mil_dataset_read_jsonl(argv[1], &ds) != MIL_STATUS_OK) return 10;
    size_t n = mil_dataset_len(ds);
    if (mil_model_fit(ds, argv[2], &model) != MIL_STATUS_OK) return 11;
    double preds[64];
    if (n > 64 || mil_model_predict(model, ds, preds, n) != MIL_STATUS_OK) return 12;
    if (mil_model_predict(model, ds, preds, 1) != MIL_STATUS_INVALID_ARGUMENT) return 13;
    if (mil_last_error_message() == NULL) return 14;
    printf("%zu\n", n);
    mil_model_free(model);
    mil_dataset_free(ds);
    return 0;
}
"#;

/// Compiles a C client against the generated header and the static library.
#[test]
fn c_client_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("bagmil.h").exists());
    let profile_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
        .parent()
        .unwrap()
        .join(if cfg!(debug_assertions) { "debug" } else { "release" });
    let lib = profile_dir.join("libbagmil_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = dir.path().join("client");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let data = dataset_file(dir.path());
    let out = Command::new(&exe).arg(&data).arg(CONFIG).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "30");
}
