use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use codealign::pipeline::PipelineConfig;
use codealign_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn take(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { codealign_string_free(p) };
    s
}

fn write_config(root: &Path) -> PathBuf {
    let mut cfg = PipelineConfig {
        corpus: PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/e2e/corpus"),
        output_dir: root.join("out"),
        ..PipelineConfig::default()
    };
    cfg.curation.typecheck = false;
    cfg.curation.docstring_quality = false;
    cfg.curation.decontaminate = false;
    let path = root.join("run.toml");
    std::fs::write(&path, toml::to_string(&cfg).unwrap()).unwrap();
    path
}

fn open(config: &CString) -> (CaStatus, *mut CaPipeline) {
    let mut handle = ptr::null_mut();
    let status = unsafe { codealign_pipeline_open(config.as_ptr(), false, &mut handle) };
    (status, handle)
}

#[test]
fn curate_through_a_handle() {
    let tmp = tempfile::tempdir().unwrap();
    let config = c(write_config(tmp.path()).to_str().unwrap());
    let (status, handle) = open(&config);
    assert_eq!(status, CaStatus::Ok);
    assert!(!handle.is_null());

    let (second, other) = open(&config);
    assert_eq!(second, CaStatus::Locked);
    assert!(other.is_null());

    let mut out = ptr::null_mut();
    let bogus = c("polish");
    assert_eq!(
        unsafe { codealign_pipeline_run_stage(handle, bogus.as_ptr(), &mut out) },
        CaStatus::InvalidArgument
    );
    let curate = c("curate");
    assert_eq!(
        unsafe { codealign_pipeline_run_stage(handle, curate.as_ptr(), &mut out) },
        CaStatus::Ok,
        "{:?}",
        unsafe { CStr::from_ptr(codealign_last_error()) }
    );
    let summary: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(summary["stage"], "curate");
    assert_eq!(summary["output"], 20);

    let dir = c(tmp.path().join("out").to_str().unwrap());
    assert_eq!(
        unsafe { codealign_stats(dir.as_ptr(), &mut out) },
        CaStatus::Io
    );

    unsafe { codealign_pipeline_free(handle) };
    let (reopened, handle) = open(&config);
    assert_eq!(reopened, CaStatus::Ok);
    unsafe { codealign_pipeline_free(handle) };
}

#[test]
fn unreadable_config_is_reported() {
    let missing = c("/nonexistent/run.toml");
    let (status, handle) = open(&missing);
    assert_ne!(status, CaStatus::Ok);
    assert!(handle.is_null());
    let msg = unsafe { CStr::from_ptr(codealign_last_error()) };
    assert!(msg.to_string_lossy().contains("run.toml"));
}
