//! C ABI over `codealign`.
//!
//! Every fallible call returns a [`CaStatus`]; on failure the message is
//! available from [`codealign_last_error`] on the same thread. Strings handed
//! out through `out` parameters are owned by the caller and must be released
//! with [`codealign_string_free`]. Structured results are JSON.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use codealign::pipeline::{self, Pipeline, PipelineConfig, PipelineError, Stage};
use codealign::response::parse_response_and_tests;
use codealign::seed::dedup::group_texts;
use codealign::seed::{extract_functions, DedupParams};
use codealign::SourceDocument;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Config = 5,
    Locked = 6,
    StaleUpstream = 7,
    ResumeMismatch = 8,
    Stage = 9,
    Parse = 10,
    Panic = 99,
}

/// Opaque pipeline handle.
pub struct CaPipeline {
    inner: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CaStatus, String);

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Io { .. } | PipelineError::Missing(_) => CaStatus::Io,
            PipelineError::Config(_) => CaStatus::Config,
            PipelineError::Locked(_) => CaStatus::Locked,
            PipelineError::StaleUpstream { .. } => CaStatus::StaleUpstream,
            PipelineError::ResumeMismatch { .. } => CaStatus::ResumeMismatch,
            _ => CaStatus::Stage,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CaStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            CaStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CaStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(CaStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CaStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn emit(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(CaStatus::NullArgument, "out is null".into()));
    }
    let c = CString::new(value)
        .map_err(|_| Failure(CaStatus::InvalidArgument, "result contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn json<T: serde::Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable")
}

/// Library version; static, never freed.
#[no_mangle]
pub extern "C" fn codealign_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn codealign_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned through an `out` parameter. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn codealign_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Extracts candidate seed functions from one Python document as a JSON array.
///
/// # Safety
/// Pointer arguments must be valid NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn codealign_extract_functions(
    doc_id: *const c_char,
    source: *const c_char,
    out: *mut *mut c_char,
) -> CaStatus {
    guard(|| {
        let id = text(doc_id, "doc_id")?;
        let src = text(source, "source")?;
        let extraction = extract_functions(&SourceDocument::new(id, id, src));
        emit(out, json(&extraction.functions))
    })
}

/// Splits a raw model sample into `{"response_text", "response_code",
/// "tests_code"}`. Fails with `Parse` and a reason such as `no-tests`.
///
/// # Safety
/// `raw` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn codealign_parse_response(
    raw: *const c_char,
    out: *mut *mut c_char,
) -> CaStatus {
    guard(|| {
        let raw = text(raw, "raw")?;
        let parsed = parse_response_and_tests(raw)
            .map_err(|e| Failure(CaStatus::Parse, e.reason().to_string()))?;
        emit(
            out,
            json(&serde_json::json!({
                "response_text": parsed.response_text,
                "response_code": parsed.response_code,
                "tests_code": parsed.tests_code,
            })),
        )
    })
}

/// Near-duplicate groups over a JSON array of strings, as a JSON array of
/// index arrays.
///
/// # Safety
/// `texts_json` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn codealign_dedup_groups(
    texts_json: *const c_char,
    threshold: f64,
    seed: u64,
    out: *mut *mut c_char,
) -> CaStatus {
    guard(|| {
        let texts: Vec<String> = serde_json::from_str(text(texts_json, "texts_json")?)
            .map_err(|e| Failure(CaStatus::InvalidArgument, e.to_string()))?;
        let params = DedupParams {
            threshold,
            seed,
            ..DedupParams::default()
        };
        params
            .validate()
            .map_err(|e| Failure(CaStatus::InvalidArgument, e.to_string()))?;
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        emit(out, json(&group_texts(&refs, &params)))
    })
}

/// Opens a run directory from a TOML config file.
///
/// # Safety
/// `config_path` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn codealign_pipeline_open(
    config_path: *const c_char,
    resume: bool,
    out: *mut *mut CaPipeline,
) -> CaStatus {
    guard(|| {
        let path = text(config_path, "config_path")?;
        if out.is_null() {
            return Err(Failure(CaStatus::NullArgument, "out is null".into()));
        }
        let config = PipelineConfig::load(Path::new(path))?;
        let inner = Pipeline::open(config, resume)?;
        *out = Box::into_raw(Box::new(CaPipeline { inner }));
        Ok(())
    })
}

/// Runs every stage; the run summary is written to `out` as JSON.
///
/// # Safety
/// `handle` must come from [`codealign_pipeline_open`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn codealign_pipeline_run(
    handle: *mut CaPipeline,
    out: *mut *mut c_char,
) -> CaStatus {
    guard(|| {
        let p = handle
            .as_mut()
            .ok_or_else(|| Failure(CaStatus::NullArgument, "handle is null".into()))?;
        let summary = p.inner.run()?;
        emit(out, json(&summary))
    })
}

/// Runs one stage by name (`curate`, `concepts`, `instructions`, `responses`,
/// `validate`, `select`).
///
/// # Safety
/// `handle` must come from [`codealign_pipeline_open`]; `stage` must be a
/// valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn codealign_pipeline_run_stage(
    handle: *mut CaPipeline,
    stage: *const c_char,
    out: *mut *mut c_char,
) -> CaStatus {
    guard(|| {
        let p = handle
            .as_mut()
            .ok_or_else(|| Failure(CaStatus::NullArgument, "handle is null".into()))?;
        let name = text(stage, "stage")?;
        let stage = Stage::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Failure(CaStatus::InvalidArgument, format!("unknown stage {name:?}")))?;
        let summary = p.inner.run_stage(stage)?;
        emit(out, json(&summary))
    })
}

/// Releases a pipeline handle and its run lock. NULL is ignored.
///
/// # Safety
/// `handle` must come from [`codealign_pipeline_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn codealign_pipeline_free(handle: *mut CaPipeline) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Statistics of a finished run directory as JSON.
///
/// # Safety
/// `dir` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn codealign_stats(dir: *const c_char, out: *mut *mut c_char) -> CaStatus {
    guard(|| {
        let dir = text(dir, "dir")?;
        let report = pipeline::stats(Path::new(dir))?;
        emit(out, json(&report))
    })
}
