//! C ABI over the memory engine: opaque handles, integer status codes, and
//! JSON strings for structured data. Every entry point catches panics, so a
//! bug in the engine surfaces as `MG_STATUS_PANIC` instead of unwinding
//! across the boundary.
//!
//! Handles are not thread-safe; callers must serialize access to one engine.
//! Every `char*` the library hands out must be released with
//! `mg_string_free`, and every engine with `mg_engine_free`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use memgrove::config::EngineConfig;
use memgrove::embed::HashedNgramEmbedder;
use memgrove::gateway::{ScriptedStub, StubRule};
use memgrove::{EngineError, MemoryEngine, RetrievalMode};

/// Scripted decision table used when the caller passes no stub: fallback
/// annotations and profiles, nearest-candidate routing, full-candidate
/// stage-1 selection, no-op evolution, and a fixed answer.
const FALLBACK_STUB: &str = include_str!("../../core/fixtures/stub_fallback.json");

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgStatus {
    MgStatusOk = 0,
    /// Bad argument or configuration.
    MgStatusInvalidArgument = 1,
    /// Missing notes, malformed snapshots or datasets, serialization issues.
    MgStatusDataError = 2,
    /// The model backend failed after exhausting retries.
    MgStatusBackendError = 3,
    /// A required pointer argument was null.
    MgStatusNullPointer = 4,
    /// The engine panicked; the handle is still valid but the operation
    /// may have been lost.
    MgStatusPanic = 5,
}

/// Opaque engine handle.
pub struct MgEngine {
    inner: MemoryEngine,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(message: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message.into());
}

fn status_for(error: &EngineError) -> MgStatus {
    set_last_error(error.to_string());
    match error.exit_code() {
        1 => MgStatus::MgStatusInvalidArgument,
        3 => MgStatus::MgStatusBackendError,
        _ => MgStatus::MgStatusDataError,
    }
}

/// Wrap a body in panic isolation; map a caught panic to `MgStatusPanic`.
fn guarded<F: FnOnce() -> MgStatus>(body: F) -> MgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with a non-string payload".to_string());
            set_last_error(format!("panic: {message}"));
            MgStatus::MgStatusPanic
        }
    }
}

/// Read a required C string argument.
///
/// # Safety
/// `ptr` must be null or point to a NUL-terminated string.
unsafe fn required_str<'a>(ptr: *const c_char) -> Result<&'a str, MgStatus> {
    if ptr.is_null() {
        set_last_error("null pointer argument");
        return Err(MgStatus::MgStatusNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("argument is not valid UTF-8");
        MgStatus::MgStatusInvalidArgument
    })
}

fn write_string(out: *mut *mut c_char, text: String) -> MgStatus {
    if out.is_null() {
        return MgStatus::MgStatusOk;
    }
    match CString::new(text) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            MgStatus::MgStatusOk
        }
        Err(_) => {
            set_last_error("output contained an interior NUL byte");
            MgStatus::MgStatusDataError
        }
    }
}

fn parse_rules(json: &str) -> Result<Vec<StubRule>, MgStatus> {
    serde_json::from_str(json).map_err(|e| {
        set_last_error(format!("stub table: {e}"));
        MgStatus::MgStatusInvalidArgument
    })
}

fn build_engine(config_json: Option<&str>, stub_json: &str) -> Result<MemoryEngine, MgStatus> {
    let config: EngineConfig = match config_json {
        Some(text) => serde_json::from_str(text).map_err(|e| {
            set_last_error(format!("config: {e}"));
            MgStatus::MgStatusInvalidArgument
        })?,
        None => EngineConfig::default(),
    };
    let rules = parse_rules(stub_json)?;
    let dim = config.embedding_dim;
    MemoryEngine::new(
        config,
        Arc::new(HashedNgramEmbedder::new(dim)),
        Arc::new(ScriptedStub::new(rules)),
    )
    .map_err(|e| status_for(&e))
}

/// Create an engine. `config_json` is an engine config document (null for
/// the defaults); `stub_table_json` is a scripted decision table (null for
/// the built-in fallback table). On success `*out_engine` owns the handle.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out_engine` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mg_engine_new(
    config_json: *const c_char,
    stub_table_json: *const c_char,
    out_engine: *mut *mut MgEngine,
) -> MgStatus {
    guarded(|| {
        if out_engine.is_null() {
            set_last_error("out_engine is null");
            return MgStatus::MgStatusNullPointer;
        }
        let config = if config_json.is_null() {
            None
        } else {
            match required_str(config_json) {
                Ok(text) => Some(text),
                Err(status) => return status,
            }
        };
        let stub = if stub_table_json.is_null() {
            FALLBACK_STUB
        } else {
            match required_str(stub_table_json) {
                Ok(text) => text,
                Err(status) => return status,
            }
        };
        match build_engine(config, stub) {
            Ok(inner) => {
                *out_engine = Box::into_raw(Box::new(MgEngine { inner }));
                MgStatus::MgStatusOk
            }
            Err(status) => status,
        }
    })
}

/// Restore an engine from a snapshot file written by `mg_engine_snapshot`.
///
/// # Safety
/// Same contracts as `mg_engine_new`; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mg_engine_restore(
    path: *const c_char,
    stub_table_json: *const c_char,
    out_engine: *mut *mut MgEngine,
) -> MgStatus {
    guarded(|| {
        if out_engine.is_null() {
            set_last_error("out_engine is null");
            return MgStatus::MgStatusNullPointer;
        }
        let path = match required_str(path) {
            Ok(text) => text,
            Err(status) => return status,
        };
        let stub = if stub_table_json.is_null() {
            FALLBACK_STUB
        } else {
            match required_str(stub_table_json) {
                Ok(text) => text,
                Err(status) => return status,
            }
        };
        let rules = match parse_rules(stub) {
            Ok(rules) => rules,
            Err(status) => return status,
        };
        let dim = match snapshot_dim(Path::new(path)) {
            Ok(dim) => dim,
            Err(status) => return status,
        };
        match MemoryEngine::from_snapshot(
            Path::new(path),
            Arc::new(HashedNgramEmbedder::new(dim)),
            Arc::new(ScriptedStub::new(rules)),
        ) {
            Ok(inner) => {
                *out_engine = Box::into_raw(Box::new(MgEngine { inner }));
                MgStatus::MgStatusOk
            }
            Err(e) => status_for(&e),
        }
    })
}

fn snapshot_dim(path: &Path) -> Result<usize, MgStatus> {
    let fail = |message: String| {
        set_last_error(message);
        MgStatus::MgStatusDataError
    };
    let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| fail(format!("snapshot: {e}")))?;
    value["config"]["embedding_dim"]
        .as_u64()
        .map(|d| d as usize)
        .ok_or_else(|| fail("snapshot is missing config.embedding_dim".to_string()))
}

/// Release an engine handle. Null is a no-op.
///
/// # Safety
/// `engine` must be null or a pointer produced by this library that has not
/// already been freed.
#[no_mangle]
pub unsafe extern "C" fn mg_engine_free(engine: *mut MgEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Ingest one memory. When `out_outcome_json` is non-null it receives the
/// routing/evolution outcome as JSON.
///
/// # Safety
/// `engine` must be a live handle with no concurrent use; strings must be
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mg_engine_ingest(
    engine: *mut MgEngine,
    content: *const c_char,
    timestamp: *const c_char,
    out_outcome_json: *mut *mut c_char,
) -> MgStatus {
    guarded(|| {
        if engine.is_null() {
            set_last_error("engine is null");
            return MgStatus::MgStatusNullPointer;
        }
        let content = match required_str(content) {
            Ok(text) => text,
            Err(status) => return status,
        };
        let timestamp = match required_str(timestamp) {
            Ok(text) => text,
            Err(status) => return status,
        };
        let engine = &mut (*engine).inner;
        match engine.ingest(content, timestamp) {
            Ok(outcome) => match serde_json::to_string(&outcome) {
                Ok(json) => write_string(out_outcome_json, json),
                Err(e) => {
                    set_last_error(e.to_string());
                    MgStatus::MgStatusDataError
                }
            },
            Err(e) => status_for(&e),
        }
    })
}

/// Retrieve for a query. `mode` is 0 for two-stage, 1 for a global scan.
/// `*out_result_json` receives the full retrieval result as JSON.
///
/// # Safety
/// Same contracts as `mg_engine_ingest`.
#[no_mangle]
pub unsafe extern "C" fn mg_engine_retrieve(
    engine: *mut MgEngine,
    query: *const c_char,
    mode: c_int,
    out_result_json: *mut *mut c_char,
) -> MgStatus {
    guarded(|| {
        if engine.is_null() {
            set_last_error("engine is null");
            return MgStatus::MgStatusNullPointer;
        }
        let query = match required_str(query) {
            Ok(text) => text,
            Err(status) => return status,
        };
        let mode = match mode {
            0 => RetrievalMode::TwoStage,
            1 => RetrievalMode::Global,
            other => {
                set_last_error(format!("mode must be 0 or 1, got {other}"));
                return MgStatus::MgStatusInvalidArgument;
            }
        };
        let engine = &(*engine).inner;
        match engine.retrieve(query, mode) {
            Ok(result) => match serde_json::to_string(&result) {
                Ok(json) => write_string(out_result_json, json),
                Err(e) => {
                    set_last_error(e.to_string());
                    MgStatus::MgStatusDataError
                }
            },
            Err(e) => status_for(&e),
        }
    })
}

/// Cluster statistics as JSON.
///
/// # Safety
/// Same contracts as `mg_engine_ingest`.
#[no_mangle]
pub unsafe extern "C" fn mg_engine_stats_json(
    engine: *mut MgEngine,
    out_stats_json: *mut *mut c_char,
) -> MgStatus {
    guarded(|| {
        if engine.is_null() {
            set_last_error("engine is null");
            return MgStatus::MgStatusNullPointer;
        }
        let stats = (*engine).inner.stats();
        match serde_json::to_string(&stats) {
            Ok(json) => write_string(out_stats_json, json),
            Err(e) => {
                set_last_error(e.to_string());
                MgStatus::MgStatusDataError
            }
        }
    })
}

/// Write the engine's full state to `path` as a snapshot document.
///
/// # Safety
/// Same contracts as `mg_engine_ingest`.
#[no_mangle]
pub unsafe extern "C" fn mg_engine_snapshot(
    engine: *mut MgEngine,
    path: *const c_char,
) -> MgStatus {
    guarded(|| {
        if engine.is_null() {
            set_last_error("engine is null");
            return MgStatus::MgStatusNullPointer;
        }
        let path = match required_str(path) {
            Ok(text) => text,
            Err(status) => return status,
        };
        match (*engine).inner.snapshot(Path::new(path)) {
            Ok(()) => MgStatus::MgStatusOk,
            Err(e) => status_for(&e),
        }
    })
}

/// Release a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or a string produced by this library that has not
/// already been freed.
#[no_mangle]
pub unsafe extern "C" fn mg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The message for the most recent error on this thread, as a fresh string
/// the caller must free, or null when no error has occurred yet.
#[no_mangle]
pub extern "C" fn mg_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        let message = slot.borrow();
        if message.is_empty() {
            return std::ptr::null_mut();
        }
        CString::new(message.replace('\0', " "))
            .map(CString::into_raw)
            .unwrap_or(std::ptr::null_mut())
    })
}
