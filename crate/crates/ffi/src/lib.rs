//! C ABI over the streamseal core.
//!
//! Strings returned through `out` parameters are owned by the caller and
//! must be released with `ss_string_free`. Every call returns an
//! `SsErrorCode`; on failure `ss_last_error_message` describes the most
//! recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use streamseal::auditor::Auditor;
use streamseal::canonical::{self, CanonicalConfig};
use streamseal::checkpoint::empty_window_root;
use streamseal::config::ToolConfig;
use streamseal::merkle;
use streamseal::windowing::WindowSpec;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsErrorCode {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Canonical = 3,
    Window = 4,
    Config = 5,
    Panic = 99,
}

/// Opaque auditor handle.
pub struct SsAuditor {
    inner: Auditor,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(code: SsErrorCode, msg: impl Into<String>) -> SsErrorCode {
    set_error(msg);
    code
}

/// Runs `f`, turning a panic into `Panic` so it never crosses the boundary.
fn guard(f: impl FnOnce() -> SsErrorCode) -> SsErrorCode {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SsErrorCode::Panic, msg)
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, SsErrorCode> {
    if p.is_null() {
        return Err(fail(SsErrorCode::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SsErrorCode::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> SsErrorCode {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            SsErrorCode::Ok
        }
        Err(_) => fail(SsErrorCode::InvalidUtf8, "result contains a NUL byte"),
    }
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(code) => return code,
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the calling thread's last error message, or NULL.
#[no_mangle]
pub extern "C" fn ss_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |m| m.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ss_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Canonical form of one JSON record under the default field rules.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_canonicalize(json: *const c_char, out: *mut *mut c_char) -> SsErrorCode {
    guard(|| {
        if out.is_null() {
            return fail(SsErrorCode::NullArgument, "out is null");
        }
        let text = try_ffi!(str_arg(json, "json"));
        match canonical::canonicalize_str(text, &CanonicalConfig::default()) {
            Ok(c) => put_string(out, c),
            Err(e) => fail(SsErrorCode::Canonical, e.to_string()),
        }
    })
}

/// Sorted-leaf Merkle root over `count` byte strings, written as 64 hex
/// characters plus NUL into `out_hex` (at least 65 bytes). Zero items give
/// the root of an empty window.
///
/// # Safety
/// `items` and `lens` must each point to `count` entries (they may be NULL
/// when `count` is 0); each item must be readable for its length.
#[no_mangle]
pub unsafe extern "C" fn ss_merkle_root(
    items: *const *const u8,
    lens: *const usize,
    count: usize,
    out_hex: *mut c_char,
) -> SsErrorCode {
    guard(|| {
        if out_hex.is_null() || (count > 0 && (items.is_null() || lens.is_null())) {
            return fail(SsErrorCode::NullArgument, "items, lens or out_hex is null");
        }
        let mut slices = Vec::with_capacity(count);
        for i in 0..count {
            let (p, n) = (*items.add(i), *lens.add(i));
            if p.is_null() && n > 0 {
                return fail(SsErrorCode::NullArgument, format!("item {i} is null"));
            }
            slices.push(if n == 0 { &[][..] } else { std::slice::from_raw_parts(p, n) });
        }
        let root = merkle::merkle_root(&slices).unwrap_or_else(empty_window_root);
        let hex = root.to_hex();
        ptr::copy_nonoverlapping(hex.as_ptr().cast::<c_char>(), out_hex, 64);
        *out_hex.add(64) = 0;
        SsErrorCode::Ok
    })
}

/// Id of the tumbling window of `duration_seconds` holding `epoch_seconds`.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_window_id(
    source: *const c_char,
    epoch_seconds: i64,
    duration_seconds: u32,
    out: *mut *mut c_char,
) -> SsErrorCode {
    guard(|| {
        if out.is_null() {
            return fail(SsErrorCode::NullArgument, "out is null");
        }
        let source = try_ffi!(str_arg(source, "source"));
        let spec = match WindowSpec::new(duration_seconds, 0) {
            Ok(s) => s,
            Err(e) => return fail(SsErrorCode::Window, e.to_string()),
        };
        match spec.key(source, spec.index_of(epoch_seconds)).window_id() {
            Ok(id) => put_string(out, id),
            Err(e) => fail(SsErrorCode::Window, e.to_string()),
        }
    })
}

/// Opens an auditor over the deployment described by a config file. The
/// configured ledger is used when it can be opened, otherwise the mirror
/// log alone; the results file is attached when present.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_auditor_open(
    config_path: *const c_char,
    strict: bool,
    out: *mut *mut SsAuditor,
) -> SsErrorCode {
    guard(|| {
        if out.is_null() {
            return fail(SsErrorCode::NullArgument, "out is null");
        }
        let path = try_ffi!(str_arg(config_path, "config_path"));
        let cfg = match ToolConfig::load(Path::new(path)) {
            Ok(c) => c,
            Err(e) => return fail(SsErrorCode::Config, e.to_string()),
        };
        let ledger = cfg.open_ledger().ok().map(|h| h.as_ledger());
        let mut auditor = Auditor::from_config(&cfg, ledger).strict(strict);
        if cfg.results_path().exists() {
            auditor = auditor.with_results(cfg.results_path());
        }
        *out = Box::into_raw(Box::new(SsAuditor { inner: auditor }));
        SsErrorCode::Ok
    })
}

/// Verifies one window. The verdict is written as JSON to `out_json`;
/// `out_verified` (optional) receives the overall result. A Failed verdict
/// is still `SS_ERROR_CODE_OK`: the call succeeded.
///
/// # Safety
/// `auditor` must come from `ss_auditor_open`; strings must be
/// NUL-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_auditor_verify_window(
    auditor: *const SsAuditor,
    window_id: *const c_char,
    stream: *const c_char,
    out_json: *mut *mut c_char,
    out_verified: *mut bool,
) -> SsErrorCode {
    guard(|| {
        if auditor.is_null() || out_json.is_null() {
            return fail(SsErrorCode::NullArgument, "auditor or out_json is null");
        }
        let id = try_ffi!(str_arg(window_id, "window_id"));
        let stream = try_ffi!(str_arg(stream, "stream"));
        let verdict = (*auditor).inner.verify_window(id, stream);
        if !out_verified.is_null() {
            *out_verified = verdict.is_verified();
        }
        put_string(out_json, serde_json::to_string(&verdict).expect("verdict serializes"))
    })
}

/// # Safety
/// `auditor` must be NULL or a handle from `ss_auditor_open`, freed once.
#[no_mangle]
pub unsafe extern "C" fn ss_auditor_free(auditor: *mut SsAuditor) {
    if !auditor.is_null() {
        drop(Box::from_raw(auditor));
    }
}
