//! C ABI over the nilc pipeline.
//!
//! Every fallible call returns a [`NilcStatus`]; on failure the message is
//! available from [`nilc_last_error`] on the same thread. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `_free` function. Strings returned by the library are released with
//! [`nilc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nilc::cli::{build_llm, execute, matrix_source, write_outputs, CliError, DataPaths};
use nilc::clustering::{run_pipeline, PipelineInputs, PipelineOutput};
use nilc::config::{parse_config_str, validate_config};
use nilc::numerics::{hungarian_min_cost, CostMatrix};
use nilc::{EmbeddingMatrix, Error, PipelineConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NilcStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an impossible size.
    InvalidArgument = 1,
    /// Configuration rejected.
    Config = 2,
    /// Input data violates an invariant.
    InvalidInput = 3,
    Io = 4,
    /// Malformed file or model response.
    Parse = 5,
    /// Model or embedding endpoint failed.
    Transport = 6,
    /// Rust panic caught at the boundary.
    Internal = 7,
}

/// External clustering metrics.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NilcMetrics {
    pub nmi: f64,
    pub ari: f64,
    pub acc: f64,
    pub ana: f64,
}

/// Validated pipeline configuration.
pub struct NilcConfig {
    inner: PipelineConfig,
}

/// Result of a finished run.
pub struct NilcRun {
    output: PipelineOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> NilcStatus {
    match err {
        Error::Config(_) => NilcStatus::Config,
        Error::Io(_) => NilcStatus::Io,
        Error::Parse { .. } | Error::EmbeddingFormat(_) | Error::Json(_) | Error::ResponseParse(_) => NilcStatus::Parse,
        Error::Transport(_) | Error::Encoder(_) => NilcStatus::Transport,
        _ => NilcStatus::InvalidInput,
    }
}

struct Failure(NilcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        match e {
            CliError::Usage(m) => Failure(NilcStatus::Config, m),
            CliError::Runtime(e) => e.into(),
            CliError::Pipeline(f) => f.error.into(),
        }
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(NilcStatus::InvalidArgument, msg.to_string())
}

/// Runs `f`, converting errors and panics into a status plus the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NilcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NilcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            NilcStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(&format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(&format!("{name} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| invalid(&format!("{name} is null")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next nilc call on the same thread.
#[no_mangle]
pub extern "C" fn nilc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn nilc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn nilc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a JSON or `key = value` configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nilc_config_parse(text: *const c_char, out: *mut *mut NilcConfig) -> NilcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let raw = parse_config_str(str_arg(text, "text")?)?;
        let inner = validate_config(raw)?;
        *out = Box::into_raw(Box::new(NilcConfig { inner }));
        Ok(())
    })
}

/// The validated configuration with defaults filled in, as JSON.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nilc_config_to_json(config: *const NilcConfig, out: *mut *mut c_char) -> NilcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let config = config.as_ref().ok_or_else(|| invalid("config is null"))?;
        *out = into_c_string(serde_json::to_string(&config.inner).map_err(Error::from)?);
        Ok(())
    })
}

/// # Safety
/// `config` must be NULL or a handle from [`nilc_config_parse`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nilc_config_free(config: *mut NilcConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Clusters a JSONL dataset file. `labeled_path` may be NULL; when given it
/// supplies the known intents for semi-supervised mode.
///
/// # Safety
/// `config` must be a live handle, paths NUL-terminated strings (or NULL for
/// `labeled_path`), `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nilc_run_dataset(
    config: *const NilcConfig,
    dataset_path: *const c_char,
    labeled_path: *const c_char,
    out: *mut *mut NilcRun,
) -> NilcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let config = config.as_ref().ok_or_else(|| invalid("config is null"))?;
        let paths = DataPaths {
            dataset: PathBuf::from(str_arg(dataset_path, "dataset_path")?),
            labeled: if labeled_path.is_null() {
                None
            } else {
                Some(PathBuf::from(str_arg(labeled_path, "labeled_path")?))
            },
            ..DataPaths::default()
        };
        let output = execute(&config.inner, &paths)?;
        *out = Box::into_raw(Box::new(NilcRun { output }));
        Ok(())
    })
}

/// Clusters `n` row-major `dim`-vectors with their texts. New text (summaries,
/// rewrites) is embedded by the encoder the configuration names.
///
/// # Safety
/// `data` must hold `n * dim` doubles, `texts` `n` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn nilc_run_matrix(
    config: *const NilcConfig,
    data: *const f64,
    n: usize,
    dim: usize,
    texts: *const *const c_char,
    out: *mut *mut NilcRun,
) -> NilcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let config = config.as_ref().ok_or_else(|| invalid("config is null"))?;
        if data.is_null() || texts.is_null() {
            return Err(invalid("data and texts must not be null"));
        }
        let len = n.checked_mul(dim).ok_or_else(|| invalid("n * dim overflows"))?;
        let values = std::slice::from_raw_parts(data, len).to_vec();
        let texts: Vec<String> = std::slice::from_raw_parts(texts, n)
            .iter()
            .enumerate()
            .map(|(i, &t)| str_arg(t, &format!("texts[{i}]")).map(str::to_string))
            .collect::<Result<_, _>>()?;
        let matrix = EmbeddingMatrix::new(n, dim, values)?;
        let encoder = matrix_source(&config.inner, &texts, matrix.clone())?;
        let embeddings = encoder.encode_matrix(&texts)?;
        let llm = build_llm(&config.inner)?;
        let inputs = PipelineInputs {
            texts,
            embeddings,
            labeled: None,
            truth: None,
        };
        let output = run_pipeline(inputs, &config.inner, llm.as_ref(), &encoder).map_err(|f| Failure::from(f.error))?;
        *out = Box::into_raw(Box::new(NilcRun { output }));
        Ok(())
    })
}

/// Number of clustered samples.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nilc_run_len(run: *const NilcRun) -> usize {
    run.as_ref().map_or(0, |r| r.output.state.assignments.len())
}

/// Copies the cluster of every sample into `out`, which holds `len` entries.
///
/// # Safety
/// `run` must be a live handle and `out` writable for `len` entries.
#[no_mangle]
pub unsafe extern "C" fn nilc_run_assignments(run: *const NilcRun, out: *mut usize, len: usize) -> NilcStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| invalid("run is null"))?;
        let a = &run.output.state.assignments;
        if out.is_null() || len < a.len() {
            return Err(invalid(&format!("output buffer must hold {} entries", a.len())));
        }
        ptr::copy_nonoverlapping(a.as_ptr(), out, a.len());
        Ok(())
    })
}

/// Run report as JSON; free with [`nilc_string_free`].
///
/// # Safety
/// `run` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nilc_run_report_json(run: *const NilcRun, out: *mut *mut c_char) -> NilcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let run = run.as_ref().ok_or_else(|| invalid("run is null"))?;
        *out = into_c_string(serde_json::to_string(&run.output.report).map_err(Error::from)?);
        Ok(())
    })
}

/// Writes `assignments.jsonl`, `summaries.json` and `report.json` into `dir`.
///
/// # Safety
/// `run` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nilc_run_write(run: *const NilcRun, dir: *const c_char) -> NilcStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| invalid("run is null"))?;
        write_outputs(PathBuf::from(str_arg(dir, "dir")?).as_path(), &run.output)?;
        Ok(())
    })
}

/// # Safety
/// `run` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nilc_run_free(run: *mut NilcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Scores predicted clusters against integer ground-truth labels.
///
/// # Safety
/// `pred` and `truth` must hold `n` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nilc_evaluate(pred: *const usize, truth: *const usize, n: usize, out: *mut NilcMetrics) -> NilcStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if pred.is_null() || truth.is_null() {
            return Err(invalid("pred and truth must not be null"));
        }
        let m = nilc::eval::evaluate(std::slice::from_raw_parts(pred, n), std::slice::from_raw_parts(truth, n))?;
        *out = NilcMetrics {
            nmi: m.nmi,
            ari: m.ari,
            acc: m.acc,
            ana: m.ana,
        };
        Ok(())
    })
}

/// Minimum-cost assignment of rows to distinct columns of a row-major
/// `rows x cols` matrix. `row_to_col` receives `rows` entries; rows left
/// unmatched (more rows than columns) get -1.
///
/// # Safety
/// `costs` must hold `rows * cols` doubles, `row_to_col` `rows` entries, and
/// `total` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nilc_hungarian(
    costs: *const f64,
    rows: usize,
    cols: usize,
    row_to_col: *mut isize,
    total: *mut f64,
) -> NilcStatus {
    guard(|| {
        let total = out_arg(total, "total")?;
        if costs.is_null() || (rows > 0 && row_to_col.is_null()) {
            return Err(invalid("costs and row_to_col must not be null"));
        }
        let len = rows.checked_mul(cols).ok_or_else(|| invalid("rows * cols overflows"))?;
        let matrix = CostMatrix::new(rows, cols, std::slice::from_raw_parts(costs, len).to_vec())?;
        let solution = hungarian_min_cost(&matrix)?;
        let dest = std::slice::from_raw_parts_mut(row_to_col, rows);
        for (slot, col) in dest.iter_mut().zip(&solution.row_to_col) {
            *slot = col.map_or(-1, |c| c as isize);
        }
        *total = solution.total;
        Ok(())
    })
}
