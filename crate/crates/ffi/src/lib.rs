//! C ABI over `splitfed-uplift`.
//!
//! Every function returns an [`SfuStatus`]. On failure a message describing
//! the error is kept per thread and can be read with
//! [`sfu_last_error_message`]. Objects cross the boundary as opaque handles
//! that must be released with the matching `_free` function; strings
//! returned by the library are released with [`sfu_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use splitfed_uplift::collab::fedavg_aggregate;
use splitfed_uplift::eval::{auroc, default_grid, uplift_curve};
use splitfed_uplift::experiment::{report_csv, run_experiment, write_run, ExperimentConfig, ExperimentRun, SavedModel};
use splitfed_uplift::model::predict_mu;
use splitfed_uplift::nn::{Matrix, Parameters};
use splitfed_uplift::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfuStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Validation = 4,
    Data = 5,
    Dimension = 6,
    Infeasible = 7,
    Io = 8,
    Panic = 9,
    Internal = 10,
}

/// Parsed and validated experiment configuration.
pub struct SfuExperiment {
    config: ExperimentConfig,
}

/// Results of a completed experiment run.
pub struct SfuRun {
    run: ExperimentRun,
}

/// A trained model loaded from a run's `models/` directory.
pub struct SfuModel {
    saved: SavedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SfuStatus {
    match err {
        Error::Config { .. } => SfuStatus::Config,
        Error::Validation(_) => SfuStatus::Validation,
        Error::Schema(_) | Error::Parse { .. } | Error::Stratification(_) | Error::DegenerateLabels(_) | Error::Empty(_) => {
            SfuStatus::Data
        }
        Error::Dimension { .. } => SfuStatus::Dimension,
        Error::EvaluationInfeasible(_) | Error::AuditInfeasible(_) => SfuStatus::Infeasible,
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) => SfuStatus::Io,
        Error::Contract(_) => SfuStatus::Internal,
    }
}

struct Failure(SfuStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SfuStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SfuStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SfuStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {message}"));
            SfuStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SfuStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn binary(values: &[u8], what: &str) -> Result<(), Failure> {
    if values.iter().any(|&v| v > 1) {
        return Err(Failure(SfuStatus::Validation, format!("{what} must contain only 0 and 1")));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call into the library.
#[no_mangle]
pub extern "C" fn sfu_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sfu_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn sfu_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a TOML experiment document.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfu_experiment_from_toml(toml: *const c_char, out: *mut *mut SfuExperiment) -> SfuStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let config = ExperimentConfig::from_toml(str_arg(toml, "toml")?)?;
        *out = Box::into_raw(Box::new(SfuExperiment { config }));
        Ok(())
    })
}

/// # Safety
/// `exp` must be null or a handle from [`sfu_experiment_from_toml`].
#[no_mangle]
pub unsafe extern "C" fn sfu_experiment_free(exp: *mut SfuExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Runs every (method, seed) cell. Cell failures do not fail the call;
/// see [`sfu_run_cell_counts`].
///
/// # Safety
/// `exp` must be a live experiment handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfu_experiment_run(exp: *const SfuExperiment, out: *mut *mut SfuRun) -> SfuStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let exp = exp.as_ref().ok_or_else(|| null("experiment"))?;
        let run = run_experiment(&exp.config)?;
        *out = Box::into_raw(Box::new(SfuRun { run }));
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from [`sfu_experiment_run`].
#[no_mangle]
pub unsafe extern "C" fn sfu_run_free(run: *mut SfuRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Total and failed cell counts.
///
/// # Safety
/// `run` must be a live run handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfu_run_cell_counts(run: *const SfuRun, total: *mut usize, failed: *mut usize) -> SfuStatus {
    guard(|| {
        let run = &run.as_ref().ok_or_else(|| null("run"))?.run;
        *out_arg(total, "total")? = run.cells.len();
        *out_arg(failed, "failed")? = run.failed();
        Ok(())
    })
}

/// The main results table as a CSV string; free with [`sfu_string_free`].
///
/// # Safety
/// `run` must be a live run handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfu_run_report_csv(run: *const SfuRun, out: *mut *mut c_char) -> SfuStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let run = &run.as_ref().ok_or_else(|| null("run"))?.run;
        let text = String::from_utf8(report_csv(run)?).map_err(|e| Failure(SfuStatus::Internal, e.to_string()))?;
        *out = CString::new(text).map_err(|e| Failure(SfuStatus::Internal, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Writes every artifact of the run under `dir`.
///
/// # Safety
/// `run` must be a live run handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn sfu_run_write(run: *const SfuRun, dir: *const c_char) -> SfuStatus {
    guard(|| {
        let run = &run.as_ref().ok_or_else(|| null("run"))?.run;
        write_run(run, Path::new(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// Rank-based AUROC of `scores` against binary `labels`.
///
/// # Safety
/// `scores` and `labels` must point to `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfu_auroc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> SfuStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let labels = slice_arg(labels, n, "labels")?;
        binary(labels, "labels")?;
        *out = auroc(slice_arg(scores, n, "scores")?, labels)?;
        Ok(())
    })
}

/// AUUC and end-of-curve uplift on the default 100-point grid.
///
/// # Safety
/// `tau`, `t` and `y` must point to `n` elements; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfu_uplift_auuc(
    tau: *const f64,
    t: *const u8,
    y: *const u8,
    n: usize,
    auuc: *mut f64,
    end_uplift: *mut f64,
) -> SfuStatus {
    guard(|| {
        let (t, y) = (slice_arg(t, n, "t")?, slice_arg(y, n, "y")?);
        binary(t, "t")?;
        binary(y, "y")?;
        let curve = uplift_curve(slice_arg(tau, n, "tau")?, t, y, &default_grid())?;
        *out_arg(auuc, "auuc")? = curve.auuc;
        *out_arg(end_uplift, "end_uplift")? = curve.end_uplift;
        Ok(())
    })
}

#[derive(Clone)]
struct Flat(Vec<f64>);

impl Parameters for Flat {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.0]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.0]
    }
}

/// Data-size weighted mean of `k` parameter vectors of length `len`,
/// stored row-major in `params`.
///
/// # Safety
/// `params` must hold `k * len` values, `sizes` `k` values and `out` room
/// for `len` values.
#[no_mangle]
pub unsafe extern "C" fn sfu_fedavg_aggregate(
    params: *const f64,
    sizes: *const usize,
    k: usize,
    len: usize,
    out: *mut f64,
) -> SfuStatus {
    guard(|| {
        let total = k.checked_mul(len).ok_or_else(|| Failure(SfuStatus::Validation, "k * len overflows".into()))?;
        let params = slice_arg(params, total, "params")?;
        let sizes = slice_arg(sizes, k, "sizes")?;
        let sets: Vec<Flat> = (0..k).map(|i| Flat(params[i * len..(i + 1) * len].to_vec())).collect();
        let avg = fedavg_aggregate(&sets, sizes)?;
        if len > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            std::slice::from_raw_parts_mut(out, len).copy_from_slice(&avg.0);
        }
        Ok(())
    })
}

/// Loads a saved model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfu_model_load(path: *const c_char, out: *mut *mut SfuModel) -> SfuStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let saved = SavedModel::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(SfuModel { saved }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`sfu_model_load`].
#[no_mangle]
pub unsafe extern "C" fn sfu_model_free(model: *mut SfuModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input features and number of clients of a saved model.
///
/// # Safety
/// `model` must be a live model handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sfu_model_shape(model: *const SfuModel, input_dim: *mut usize, clients: *mut usize) -> SfuStatus {
    guard(|| {
        let saved = &model.as_ref().ok_or_else(|| null("model"))?.saved;
        *out_arg(input_dim, "input_dim")? = saved.model.input_dim();
        *out_arg(clients, "clients")? = saved.adapters.len();
        Ok(())
    })
}

/// Treated and control outcome probabilities for `rows` preprocessed
/// feature rows. `client < 0` uses the shared model; otherwise that
/// client's adapter is applied when it has one.
///
/// # Safety
/// `x` must hold `rows * cols` values; `mu1` and `mu0` room for `rows`.
#[no_mangle]
pub unsafe extern "C" fn sfu_model_predict(
    model: *const SfuModel,
    client: i64,
    x: *const f64,
    rows: usize,
    cols: usize,
    mu1: *mut f64,
    mu0: *mut f64,
) -> SfuStatus {
    guard(|| {
        let saved = &model.as_ref().ok_or_else(|| null("model"))?.saved;
        let n = rows.checked_mul(cols).ok_or_else(|| Failure(SfuStatus::Validation, "rows * cols overflows".into()))?;
        let x = Matrix::from_vec(rows, cols, slice_arg(x, n, "x")?.to_vec())?;
        let adapter = if client < 0 {
            None
        } else {
            let k = client as usize;
            if k >= saved.adapters.len() {
                return Err(Failure(
                    SfuStatus::Validation,
                    format!("client {k} out of range, model has {}", saved.adapters.len()),
                ));
            }
            saved.adapters[k].as_ref()
        };
        let (p1, p0) = predict_mu(&saved.model.with_adapter(adapter), &x)?;
        if rows > 0 {
            if mu1.is_null() || mu0.is_null() {
                return Err(null("mu1/mu0"));
            }
            std::slice::from_raw_parts_mut(mu1, rows).copy_from_slice(&p1);
            std::slice::from_raw_parts_mut(mu0, rows).copy_from_slice(&p0);
        }
        Ok(())
    })
}
