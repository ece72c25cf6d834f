//! C ABI over the `lgvi` crate.
//!
//! Two opaque handles: [`LgviScenario`] is a parsed and validated scenario,
//! [`LgviRun`] holds the outputs of one run. Every function returns an
//! [`LgviStatus`] or a value that is NULL/zero on failure; the message of the
//! most recent failure on the calling thread is available from
//! [`lgvi_last_error_message`]. Strings returned by the library are owned by
//! the handle they came from and stay valid until it is freed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::OnceLock;

use lgvi::config::{bundled, ResolvedScenario, ScenarioConfig, SolverKind, BUNDLED};
use lgvi::error::{Category, Error};
use lgvi::harness::{run, Overrides, RunOutput, SUMMARY_FILE, TRAJECTORY_FILE};
use lgvi::liegroup::{exp_so3, Mat3, Rotation, Vec3};

/// Result of a call. The config, model and solver codes match the exit codes of the CLI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LgviStatus {
    Ok = 0,
    ConfigError = 2,
    ModelError = 3,
    SolverError = 4,
    NullPointer = 10,
    InvalidArgument = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LgviSolver {
    Simulate = 0,
    Indirect = 1,
    Direct = 2,
}

/// A validated scenario; created by [`lgvi_scenario_from_toml`] or [`lgvi_scenario_bundled`].
pub struct LgviScenario {
    resolved: ResolvedScenario,
}

/// Outputs of one run; created by [`lgvi_scenario_run`].
pub struct LgviRun {
    output: RunOutput,
    files: Vec<(String, CString)>,
    columns: Vec<CString>,
    /// Row-major trajectory table.
    table: Vec<f64>,
    rows: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: LgviStatus, message: impl Into<String>) -> LgviStatus {
    set_error(message);
    status
}

fn from_error(e: &Error) -> LgviStatus {
    let status = match e.category() {
        Category::Config => LgviStatus::ConfigError,
        Category::Model => LgviStatus::ModelError,
        Category::Solver => LgviStatus::SolverError,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning a panic into [`LgviStatus::Panic`].
fn guard(f: impl FnOnce() -> LgviStatus) -> LgviStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".into());
        fail(LgviStatus::Panic, format!("internal panic: {msg}"))
    })
}

/// Borrows a C string as UTF-8.
///
/// # Safety
/// `s` is NULL or a valid NUL-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, LgviStatus> {
    if s.is_null() {
        return Err(fail(LgviStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(LgviStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

fn c_string(s: &str) -> CString {
    CString::new(s.replace('\0', " ")).expect("NUL bytes were replaced")
}

fn trajectory_table(csv: &str) -> Result<(Vec<CString>, Vec<f64>, usize), String> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or("empty trajectory")?;
    let columns: Vec<CString> = header.split(',').map(c_string).collect();
    let mut table = Vec::new();
    let mut rows = 0;
    for line in lines {
        for field in line.split(',') {
            table.push(field.parse::<f64>().map_err(|e| format!("trajectory field {field:?}: {e}"))?);
        }
        rows += 1;
    }
    if table.len() != rows * columns.len() {
        return Err("ragged trajectory table".into());
    }
    Ok((columns, table, rows))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn lgvi_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION.get_or_init(|| c_string(env!("CARGO_PKG_VERSION"))).as_ptr()
}

/// Message of the most recent failure on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lgvi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn lgvi_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// `out` (9 entries, row-major) receives `exp(hat(v))` for `v` (3 entries).
///
/// # Safety
/// `v` points to 3 readable doubles and `out` to 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lgvi_exp_so3(v: *const f64, out: *mut f64) -> LgviStatus {
    guard(|| {
        if v.is_null() || out.is_null() {
            return fail(LgviStatus::NullPointer, "lgvi_exp_so3: NULL argument");
        }
        let v = std::slice::from_raw_parts(v, 3);
        if v.iter().any(|x| !x.is_finite()) {
            return fail(LgviStatus::InvalidArgument, "lgvi_exp_so3: non-finite input");
        }
        let r = exp_so3(&Vec3::from_column_slice(v));
        let out = std::slice::from_raw_parts_mut(out, 9);
        for i in 0..3 {
            for j in 0..3 {
                out[3 * i + j] = r[(i, j)];
            }
        }
        LgviStatus::Ok
    })
}

/// `out` (3 entries) receives the rotation vector of `r` (9 entries, row-major),
/// with angle in `[0, pi]`. Fails with a model error if `r` is not a rotation.
///
/// # Safety
/// `r` points to 9 readable doubles and `out` to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lgvi_log_so3(r: *const f64, out: *mut f64) -> LgviStatus {
    guard(|| {
        if r.is_null() || out.is_null() {
            return fail(LgviStatus::NullPointer, "lgvi_log_so3: NULL argument");
        }
        let m = Mat3::from_row_slice(std::slice::from_raw_parts(r, 9));
        match Rotation::new(m) {
            Ok(rot) => {
                let w = rot.log();
                std::slice::from_raw_parts_mut(out, 3).copy_from_slice(w.as_slice());
                LgviStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Number of bundled scenarios.
#[no_mangle]
pub extern "C" fn lgvi_bundled_count() -> usize {
    BUNDLED.len()
}

/// Name of bundled scenario `index`, or NULL when out of range. Static storage.
#[no_mangle]
pub extern "C" fn lgvi_bundled_name(index: usize) -> *const c_char {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    NAMES
        .get_or_init(|| BUNDLED.iter().map(|b| c_string(b.name)).collect())
        .get(index)
        .map_or(ptr::null(), |s| s.as_ptr())
}

fn resolve(text: &str) -> Result<ResolvedScenario, Error> {
    ScenarioConfig::parse(text)?.resolve()
}

unsafe fn store_scenario(resolved: Result<ResolvedScenario, Error>, out: *mut *mut LgviScenario) -> LgviStatus {
    match resolved {
        Ok(resolved) => {
            *out = Box::into_raw(Box::new(LgviScenario { resolved }));
            LgviStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}

/// Parses and validates a scenario from its TOML text.
///
/// # Safety
/// `toml` is a NUL-terminated string; `out` is writable. On failure `*out` is set to NULL.
#[no_mangle]
pub unsafe extern "C" fn lgvi_scenario_from_toml(toml: *const c_char, out: *mut *mut LgviScenario) -> LgviStatus {
    guard(|| {
        if out.is_null() {
            return fail(LgviStatus::NullPointer, "lgvi_scenario_from_toml: out is NULL");
        }
        *out = ptr::null_mut();
        match text(toml, "scenario text") {
            Ok(t) => store_scenario(resolve(t), out),
            Err(status) => status,
        }
    })
}

/// Loads a bundled scenario by name (see [`lgvi_bundled_name`]).
///
/// # Safety
/// `name` is a NUL-terminated string; `out` is writable. On failure `*out` is set to NULL.
#[no_mangle]
pub unsafe extern "C" fn lgvi_scenario_bundled(name: *const c_char, out: *mut *mut LgviScenario) -> LgviStatus {
    guard(|| {
        if out.is_null() {
            return fail(LgviStatus::NullPointer, "lgvi_scenario_bundled: out is NULL");
        }
        *out = ptr::null_mut();
        let name = match text(name, "scenario name") {
            Ok(n) => n,
            Err(status) => return status,
        };
        match bundled(name) {
            Some(b) => store_scenario(resolve(b.text), out),
            None => fail(LgviStatus::ConfigError, format!("no bundled scenario named {name:?}")),
        }
    })
}

unsafe fn with_overrides(scenario: *mut LgviScenario, overrides: Overrides) -> LgviStatus {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(LgviStatus::NullPointer, "scenario is NULL");
        };
        let mut next = s.resolved.clone();
        match overrides.apply(&mut next) {
            Ok(()) => {
                s.resolved = next;
                LgviStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Replaces the random seed.
///
/// # Safety
/// `scenario` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lgvi_scenario_set_seed(scenario: *mut LgviScenario, seed: u64) -> LgviStatus {
    with_overrides(scenario, Overrides { seed: Some(seed), ..Overrides::default() })
}

/// Replaces the convergence tolerance of both solvers.
///
/// # Safety
/// `scenario` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lgvi_scenario_set_tolerance(scenario: *mut LgviScenario, tolerance: f64) -> LgviStatus {
    with_overrides(scenario, Overrides { tolerance: Some(tolerance), ..Overrides::default() })
}

/// Replaces the iteration limit of both solvers.
///
/// # Safety
/// `scenario` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lgvi_scenario_set_max_iterations(scenario: *mut LgviScenario, max_iterations: usize) -> LgviStatus {
    with_overrides(scenario, Overrides { max_iterations: Some(max_iterations), ..Overrides::default() })
}

/// Selects the solver; the indirect solver is limited to the dumbbell and pendulum.
///
/// # Safety
/// `scenario` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lgvi_scenario_set_solver(scenario: *mut LgviScenario, solver: LgviSolver) -> LgviStatus {
    let solver = match solver {
        LgviSolver::Simulate => SolverKind::Simulate,
        LgviSolver::Indirect => SolverKind::Indirect,
        LgviSolver::Direct => SolverKind::Direct,
    };
    with_overrides(scenario, Overrides { solver: Some(solver), ..Overrides::default() })
}

/// # Safety
/// `scenario` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lgvi_scenario_free(scenario: *mut LgviScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the scenario. A solver that stops without converging still yields a
/// run; check [`lgvi_run_converged`].
///
/// # Safety
/// `scenario` is a live handle; `out` is writable. On failure `*out` is set to NULL.
#[no_mangle]
pub unsafe extern "C" fn lgvi_scenario_run(scenario: *const LgviScenario, out: *mut *mut LgviRun) -> LgviStatus {
    guard(|| {
        if out.is_null() {
            return fail(LgviStatus::NullPointer, "lgvi_scenario_run: out is NULL");
        }
        *out = ptr::null_mut();
        let Some(s) = scenario.as_ref() else {
            return fail(LgviStatus::NullPointer, "scenario is NULL");
        };
        let output = match run(&s.resolved) {
            Ok(o) => o,
            Err(e) => return from_error(&e),
        };
        let files = output.files.iter().map(|(n, c)| (n.clone(), c_string(c))).collect();
        let (columns, table, rows) = match trajectory_table(output.file(TRAJECTORY_FILE).unwrap_or("")) {
            Ok(t) => t,
            Err(e) => return fail(LgviStatus::Panic, format!("internal: {e}")),
        };
        *out = Box::into_raw(Box::new(LgviRun { output, files, columns, table, rows }));
        LgviStatus::Ok
    })
}

/// # Safety
/// `run` is NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lgvi_run_free(run: *mut LgviRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// False for NULL.
///
/// # Safety
/// `run` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lgvi_run_converged(run: *const LgviRun) -> bool {
    run.as_ref().is_some_and(|r| r.output.converged())
}

/// Control cost; NaN for NULL.
///
/// # Safety
/// `run` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lgvi_run_cost(run: *const LgviRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.output.summary.cost)
}

/// Terminal violation of the re-propagated trajectory; NaN for NULL.
///
/// # Safety
/// `run` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lgvi_run_violation(run: *const LgviRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.output.summary.violation)
}

/// Solver iterations; zero for NULL.
///
/// # Safety
/// `run` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lgvi_run_iterations(run: *const LgviRun) -> usize {
    run.as_ref().map_or(0, |r| r.output.summary.iterations)
}

/// Number of integration steps; zero for NULL.
///
/// # Safety
/// `run` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lgvi_run_steps(run: *const LgviRun) -> usize {
    run.as_ref().map_or(0, |r| r.output.summary.steps)
}

/// Contents of an output file by name (`trajectory.csv`, `diagnostics.csv`,
/// `convergence.csv`, `summary.json`), or NULL.
///
/// # Safety
/// `run` is NULL or a live handle; `name` is NULL or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lgvi_run_file(run: *const LgviRun, name: *const c_char) -> *const c_char {
    let Some(r) = run.as_ref() else {
        set_error("run is NULL");
        return ptr::null();
    };
    let Ok(name) = text(name, "file name") else {
        return ptr::null();
    };
    match r.files.iter().find(|(n, _)| n == name) {
        Some((_, c)) => c.as_ptr(),
        None => {
            set_error(format!("no output file named {name:?}"));
            ptr::null()
        }
    }
}

/// The summary as JSON, or NULL.
///
/// # Safety
/// `run` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lgvi_run_summary_json(run: *const LgviRun) -> *const c_char {
    run.as_ref()
        .and_then(|r| r.files.iter().find(|(n, _)| n == SUMMARY_FILE))
        .map_or(ptr::null(), |(_, c)| c.as_ptr())
}

/// Shape of the trajectory table: one row per state, columns as in `trajectory.csv`.
///
/// # Safety
/// `run` is a live handle; `rows` and `columns` are writable.
#[no_mangle]
pub unsafe extern "C" fn lgvi_run_trajectory_shape(run: *const LgviRun, rows: *mut usize, columns: *mut usize) -> LgviStatus {
    let Some(r) = run.as_ref() else {
        return fail(LgviStatus::NullPointer, "run is NULL");
    };
    if rows.is_null() || columns.is_null() {
        return fail(LgviStatus::NullPointer, "lgvi_run_trajectory_shape: NULL argument");
    }
    *rows = r.rows;
    *columns = r.columns.len();
    LgviStatus::Ok
}

/// Row-major trajectory table owned by the run, or NULL.
///
/// # Safety
/// `run` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lgvi_run_trajectory_data(run: *const LgviRun) -> *const f64 {
    run.as_ref().map_or(ptr::null(), |r| r.table.as_ptr())
}

/// Name of trajectory column `index`, or NULL when out of range.
///
/// # Safety
/// `run` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lgvi_run_trajectory_column(run: *const LgviRun, index: usize) -> *const c_char {
    run.as_ref()
        .and_then(|r| r.columns.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Writes every output file, plus `timing.json`, into `dir`.
///
/// # Safety
/// `run` is a live handle; `dir` is a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn lgvi_run_write(run: *const LgviRun, dir: *const c_char) -> LgviStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(LgviStatus::NullPointer, "run is NULL");
        };
        match text(dir, "output directory") {
            Ok(d) => match r.output.write(Path::new(d)) {
                Ok(()) => LgviStatus::Ok,
                Err(e) => from_error(&e),
            },
            Err(status) => status,
        }
    })
}
