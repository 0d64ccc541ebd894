//! C interface to the simulator and trained surrogates.
//!
//! Objects cross the boundary as opaque handles. Constructors such as
//! `gs_platform_builtin` or `gs_surrogate_load` fill a handle slot and the
//! matching `gs_*_free` releases it.
//! Every fallible call returns a [`GsStatus`]; on failure the message is
//! available from [`gs_last_error_message`] on the same thread until the
//! next failing call. Panics are caught and reported as `GS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gridsurrogate::checkpoint::{prediction_matrix, Surrogate};
use gridsurrogate::sim::{run_simulation, TraceRecord};
use gridsurrogate::trace_io::{feature_rows, write_trace_csv, write_workload_csv};
use gridsurrogate::workload::{generate_workload, JobSpec};
use gridsurrogate::{builtin_platform, parse_platform, Error, PlatformSpec, Scenario};

pub const GS_SCENARIO_HOMOGENEOUS: i32 = 0;
pub const GS_SCENARIO_HETEROGENEOUS: i32 = 1;

/// Result of every fallible call. Values 2 to 8 match the exit codes of the
/// `gridsurrogate` command line.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    GsOk = 0,
    GsInvalidArgument = 1,
    GsManifestError = 2,
    GsIoError = 3,
    GsMissingArtifact = 4,
    GsFormatError = 5,
    GsSimulationError = 6,
    GsModelError = 7,
    GsEvaluationError = 8,
    GsPanic = 9,
}

impl From<&Error> for GsStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => GsStatus::GsManifestError,
            3 => GsStatus::GsIoError,
            4 => GsStatus::GsMissingArtifact,
            5 => GsStatus::GsFormatError,
            6 => GsStatus::GsSimulationError,
            7 => GsStatus::GsModelError,
            _ => GsStatus::GsEvaluationError,
        }
    }
}

/// Platform description (opaque).
pub struct GsPlatform(PlatformSpec);

/// One simulated workload with its trace (opaque).
pub struct GsSimulation {
    jobs: Vec<JobSpec>,
    trace: Vec<TraceRecord>,
}

/// Trained surrogate loaded from a checkpoint (opaque).
pub struct GsSurrogate(Surrogate);

/// Row-major prediction matrix, one row per job (opaque).
pub struct GsPrediction {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

/// Per-job observables of a trace row. Times are seconds.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GsTraceRecord {
    pub simulation_id: u64,
    pub job_index: u64,
    pub submission_time: f64,
    pub start_time: f64,
    pub end_time: f64,
    pub compute_time: f64,
    pub input_files_transfer_time: f64,
    pub output_files_transfer_time: f64,
    pub input_bytes: u64,
    pub output_bytes: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(GsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(GsStatus::from(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(GsStatus::GsInvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GsStatus::GsOk,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            GsStatus::GsPanic
        }
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(format!("{what} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(format!("{what} handle is NULL")))
}

fn scenario(value: i32) -> Result<Scenario, Failure> {
    match value {
        GS_SCENARIO_HOMOGENEOUS => Ok(Scenario::Homogeneous),
        GS_SCENARIO_HETEROGENEOUS => Ok(Scenario::Heterogeneous),
        other => Err(invalid(format!("unknown scenario {other}"))),
    }
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer is NULL"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Built-in platform preset of a scenario.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn gs_platform_builtin(scenario_id: i32, out: *mut *mut GsPlatform) -> GsStatus {
    guard(|| store(out, GsPlatform(builtin_platform(scenario(scenario_id)?))))
}

/// Parses a platform description from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gs_platform_from_json(json: *const c_char, out: *mut *mut GsPlatform) -> GsStatus {
    guard(|| {
        let p = parse_platform(c_str(json, "json")?).map_err(Error::from)?;
        store(out, GsPlatform(p))
    })
}

/// # Safety
/// `platform` must come from a `gs_platform_*` constructor and not be used
/// afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn gs_platform_free(platform: *mut GsPlatform) {
    if !platform.is_null() {
        drop(Box::from_raw(platform));
    }
}

/// Generates a workload of `n_jobs` jobs and simulates it. Negative
/// `n_jobs` is rejected with `GS_INVALID_ARGUMENT`.
///
/// # Safety
/// `platform` must be a live handle, `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gs_simulate(
    platform: *const GsPlatform,
    scenario_id: i32,
    n_jobs: i64,
    simulation_id: u64,
    seed: u64,
    out: *mut *mut GsSimulation,
) -> GsStatus {
    guard(|| {
        let platform = handle(platform, "platform")?;
        let scenario = scenario(scenario_id)?;
        let n = usize::try_from(n_jobs).map_err(|_| invalid(format!("n_jobs must be non-negative, got {n_jobs}")))?;
        let (jobs, dataset) = generate_workload(scenario, n, simulation_id, seed);
        let trace = run_simulation(&platform.0, &jobs, &dataset).map_err(Error::from)?;
        store(out, GsSimulation { jobs, trace })
    })
}

/// Number of jobs (and trace rows) in a simulation; 0 for NULL.
///
/// # Safety
/// `sim` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gs_simulation_len(sim: *const GsSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.trace.len())
}

/// Copies trace row `index` into `out`.
///
/// # Safety
/// `sim` must be a live handle and `out` point to writable memory.
#[no_mangle]
pub unsafe extern "C" fn gs_simulation_record(sim: *const GsSimulation, index: usize, out: *mut GsTraceRecord) -> GsStatus {
    guard(|| {
        let sim = handle(sim, "simulation")?;
        let r = sim
            .trace
            .get(index)
            .ok_or_else(|| invalid(format!("record {index} out of range (len {})", sim.trace.len())))?;
        if out.is_null() {
            return Err(invalid("output pointer is NULL"));
        }
        *out = GsTraceRecord {
            simulation_id: r.simulation_id,
            job_index: r.job_index,
            submission_time: r.submission_time,
            start_time: r.start_time,
            end_time: r.end_time,
            compute_time: r.compute_time,
            input_files_transfer_time: r.input_files_transfer_time,
            output_files_transfer_time: r.output_files_transfer_time,
            input_bytes: r.input_bytes,
            output_bytes: r.output_bytes,
        };
        Ok(())
    })
}

/// Writes the workload and trace as CSV files. Either path may be NULL to
/// skip that file.
///
/// # Safety
/// `sim` must be a live handle; paths NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gs_simulation_write_csv(
    sim: *const GsSimulation,
    workload_path: *const c_char,
    trace_path: *const c_char,
) -> GsStatus {
    guard(|| {
        let sim = handle(sim, "simulation")?;
        let create = |p: &str| {
            std::fs::File::create(p).map_err(|e| Failure::from(Error::io(format!("writing {p}"), e)))
        };
        if !workload_path.is_null() {
            let p = c_str(workload_path, "workload_path")?;
            write_workload_csv(&sim.jobs, create(p)?).map_err(|e| Failure::from(Error::from(e)))?;
        }
        if !trace_path.is_null() {
            let p = c_str(trace_path, "trace_path")?;
            write_trace_csv(&sim.trace, create(p)?).map_err(|e| Failure::from(Error::from(e)))?;
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`gs_simulate`] and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn gs_simulation_free(sim: *mut GsSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Loads a checkpoint written by `gridsurrogate train`.
///
/// # Safety
/// `path` must be NUL-terminated, `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gs_surrogate_load(path: *const c_char, out: *mut *mut GsSurrogate) -> GsStatus {
    guard(|| {
        let s = Surrogate::load(&PathBuf::from(c_str(path, "path")?))?;
        store(out, GsSurrogate(s))
    })
}

/// Predicts the observables of every job of `sim` from its workload alone.
/// The simulation's trace is not consulted.
///
/// # Safety
/// Both handles must be live, `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn gs_surrogate_predict(
    surrogate: *const GsSurrogate,
    sim: *const GsSimulation,
    out: *mut *mut GsPrediction,
) -> GsStatus {
    guard(|| {
        let s = &handle(surrogate, "surrogate")?.0;
        let sim = handle(sim, "simulation")?;
        let pred = s.predict(&feature_rows(s.schema, &sim.jobs))?;
        let m = prediction_matrix(&pred);
        let (rows, cols) = m.dim();
        store(
            out,
            GsPrediction {
                rows,
                cols,
                values: m.iter().copied().collect(),
            },
        )
    })
}

/// # Safety
/// `surrogate` must come from [`gs_surrogate_load`] and not be used
/// afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn gs_surrogate_free(surrogate: *mut GsSurrogate) {
    if !surrogate.is_null() {
        drop(Box::from_raw(surrogate));
    }
}

/// # Safety
/// `pred` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gs_prediction_rows(pred: *const GsPrediction) -> usize {
    pred.as_ref().map_or(0, |p| p.rows)
}

/// Observables per row, in the order compute_time,
/// input_files_transfer_time, output_files_transfer_time, start_time,
/// end_time.
///
/// # Safety
/// `pred` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gs_prediction_cols(pred: *const GsPrediction) -> usize {
    pred.as_ref().map_or(0, |p| p.cols)
}

/// Row-major values, `rows * cols` long, owned by the handle.
///
/// # Safety
/// `pred` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gs_prediction_data(pred: *const GsPrediction) -> *const f64 {
    pred.as_ref().map_or(ptr::null(), |p| p.values.as_ptr())
}

/// # Safety
/// `pred` must come from [`gs_surrogate_predict`] and not be used
/// afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn gs_prediction_free(pred: *mut GsPrediction) {
    if !pred.is_null() {
        drop(Box::from_raw(pred));
    }
}

/// Runs the command line with `argv[0..argc]` and returns its exit code.
///
/// # Safety
/// `argv` must hold `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gs_run_cli(argc: i32, argv: *const *const c_char) -> i32 {
    let mut args = Vec::new();
    let status = guard(|| {
        if argc < 0 || (argc > 0 && argv.is_null()) {
            return Err(invalid("argv is NULL or argc negative"));
        }
        for i in 0..argc as usize {
            args.push(c_str(*argv.add(i), "argv entry")?.to_owned());
        }
        Ok(())
    });
    if status != GsStatus::GsOk {
        return status as i32;
    }
    catch_unwind(|| gridsurrogate::cli::main_with_args(args)).unwrap_or(GsStatus::GsPanic as i32)
}
