//! C ABI over `ddam-core`.
//!
//! Every function returns a [`DdamStatus`]; outputs go through pointer
//! arguments. Objects are opaque handles created by `*_new`/`*_run` calls
//! and released with the matching `*_free`. After a non-`Ok` status,
//! `ddam_last_error_message` describes the failure on the calling thread.
//! Panics never cross the boundary; they surface as `DDAM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ddam_core::channel::{generate_paths, realize_channel, trial_rng};
use ddam_core::config::{coherence_partition, SystemConfig};
use ddam_core::experiments::{run_experiment, ExperimentSpec, ExperimentTable};
use ddam_core::metrics::{guard_overhead, qam_awgn_ber, GuardScheme};
use ddam_core::zf::{design_path_zf, zf_feasibility, Verdict};
use ddam_core::DdamError;

/// Result code of every exported function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DdamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Infeasible = 4,
    UnknownExperiment = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Zero-forcing feasibility verdict.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DdamVerdict {
    Infeasible = 0,
    Feasible = 1,
    Undetermined = 2,
}

/// Opaque system configuration.
pub struct DdamConfig(SystemConfig);

/// Opaque experiment result table.
pub struct DdamTable(ExperimentTable);

/// One summary row of a result table. String fields are reachable through
/// `ddam_table_row_labels`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DdamRow {
    pub param_value: f64,
    pub seed: u64,
    pub trials: usize,
    pub mean: f64,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &DdamError) -> DdamStatus {
    match err {
        DdamError::Contract(_) | DdamError::Config(_) | DdamError::DistinctDelays { .. } => DdamStatus::InvalidArgument,
        DdamError::Numerical(_) => DdamStatus::Numerical,
        DdamError::Infeasible(_) => DdamStatus::Infeasible,
        DdamError::UnknownExperiment(_) => DdamStatus::UnknownExperiment,
        DdamError::Io(_) | DdamError::Json(_) => DdamStatus::Io,
    }
}

struct Failure(DdamStatus, String);

impl From<DdamError> for Failure {
    fn from(e: DdamError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DdamStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DdamStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            DdamStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DdamStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(DdamStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn ddam_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn ddam_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ddam_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// New configuration with the default simulation parameters.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddam_config_new(out: *mut *mut DdamConfig) -> DdamStatus {
    guard(|| write(out, Box::into_raw(Box::new(DdamConfig(SystemConfig::default()))), "out"))
}

/// Configuration read from a TOML file; missing keys take defaults.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddam_config_from_toml(path: *const c_char, out: *mut *mut DdamConfig) -> DdamStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let cfg = SystemConfig::from_toml_file(Path::new(path))?;
        write(out, Box::into_raw(Box::new(DdamConfig(cfg))), "out")
    })
}

/// # Safety
/// `cfg` must come from `ddam_config_new`/`ddam_config_from_toml` and not
/// have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ddam_config_free(cfg: *mut DdamConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets the antenna, stream and path counts, then validates the result.
/// The handle is unchanged when validation fails.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn ddam_config_set_dimensions(cfg: *mut DdamConfig, m_t: usize, m_r: usize, n_s: usize, l: usize) -> DdamStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let next = SystemConfig { num_tx_antennas: m_t, num_rx_antennas: m_r, num_streams: n_s, num_paths: l, ..cfg.0.clone() };
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// Sets the transmit power (W) and the speed (m/s), then validates.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn ddam_config_set_link(cfg: *mut DdamConfig, tx_power_watts: f64, velocity_mps: f64) -> DdamStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let next = SystemConfig { tx_power_watts, velocity_mps, ..cfg.0.clone() };
        next.validate()?;
        cfg.0 = next;
        Ok(())
    })
}

/// Configuration as JSON; free with `ddam_string_free`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddam_config_to_json(cfg: *const DdamConfig, out: *mut *mut c_char) -> DdamStatus {
    guard(|| {
        let cfg = deref(cfg, "cfg")?;
        let text = serde_json::to_string(&cfg.0).map_err(DdamError::from)?;
        write(out, into_c_string(text), "out")
    })
}

/// Zero-forcing feasibility verdict for the given dimensions.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddam_feasibility(m_t: usize, m_r: usize, n_s: usize, l: usize, out: *mut DdamVerdict) -> DdamStatus {
    guard(|| {
        if m_t == 0 || m_r == 0 || n_s == 0 || l == 0 || n_s > m_r {
            return Err(Failure(DdamStatus::InvalidArgument, "dimensions must be positive with n_s <= m_r".into()));
        }
        let v = match zf_feasibility(m_t, m_r, n_s, l).verdict {
            Verdict::Infeasible => DdamVerdict::Infeasible,
            Verdict::Feasible => DdamVerdict::Feasible,
            Verdict::Undetermined => DdamVerdict::Undetermined,
        };
        write(out, v, "out")
    })
}

/// Guard-interval overhead of DDAM (one guard per path-invariant block) and
/// the cyclic-prefix overhead of OFDM with `num_subcarriers`, as fractions.
///
/// # Safety
/// `cfg` must be a live handle; both outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddam_guard_overheads(cfg: *const DdamConfig, num_subcarriers: usize, ddam_out: *mut f64, ofdm_out: *mut f64) -> DdamStatus {
    guard(|| {
        let cfg = &deref(cfg, "cfg")?.0;
        let tb = coherence_partition(cfg);
        let m = cfg.max_delay_tap();
        write(ddam_out, guard_overhead(GuardScheme::Ddam { max_delay_tap: m, samples_per_invariant: tb.samples_per_invariant }), "ddam_out")?;
        write(ofdm_out, guard_overhead(GuardScheme::Ofdm { cp_length: m, num_subcarriers }), "ofdm_out")
    })
}

/// Path-based ZF spectral efficiency (bit/s/Hz) of one seeded channel draw.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddam_zf_rate(cfg: *const DdamConfig, seed: u64, trial: u64, out: *mut f64) -> DdamStatus {
    guard(|| {
        let cfg = &deref(cfg, "cfg")?.0;
        let paths = generate_paths(cfg, &mut trial_rng(seed, trial))?;
        let ch = realize_channel(&paths, cfg);
        let zf = design_path_zf(&ch, cfg.num_streams, cfg.tx_power_watts, cfg.noise_variance())?;
        write(out, zf.capacity.rate_bps_hz, "out")
    })
}

/// Square or 128-point QAM bit error rate on AWGN at a linear SNR.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddam_qam_ber(snr_linear: f64, order: usize, out: *mut f64) -> DdamStatus {
    guard(|| write(out, qam_awgn_ber(snr_linear, order)?, "out"))
}

/// Runs a registered experiment. `cfg` may be null for defaults.
///
/// # Safety
/// `name` must be a NUL-terminated string, `cfg` null or a live handle,
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddam_run_experiment(name: *const c_char, seed: u64, trials: usize, cfg: *const DdamConfig, out: *mut *mut DdamTable) -> DdamStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let config = cfg.as_ref().map_or_else(SystemConfig::default, |c| c.0.clone());
        let table = run_experiment(&ExperimentSpec { name: name.into(), seed, trials, config })?;
        write(out, Box::into_raw(Box::new(DdamTable(table))), "out")
    })
}

/// # Safety
/// `table` must come from `ddam_run_experiment` and not have been freed.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ddam_table_free(table: *mut DdamTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// # Safety
/// `table` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddam_table_num_rows(table: *const DdamTable, out: *mut usize) -> DdamStatus {
    guard(|| write(out, deref(table, "table")?.0.rows.len(), "out"))
}

/// # Safety
/// `table` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddam_table_row(table: *const DdamTable, index: usize, out: *mut DdamRow) -> DdamStatus {
    guard(|| {
        let rows = &deref(table, "table")?.0.rows;
        let r = rows.get(index).ok_or_else(|| Failure(DdamStatus::OutOfRange, format!("row {index} of {}", rows.len())))?;
        let row = DdamRow { param_value: r.param_value, seed: r.seed, trials: r.trials, mean: r.mean, median: r.median, p10: r.p10, p90: r.p90 };
        write(out, row, "out")
    })
}

/// Scheme, parameter name and metric of a row; each string is freed with
/// `ddam_string_free`. Any output pointer may be null to skip it.
///
/// # Safety
/// `table` must be a live handle; non-null outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddam_table_row_labels(
    table: *const DdamTable,
    index: usize,
    scheme: *mut *mut c_char,
    param_name: *mut *mut c_char,
    metric: *mut *mut c_char,
) -> DdamStatus {
    guard(|| {
        let rows = &deref(table, "table")?.0.rows;
        let r = rows.get(index).ok_or_else(|| Failure(DdamStatus::OutOfRange, format!("row {index} of {}", rows.len())))?;
        for (dst, text) in [(scheme, &r.scheme), (param_name, &r.param_name), (metric, &r.metric)] {
            if !dst.is_null() {
                dst.write(into_c_string(text.clone()));
            }
        }
        Ok(())
    })
}

/// Whole table as CSV; free with `ddam_string_free`.
///
/// # Safety
/// `table` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ddam_table_to_csv(table: *const DdamTable, out: *mut *mut c_char) -> DdamStatus {
    guard(|| write(out, into_c_string(deref(table, "table")?.0.to_csv()), "out"))
}
