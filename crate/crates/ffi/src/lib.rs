//! C interface to the simulator.
//!
//! Every fallible call returns a [`VrlStatus`]. On failure a human-readable
//! message is kept per thread and can be fetched with [`vrl_last_error`].
//! Configs are opaque handles owned by the caller and released with
//! [`vrl_config_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vrl_core::config::{load_config, Preset, ScenarioConfig};
use vrl_core::metrics::{analyze_file, MetricsReport};
use vrl_core::routing::ProtocolKind;
use vrl_core::runner;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VrlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Run = 5,
    Analysis = 6,
    Panic = 7,
}

/// Scenario configuration handle.
pub struct VrlConfig {
    inner: ScenarioConfig,
}

/// Metrics of one run. Ratios that are undefined (nothing sent, nothing
/// received) are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VrlMetrics {
    pub pdr_pct: f64,
    pub e2e_delay_ms: f64,
    pub loss_pct: f64,
    pub nrl: f64,
    pub throughput_kbps: f64,
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub routing_packets: u64,
    pub received_bytes: u64,
    /// First and last data event in seconds, NaN without data.
    pub start_s: f64,
    pub stop_s: f64,
}

impl From<&MetricsReport> for VrlMetrics {
    fn from(r: &MetricsReport) -> Self {
        let f = |v: Option<f64>| v.unwrap_or(f64::NAN);
        VrlMetrics {
            pdr_pct: f(r.pdr),
            e2e_delay_ms: f(r.e2e_ms),
            loss_pct: f(r.loss_pct),
            nrl: f(r.nrl),
            throughput_kbps: f(r.throughput_kbps),
            sent: r.sent,
            received: r.received,
            dropped: r.dropped,
            in_flight: r.in_flight,
            routing_packets: r.routing,
            received_bytes: r.received_bytes,
            start_s: f(r.start.map(|t| t.as_secs_f64())),
            stop_s: f(r.stop.map(|t| t.as_secs_f64())),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(VrlStatus, String);

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

/// Runs `f`, records any failure message and converts panics to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VrlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            VrlStatus::Ok
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
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            VrlStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(VrlStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(VrlStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(VrlStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn hand_out(cfg: ScenarioConfig, out: *mut *mut VrlConfig) {
    // SAFETY: callers checked `out` for null.
    unsafe { *out = Box::into_raw(Box::new(VrlConfig { inner: cfg })) };
}

/// Creates a config from a preset name: `low`, `medium` or `high`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vrl_config_preset(name: *const c_char, out: *mut *mut VrlConfig) -> VrlStatus {
    guard(|| {
        non_null(out, "out")?;
        let name = str_arg(name, "name")?;
        let preset: Preset = name.parse().map_err(|e| Failure(VrlStatus::InvalidArgument, format!("{e}")))?;
        hand_out(ScenarioConfig::preset(preset), out);
        Ok(())
    })
}

/// Loads a config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vrl_config_load(path: *const c_char, out: *mut *mut VrlConfig) -> VrlStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = str_arg(path, "path")?;
        let cfg = load_config(Path::new(path)).map_err(|e| Failure(VrlStatus::Config, format!("{path}: {e}")))?;
        hand_out(cfg, out);
        Ok(())
    })
}

/// Selects the routing protocol: `AODV`, `AOMDV`, `DSR` or `DSDV`.
///
/// # Safety
/// `cfg` must be a live handle and `protocol` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vrl_config_set_protocol(cfg: *mut VrlConfig, protocol: *const c_char) -> VrlStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        let p: ProtocolKind = str_arg(protocol, "protocol")?
            .parse()
            .map_err(|e| Failure(VrlStatus::InvalidArgument, format!("{e}")))?;
        (*cfg).inner.protocol = Some(p);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vrl_config_set_seed(cfg: *mut VrlConfig, seed: u64) -> VrlStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        (*cfg).inner.seed = seed;
        Ok(())
    })
}

/// Limits the number of simulated vehicles. Zero removes the limit.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vrl_config_set_vehicle_cap(cfg: *mut VrlConfig, cap: u64) -> VrlStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        (*cfg).inner.vehicle_cap = (cap > 0).then_some(cap as usize);
        Ok(())
    })
}

/// Shortens the simulation. Must not end before the traffic window does.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vrl_config_set_sim_end(cfg: *mut VrlConfig, seconds: f64) -> VrlStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        if !(seconds.is_finite() && seconds > 0.0) {
            return Err(Failure(VrlStatus::InvalidArgument, format!("sim end {seconds} is not a positive time")));
        }
        (*cfg).inner.sim_end = vrl_core::time::SimTime::from_secs_f64(seconds);
        Ok(())
    })
}

/// Releases a config. Null is ignored.
///
/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vrl_config_free(cfg: *mut VrlConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Simulates the config, writes `<cell>.trace` and `<cell>.report.txt` into
/// `out_dir` and fills `out` with the metrics.
///
/// # Safety
/// `cfg` must be a live handle, `out_dir` a NUL-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn vrl_run(cfg: *const VrlConfig, out_dir: *const c_char, out: *mut VrlMetrics) -> VrlStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        non_null(out, "out")?;
        let dir = str_arg(out_dir, "out_dir")?;
        let res = runner::run(&(*cfg).inner, Path::new(dir)).map_err(|e| Failure(VrlStatus::Run, e.to_string()))?;
        *out = VrlMetrics::from(&res.report);
        Ok(())
    })
}

/// Computes metrics from an existing trace file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vrl_analyze_trace(path: *const c_char, out: *mut VrlMetrics) -> VrlStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = str_arg(path, "path")?;
        let report = analyze_file(Path::new(path)).map_err(|e| Failure(VrlStatus::Analysis, format!("{path}: {e}")))?;
        *out = VrlMetrics::from(&report);
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf`, truncating
/// and always NUL-terminating when `len > 0`. Returns the full message
/// length excluding the terminator, so a caller can size a retry.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn vrl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vrl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
