//! C interface. Every function returns an [`NschsStatus`]; on failure the
//! message is kept per thread and read back with
//! [`nschs_last_error_message`]. Scalar fields are copied out as `nx * ny`
//! doubles with cell `(i, j)` at index `i * ny + j`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nschs::diagnostics::{adsorption_statistic, TraceRecord};
use nschs::io::config::{load_config, parse_config, ConfigError, VALIDATION_SAMPLES};
use nschs::io::driver::{DriverError, Simulation};
use nschs::io::snapshot::write_snapshot;
use nschs::params::validate_assumptions;
use nschs::potentials::{
    eval_s_phi, eval_s_rho_eps, eval_s_rho_singular, FloryHuggins, Order, RegularizedPotential,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NschsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    /// An invariant monitor stopped the run; the state is the last accepted one.
    MonitorTrip = 4,
    Io = 5,
    /// Argument outside the potential's domain.
    Domain = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NschsField {
    Phi = 0,
    Rho = 1,
    Pressure = 2,
    Mu = 3,
    Psi = 4,
    /// `(nx + 1) * ny` x-face velocities.
    Ux = 5,
    /// `nx * (ny + 1)` y-face velocities.
    Uy = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NschsPotential {
    /// `(s^2 - 1)^2 / 4`
    Quartic = 0,
    FloryHuggins = 1,
    FloryHugginsRegularized = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NschsPotentialParams {
    pub theta1: f64,
    pub theta2: f64,
    pub eps1: f64,
    /// Used by the regularized potential only.
    pub eps: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NschsEnergy {
    pub kinetic: f64,
    pub grad_phi: f64,
    pub laplace_phi: f64,
    pub s_phi_bulk: f64,
    pub grad_rho: f64,
    pub s_rho_bulk: f64,
    pub coupling: f64,
    pub penalty: f64,
    pub total: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NschsDiagnostics {
    pub t: f64,
    pub mass_phi: f64,
    pub mass_rho: f64,
    pub dissipation: f64,
    pub energy_residual: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub eta: f64,
    pub clamp_events: u64,
    pub max_u: f64,
    pub adsorption: f64,
    pub energy_lower_bound: f64,
    pub steps: u64,
}

/// Opaque simulation handle.
pub struct NschsSimulation {
    sim: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: NschsStatus, msg: impl Into<String>) -> NschsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> NschsStatus) -> NschsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(NschsStatus::Panic, msg)
        }
    }
}

fn config_status(e: &ConfigError) -> NschsStatus {
    match e {
        ConfigError::Io { .. } => NschsStatus::Io,
        _ => NschsStatus::Config,
    }
}

fn driver_status(e: &DriverError) -> NschsStatus {
    match e {
        DriverError::Config(c) => config_status(c),
        DriverError::Trip(_) => NschsStatus::MonitorTrip,
        DriverError::Io(_) => NschsStatus::Io,
        DriverError::Usage(_) => NschsStatus::InvalidArgument,
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, NschsStatus> {
    if path.is_null() {
        return Err(fail(NschsStatus::NullPointer, "path is null"));
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(NschsStatus::InvalidArgument, "path is not UTF-8")),
    }
}

unsafe fn handle<'a>(sim: *const NschsSimulation) -> Result<&'a NschsSimulation, NschsStatus> {
    sim.as_ref()
        .ok_or_else(|| fail(NschsStatus::NullPointer, "simulation handle is null"))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Load and validate a configuration file and build its initial state.
/// On success `*out` owns a handle to release with [`nschs_simulation_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nschs_simulation_from_config_file(
    path: *const c_char,
    out: *mut *mut NschsSimulation,
) -> NschsStatus {
    guard(|| {
        if out.is_null() {
            return fail(NschsStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = tri!(path_arg(path));
        let cfg = match parse_config(&path) {
            Ok(c) => c,
            Err(e) => return fail(config_status(&e), e.to_string()),
        };
        match Simulation::from_config(&cfg) {
            Ok(sim) => {
                *out = Box::into_raw(Box::new(NschsSimulation { sim }));
                NschsStatus::Ok
            }
            Err(e) => fail(config_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `sim` must come from [`nschs_simulation_from_config_file`] and not be
/// used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn nschs_simulation_free(sim: *mut NschsSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advance up to `n_steps` steps. `*steps_done` (optional) receives the
/// number of accepted steps; a monitor trip returns `MonitorTrip`.
///
/// # Safety
/// `sim` must be a live handle; `steps_done` null or writable.
#[no_mangle]
pub unsafe extern "C" fn nschs_simulation_step(
    sim: *mut NschsSimulation,
    n_steps: u64,
    steps_done: *mut u64,
) -> NschsStatus {
    guard(|| {
        let Some(h) = sim.as_mut() else {
            return fail(NschsStatus::NullPointer, "simulation handle is null");
        };
        let mut done = 0u64;
        let mut status = NschsStatus::Ok;
        for _ in 0..n_steps {
            if let Err(e) = h.sim.advance() {
                status = fail(driver_status(&e), e.to_string());
                break;
            }
            done += 1;
        }
        if !steps_done.is_null() {
            *steps_done = done;
        }
        status
    })
}

/// # Safety
/// `sim` must be a live handle; `t` writable.
#[no_mangle]
pub unsafe extern "C" fn nschs_simulation_time(
    sim: *const NschsSimulation,
    t: *mut f64,
) -> NschsStatus {
    guard(|| {
        let h = tri!(handle(sim));
        if t.is_null() {
            return fail(NschsStatus::NullPointer, "t is null");
        }
        *t = h.sim.state().t;
        NschsStatus::Ok
    })
}

/// # Safety
/// `sim` must be a live handle; `nx`, `ny` writable.
#[no_mangle]
pub unsafe extern "C" fn nschs_simulation_dims(
    sim: *const NschsSimulation,
    nx: *mut usize,
    ny: *mut usize,
) -> NschsStatus {
    guard(|| {
        let h = tri!(handle(sim));
        if nx.is_null() || ny.is_null() {
            return fail(NschsStatus::NullPointer, "nx or ny is null");
        }
        let g = &h.sim.state().grid;
        *nx = g.nx();
        *ny = g.ny();
        NschsStatus::Ok
    })
}

/// Copy a field into `buf` of `len` doubles. `*needed` (optional) receives
/// the required length; a short buffer returns `BufferTooSmall`.
///
/// # Safety
/// `sim` must be a live handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn nschs_simulation_copy_field(
    sim: *const NschsSimulation,
    field: NschsField,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> NschsStatus {
    guard(|| {
        let h = tri!(handle(sim));
        let s = h.sim.state();
        let data = match field {
            NschsField::Phi => &*s.phi,
            NschsField::Rho => &*s.rho,
            NschsField::Pressure => &*s.p,
            NschsField::Mu => &*s.mu,
            NschsField::Psi => &*s.psi,
            NschsField::Ux => &s.u.ux,
            NschsField::Uy => &s.u.uy,
        };
        if !needed.is_null() {
            *needed = data.len();
        }
        if len < data.len() {
            return fail(
                NschsStatus::BufferTooSmall,
                format!("buffer holds {len} values, field has {}", data.len()),
            );
        }
        if buf.is_null() {
            return fail(NschsStatus::NullPointer, "buf is null");
        }
        let out = std::slice::from_raw_parts_mut(buf, data.len());
        for (o, v) in out.iter_mut().zip(data.iter()) {
            *o = *v;
        }
        NschsStatus::Ok
    })
}

/// Energy of the current state, as monitored by the run.
///
/// # Safety
/// `sim` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nschs_simulation_energy(
    sim: *const NschsSimulation,
    out: *mut NschsEnergy,
) -> NschsStatus {
    guard(|| {
        let h = tri!(handle(sim));
        if out.is_null() {
            return fail(NschsStatus::NullPointer, "out is null");
        }
        let e = h.sim.record().energy;
        *out = NschsEnergy {
            kinetic: e.kinetic,
            grad_phi: e.grad_phi,
            laplace_phi: e.laplace_phi,
            s_phi_bulk: e.s_phi_bulk,
            grad_rho: e.grad_rho,
            s_rho_bulk: e.s_rho_bulk,
            coupling: e.coupling,
            penalty: e.penalty,
            total: e.total,
        };
        NschsStatus::Ok
    })
}

/// Latest diagnostics record.
///
/// # Safety
/// `sim` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nschs_simulation_diagnostics(
    sim: *const NschsSimulation,
    out: *mut NschsDiagnostics,
) -> NschsStatus {
    guard(|| {
        let h = tri!(handle(sim));
        if out.is_null() {
            return fail(NschsStatus::NullPointer, "out is null");
        }
        let r: &TraceRecord = h.sim.record();
        *out = NschsDiagnostics {
            t: r.t,
            mass_phi: r.mass_phi,
            mass_rho: r.mass_rho,
            dissipation: r.dissipation,
            energy_residual: r.energy_residual,
            rho_min: r.rho_min,
            rho_max: r.rho_max,
            eta: r.separation_eta,
            clamp_events: h.sim.total_clamp_events() as u64,
            max_u: r.max_velocity,
            adsorption: adsorption_statistic(h.sim.state()),
            energy_lower_bound: h.sim.lower_bound(),
            steps: h.sim.steps() as u64,
        };
        NschsStatus::Ok
    })
}

/// # Safety
/// `sim` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nschs_simulation_write_snapshot(
    sim: *const NschsSimulation,
    path: *const c_char,
) -> NschsStatus {
    guard(|| {
        let h = tri!(handle(sim));
        let path = tri!(path_arg(path));
        match write_snapshot(h.sim.state(), &path) {
            Ok(()) => NschsStatus::Ok,
            Err(e) => fail(NschsStatus::Io, e.to_string()),
        }
    })
}

/// Value (`order` 0), first or second derivative of a bulk potential.
/// `params` is ignored for the quartic potential and may be null.
///
/// # Safety
/// `params` null or readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nschs_potential_eval(
    kind: NschsPotential,
    params: *const NschsPotentialParams,
    s: f64,
    order: u8,
    out: *mut f64,
) -> NschsStatus {
    guard(|| {
        if out.is_null() {
            return fail(NschsStatus::NullPointer, "out is null");
        }
        let order = match Order::try_from(order) {
            Ok(o) => o,
            Err(e) => return fail(NschsStatus::InvalidArgument, e.to_string()),
        };
        if kind == NschsPotential::Quartic {
            *out = eval_s_phi(s, order);
            return NschsStatus::Ok;
        }
        let Some(p) = params.as_ref() else {
            return fail(NschsStatus::NullPointer, "params is null");
        };
        let fh = match FloryHuggins::new(p.theta1, p.theta2, p.eps1) {
            Ok(f) => f,
            Err(e) => return fail(NschsStatus::InvalidArgument, e.to_string()),
        };
        let value = if kind == NschsPotential::FloryHuggins {
            eval_s_rho_singular(&fh, s, order).map_err(|e| (NschsStatus::Domain, e.to_string()))
        } else {
            RegularizedPotential::new(fh, p.eps)
                .map(|r| eval_s_rho_eps(&r, s, order))
                .map_err(|e| (NschsStatus::InvalidArgument, e.to_string()))
        };
        match value {
            Ok(v) => {
                *out = v;
                NschsStatus::Ok
            }
            Err((status, msg)) => fail(status, msg),
        }
    })
}

/// Parse a configuration and run the assumption checks without building a
/// state. `Ok` means every check passed.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nschs_validate_config(path: *const c_char) -> NschsStatus {
    guard(|| {
        let path = tri!(path_arg(path));
        let checked = load_config(&path).and_then(|c| {
            c.check_run_section()?;
            let params = c.model_params()?;
            let report = validate_assumptions(&params, VALIDATION_SAMPLES)?;
            match report.first_failure() {
                Some(f) => Err(ConfigError::Assumption(format!(
                    "{} violated: {}",
                    f.assumption, f.detail
                ))),
                None => Ok(()),
            }
        });
        match checked {
            Ok(()) => NschsStatus::Ok,
            Err(e) => fail(config_status(&e), e.to_string()),
        }
    })
}

/// Copy the calling thread's last error message (NUL-terminated, truncated
/// to `len`) into `buf`. Returns the full message length without the NUL,
/// 0 when there is none. `buf` may be null to query the length.
///
/// # Safety
/// `buf` null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn nschs_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nschs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
