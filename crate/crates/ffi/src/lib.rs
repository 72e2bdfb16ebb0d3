//! C ABI over the stochastic-mechanics laboratory.
//!
//! Conventions: every function returns a [`ZsmStatus`]; results come back
//! through out-pointers; heap objects cross the boundary as opaque handles
//! with explicit `_free` functions; strings are UTF-8, owned by the callee
//! and released with [`zsm_string_free`]. The most recent error message is
//! kept per thread and readable via [`zsm_last_error`]. Panics never cross
//! the boundary.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

use zsm_core::constants::{make_constants, ConstantOverrides, PhysicalConstants, UnitSystem};

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZsmStatus {
    Ok = 0,
    /// A pointer argument was null or a value violated a precondition.
    InvalidArgument = 1,
    /// The operation exists but is deliberately unsupported for the input.
    Unsupported = 2,
    /// An iterative solver failed to converge.
    NoConvergence = 3,
    /// The experiment ran but its metrics failed their bounds.
    MetricsFailed = 4,
    /// Unknown experiment name.
    UnknownExperiment = 5,
    /// Configuration file rejected.
    BadConfig = 6,
    /// Any other runtime failure; see zsm_last_error().
    RuntimeError = 7,
    /// A panic was caught at the boundary.
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &zsm_core::CoreError) -> ZsmStatus {
    use zsm_core::CoreError::*;
    match err {
        InvalidParameter { .. } | Grid(_) | GridMismatch { .. } | FieldData { .. } | Loop(_) => {
            ZsmStatus::InvalidArgument
        }
        Unsupported(_) => ZsmStatus::Unsupported,
        NoConvergence { .. } => ZsmStatus::NoConvergence,
        Config { .. } => ZsmStatus::BadConfig,
        _ => ZsmStatus::RuntimeError,
    }
}

fn guard(body: impl FnOnce() -> ZsmStatus + std::panic::UnwindSafe) -> ZsmStatus {
    match std::panic::catch_unwind(body) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic caught at the C boundary".into());
            ZsmStatus::Panic
        }
    }
}

/// Most recent error message on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn zsm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Library version as a static string (never freed).
#[no_mangle]
pub extern "C" fn zsm_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must have been returned by a zsm function that documents string
/// ownership transfer, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn zsm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

// ---- constants handle ---------------------------------------------------------

/// Opaque handle to a set of physical constants.
pub struct ZsmConstants {
    inner: PhysicalConstants,
}

/// Create natural-unit constants (m = hbar = c = 1).
///
/// # Safety
/// `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn zsm_constants_natural(out: *mut *mut ZsmConstants) -> ZsmStatus {
    guard(|| {
        if out.is_null() {
            set_error("out pointer is null".into());
            return ZsmStatus::InvalidArgument;
        }
        let k = PhysicalConstants::natural();
        unsafe { *out = Box::into_raw(Box::new(ZsmConstants { inner: k })) };
        ZsmStatus::Ok
    })
}

/// Create SI constants for the electron (CODATA-2018).
///
/// # Safety
/// `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn zsm_constants_si_electron(out: *mut *mut ZsmConstants) -> ZsmStatus {
    guard(|| {
        if out.is_null() {
            set_error("out pointer is null".into());
            return ZsmStatus::InvalidArgument;
        }
        let k = PhysicalConstants::si_electron();
        unsafe { *out = Box::into_raw(Box::new(ZsmConstants { inner: k })) };
        ZsmStatus::Ok
    })
}

/// Create natural-unit constants with positive overrides (pass 0 to keep a
/// default).
///
/// # Safety
/// `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn zsm_constants_custom(
    mass: f64,
    hbar: f64,
    light_speed: f64,
    charge: f64,
    out: *mut *mut ZsmConstants,
) -> ZsmStatus {
    guard(|| {
        if out.is_null() {
            set_error("out pointer is null".into());
            return ZsmStatus::InvalidArgument;
        }
        let opt = |v: f64| if v == 0.0 { None } else { Some(v) };
        match make_constants(
            UnitSystem::Natural,
            ConstantOverrides {
                mass: opt(mass),
                hbar: opt(hbar),
                light_speed: opt(light_speed),
                charge: opt(charge),
            },
        ) {
            Ok(k) => {
                unsafe { *out = Box::into_raw(Box::new(ZsmConstants { inner: k })) };
                ZsmStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Destroy a constants handle.
///
/// # Safety
/// `k` must have come from a zsm_constants_* constructor and not have been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn zsm_constants_free(k: *mut ZsmConstants) {
    if !k.is_null() {
        drop(unsafe { Box::from_raw(k) });
    }
}

/// Derived scalars of a constants handle.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ZsmConstantsInfo {
    pub mass: f64,
    pub hbar: f64,
    pub light_speed: f64,
    pub charge: f64,
    /// Diffusion coefficient hbar / 2m.
    pub diffusion: f64,
    /// Rest-frame oscillation frequency m c^2 / hbar.
    pub compton_freq: f64,
}

/// Read the stored and derived constants.
///
/// # Safety
/// `k` must be a live constants handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zsm_constants_info(
    k: *const ZsmConstants,
    out: *mut ZsmConstantsInfo,
) -> ZsmStatus {
    guard(|| {
        if k.is_null() || out.is_null() {
            set_error("null handle or out pointer".into());
            return ZsmStatus::InvalidArgument;
        }
        let kk = unsafe { &(*k).inner };
        unsafe {
            *out = ZsmConstantsInfo {
                mass: kk.mass,
                hbar: kk.hbar,
                light_speed: kk.light_speed,
                charge: kk.charge,
                diffusion: kk.diffusion,
                compton_freq: kk.compton_freq,
            };
        }
        ZsmStatus::Ok
    })
}

// ---- scalar computations --------------------------------------------------------

/// Energy of the ring eigenstate n on a ring of the given radius:
/// E = n^2 hbar^2 / (2 m r^2).
///
/// # Safety
/// `k` must be a live constants handle and `out_energy` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zsm_ring_eigenstate_energy(
    k: *const ZsmConstants,
    n: i64,
    radius: f64,
    out_energy: *mut f64,
) -> ZsmStatus {
    guard(|| {
        if k.is_null() || out_energy.is_null() {
            set_error("null handle or out pointer".into());
            return ZsmStatus::InvalidArgument;
        }
        if !(radius > 0.0) {
            set_error("radius must be positive".into());
            return ZsmStatus::InvalidArgument;
        }
        let kk = unsafe { &(*k).inner };
        let e = (n * n) as f64 * kk.hbar * kk.hbar / (2.0 * kk.mass * radius * radius);
        unsafe { *out_energy = e };
        ZsmStatus::Ok
    })
}

/// One quantized circular Coulomb orbit (SI constants required):
/// radius [m], energy [eV], angular momentum in units of hbar.
///
/// # Safety
/// `k` must be a live constants handle; out pointers may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn zsm_bohr_orbit(
    k: *const ZsmConstants,
    n: u32,
    out_radius_m: *mut f64,
    out_energy_ev: *mut f64,
    out_angular_momentum_hbar: *mut f64,
) -> ZsmStatus {
    guard(|| {
        if k.is_null() {
            set_error("null constants handle".into());
            return ZsmStatus::InvalidArgument;
        }
        let kk = unsafe { &(*k).inner };
        match zsm_core::zbw::bohr_orbit(n, kk) {
            Ok(orbit) => {
                unsafe {
                    if !out_radius_m.is_null() {
                        *out_radius_m = orbit.radius;
                    }
                    if !out_energy_ev.is_null() {
                        *out_energy_ev = orbit.energy / zsm_core::constants::codata::EV;
                    }
                    if !out_angular_momentum_hbar.is_null() {
                        *out_angular_momentum_hbar = orbit.angular_momentum / kk.hbar;
                    }
                }
                ZsmStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Rest-frame frequency shifts from weak external potentials:
/// kappa = omega_c Phi_g / c^2 and epsilon = omega_c (e / m c^2) Phi_e.
///
/// # Safety
/// `k` must be a live constants handle; out pointers may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn zsm_frequency_shift(
    k: *const ZsmConstants,
    phi_g: f64,
    phi_e: f64,
    q_magnitude: f64,
    out_kappa: *mut f64,
    out_epsilon: *mut f64,
) -> ZsmStatus {
    guard(|| {
        if k.is_null() {
            set_error("null constants handle".into());
            return ZsmStatus::InvalidArgument;
        }
        let kk = unsafe { &(*k).inner };
        let shift = zsm_core::zbw::frequency_shift(phi_g, phi_e, q_magnitude, kk);
        unsafe {
            if !out_kappa.is_null() {
                *out_kappa = shift.gravitational;
            }
            if !out_epsilon.is_null() {
                *out_epsilon = shift.electric;
            }
        }
        ZsmStatus::Ok
    })
}

// ---- experiment runner -----------------------------------------------------------

/// Run a registered experiment. `config_path` and `out_dir` may be null
/// (defaults / no artifacts); `seed_override` of 0 keeps the config seed.
/// On success `*out_verdict_json` receives the verdict document (release
/// with zsm_string_free) and `*out_pass` the overall verdict. A run whose
/// metrics fail returns `ZSM_STATUS_METRICS_FAILED` but still fills both
/// outputs.
///
/// # Safety
/// `name` must be a NUL-terminated UTF-8 string; non-null out pointers and
/// path strings must be valid.
#[no_mangle]
pub unsafe extern "C" fn zsm_run_experiment(
    name: *const c_char,
    config_path: *const c_char,
    out_dir: *const c_char,
    seed_override: u64,
    out_pass: *mut bool,
    out_verdict_json: *mut *mut c_char,
) -> ZsmStatus {
    guard(|| {
        if name.is_null() {
            set_error("experiment name is null".into());
            return ZsmStatus::InvalidArgument;
        }
        let to_str = |p: *const c_char| -> Option<String> {
            if p.is_null() {
                None
            } else {
                Some(unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
            }
        };
        let name = unsafe { CStr::from_ptr(name) }
            .to_string_lossy()
            .into_owned();
        let cfg_path = to_str(config_path).map(PathBuf::from);
        let out_path = to_str(out_dir).map(PathBuf::from);
        let seed = if seed_override == 0 {
            None
        } else {
            Some(seed_override)
        };

        match zsm_core::cli::run(&name, cfg_path.as_deref(), out_path, seed) {
            Ok(verdict) => {
                let json = serde_json::to_string(&verdict).expect("verdict serializes");
                unsafe {
                    if !out_pass.is_null() {
                        *out_pass = verdict.pass;
                    }
                    if !out_verdict_json.is_null() {
                        *out_verdict_json = CString::new(json)
                            .expect("no interior NUL in JSON")
                            .into_raw();
                    }
                }
                if verdict.pass {
                    ZsmStatus::Ok
                } else {
                    set_error(format!("experiment `{name}` metrics failed"));
                    ZsmStatus::MetricsFailed
                }
            }
            Err(e) => {
                set_error(e.to_string());
                match e {
                    zsm_core::cli::CliError::UnknownExperiment { .. } => {
                        ZsmStatus::UnknownExperiment
                    }
                    zsm_core::cli::CliError::BadConfig(_) => ZsmStatus::BadConfig,
                    zsm_core::cli::CliError::Failed(err) => status_of(&err),
                }
            }
        }
    })
}

/// Newline-separated list of registered experiment names (release with
/// zsm_string_free).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zsm_experiment_list(out: *mut *mut c_char) -> ZsmStatus {
    guard(|| {
        if out.is_null() {
            set_error("out pointer is null".into());
            return ZsmStatus::InvalidArgument;
        }
        let names: Vec<&str> = zsm_core::experiments::registry()
            .iter()
            .map(|e| e.name)
            .collect();
        let joined = names.join("\n");
        unsafe { *out = CString::new(joined).unwrap().into_raw() };
        ZsmStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_round_trip_through_the_abi() {
        unsafe {
            let mut handle: *mut ZsmConstants = std::ptr::null_mut();
            assert_eq!(zsm_constants_natural(&mut handle), ZsmStatus::Ok);
            let mut info = std::mem::zeroed::<ZsmConstantsInfo>();
            assert_eq!(zsm_constants_info(handle, &mut info), ZsmStatus::Ok);
            assert_eq!(info.diffusion, 0.5);
            zsm_constants_free(handle);
        }
    }

    #[test]
    fn invalid_overrides_set_the_error_message() {
        unsafe {
            let mut handle: *mut ZsmConstants = std::ptr::null_mut();
            let status = zsm_constants_custom(-1.0, 0.0, 0.0, 0.0, &mut handle);
            assert_eq!(status, ZsmStatus::InvalidArgument);
            let msg = CStr::from_ptr(zsm_last_error()).to_string_lossy();
            assert!(msg.contains("mass"), "{msg}");
        }
    }

    #[test]
    fn ring_energy_matches_the_closed_form() {
        unsafe {
            let mut handle: *mut ZsmConstants = std::ptr::null_mut();
            zsm_constants_natural(&mut handle);
            let mut e = 0.0;
            assert_eq!(
                zsm_ring_eigenstate_energy(handle, 3, 2.0, &mut e),
                ZsmStatus::Ok
            );
            assert!((e - 9.0 / 8.0).abs() < 1e-15);
            zsm_constants_free(handle);
        }
    }

    #[test]
    fn bohr_orbit_through_the_abi() {
        unsafe {
            let mut handle: *mut ZsmConstants = std::ptr::null_mut();
            zsm_constants_si_electron(&mut handle);
            let (mut r, mut e, mut l) = (0.0, 0.0, 0.0);
            assert_eq!(
                zsm_bohr_orbit(handle, 1, &mut r, &mut e, &mut l),
                ZsmStatus::Ok
            );
            assert!((e + 13.6057).abs() < 0.01, "E1 = {e} eV");
            assert!((l - 1.0).abs() < 1e-12);
            // Natural units are rejected with a status, not a panic.
            let mut nat: *mut ZsmConstants = std::ptr::null_mut();
            zsm_constants_natural(&mut nat);
            assert_eq!(
                zsm_bohr_orbit(nat, 1, &mut r, &mut e, &mut l),
                ZsmStatus::InvalidArgument
            );
            zsm_constants_free(nat);
            zsm_constants_free(handle);
        }
    }

    #[test]
    fn experiment_runs_through_the_abi() {
        unsafe {
            let name = CString::new("frequency-shifts").unwrap();
            let mut pass = false;
            let mut json: *mut c_char = std::ptr::null_mut();
            let status = zsm_run_experiment(
                name.as_ptr(),
                std::ptr::null(),
                std::ptr::null(),
                0,
                &mut pass,
                &mut json,
            );
            assert_eq!(status, ZsmStatus::Ok);
            assert!(pass);
            let text = CStr::from_ptr(json).to_string_lossy().into_owned();
            let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
            zsm_core::cli::validate_verdict_json(&doc).unwrap();
            zsm_string_free(json);

            let bogus = CString::new("zzz").unwrap();
            let status = zsm_run_experiment(
                bogus.as_ptr(),
                std::ptr::null(),
                std::ptr::null(),
                0,
                &mut pass,
                std::ptr::null_mut(),
            );
            assert_eq!(status, ZsmStatus::UnknownExperiment);
        }
    }

    #[test]
    fn experiment_list_is_newline_separated() {
        unsafe {
            let mut s: *mut c_char = std::ptr::null_mut();
            assert_eq!(zsm_experiment_list(&mut s), ZsmStatus::Ok);
            let text = CStr::from_ptr(s).to_string_lossy().into_owned();
            assert!(text.lines().count() >= 10);
            assert!(text.contains("wallstrom-gate"));
            zsm_string_free(s);
        }
    }
}
