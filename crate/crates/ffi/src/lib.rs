//! C ABI over the `lfgc` crate.
//!
//! Every fallible function returns an [`LfgcStatus`]; on failure the message
//! is available from [`lfgc_last_error`] on the same thread. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lfgc::agents::{idm_accel, IdmParams};
use lfgc::beliefs::{update_belief_log, BeliefConfig, BeliefState};
use lfgc::dynamics::{step_bicycle, Control, VehicleParams, VehicleState};
use lfgc::error::Error;
use lfgc::sim::{run_scenario, Episode, OutcomeClass, ScenarioConfig};
use lfgc::trajectories::{solve_quintic, Boundary};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfgcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Domain = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfgcOutcomeClass {
    Success = 0,
    FailToMerge = 1,
    Collision = 2,
}

/// Episode result. Ids and steps are -1 when absent.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfgcOutcome {
    pub kind: LfgcOutcomeClass,
    pub final_step: i64,
    pub merge_step: i64,
    pub front_id: i64,
    pub rear_id: i64,
    pub collided_with: i64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LfgcState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub psi: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LfgcBoundary {
    pub x: f64,
    pub vx: f64,
    pub ax: f64,
    pub y: f64,
    pub vy: f64,
    pub ay: f64,
}

/// Parsed scenario.
pub struct LfgcScenario {
    config: ScenarioConfig,
}

/// Finished episode with its event log.
pub struct LfgcEpisode {
    episode: Episode,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> LfgcStatus {
    match err {
        Error::Io { .. } => LfgcStatus::Io,
        Error::Config(_) | Error::Json(_) | Error::Csv(_) | Error::Dataset(_) => LfgcStatus::Parse,
        _ => LfgcStatus::Domain,
    }
}

fn fail(err: Error) -> LfgcStatus {
    let s = status_of(&err);
    set_error(err.to_string());
    s
}

fn guard(f: impl FnOnce() -> LfgcStatus) -> LfgcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            LfgcStatus::Panic
        }
    }
}

macro_rules! nonnull {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!("null pointer: ", stringify!($p)));
            return LfgcStatus::NullPointer;
        })+
    };
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lfgc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a scenario JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lfgc_scenario_from_json(json: *const c_char, out: *mut *mut LfgcScenario) -> LfgcStatus {
    guard(|| {
        nonnull!(json, out);
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            set_error("scenario JSON is not valid UTF-8");
            return LfgcStatus::InvalidUtf8;
        };
        match ScenarioConfig::from_json_str(text) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(LfgcScenario { config }));
                LfgcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Overrides the scenario's RNG seed.
///
/// # Safety
/// `scenario` must come from [`lfgc_scenario_from_json`].
#[no_mangle]
pub unsafe extern "C" fn lfgc_scenario_set_seed(scenario: *mut LfgcScenario, seed: u64) -> LfgcStatus {
    guard(|| {
        nonnull!(scenario);
        (*scenario).config.seed = seed;
        LfgcStatus::Ok
    })
}

/// # Safety
/// `scenario` must be null or come from [`lfgc_scenario_from_json`], and not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lfgc_scenario_free(scenario: *mut LfgcScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs a closed-loop episode.
///
/// # Safety
/// `scenario` must come from [`lfgc_scenario_from_json`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lfgc_run(scenario: *const LfgcScenario, out: *mut *mut LfgcEpisode) -> LfgcStatus {
    guard(|| {
        nonnull!(scenario, out);
        match run_scenario(&(*scenario).config) {
            Ok(episode) => {
                *out = Box::into_raw(Box::new(LfgcEpisode { episode }));
                LfgcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `episode` must come from [`lfgc_run`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lfgc_episode_outcome(episode: *const LfgcEpisode, out: *mut LfgcOutcome) -> LfgcStatus {
    guard(|| {
        nonnull!(episode, out);
        let o = &(*episode).episode.outcome;
        let id = |v: Option<u32>| v.map_or(-1, i64::from);
        let step = |v: Option<usize>| v.map_or(-1, |s| s as i64);
        *out = LfgcOutcome {
            kind: match o.class {
                OutcomeClass::Success => LfgcOutcomeClass::Success,
                OutcomeClass::FailToMerge => LfgcOutcomeClass::FailToMerge,
                OutcomeClass::Collision => LfgcOutcomeClass::Collision,
            },
            final_step: o.final_step as i64,
            merge_step: step(o.merge_step),
            front_id: id(o.front_id),
            rear_id: id(o.rear_id),
            collided_with: id(o.collided_with),
        };
        LfgcStatus::Ok
    })
}

/// JSONL event log. With `canonical` set, timing fields are left out so
/// identical runs give identical bytes. Free the result with
/// [`lfgc_string_free`].
///
/// # Safety
/// `episode` must come from [`lfgc_run`]; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lfgc_episode_log_jsonl(episode: *const LfgcEpisode, canonical: bool, out: *mut *mut c_char) -> LfgcStatus {
    guard(|| {
        nonnull!(episode, out);
        let log = &(*episode).episode.log;
        let text = if canonical { log.canonical_jsonl() } else { log.to_jsonl() };
        match CString::new(text) {
            Ok(s) => {
                *out = s.into_raw();
                LfgcStatus::Ok
            }
            Err(_) => {
                set_error("log contains a NUL byte");
                LfgcStatus::Domain
            }
        }
    })
}

/// # Safety
/// `episode` must be null or come from [`lfgc_run`], and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn lfgc_episode_free(episode: *mut LfgcEpisode) {
    if !episode.is_null() {
        drop(Box::from_raw(episode));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn lfgc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// IDM acceleration with default parameters. Pass `INFINITY` as `gap` on a
/// free road.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lfgc_idm_accel(v: f64, gap: f64, dv: f64, a_bound: f64, out: *mut f64) -> LfgcStatus {
    guard(|| {
        nonnull!(out);
        if !(v.is_finite() && dv.is_finite() && a_bound.is_finite() && a_bound > 0.0) {
            set_error("speed, rate and bound must be finite; bound > 0");
            return LfgcStatus::InvalidArgument;
        }
        *out = idm_accel(v, gap, dv, &IdmParams::default(), a_bound).accel;
        LfgcStatus::Ok
    })
}

/// One kinematic bicycle step with default vehicle parameters.
///
/// # Safety
/// `state` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lfgc_step_bicycle(state: *const LfgcState, a: f64, delta_f: f64, dt: f64, out: *mut LfgcState) -> LfgcStatus {
    guard(|| {
        nonnull!(state, out);
        let s = *state;
        match step_bicycle(&VehicleState::new(s.x, s.y, s.v, s.psi), &Control::new(a, delta_f), &VehicleParams::default(), dt) {
            Ok(n) => {
                *out = LfgcState { x: n.x, y: n.y, v: n.v, psi: n.psi };
                LfgcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Quintic coefficients (`c0..c5`) on each axis joining two boundaries.
///
/// # Safety
/// `ini` and `term` must be valid; `out_x` and `out_y` must each point to six
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lfgc_solve_quintic(
    ini: *const LfgcBoundary,
    term: *const LfgcBoundary,
    duration: f64,
    out_x: *mut f64,
    out_y: *mut f64,
) -> LfgcStatus {
    guard(|| {
        nonnull!(ini, term, out_x, out_y);
        let b = |p: &LfgcBoundary| Boundary { x: p.x, vx: p.vx, ax: p.ax, y: p.y, vy: p.vy, ay: p.ay };
        match solve_quintic(&b(&*ini), &b(&*term), duration) {
            Ok(seg) => {
                ptr::copy_nonoverlapping(seg.ax.as_ptr(), out_x, 6);
                ptr::copy_nonoverlapping(seg.ay.as_ptr(), out_y, 6);
                LfgcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Posterior leader probability from a prior and the log-likelihoods of the
/// observation under each role, with the default floor.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn lfgc_belief_update(p_leader: f64, ll_leader: f64, ll_follower: f64, out: *mut f64) -> LfgcStatus {
    guard(|| {
        nonnull!(out);
        let prior = match BeliefState::new(p_leader) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match update_belief_log(&prior, ll_leader, ll_follower, &BeliefConfig::default()) {
            Ok(u) => {
                *out = u.posterior.p_leader;
                LfgcStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
