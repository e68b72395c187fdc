//! Finite action sets: longitudinal acceleration profiles for highway
//! vehicles, and lane-keep / lane-change / abort trajectories for the merging
//! vehicle built from quintic segments.
//!
//! Set sizes at a given configuration (`L = |accel_levels|`, `N` steps):
//!
//! * highway vehicle: `L^N`;
//! * merging vehicle in lane keeping: `L^N + sum_{t=0}^{N-1} L^t * L^{k(t)}`,
//!   where `k(t)` counts the full lane-keep steps left in the horizon after a
//!   lane change started at step `t` completes (`L^N + 3 + 3 + 9 + 27 = 123`
//!   at the defaults);
//! * merging vehicle mid-change: one continue trajectory plus one abort per
//!   step before completion, each crossed with profiles on the lane-keep steps
//!   that follow it.
//!
//! [`merge_set_size`] evaluates these counts without building trajectories.

mod quintic;

pub use quintic::{solve_quintic, Boundary, QuinticSegment};

use serde::{Deserialize, Serialize};

use crate::dynamics::{step_longitudinal, Control, VehicleParams, VehicleState};
use crate::error::{Error, FieldError, Result};
use crate::road::RoadGeometry;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryGenConfig {
    /// Planning steps `N`.
    pub horizon: usize,
    /// Sampling period (s).
    pub dt: f64,
    /// Per-step acceleration choices, in enumeration order (m/s^2).
    pub accel_levels: Vec<f64>,
    /// Duration of a complete lane change (s).
    pub lane_change_duration: f64,
    /// Duration of the manoeuvre returning to the original lane (s).
    pub abort_duration: f64,
}

impl Default for TrajectoryGenConfig {
    fn default() -> Self {
        Self {
            horizon: 4,
            dt: 1.0,
            accel_levels: vec![-2.0, 0.0, 2.0],
            lane_change_duration: 3.0,
            abort_duration: 3.0,
        }
    }
}

impl TrajectoryGenConfig {
    pub fn validate(&self, path: &str) -> Vec<FieldError> {
        let mut errs = Vec::new();
        if self.horizon == 0 {
            errs.push(FieldError::new(format!("{path}.horizon"), "must be >= 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            errs.push(FieldError::new(format!("{path}.dt"), "must be finite and > 0"));
        }
        if self.accel_levels.is_empty() || self.accel_levels.iter().any(|a| !a.is_finite()) {
            errs.push(FieldError::new(
                format!("{path}.accel_levels"),
                "must be a non-empty list of finite values",
            ));
        }
        for (name, d) in [
            ("lane_change_duration", self.lane_change_duration),
            ("abort_duration", self.abort_duration),
        ] {
            if !(d.is_finite() && d > 0.0) {
                errs.push(FieldError::new(format!("{path}.{name}"), "must be finite and > 0"));
            }
        }
        if errs.is_empty() {
            let needed = (self.lane_change_duration / self.dt - TIME_EPS).ceil() as usize;
            if self.horizon < needed {
                errs.push(FieldError::new(
                    format!("{path}.horizon"),
                    format!("must cover a full lane change ({needed} steps)"),
                ));
            }
        }
        errs
    }
}

/// How a trajectory was composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Maneuver {
    LaneKeep,
    LaneChange { start_step: usize },
    ContinueChange,
    Abort { abort_step: usize },
}

/// Lateral manoeuvre state of a vehicle at one sample instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManeuverStatus {
    Keeping,
    Changing {
        segment: QuinticSegment,
        /// Time since the segment started (s).
        elapsed: f64,
        from_lane: usize,
        to_lane: usize,
    },
}

impl ManeuverStatus {
    pub fn is_changing(&self) -> bool {
        matches!(self, ManeuverStatus::Changing { .. })
    }

    /// A change that has not progressed yet is still lane keeping: the
    /// vehicle is free to start it now or later.
    pub fn settled(self) -> Self {
        match self {
            ManeuverStatus::Changing { elapsed, .. } if elapsed < TIME_EPS => ManeuverStatus::Keeping,
            other => other,
        }
    }
}

/// A time-indexed state sequence over the planning horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<VehicleState>,
    pub controls: Vec<Control>,
    pub statuses: Vec<ManeuverStatus>,
    pub maneuver: Maneuver,
    pub dt: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    pub fn first_control(&self) -> Control {
        self.controls.first().copied().unwrap_or_default()
    }
}

/// Every acceleration profile of length `n` in lexicographic order of
/// `levels`.
pub fn acceleration_profiles(levels: &[f64], n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(n)];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                levels.iter().map(move |a| {
                    let mut q = p.clone();
                    q.push(*a);
                    q
                })
            })
            .collect();
    }
    out
}

fn keep_step(state: &VehicleState, a: f64, params: &VehicleParams, dt: f64) -> Result<VehicleState> {
    step_longitudinal(state, a, params, dt)
}

/// Partially built trajectory.
#[derive(Clone)]
struct Partial {
    states: Vec<VehicleState>,
    statuses: Vec<ManeuverStatus>,
}

impl Partial {
    fn new(state: VehicleState, status: ManeuverStatus, cap: usize) -> Self {
        let mut states = Vec::with_capacity(cap);
        let mut statuses = Vec::with_capacity(cap);
        states.push(state);
        statuses.push(status);
        Self { states, statuses }
    }

    fn last(&self) -> (VehicleState, ManeuverStatus) {
        (
            *self.states.last().expect("non-empty"),
            *self.statuses.last().expect("non-empty"),
        )
    }

    fn push(&mut self, s: VehicleState, st: ManeuverStatus) {
        self.states.push(s);
        self.statuses.push(st);
    }

    fn len_steps(&self) -> usize {
        self.states.len() - 1
    }
}

struct Generator<'a> {
    cfg: &'a TrajectoryGenConfig,
    params: &'a VehicleParams,
    road: &'a RoadGeometry,
}

impl Generator<'_> {
    /// Advances along an active segment by one sampling period.
    fn segment_step(&self, status: &ManeuverStatus, state: &VehicleState) -> (VehicleState, ManeuverStatus) {
        let ManeuverStatus::Changing {
            segment,
            elapsed,
            from_lane,
            to_lane,
        } = *status
        else {
            return (*state, *status);
        };
        let t = elapsed + self.cfg.dt;
        if t < segment.duration - TIME_EPS {
            (
                segment.state_at(t),
                ManeuverStatus::Changing {
                    segment,
                    elapsed: t,
                    from_lane,
                    to_lane,
                },
            )
        } else {
            let end = segment.eval(segment.duration);
            let rem = (t - segment.duration).max(0.0);
            (
                VehicleState {
                    x: end.x + end.vx * rem,
                    y: self.road.lane_center(to_lane),
                    v: end.vx,
                    psi: 0.0,
                },
                ManeuverStatus::Keeping,
            )
        }
    }

    /// Runs the active segment until it completes or the horizon is reached.
    fn run_segment(&self, p: &mut Partial) {
        while p.len_steps() < self.cfg.horizon {
            let (s, st) = p.last();
            if !st.is_changing() {
                break;
            }
            let (ns, nst) = self.segment_step(&st, &s);
            p.push(ns, nst);
        }
    }

    /// Fills the remaining steps with every lane-keep acceleration profile.
    fn expand_keep(&self, p: Partial, maneuver: Maneuver, out: &mut Vec<Trajectory>) {
        let remaining = self.cfg.horizon - p.len_steps();
        for profile in acceleration_profiles(&self.cfg.accel_levels, remaining) {
            let mut q = p.clone();
            let mut ok = true;
            for a in profile {
                let (s, _) = q.last();
                match keep_step(&s, a, self.params, self.cfg.dt) {
                    Ok(ns) => q.push(ns, ManeuverStatus::Keeping),
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                self.finish(q, maneuver, out);
            }
        }
    }

    fn finish(&self, p: Partial, maneuver: Maneuver, out: &mut Vec<Trajectory>) {
        let tol = 1e-9;
        if p.states
            .iter()
            .any(|s| !s.is_finite() || s.v < self.params.v_min - tol || s.v > self.params.v_max + tol)
        {
            return;
        }
        let mut traj = Trajectory {
            controls: Vec::new(),
            states: p.states,
            statuses: p.statuses,
            maneuver,
            dt: self.cfg.dt,
        };
        if let Ok(controls) = recover_controls(&traj, self.params) {
            traj.controls = controls;
            out.push(traj);
        }
    }

    fn lane_change_from(&self, state: &VehicleState, from_lane: usize, to_lane: usize) -> Result<ManeuverStatus> {
        let vx = state.v * state.psi.cos();
        let ini = Boundary {
            x: state.x,
            vx,
            ax: 0.0,
            y: state.y,
            vy: state.v * state.psi.sin(),
            ay: 0.0,
        };
        let duration = self.cfg.lane_change_duration;
        let term = Boundary {
            x: state.x + vx * duration,
            vx,
            ax: 0.0,
            y: self.road.lane_center(to_lane),
            vy: 0.0,
            ay: 0.0,
        };
        Ok(ManeuverStatus::Changing {
            segment: solve_quintic(&ini, &term, duration)?,
            elapsed: 0.0,
            from_lane,
            to_lane,
        })
    }

    fn abort_from(&self, status: &ManeuverStatus) -> Result<ManeuverStatus> {
        let ManeuverStatus::Changing {
            segment,
            elapsed,
            from_lane,
            to_lane,
        } = *status
        else {
            return Err(Error::Domain("abort requested outside a lane change".into()));
        };
        let ini = segment.eval(elapsed);
        let duration = self.cfg.abort_duration;
        let term = Boundary {
            x: ini.x + ini.vx * duration,
            vx: ini.vx,
            ax: 0.0,
            y: self.road.lane_center(from_lane),
            vy: 0.0,
            ay: 0.0,
        };
        Ok(ManeuverStatus::Changing {
            segment: solve_quintic(&ini, &term, duration)?,
            elapsed: 0.0,
            from_lane: to_lane,
            to_lane: from_lane,
        })
    }
}

/// The `|accel_levels|^N` lane-keeping trajectories of a highway vehicle.
pub fn generate_longitudinal_set(
    state: &VehicleState,
    cfg: &TrajectoryGenConfig,
    params: &VehicleParams,
) -> Result<Vec<Trajectory>> {
    let n = cfg.horizon;
    let profiles = acceleration_profiles(&cfg.accel_levels, n);
    let mut out = Vec::with_capacity(profiles.len());
    for profile in profiles {
        let mut states = Vec::with_capacity(n + 1);
        let mut controls = Vec::with_capacity(n);
        states.push(*state);
        for a in &profile {
            let s = states[states.len() - 1];
            let ns = step_longitudinal(&s, *a, params, cfg.dt)?;
            controls.push(Control::longitudinal((ns.v - s.v) / cfg.dt));
            states.push(ns);
        }
        out.push(Trajectory {
            states,
            controls,
            statuses: vec![ManeuverStatus::Keeping; n + 1],
            maneuver: Maneuver::LaneKeep,
            dt: cfg.dt,
        });
    }
    Ok(out)
}

/// The merging vehicle's admissible set. Lane changes are only offered while
/// the vehicle is outside the road's target lane.
pub fn generate_merge_set(
    state: &VehicleState,
    status: &ManeuverStatus,
    cfg: &TrajectoryGenConfig,
    params: &VehicleParams,
    road: &RoadGeometry,
) -> Result<Vec<Trajectory>> {
    if !state.is_finite() {
        return Err(Error::Domain(format!("non-finite state {state:?}")));
    }
    let gen = Generator { cfg, params, road };
    let cap = cfg.horizon + 1;
    let mut out = Vec::new();
    match status {
        ManeuverStatus::Keeping => {
            gen.expand_keep(Partial::new(*state, *status, cap), Maneuver::LaneKeep, &mut out);
            let lane = road.nearest_lane(state.y);
            if lane != road.target_lane {
                for start in 0..cfg.horizon {
                    for prefix in acceleration_profiles(&cfg.accel_levels, start) {
                        let mut p = Partial::new(*state, *status, cap);
                        let mut ok = true;
                        for a in prefix {
                            let (s, _) = p.last();
                            match keep_step(&s, a, params, cfg.dt) {
                                Ok(ns) => p.push(ns, ManeuverStatus::Keeping),
                                Err(_) => {
                                    ok = false;
                                    break;
                                }
                            }
                        }
                        if !ok {
                            continue;
                        }
                        let (s, _) = p.last();
                        let Ok(changing) = gen.lane_change_from(&s, lane, road.target_lane) else {
                            continue;
                        };
                        *p.statuses.last_mut().expect("non-empty") = changing;
                        gen.run_segment(&mut p);
                        gen.expand_keep(p, Maneuver::LaneChange { start_step: start }, &mut out);
                    }
                }
            }
        }
        ManeuverStatus::Changing {
            segment, elapsed, ..
        } => {
            if !(*elapsed >= 0.0 && *elapsed < segment.duration) {
                return Err(Error::Domain(format!(
                    "lane-change progress {elapsed} outside [0, {})",
                    segment.duration
                )));
            }
            let mut p = Partial::new(*state, *status, cap);
            gen.run_segment(&mut p);
            gen.expand_keep(p, Maneuver::ContinueChange, &mut out);

            let remaining = segment.duration - elapsed;
            for abort in 0..cfg.horizon {
                if abort as f64 * cfg.dt >= remaining - TIME_EPS {
                    break;
                }
                let mut p = Partial::new(*state, *status, cap);
                for _ in 0..abort {
                    let (s, st) = p.last();
                    let (ns, nst) = gen.segment_step(&st, &s);
                    p.push(ns, nst);
                }
                let (_, st) = p.last();
                let Ok(back) = gen.abort_from(&st) else {
                    continue;
                };
                *p.statuses.last_mut().expect("non-empty") = back;
                gen.run_segment(&mut p);
                gen.expand_keep(p, Maneuver::Abort { abort_step: abort }, &mut out);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::NoAdmissibleTrajectory(format!(
            "every candidate from {state:?} violates actuation or speed limits"
        )));
    }
    Ok(out)
}

fn keep_steps_after(elapsed: f64, duration: f64, cfg: &TrajectoryGenConfig, steps_left: usize) -> (usize, usize) {
    // (steps spent on the segment including a partial final step, lane-keep steps after it)
    let mut used = 0;
    let mut t = elapsed;
    while used < steps_left && t < duration - TIME_EPS {
        t += cfg.dt;
        used += 1;
    }
    (used, steps_left - used)
}

/// Number of trajectories [`generate_merge_set`] composes before feasibility
/// filtering. `progress` is the elapsed lane-change time when mid-change.
pub fn merge_set_size(cfg: &TrajectoryGenConfig, progress: Option<f64>) -> usize {
    let l = cfg.accel_levels.len();
    let n = cfg.horizon;
    match progress {
        None => {
            let mut total = l.pow(n as u32);
            for start in 0..n {
                let (_, post) = keep_steps_after(0.0, cfg.lane_change_duration, cfg, n - start);
                total += l.pow(start as u32) * l.pow(post as u32);
            }
            total
        }
        Some(p) => {
            let (_, post) = keep_steps_after(p, cfg.lane_change_duration, cfg, n);
            let mut total = l.pow(post as u32);
            let remaining = cfg.lane_change_duration - p;
            for abort in 0..n {
                if abort as f64 * cfg.dt >= remaining - TIME_EPS {
                    break;
                }
                let (_, post) = keep_steps_after(0.0, cfg.abort_duration, cfg, n - abort);
                total += l.pow(post as u32);
            }
            total
        }
    }
}

/// Controls reproducing each sampled step: acceleration from speed
/// differencing, steering by inverting the yaw-rate and slip-angle relations
/// of the bicycle model.
pub fn recover_controls(traj: &Trajectory, params: &VehicleParams) -> Result<Vec<Control>> {
    let dt = traj.dt;
    let mut out = Vec::with_capacity(traj.states.len().saturating_sub(1));
    for (k, w) in traj.states.windows(2).enumerate() {
        let (s0, s1) = (w[0], w[1]);
        let a = (s1.v - s0.v) / dt;
        if a.abs() > params.a_bound + 1e-9 {
            return Err(Error::Infeasible {
                step: k,
                reason: format!("acceleration {a:.4} exceeds bound {}", params.a_bound),
            });
        }
        let yaw_rate = (s1.psi - s0.psi) / dt;
        let delta_f = if yaw_rate == 0.0 {
            0.0
        } else {
            if s0.v <= 0.0 {
                return Err(Error::Infeasible {
                    step: k,
                    reason: "yaw change at zero speed".into(),
                });
            }
            let sin_beta = yaw_rate * params.l_r / s0.v;
            if sin_beta.abs() > 1.0 {
                return Err(Error::Infeasible {
                    step: k,
                    reason: format!("yaw rate {yaw_rate:.4} unreachable at speed {:.3}", s0.v),
                });
            }
            params.steering_for_slip(sin_beta.asin())
        };
        if delta_f.abs() > params.delta_bound {
            return Err(Error::Infeasible {
                step: k,
                reason: format!("steering {delta_f:.4} exceeds bound {}", params.delta_bound),
            });
        }
        out.push(Control { a, delta_f });
    }
    Ok(out)
}
