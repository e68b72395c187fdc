//! Driver models for the vehicles around the ego.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{step_longitudinal, Control, VehicleParams, VehicleState};
use crate::error::{Error, FieldError, Result};
use crate::game::Role;
use crate::planner::Predictor;
use crate::road::RoadGeometry;
use crate::trajectories::ManeuverStatus;

/// Intelligent driver model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdmParams {
    /// Desired speed (m/s).
    pub v0: f64,
    /// Minimum spacing (m).
    pub phi0: f64,
    pub a_m: f64,
    /// Comfortable deceleration (m/s^2).
    pub b: f64,
    pub delta: f64,
    /// Desired time headway (s).
    pub t_headway: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            v0: 32.0,
            phi0: 2.0,
            a_m: 4.0,
            b: 3.0,
            delta: 4.0,
            t_headway: 1.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self, path: &str) -> Vec<FieldError> {
        [
            ("v0", self.v0),
            ("phi0", self.phi0),
            ("a_m", self.a_m),
            ("b", self.b),
            ("delta", self.delta),
            ("t_headway", self.t_headway),
        ]
        .into_iter()
        .filter(|(_, v)| !(v.is_finite() && *v > 0.0))
        .map(|(n, _)| FieldError::new(format!("{path}.{n}"), "must be finite and > 0"))
        .collect()
    }

    /// Desired gap `phi* = phi0 + max(0, v T + v dv / (2 sqrt(a_m b)))`.
    /// The dynamic part is floored at zero so a leader pulling away never
    /// shrinks the gap below `phi0`.
    pub fn desired_gap(&self, v: f64, dv: f64) -> f64 {
        self.phi0 + (v * self.t_headway + v * dv / (2.0 * (self.a_m * self.b).sqrt())).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmOutput {
    pub accel: f64,
    /// Non-positive gap: emergency braking was returned.
    pub emergency: bool,
}

/// IDM acceleration for speed `v`, bumper gap `gap` (infinite on a free
/// road) and approach rate `dv = v - v_leader`, clamped to `[-a_bound,
/// a_bound]`.
pub fn idm_accel(v: f64, gap: f64, dv: f64, p: &IdmParams, a_bound: f64) -> IdmOutput {
    if gap <= 0.0 || gap.is_nan() {
        return IdmOutput {
            accel: -a_bound,
            emergency: true,
        };
    }
    let free = 1.0 - (v / p.v0).powf(p.delta);
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        (p.desired_gap(v, dv) / gap).powi(2)
    };
    IdmOutput {
        accel: (p.a_m * (free - interaction)).clamp(-a_bound, a_bound),
        emergency: false,
    }
}

/// Whom an IDM vehicle follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdmTarget {
    /// The vehicle ahead in its lane.
    #[default]
    Front,
    /// The ego, while it signals a merge and is ahead; the vehicle ahead is
    /// still respected.
    Ego,
}

/// A recorded track sampled at a fixed period, starting at scenario time
/// `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayTrack {
    #[serde(default)]
    pub t0: f64,
    pub period: f64,
    pub states: Vec<VehicleState>,
}

impl ReplayTrack {
    /// State at scenario time `t`, linearly interpolated between samples.
    /// `None` outside the recording.
    pub fn sample(&self, t: f64) -> Option<VehicleState> {
        let u = (t - self.t0) / self.period;
        let last = self.states.len().checked_sub(1)?;
        if u < -1e-9 || u > last as f64 + 1e-9 {
            return None;
        }
        let k = u.round();
        if (u - k).abs() < 1e-9 {
            return Some(self.states[(k as usize).min(last)]);
        }
        let i = u.floor() as usize;
        let f = u - i as f64;
        let (a, b) = (self.states[i], self.states[(i + 1).min(last)]);
        Some(VehicleState {
            x: a.x + f * (b.x - a.x),
            y: a.y + f * (b.y - a.y),
            v: a.v + f * (b.v - a.v),
            psi: a.psi + f * (b.psi - a.psi),
        })
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.period * self.states.len().saturating_sub(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentModel {
    /// Plays the leader-follower game against the ego.
    Game {
        role: Role,
        /// Add a sample of the residual covariance to every step.
        #[serde(default)]
        noise: bool,
    },
    Idm {
        #[serde(default)]
        idm: IdmParams,
        #[serde(default)]
        target: IdmTarget,
    },
    ConstantSpeed,
    Replay { track: ReplayTrack },
}

impl AgentModel {
    pub fn validate(&self, path: &str) -> Vec<FieldError> {
        match self {
            AgentModel::Idm { idm, .. } => idm.validate(&format!("{path}.idm")),
            AgentModel::Replay { track } => {
                let mut errs = Vec::new();
                if track.states.is_empty() {
                    errs.push(FieldError::new(format!("{path}.track.states"), "must not be empty"));
                }
                if !(track.period.is_finite() && track.period > 0.0) {
                    errs.push(FieldError::new(format!("{path}.track.period"), "must be finite and > 0"));
                }
                if !track.t0.is_finite() {
                    errs.push(FieldError::new(format!("{path}.track.t0"), "must be finite"));
                }
                if let Some(i) = track.states.iter().position(|s| !s.is_finite()) {
                    errs.push(FieldError::new(format!("{path}.track.states[{i}]"), "must be finite"));
                }
                errs
            }
            _ => Vec::new(),
        }
    }
}

/// One non-ego vehicle as seen by the others.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub state: VehicleState,
    pub params: VehicleParams,
}

/// Snapshot of the world at the start of a tick.
pub struct WorldView<'a> {
    pub time: f64,
    pub dt: f64,
    pub ego: VehicleState,
    pub ego_status: ManeuverStatus,
    pub ego_params: VehicleParams,
    pub ego_signaling: bool,
    pub vehicles: &'a [Neighbor],
    pub road: &'a RoadGeometry,
    /// Lower Cholesky factor of the residual covariance, for game noise.
    pub noise_factor: Option<&'a DMatrix<f64>>,
}

impl WorldView<'_> {
    /// Nearest vehicle ahead of `state` in its lane, other than `id` and the
    /// ego.
    pub fn front_of(&self, id: u32, state: &VehicleState) -> Option<Neighbor> {
        let lane = self.road.lane_of(state.y)?;
        self.vehicles
            .iter()
            .filter(|n| n.id != id && n.state.x > state.x && self.road.lane_of(n.state.y) == Some(lane))
            .min_by(|a, b| a.state.x.total_cmp(&b.state.x))
            .copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgentFlags {
    pub emergency_brake: bool,
    pub replay_exhausted: bool,
    pub game_fallback: bool,
}

impl AgentFlags {
    pub fn any(&self) -> bool {
        self.emergency_brake || self.replay_exhausted || self.game_fallback
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentAction {
    /// Informational for replay agents.
    pub control: Control,
    pub next: VehicleState,
    pub flags: AgentFlags,
}

const IDM_SUBSTEP: f64 = 0.1;

fn idm_step(
    state: &VehicleState,
    params: &VehicleParams,
    idm: &IdmParams,
    leaders: &[(VehicleState, VehicleParams)],
    dt: f64,
) -> Result<(VehicleState, bool)> {
    let n = (dt / IDM_SUBSTEP - 1e-9).ceil().max(1.0) as usize;
    let h = dt / n as f64;
    let mut s = *state;
    let mut emergency = false;
    for k in 0..n {
        let t = h * k as f64;
        let mut a = idm_accel(s.v, f64::INFINITY, 0.0, idm, params.a_bound).accel;
        for (ls, lp) in leaders {
            let lx = ls.x + ls.v * ls.psi.cos() * t;
            let gap = lx - s.x - 0.5 * (params.length + lp.length);
            let out = idm_accel(s.v, gap, s.v - ls.v, idm, params.a_bound);
            emergency |= out.emergency;
            a = a.min(out.accel);
        }
        s = step_longitudinal(&s, a, params, h)?;
    }
    Ok((s, emergency))
}

/// Advances one vehicle by one tick.
#[allow(clippy::too_many_arguments)]
pub fn agent_step<R: Rng>(
    model: &AgentModel,
    id: u32,
    state: &VehicleState,
    params: &VehicleParams,
    view: &WorldView<'_>,
    predictor: &mut Predictor<'_>,
    rng: &mut R,
) -> Result<AgentAction> {
    let dt = view.dt;
    let mut flags = AgentFlags::default();
    let next = match model {
        AgentModel::ConstantSpeed => VehicleState {
            x: state.x + state.v * state.psi.cos() * dt,
            y: state.y + state.v * state.psi.sin() * dt,
            ..*state
        },
        AgentModel::Idm { idm, target } => {
            let mut leaders = Vec::with_capacity(2);
            if let Some(f) = view.front_of(id, state) {
                leaders.push((f.state, f.params));
            }
            let lane = view.road.lane_of(state.y);
            let ego_in_lane = lane.is_some() && view.road.lane_of(view.ego.y) == lane;
            let yielding = *target == IdmTarget::Ego && view.ego_signaling;
            if view.ego.x > state.x && (ego_in_lane || yielding) {
                leaders.push((view.ego, view.ego_params));
            }
            let (s, emergency) = idm_step(state, params, idm, &leaders, dt)?;
            flags.emergency_brake = emergency;
            s
        }
        AgentModel::Game { role, noise } => {
            let front = view.front_of(id, state);
            let step = predictor.policy(
                *role,
                &view.ego,
                &view.ego_status,
                state,
                params,
                front.as_ref().map(|f| (&f.state, &f.params)),
            )?;
            flags.game_fallback = step.fallback;
            let mut s = step.next;
            if *noise {
                let l = view
                    .noise_factor
                    .ok_or_else(|| Error::Domain("game noise requested without a covariance".into()))?;
                if l.nrows() < 4 {
                    return Err(Error::Domain("noise covariance must cover (x, y, v, psi)".into()));
                }
                // the trailing 4x4 block is the interacting vehicle's part in both scopes
                let off = l.nrows() - 4;
                let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let w: [f64; 4] = std::array::from_fn(|i| (0..=i).map(|j| l[(off + i, off + j)] * z[j]).sum());
                s.x += w[0];
                s.y += w[1];
                s.v = params.clamp_speed(s.v + w[2]);
                s.psi += w[3];
            }
            s
        }
        AgentModel::Replay { track } => match track.sample(view.time + dt) {
            Some(s) => s,
            None => {
                flags.replay_exhausted = true;
                VehicleState {
                    x: state.x + state.v * state.psi.cos() * dt,
                    y: state.y + state.v * state.psi.sin() * dt,
                    ..*state
                }
            }
        },
    };
    Ok(AgentAction {
        control: Control::longitudinal((next.v - state.v) / dt),
        next,
        flags,
    })
}
