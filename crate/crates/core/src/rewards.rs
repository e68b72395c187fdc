//! Stage reward `R = w . r`, its discounted sum, and the safe-set test.
//!
//! Terms, each in `[-1, 1]`:
//!
//! | term | meaning |
//! |------|---------|
//! | `r1` | `-1` when the inflated collision boxes overlap |
//! | `r2` | `-1` when the ego is off the road, or past the end of the acceleration lane without being in the target lane |
//! | `r3` | longitudinal speed over `v_max`, clipped to `[0, 1]` |
//! | `r4` | `1` when the ego is inside the target lane |
//! | `r5` | `-1` when both vehicles share a lane and the bumper-to-bumper time gap is below the comfort gap |
//!
//! `r1` and `r5` are symmetric in the two vehicles; `r2..r4` depend on the
//! rewarded vehicle only. Game payoffs use that split (see
//! [`self_score`] and [`interaction_score`]).

use serde::{Deserialize, Serialize};

use crate::dynamics::{Control, VehicleParams, VehicleState};
use crate::error::FieldError;
use crate::road::RoadGeometry;
use crate::trajectories::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub collision: f64,
    pub road: f64,
    pub progress: f64,
    pub target_lane: f64,
    pub headway: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            collision: 10_000.0,
            road: 5_000.0,
            progress: 10.0,
            target_lane: 50.0,
            headway: 100.0,
        }
    }
}

impl RewardWeights {
    pub const ZERO: RewardWeights = RewardWeights {
        collision: 0.0,
        road: 0.0,
        progress: 0.0,
        target_lane: 0.0,
        headway: 0.0,
    };

    pub fn as_array(&self) -> [f64; 5] {
        [self.collision, self.road, self.progress, self.target_lane, self.headway]
    }

    pub fn validate(&self, path: &str) -> Vec<FieldError> {
        let names = ["collision", "road", "progress", "target_lane", "headway"];
        names
            .iter()
            .zip(self.as_array())
            .filter(|(_, w)| !(w.is_finite() && *w >= 0.0))
            .map(|(n, _)| FieldError::new(format!("{path}.{n}"), "must be finite and >= 0"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    /// Same-lane time gap below which `r5` fires (s).
    pub comfort_time_gap: f64,
    /// Added to each half-extent of the collision rectangles (m).
    pub box_margin: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            comfort_time_gap: 0.5,
            box_margin: 0.5,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self, path: &str) -> Vec<FieldError> {
        let mut errs = self.weights.validate(&format!("{path}.weights"));
        if !(self.comfort_time_gap.is_finite() && self.comfort_time_gap >= 0.0) {
            errs.push(FieldError::new(format!("{path}.comfort_time_gap"), "must be finite and >= 0"));
        }
        if !(self.box_margin.is_finite() && self.box_margin >= 0.0) {
            errs.push(FieldError::new(format!("{path}.box_margin"), "must be finite and >= 0"));
        }
        errs
    }
}

/// Joint state of the ego and one other vehicle.
#[derive(Debug, Clone, Copy)]
pub struct PairState<'a> {
    pub ego: VehicleState,
    pub other: VehicleState,
    pub ego_params: &'a VehicleParams,
    pub other_params: &'a VehicleParams,
    pub road: &'a RoadGeometry,
}

impl<'a> PairState<'a> {
    /// The same pair seen from the other vehicle.
    pub fn swapped(&self) -> PairState<'a> {
        PairState {
            ego: self.other,
            other: self.ego,
            ego_params: self.other_params,
            other_params: self.ego_params,
            road: self.road,
        }
    }
}

/// Per-term breakdown `r1..r5`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms(pub [f64; 5]);

impl RewardTerms {
    pub fn weighted(&self, w: &RewardWeights) -> f64 {
        self.0.iter().zip(w.as_array()).map(|(r, w)| r * w).sum()
    }
}

fn corners(s: &VehicleState, p: &VehicleParams, margin: f64) -> [(f64, f64); 4] {
    let (hl, hw) = (0.5 * p.length + margin, 0.5 * p.width + margin);
    let (sin, cos) = s.psi.sin_cos();
    let mut out = [(0.0, 0.0); 4];
    for (k, (a, b)) in [(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)].into_iter().enumerate() {
        out[k] = (s.x + a * cos - b * sin, s.y + a * sin + b * cos);
    }
    out
}

fn separated_on(axis: (f64, f64), a: &[(f64, f64); 4], b: &[(f64, f64); 4]) -> bool {
    let proj = |c: &[(f64, f64); 4]| {
        c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let d = p.0 * axis.0 + p.1 * axis.1;
            (lo.min(d), hi.max(d))
        })
    };
    let (alo, ahi) = proj(a);
    let (blo, bhi) = proj(b);
    ahi < blo || bhi < alo
}

/// Whether the two yaw-oriented rectangles, each grown by `margin` on every
/// side, intersect. Touching counts as overlap.
pub fn boxes_overlap(
    a: &VehicleState,
    pa: &VehicleParams,
    b: &VehicleState,
    pb: &VehicleParams,
    margin: f64,
) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let ra = (0.5 * pa.length + margin).hypot(0.5 * pa.width + margin);
    let rb = (0.5 * pb.length + margin).hypot(0.5 * pb.width + margin);
    if dx * dx + dy * dy > (ra + rb) * (ra + rb) {
        return false;
    }
    if a.psi == 0.0 && b.psi == 0.0 {
        return dx.abs() <= 0.5 * (pa.length + pb.length) + 2.0 * margin
            && dy.abs() <= 0.5 * (pa.width + pb.width) + 2.0 * margin;
    }
    let ca = corners(a, pa, margin);
    let cb = corners(b, pb, margin);
    for psi in [a.psi, b.psi] {
        let (sin, cos) = psi.sin_cos();
        if separated_on((cos, sin), &ca, &cb) || separated_on((-sin, cos), &ca, &cb) {
            return false;
        }
    }
    true
}

/// Bumper-to-bumper gap divided by the rear vehicle's speed, when both share
/// a lane. `None` when they are in different lanes or either is off-lane.
pub fn time_gap(
    a: &VehicleState,
    pa: &VehicleParams,
    b: &VehicleState,
    pb: &VehicleParams,
    road: &RoadGeometry,
) -> Option<f64> {
    let la = road.lane_of(a.y)?;
    if road.lane_of(b.y)? != la {
        return None;
    }
    let gap = (a.x - b.x).abs() - 0.5 * (pa.length + pb.length);
    let rear_v = if a.x < b.x { a.v } else { b.v };
    Some(if gap <= 0.0 {
        0.0
    } else if rear_v <= 0.0 {
        f64::INFINITY
    } else {
        gap / rear_v
    })
}

/// `(r1, r5)` for a pair of vehicles.
pub fn interaction_terms(
    a: &VehicleState,
    pa: &VehicleParams,
    b: &VehicleState,
    pb: &VehicleParams,
    road: &RoadGeometry,
    cfg: &RewardConfig,
) -> (f64, f64) {
    let r1 = if boxes_overlap(a, pa, b, pb, cfg.box_margin) { -1.0 } else { 0.0 };
    let r5 = match time_gap(a, pa, b, pb, road) {
        Some(g) if g < cfg.comfort_time_gap => -1.0,
        _ => 0.0,
    };
    (r1, r5)
}

/// `(r2, r3, r4)` for one vehicle.
pub fn self_terms(s: &VehicleState, p: &VehicleParams, road: &RoadGeometry) -> (f64, f64, f64) {
    let off_road = !road.within_lateral_bounds(s.y)
        || (s.x > road.merge_lane_end_x && !road.in_target_lane(s.y));
    let r2 = if off_road { -1.0 } else { 0.0 };
    let r3 = (s.v * s.psi.cos() / p.v_max).clamp(0.0, 1.0);
    let r4 = if road.in_target_lane(s.y) { 1.0 } else { 0.0 };
    (r2, r3, r4)
}

/// Stage reward of the pair's ego. Controls do not enter the current terms
/// but are part of the signature so that comfort terms on actuation can be
/// added without changing callers.
pub fn stage_reward(pair: &PairState<'_>, _u_ego: &Control, _u_other: &Control, cfg: &RewardConfig) -> (f64, RewardTerms) {
    let (r2, r3, r4) = self_terms(&pair.ego, pair.ego_params, pair.road);
    let (r1, r5) = interaction_terms(&pair.ego, pair.ego_params, &pair.other, pair.other_params, pair.road, cfg);
    let terms = RewardTerms([r1, r2, r3, r4, r5]);
    (terms.weighted(&cfg.weights), terms)
}

/// `sum_tau lambda^tau R_tau` over a rollout.
pub fn cumulative_reward(
    rollout: &[(PairState<'_>, Control, Control)],
    cfg: &RewardConfig,
    lambda: f64,
) -> f64 {
    let mut disc = 1.0;
    let mut total = 0.0;
    for (pair, ue, uo) in rollout {
        total += disc * stage_reward(pair, ue, uo, cfg).0;
        disc *= lambda;
    }
    total
}

/// Membership in the safe set: no box overlap, ego on the road, ego not past
/// the end of the acceleration lane while still in it.
pub fn is_safe(pair: &PairState<'_>, cfg: &RewardConfig) -> bool {
    ego_road_ok(&pair.ego, pair.road)
        && !boxes_overlap(&pair.ego, pair.ego_params, &pair.other, pair.other_params, cfg.box_margin)
}

/// The ego-only part of [`is_safe`].
pub fn ego_road_ok(ego: &VehicleState, road: &RoadGeometry) -> bool {
    road.within_lateral_bounds(ego.y) && !road.overran_merge_lane(ego.x, ego.y)
}

/// Discounted self terms along `traj.states[1..]`.
pub fn self_score(traj: &Trajectory, p: &VehicleParams, road: &RoadGeometry, cfg: &RewardConfig, lambda: f64) -> f64 {
    let w = &cfg.weights;
    let mut disc = 1.0;
    let mut total = 0.0;
    for s in &traj.states[1..] {
        let (r2, r3, r4) = self_terms(s, p, road);
        total += disc * (w.road * r2 + w.progress * r3 + w.target_lane * r4);
        disc *= lambda;
    }
    total
}

/// Discounted interaction terms along two trajectories' `states[1..]`.
pub fn interaction_score(
    a: &Trajectory,
    pa: &VehicleParams,
    b: &Trajectory,
    pb: &VehicleParams,
    road: &RoadGeometry,
    cfg: &RewardConfig,
    lambda: f64,
) -> f64 {
    interaction_score_states(&a.states[1..], pa, &b.states[1..], pb, road, cfg, lambda)
}

/// [`interaction_score`] over explicit successor states.
pub fn interaction_score_states(
    a: &[VehicleState],
    pa: &VehicleParams,
    b: &[VehicleState],
    pb: &VehicleParams,
    road: &RoadGeometry,
    cfg: &RewardConfig,
    lambda: f64,
) -> f64 {
    let w = &cfg.weights;
    // beyond this longitudinal distance neither term can fire
    let reach = (0.5 * pa.length + cfg.box_margin).hypot(0.5 * pa.width + cfg.box_margin)
        + (0.5 * pb.length + cfg.box_margin).hypot(0.5 * pb.width + cfg.box_margin);
    let mut disc = 1.0;
    let mut total = 0.0;
    for (sa, sb) in a.iter().zip(b) {
        let dx = (sa.x - sb.x).abs();
        let far = dx > reach + cfg.comfort_time_gap * sa.v.max(sb.v);
        if !far {
            let (r1, r5) = interaction_terms(sa, pa, sb, pb, road, cfg);
            total += disc * (w.collision * r1 + w.headway * r5);
        }
        disc *= lambda;
    }
    total
}
