//! Belief-weighted, chance-constrained receding-horizon planner over the
//! merging vehicle's trajectory set, with pairwise interaction prediction.
//!
//! For each candidate ego trajectory and each interacting vehicle, two
//! rollouts are predicted, one per role. At every rollout step the
//! interacting vehicle re-solves its role's game against the ego's full
//! trajectory set at the ego's predicted state and applies the first step of
//! its optimal trajectory. Policies are memoized per call, so candidates
//! sharing a prefix share the work.
//!
//! Vehicles that are not interacting are predicted at constant speed and only
//! enter as hard collision constraints.

use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::beliefs::BeliefState;
use crate::dynamics::{Control, VehicleParams, VehicleState};
use crate::error::{Error, FieldError, Result};
use crate::game::{interaction_matrix, policy_action, self_scores, Player, Role};
use crate::rewards::{boxes_overlap, ego_road_ok, interaction_score_states, is_safe, self_score, PairState, RewardConfig};
use crate::road::RoadGeometry;
use crate::trajectories::{
    generate_longitudinal_set, generate_merge_set, Maneuver, ManeuverStatus, Trajectory, TrajectoryGenConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub dt: f64,
    /// Discount factor `lambda`.
    pub discount: f64,
    pub epsilon: f64,
    pub rewards: RewardConfig,
    pub accel_levels: Vec<f64>,
    pub lane_change_duration: f64,
    pub abort_duration: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let g = TrajectoryGenConfig::default();
        Self {
            horizon: g.horizon,
            dt: g.dt,
            discount: 0.8,
            epsilon: 0.1,
            rewards: RewardConfig::default(),
            accel_levels: g.accel_levels,
            lane_change_duration: g.lane_change_duration,
            abort_duration: g.abort_duration,
        }
    }
}

impl PlannerConfig {
    pub fn generation(&self) -> TrajectoryGenConfig {
        TrajectoryGenConfig {
            horizon: self.horizon,
            dt: self.dt,
            accel_levels: self.accel_levels.clone(),
            lane_change_duration: self.lane_change_duration,
            abort_duration: self.abort_duration,
        }
    }

    pub fn validate(&self, path: &str) -> Vec<FieldError> {
        let mut errs = self.generation().validate(path);
        if !(self.discount > 0.0 && self.discount < 1.0) {
            errs.push(FieldError::new(format!("{path}.discount"), "must be in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            errs.push(FieldError::new(format!("{path}.epsilon"), "must be in [0, 1]"));
        }
        errs.extend(self.rewards.validate(&format!("{path}.rewards")));
        errs
    }
}

/// A vehicle whose role is uncertain and whose reaction is predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractingVehicle {
    pub id: u32,
    pub state: VehicleState,
    pub params: VehicleParams,
    pub belief: BeliefState,
    /// Nearest vehicle ahead in its lane, other than the ego.
    pub front: Option<(VehicleState, VehicleParams)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentVehicle {
    pub id: u32,
    pub state: VehicleState,
    pub params: VehicleParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Traffic {
    pub ego: VehicleState,
    pub ego_status: ManeuverStatus,
    pub ego_params: VehicleParams,
    pub interacting: Vec<InteractingVehicle>,
    pub environment: Vec<EnvironmentVehicle>,
}

/// The interacting vehicle's predicted states under one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRollout {
    pub role: Role,
    /// `N + 1` states starting at the current one.
    pub states: Vec<VehicleState>,
    /// Some step fell back to zero acceleration because the ego had no
    /// admissible trajectory.
    pub fallback: bool,
}

/// Per-interacting-vehicle prediction for the chosen candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub id: u32,
    pub belief: BeliefState,
    pub rollouts: [PairRollout; 2],
    /// Role-conditioned cumulative ego reward, `[leader, follower]`.
    pub role_rewards: [f64; 2],
    /// Whether each role's rollout stays in the safe set.
    pub role_safe: [bool; 2],
    pub safety_probability: f64,
    pub expected_reward: f64,
}

impl PairPrediction {
    /// Predicted next state of the interacting vehicle for each role.
    pub fn next_states(&self) -> [VehicleState; 2] {
        [self.rollouts[0].states[1], self.rollouts[1].states[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub chosen_index: usize,
    pub chosen: Trajectory,
    pub candidate_count: usize,
    pub pairs: Vec<PairPrediction>,
    pub expected_reward: f64,
    /// Sum of pairwise safety probabilities.
    pub safety_sum: f64,
    /// The chance constraint held for the chosen trajectory.
    pub feasible: bool,
    pub feasible_count: usize,
    pub policy_solves: usize,
}

impl PlanResult {
    pub fn first_control(&self) -> Control {
        self.chosen.first_control()
    }
}

/// `sum_l p_l R_l`.
pub fn expected_pair_reward(role_rewards: [f64; 2], belief: &BeliefState) -> f64 {
    belief.p_leader * role_rewards[0] + belief.p_follower * role_rewards[1]
}

/// `sum_l p_l 1[rollout_l safe at every step]`.
pub fn pair_safety_probability(role_safe: [bool; 2], belief: &BeliefState) -> f64 {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    belief.p_leader * ind(role_safe[0]) + belief.p_follower * ind(role_safe[1])
}

/// `sum_k p_k >= m - epsilon`.
pub fn chance_constraint_ok(probabilities: &[f64], epsilon: f64) -> bool {
    let m = probabilities.len() as f64;
    probabilities.iter().sum::<f64>() >= m - epsilon - 1e-12
}

fn push_state(key: &mut Vec<u64>, s: &VehicleState) {
    key.extend(s.as_array().iter().map(|v| v.to_bits()));
}

fn push_params(key: &mut Vec<u64>, p: &VehicleParams) {
    key.extend(
        [p.l_f, p.l_r, p.length, p.width, p.a_bound, p.delta_bound, p.v_min, p.v_max]
            .iter()
            .map(|v| v.to_bits()),
    );
}

fn push_status(key: &mut Vec<u64>, st: &ManeuverStatus) {
    match st {
        ManeuverStatus::Keeping => key.push(0),
        ManeuverStatus::Changing {
            segment,
            elapsed,
            from_lane,
            to_lane,
        } => {
            key.push(1);
            key.extend(segment.ax.iter().chain(segment.ay.iter()).map(|v| v.to_bits()));
            key.extend([segment.duration.to_bits(), elapsed.to_bits(), *from_lane as u64, *to_lane as u64]);
        }
    }
}

struct ScoredSet {
    set: Vec<Trajectory>,
    scores: Vec<f64>,
}

/// One step of a vehicle's game policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyStep {
    pub next: VehicleState,
    pub control: Control,
    /// The ego had no admissible trajectory; the vehicle holds its speed.
    pub fallback: bool,
}

/// Memoizing solver for interacting vehicles' game policies.
pub struct Predictor<'a> {
    cfg: &'a PlannerConfig,
    gen: TrajectoryGenConfig,
    road: &'a RoadGeometry,
    ego_params: VehicleParams,
    ego_sets: HashMap<Vec<u64>, Option<Rc<ScoredSet>>>,
    policies: HashMap<Vec<u64>, PolicyStep>,
    solves: usize,
}

impl<'a> Predictor<'a> {
    pub fn new(cfg: &'a PlannerConfig, road: &'a RoadGeometry, ego_params: VehicleParams) -> Self {
        Self {
            cfg,
            gen: cfg.generation(),
            road,
            ego_params,
            ego_sets: HashMap::new(),
            policies: HashMap::new(),
            solves: 0,
        }
    }

    /// Number of game solves performed so far (cache misses).
    pub fn solves(&self) -> usize {
        self.solves
    }

    fn ego_set(&mut self, ego: &VehicleState, status: &ManeuverStatus) -> Result<Option<Rc<ScoredSet>>> {
        let mut key = Vec::with_capacity(24);
        push_state(&mut key, ego);
        push_status(&mut key, status);
        if let Some(s) = self.ego_sets.get(&key) {
            return Ok(s.clone());
        }
        let set = match generate_merge_set(ego, status, &self.gen, &self.ego_params, self.road) {
            Ok(set) => {
                let scores = set
                    .iter()
                    .map(|t| self_score(t, &self.ego_params, self.road, &self.cfg.rewards, self.cfg.discount))
                    .collect();
                Some(Rc::new(ScoredSet { set, scores }))
            }
            Err(Error::NoAdmissibleTrajectory(_)) => None,
            Err(e) => return Err(e),
        };
        self.ego_sets.insert(key, set.clone());
        Ok(set)
    }

    /// First step of the interacting vehicle's optimal trajectory when it
    /// plays `role` against the ego's full trajectory set.
    pub fn policy(
        &mut self,
        role: Role,
        ego: &VehicleState,
        ego_status: &ManeuverStatus,
        other: &VehicleState,
        other_params: &VehicleParams,
        front: Option<(&VehicleState, &VehicleParams)>,
    ) -> Result<PolicyStep> {
        let mut key = Vec::with_capacity(64);
        key.push(role.index() as u64);
        push_state(&mut key, ego);
        push_status(&mut key, ego_status);
        push_state(&mut key, other);
        push_params(&mut key, other_params);
        if let Some((fs, fp)) = front {
            push_state(&mut key, fs);
            push_params(&mut key, fp);
        }
        if let Some(p) = self.policies.get(&key) {
            return Ok(*p);
        }
        let step = match self.ego_set(ego, ego_status)? {
            None => PolicyStep {
                next: VehicleState {
                    x: other.x + other.v * self.gen.dt,
                    ..*other
                },
                control: Control::default(),
                fallback: true,
            },
            Some(ego_set) => {
                self.solves += 1;
                let own = generate_longitudinal_set(other, &self.gen, other_params)?;
                let actor = Player {
                    set: &own,
                    params: other_params,
                };
                let opponent = Player {
                    set: &ego_set.set,
                    params: &self.ego_params,
                };
                let actor_self = self_scores(&actor, front, self.road, &self.cfg.rewards, self.cfg.discount);
                let inter = interaction_matrix(&actor, &opponent, self.road, &self.cfg.rewards, self.cfg.discount);
                let out = policy_action(role, &actor, &actor_self, &opponent, &ego_set.scores, &inter)?;
                let t = &own[out.index];
                PolicyStep {
                    next: t.states[1],
                    control: t.first_control(),
                    fallback: false,
                }
            }
        };
        self.policies.insert(key, step);
        Ok(step)
    }

    /// The interacting vehicle's closed-loop response to a committed ego
    /// trajectory. The front vehicle, if any, holds its speed.
    pub fn predict_pair_rollout(
        &mut self,
        role: Role,
        ego_traj: &Trajectory,
        other: &VehicleState,
        other_params: &VehicleParams,
        front: Option<(&VehicleState, &VehicleParams)>,
    ) -> Result<PairRollout> {
        let n = ego_traj.steps();
        let mut states = Vec::with_capacity(n + 1);
        states.push(*other);
        let mut fallback = false;
        for tau in 0..n {
            let f = front.map(|(s, p)| {
                (
                    VehicleState {
                        x: s.x + s.v * ego_traj.dt * tau as f64,
                        ..*s
                    },
                    p,
                )
            });
            let step = self.policy(
                role,
                &ego_traj.states[tau],
                &ego_traj.statuses[tau].settled(),
                &states[tau],
                other_params,
                f.as_ref().map(|(s, p)| (s, *p)),
            )?;
            fallback |= step.fallback;
            states.push(step.next);
        }
        Ok(PairRollout {
            role,
            states,
            fallback,
        })
    }
}

fn constant_speed(s: &VehicleState, dt: f64, k: usize) -> VehicleState {
    VehicleState {
        x: s.x + s.v * s.psi.cos() * dt * k as f64,
        y: s.y + s.v * s.psi.sin() * dt * k as f64,
        ..*s
    }
}

/// After the first step the ego is in, or changing into, the target lane, or
/// can still stop before the merge lane ends by braking at the hardest level.
fn stop_ok(cand: &Trajectory, road: &RoadGeometry, brake: f64) -> bool {
    let (Some(next), Some(status)) = (cand.states.get(1), cand.statuses.get(1)) else {
        return true;
    };
    let heading_in = matches!(status.settled(), ManeuverStatus::Changing { to_lane, .. } if to_lane == road.target_lane);
    if road.in_target_lane(next.y) || heading_in {
        return true;
    }
    let (mut x, mut v) = (next.x, next.v);
    if brake > 0.0 {
        while v > 0.0 {
            x += v * cand.dt;
            v -= brake * cand.dt;
        }
    }
    x <= road.merge_lane_end_x
}

struct CandidateEval {
    pairs: Vec<PairPrediction>,
    ego_ok: bool,
    safety_sum: f64,
    objective: f64,
    feasible: bool,
}

/// Chooses the ego trajectory for the current step.
pub fn plan(traffic: &Traffic, road: &RoadGeometry, cfg: &PlannerConfig) -> Result<PlanResult> {
    let mut predictor = Predictor::new(cfg, road, traffic.ego_params);
    plan_with(traffic, road, cfg, &mut predictor)
}

/// [`plan`] reusing a predictor, whose cache then also serves game agents
/// reacting to the same ego state.
pub fn plan_with(
    traffic: &Traffic,
    road: &RoadGeometry,
    cfg: &PlannerConfig,
    predictor: &mut Predictor<'_>,
) -> Result<PlanResult> {
    let gen = cfg.generation();
    let candidates = generate_merge_set(&traffic.ego, &traffic.ego_status, &gen, &traffic.ego_params, road)?;
    if candidates.is_empty() {
        return Err(Error::EmptySet("ego trajectory"));
    }
    let solves_before = predictor.solves();
    let m = traffic.interacting.len();
    let rc = &cfg.rewards;
    let brake = -cfg.accel_levels.iter().copied().fold(0.0, f64::min);

    let mut evals = Vec::with_capacity(candidates.len());
    for cand in &candidates {
        let ego_ok = stop_ok(cand, road, brake)
            && cand.states[1..].iter().enumerate().all(|(i, s)| {
                ego_road_ok(s, road)
                    && traffic.environment.iter().all(|e| {
                        !boxes_overlap(s, &traffic.ego_params, &constant_speed(&e.state, cand.dt, i + 1), &e.params, rc.box_margin)
                    })
            });
        let mut pairs = Vec::with_capacity(m);
        for iv in &traffic.interacting {
            let front = iv.front.as_ref().map(|(s, p)| (s, p));
            let mut rewards = [0.0; 2];
            let mut safe = [true; 2];
            let mut rollouts = Vec::with_capacity(2);
            for role in Role::ALL {
                let r = predictor.predict_pair_rollout(role, cand, &iv.state, &iv.params, front)?;
                rewards[role.index()] = self_score(cand, &traffic.ego_params, road, rc, cfg.discount)
                    + interaction_score_states(&cand.states[1..], &traffic.ego_params, &r.states[1..], &iv.params, road, rc, cfg.discount);
                safe[role.index()] = (1..r.states.len()).all(|k| {
                    is_safe(
                        &PairState {
                            ego: cand.states[k],
                            other: r.states[k],
                            ego_params: &traffic.ego_params,
                            other_params: &iv.params,
                            road,
                        },
                        rc,
                    )
                });
                rollouts.push(r);
            }
            let follower = rollouts.pop().expect("two roles");
            let leader = rollouts.pop().expect("two roles");
            pairs.push(PairPrediction {
                id: iv.id,
                belief: iv.belief,
                rollouts: [leader, follower],
                role_rewards: rewards,
                role_safe: safe,
                safety_probability: pair_safety_probability(safe, &iv.belief),
                expected_reward: expected_pair_reward(rewards, &iv.belief),
            });
        }
        let probs: Vec<f64> = pairs.iter().map(|p| p.safety_probability).collect();
        let objective = if m == 0 {
            self_score(cand, &traffic.ego_params, road, rc, cfg.discount)
        } else {
            pairs.iter().map(|p| p.expected_reward).sum()
        };
        evals.push(CandidateEval {
            safety_sum: probs.iter().sum(),
            feasible: ego_ok && chance_constraint_ok(&probs, cfg.epsilon),
            pairs,
            ego_ok,
            objective,
        });
    }

    let feasible_count = evals.iter().filter(|e| e.feasible).count();
    let better = |a: &CandidateEval, b: &CandidateEval| -> bool {
        if feasible_count > 0 {
            a.objective > b.objective
        } else {
            (a.ego_ok, a.safety_sum, a.objective) > (b.ego_ok, b.safety_sum, b.objective)
        }
    };
    let mut best: Option<usize> = None;
    for (i, e) in evals.iter().enumerate() {
        if feasible_count > 0 && !e.feasible {
            continue;
        }
        if best.is_none_or(|b| better(e, &evals[b])) {
            best = Some(i);
        }
    }
    let idx = best.expect("non-empty candidate set");
    let chosen = candidates[idx].clone();
    let e = evals.swap_remove(idx);
    log::debug!(
        "plan: {} candidates, {} feasible, chose {} ({:?}), {} solves",
        candidates.len(),
        feasible_count,
        idx,
        chosen.maneuver,
        predictor.solves() - solves_before
    );
    Ok(PlanResult {
        chosen_index: idx,
        candidate_count: candidates.len(),
        expected_reward: e.objective,
        safety_sum: e.safety_sum,
        feasible: e.feasible,
        pairs: e.pairs,
        feasible_count,
        policy_solves: predictor.solves() - solves_before,
        chosen,
    })
}

/// True when the trajectory starts or continues a lane change.
pub fn is_merging(traj: &Trajectory) -> bool {
    matches!(traj.maneuver, Maneuver::LaneChange { .. } | Maneuver::ContinueChange)
}
