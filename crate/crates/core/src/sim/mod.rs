//! Closed-loop episodes: selection, belief update, planning, ego motion and
//! agent stepping, with per-step logging.

mod config;
mod log;
mod outcome;
mod summary;

pub use config::{AgentSpec, EgoSpec, ScenarioConfig, EGO_ID, SCENARIO_SCHEMA, SCHEMA_VERSION};
pub use log::{
    BeliefRecord, EventLog, FlagRecord, LogHeader, LogRecord, PairSafetyRecord, PlanRecord, StateRecord,
    StepRecord, VehicleInfo,
};
pub use outcome::{classify_outcome, Outcome, OutcomeClass, MERGE_TOLERANCE};
pub use summary::{batch_run, BatchReport, BatchSummary, EpisodeSummary};

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{agent_step, Neighbor, WorldView};
use crate::beliefs::{residual, update_belief_log, BeliefState, ResidualScope};
use crate::dynamics::VehicleState;
use crate::error::Result;
use crate::planner::{plan_with, EnvironmentVehicle, InteractingVehicle, Predictor, Traffic};
use crate::selection::select_interacting;
use crate::trajectories::ManeuverStatus;

/// A finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub outcome: Outcome,
    pub log: EventLog,
}

struct Vehicle<'c> {
    spec: &'c AgentSpec,
    state: VehicleState,
}

fn header(cfg: &ScenarioConfig) -> LogHeader {
    let mut vehicles = vec![VehicleInfo {
        id: EGO_ID,
        params: cfg.ego.params,
    }];
    let mut agents: Vec<&AgentSpec> = cfg.agents.iter().collect();
    agents.sort_by_key(|a| a.id);
    vehicles.extend(agents.iter().map(|a| VehicleInfo {
        id: a.id,
        params: a.params,
    }));
    LogHeader {
        schema_version: SCHEMA_VERSION,
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        dt: cfg.planner.dt,
        ego_id: EGO_ID,
        road: cfg.road.clone(),
        vehicles,
    }
}

/// Runs one episode to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Episode> {
    cfg.validate()?;
    let road = &cfg.road;
    let dt = cfg.planner.dt;
    let margin = cfg.planner.rewards.box_margin;
    let residual_model = cfg.beliefs.covariance()?;
    let noise_factor = residual_model.factor();

    let head = header(cfg);
    let param_of = |id: u32| head.vehicles.iter().find(|v| v.id == id).map(|v| v.params);

    let mut ego = cfg.ego.state;
    let mut ego_status = ManeuverStatus::Keeping;
    let mut vehicles: Vec<Vehicle<'_>> = cfg
        .agents
        .iter()
        .map(|spec| Vehicle {
            spec,
            state: spec.state,
        })
        .collect();
    vehicles.sort_by_key(|v| v.spec.id);
    // one stream per agent so that adding a vehicle leaves the others' noise alone
    let mut rngs: Vec<ChaCha8Rng> = vehicles
        .iter()
        .map(|v| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
            r.set_stream(u64::from(v.spec.id));
            r
        })
        .collect();

    let mut beliefs: BTreeMap<u32, (BeliefState, bool)> = BTreeMap::new();
    let mut predictions: BTreeMap<u32, [VehicleState; 2]> = BTreeMap::new();
    let mut log = EventLog {
        records: vec![LogRecord::Header(head.clone())],
    };
    let mut pending_flags: Vec<FlagRecord> = Vec::new();

    for step in 0..=cfg.max_steps {
        let time = step as f64 * dt;
        let mut states = vec![StateRecord::new(EGO_ID, &ego)];
        states.extend(vehicles.iter().map(|v| StateRecord::new(v.spec.id, &v.state)));
        let mut record = StepRecord {
            step,
            time,
            states,
            ego_changing: ego_status.is_changing(),
            interacting: Vec::new(),
            beliefs: Vec::new(),
            plan: None,
            flags: std::mem::take(&mut pending_flags),
        };

        let terminal = outcome::snapshot_class(&record, &param_of, road, margin, EGO_ID)?.is_some();
        if terminal || step == cfg.max_steps {
            record.beliefs = belief_records(&beliefs);
            log.records.push(LogRecord::Step(record));
            break;
        }

        // 1. interacting vehicles
        let interacting: Vec<u32> = match &cfg.interacting {
            Some(ids) => ids.clone(),
            None => {
                let pool: Vec<(u32, VehicleState)> = vehicles.iter().map(|v| (v.spec.id, v.state)).collect();
                select_interacting(&ego, &pool, road, &cfg.selection)
            }
        };

        // 2. beliefs
        for id in &interacting {
            let v = vehicles.iter().find(|v| v.spec.id == *id).expect("validated id");
            let entry = beliefs.entry(*id).or_insert((cfg.beliefs.p0, false));
            if let Some(pred) = predictions.get(id) {
                let ll: Vec<f64> = pred
                    .iter()
                    .map(|p| {
                        let r = residual(&v.state, p);
                        match cfg.beliefs.scope {
                            ResidualScope::Interacting => residual_model.log_density(&r),
                            ResidualScope::Joint => {
                                let mut joint = [0.0; 8];
                                joint[4..].copy_from_slice(&r);
                                residual_model.log_density(&joint)
                            }
                        }
                    })
                    .collect::<Result<_>>()?;
                let u = update_belief_log(&entry.0, ll[0], ll[1], &cfg.beliefs)?;
                *entry = (u.posterior, u.degenerate);
            }
        }
        record.interacting = interacting.clone();
        record.beliefs = belief_records(&beliefs);

        // 3. plan
        let neighbors: Vec<Neighbor> = vehicles
            .iter()
            .map(|v| Neighbor {
                id: v.spec.id,
                state: v.state,
                params: v.spec.params,
            })
            .collect();
        let view = WorldView {
            time,
            dt,
            ego,
            ego_status,
            ego_params: cfg.ego.params,
            ego_signaling: cfg.ego_signals_merge,
            vehicles: &neighbors,
            road,
            noise_factor: Some(&noise_factor),
        };
        let traffic = Traffic {
            ego,
            ego_status,
            ego_params: cfg.ego.params,
            interacting: interacting
                .iter()
                .map(|id| {
                    let n = neighbors.iter().find(|n| n.id == *id).expect("validated id");
                    InteractingVehicle {
                        id: *id,
                        state: n.state,
                        params: n.params,
                        belief: beliefs[id].0,
                        front: view.front_of(*id, &n.state).map(|f| (f.state, f.params)),
                    }
                })
                .collect(),
            environment: neighbors
                .iter()
                .filter(|n| !interacting.contains(&n.id))
                .map(|n| EnvironmentVehicle {
                    id: n.id,
                    state: n.state,
                    params: n.params,
                })
                .collect(),
        };
        let mut predictor = Predictor::new(&cfg.planner, road, cfg.ego.params);
        let t0 = Instant::now();
        let result = plan_with(&traffic, road, &cfg.planner, &mut predictor)?;
        let plan_time = t0.elapsed().as_secs_f64();
        predictions = result.pairs.iter().map(|p| (p.id, p.next_states())).collect();
        record.plan = Some(PlanRecord {
            chosen_index: result.chosen_index,
            maneuver: result.chosen.maneuver,
            candidates: result.candidate_count,
            feasible: result.feasible,
            feasible_count: result.feasible_count,
            expected_reward: result.expected_reward,
            safety_sum: result.safety_sum,
            pairs: result
                .pairs
                .iter()
                .map(|p| PairSafetyRecord {
                    id: p.id,
                    probability: p.safety_probability,
                    role_safe: p.role_safe,
                    expected_reward: p.expected_reward,
                })
                .collect(),
            policy_solves: result.policy_solves,
            plan_time_s: Some(plan_time),
        });

        // 4-5. ego follows its plan; agents react to the pre-step world
        let mut next = Vec::with_capacity(vehicles.len());
        for (v, rng) in vehicles.iter().zip(rngs.iter_mut()) {
            let a = agent_step(&v.spec.model, v.spec.id, &v.state, &v.spec.params, &view, &mut predictor, rng)?;
            if a.flags.any() {
                pending_flags.push(FlagRecord {
                    id: v.spec.id,
                    flags: a.flags,
                });
            }
            next.push(a.next);
        }
        for (v, s) in vehicles.iter_mut().zip(next) {
            v.state = s;
        }
        ego = result.chosen.states[1];
        ego_status = result.chosen.statuses[1].settled();
        log.records.push(LogRecord::Step(record));
    }

    let outcome = classify_outcome(&log, margin)?;
    log.records.push(LogRecord::Outcome(outcome.clone()));
    Ok(Episode { outcome, log })
}

fn belief_records(beliefs: &BTreeMap<u32, (BeliefState, bool)>) -> Vec<BeliefRecord> {
    beliefs
        .iter()
        .map(|(id, (b, degenerate))| BeliefRecord {
            id: *id,
            p_leader: b.p_leader,
            p_follower: b.p_follower,
            degenerate: *degenerate,
        })
        .collect()
}
