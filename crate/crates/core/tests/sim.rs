use std::io::BufReader;

use lfgc::agents::AgentModel;
use lfgc::dynamics::{VehicleParams, VehicleState};
use lfgc::error::Error;
use lfgc::game::Role;
use lfgc::road::RoadGeometry;
use lfgc::sim::{
    batch_run, classify_outcome, run_scenario, AgentSpec, EventLog, LogHeader, LogRecord, OutcomeClass, ScenarioConfig,
    StateRecord, StepRecord, VehicleInfo, EGO_ID,
};

fn fixture(name: &str) -> ScenarioConfig {
    ScenarioConfig::from_path(format!("{}/tests/fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn synthetic(path: &[(f64, f64, bool)], other: Option<(f64, f64)>) -> EventLog {
    let p = VehicleParams::default();
    let mut records = vec![LogRecord::Header(LogHeader {
        schema_version: 1,
        scenario: "synthetic".into(),
        seed: 0,
        dt: 1.0,
        ego_id: EGO_ID,
        road: RoadGeometry::default(),
        vehicles: vec![VehicleInfo { id: EGO_ID, params: p }, VehicleInfo { id: 1, params: p }],
    })];
    for (k, &(x, y, changing)) in path.iter().enumerate() {
        let mut states = vec![StateRecord::new(EGO_ID, &VehicleState::new(x, y, 20.0, 0.0))];
        let (ox, oy) = other.unwrap_or((-500.0, 3.6));
        states.push(StateRecord::new(1, &VehicleState::new(ox + 20.0 * k as f64, oy, 20.0, 0.0)));
        records.push(LogRecord::Step(StepRecord {
            step: k,
            time: k as f64,
            states,
            ego_changing: changing,
            interacting: vec![],
            beliefs: vec![],
            plan: None,
            flags: vec![],
        }));
    }
    EventLog { records }
}

#[test]
fn classifies_synthetic_logs() {
    // clean merge: lateral completion at step 6
    let ys = [0.0, 0.0, 0.3, 1.2, 2.4, 3.3, 3.6, 3.6];
    let path: Vec<_> = ys.iter().enumerate().map(|(k, &y)| (20.0 * k as f64, y, (2..6).contains(&k))).collect();
    let o = classify_outcome(&synthetic(&path, None), 0.5).unwrap();
    assert_eq!(o.class, OutcomeClass::Success);
    assert_eq!(o.merge_step, Some(6));
    assert_eq!((o.front_id, o.rear_id), (None, Some(1)));

    // vehicle alongside in the ego's lane
    let path: Vec<_> = (0..5).map(|k| (20.0 * k as f64, 0.0, false)).collect();
    let o = classify_outcome(&synthetic(&path, Some((3.0, 0.0))), 0.5).unwrap();
    assert_eq!(o.class, OutcomeClass::Collision);
    assert_eq!((o.collided_with, o.final_step), (Some(1), 0));

    // ego runs out of merge lane
    let path: Vec<_> = (0..20).map(|k| (20.0 * k as f64, 0.0, false)).collect();
    let o = classify_outcome(&synthetic(&path, None), 0.5).unwrap();
    assert_eq!(o.class, OutcomeClass::FailToMerge);
    assert!(o.merge_step.is_none());
    assert!(classify_outcome(&EventLog::default(), 0.5).is_err());
}

#[test]
fn episode_log_is_consistent() {
    let cfg = fixture("game_b");
    let ep = run_scenario(&cfg).unwrap();
    assert_eq!(ep.outcome.class, OutcomeClass::Success);
    assert_eq!(classify_outcome(&ep.log, cfg.planner.rewards.box_margin).unwrap(), ep.outcome);
    assert_eq!(ep.log.outcome(), Some(&ep.outcome));
    for s in ep.log.steps() {
        for b in &s.beliefs {
            assert!(b.p_leader >= 0.0 && b.p_follower >= 0.0 && (b.p_leader + b.p_follower - 1.0).abs() < 1e-12);
        }
        assert_eq!(s.states[0].id, EGO_ID);
    }
    let text = ep.log.to_jsonl();
    let back = EventLog::read_jsonl(BufReader::new(text.as_bytes())).unwrap();
    assert_eq!(back.to_jsonl(), text);
    assert_eq!(ep.log.plan_times().len(), ep.log.steps().filter(|s| s.plan.is_some()).count());
}

#[test]
fn config_errors_name_fields() {
    let mut cfg = fixture("game_a");
    cfg.planner.epsilon = 2.0;
    cfg.agents[1].id = cfg.agents[0].id;
    cfg.ego.state.y = 3.6;
    let Err(Error::Config(errs)) = cfg.validate() else { panic!("expected config errors") };
    let fields: Vec<_> = errs.iter().map(|e| e.path.as_str()).collect();
    assert!(fields.contains(&"planner.epsilon"), "{fields:?}");
    assert!(fields.contains(&"agents[1].id"), "{fields:?}");
    assert!(fields.contains(&"ego.state.y"), "{fields:?}");

    let err = ScenarioConfig::from_json_str(r#"{"schema_version": 1, "ego": {"state": {"x": 0, "y": 0, "v": "fast", "psi": 0}}}"#).unwrap_err();
    assert!(err.to_string().contains("ego.state.v"), "{err}");
    assert!(ScenarioConfig::from_json_str(r#"{"schema_version": 99, "ego": {"state": {"x": 0, "y": 0, "v": 1, "psi": 0}}}"#).is_err());
}

#[test]
fn scenario_json_round_trips() {
    let cfg = fixture("idm_a");
    let back = ScenarioConfig::from_json_str(&cfg.to_json_pretty().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

fn quick(name: &str, agents: Vec<AgentSpec>, max_steps: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(name, VehicleState::new(0.0, 0.0, 20.0, 0.0), agents);
    c.max_steps = max_steps;
    c
}

fn agent(id: u32, x: f64, y: f64, v: f64, model: AgentModel) -> AgentSpec {
    AgentSpec { id, state: VehicleState::new(x, y, v, 0.0), params: VehicleParams::default(), model }
}

#[test]
fn batch_counts_each_class() {
    let success = quick("s", vec![], 30);
    let success2 = quick("s2", vec![agent(1, -80.0, 3.6, 20.0, AgentModel::ConstantSpeed)], 30);
    // a dense platoon at top speed leaves no gap before the episode ends
    let wall = (0..70).map(|k| agent(k + 1, -300.0 + 7.0 * f64::from(k), 3.6, 32.0, AgentModel::ConstantSpeed)).collect();
    let mut fail = quick("f", wall, 8);
    fail.interacting = Some(vec![]);
    fail.road.merge_lane_end_x = 1000.0;
    // a stopped vehicle exactly one step ahead in the merge lane
    let crash = quick("c", vec![agent(1, 20.0, 0.0, 0.0, AgentModel::ConstantSpeed)], 30);
    let items = vec![
        ("s".to_string(), Ok(success)),
        ("s2".to_string(), Ok(success2)),
        ("f".to_string(), Ok(fail)),
        ("c".to_string(), Ok(crash)),
    ];
    let report = batch_run(items, |_, _| Ok(()));
    let classes: Vec<_> = report.episodes.iter().map(|e| e.class).collect();
    assert_eq!(
        classes,
        vec![Some(OutcomeClass::Success), Some(OutcomeClass::Success), Some(OutcomeClass::FailToMerge), Some(OutcomeClass::Collision)],
        "{report:?}"
    );
    assert_eq!(report.summary.success_rate, 0.5);
    let table = report.summary.to_table("LFGC");
    assert!(table.contains("50.0%"), "{table}");
}

#[test]
fn batch_records_load_errors() {
    let items = vec![
        ("ok".to_string(), Ok(quick("ok", vec![], 10))),
        ("bad".to_string(), ScenarioConfig::from_json_str("{")),
    ];
    let report = batch_run(items, |_, _| Ok(()));
    assert_eq!(report.summary.errors, 1);
    assert_eq!(report.summary.success, 1);
    assert!(report.episodes[1].error.is_some());
}

#[test]
fn game_agents_in_scenarios() {
    let mut cfg = quick("g", vec![agent(1, -30.0, 3.6, 20.0, AgentModel::Game { role: Role::Follower, noise: true })], 30);
    cfg.seed = 3;
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.log.canonical_jsonl(), b.log.canonical_jsonl());
    assert_ne!(a.outcome.class, OutcomeClass::Collision);
}
