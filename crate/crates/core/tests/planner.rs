use lfgc::beliefs::BeliefState;
use lfgc::dynamics::{VehicleParams, VehicleState};
use lfgc::game::Role;
use lfgc::planner::{
    chance_constraint_ok, expected_pair_reward, pair_safety_probability, plan, plan_with, EnvironmentVehicle,
    InteractingVehicle, PlannerConfig, Predictor, Traffic,
};
use lfgc::rewards::{interaction_score_states, is_safe, self_score, PairState};
use lfgc::road::RoadGeometry;
use lfgc::trajectories::{generate_merge_set, ManeuverStatus};

fn traffic(p_leader: f64, gap: f64) -> Traffic {
    let p = VehicleParams::default();
    Traffic {
        ego: VehicleState::new(0.0, 0.0, 22.0, 0.0),
        ego_status: ManeuverStatus::Keeping,
        ego_params: p,
        interacting: vec![InteractingVehicle {
            id: 1,
            state: VehicleState::new(gap, 3.6, 24.0, 0.0),
            params: p,
            belief: BeliefState::new(p_leader).unwrap(),
            front: None,
        }],
        environment: vec![],
    }
}

#[test]
fn belief_weighted_examples() {
    let b = BeliefState::new(0.3).unwrap();
    assert!((pair_safety_probability([false, true], &b) - 0.7).abs() < 1e-15);
    assert_eq!(pair_safety_probability([true, true], &b), 1.0);
    assert_eq!(pair_safety_probability([false, false], &b), 0.0);
    assert!((expected_pair_reward([10.0, 20.0], &b) - 17.0).abs() < 1e-12);
    assert!(chance_constraint_ok(&[1.0, 0.95], 0.1));
    assert!(!chance_constraint_ok(&[0.7], 0.1));
    assert!(chance_constraint_ok(&[0.7], 0.3));
}

#[test]
fn choice_is_the_best_feasible_candidate() {
    let road = RoadGeometry::default();
    let cfg = PlannerConfig::default();
    for (pl, gap) in [(0.5, -8.0), (0.9, -5.0), (0.1, 5.0), (0.5, -30.0)] {
        let t = traffic(pl, gap);
        let res = plan(&t, &road, &cfg).unwrap();
        let iv = &t.interacting[0];
        let cands = generate_merge_set(&t.ego, &t.ego_status, &cfg.generation(), &t.ego_params, &road).unwrap();
        let mut pred = Predictor::new(&cfg, &road, t.ego_params);
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in cands.iter().enumerate() {
            let mut rew = [0.0; 2];
            let mut safe = [true; 2];
            for role in Role::ALL {
                let r = pred.predict_pair_rollout(role, c, &iv.state, &iv.params, None).unwrap();
                rew[role.index()] = self_score(c, &t.ego_params, &road, &cfg.rewards, cfg.discount)
                    + interaction_score_states(&c.states[1..], &t.ego_params, &r.states[1..], &iv.params, &road, &cfg.rewards, cfg.discount);
                safe[role.index()] = (1..r.states.len()).all(|k| {
                    is_safe(
                        &PairState { ego: c.states[k], other: r.states[k], ego_params: &t.ego_params, other_params: &iv.params, road: &road },
                        &cfg.rewards,
                    )
                });
            }
            let ego_ok = c.states[1..].iter().all(|s| road.within_lateral_bounds(s.y) && !road.overran_merge_lane(s.x, s.y));
            let ps = iv.belief.p_leader * f64::from(u8::from(safe[0])) + iv.belief.p_follower * f64::from(u8::from(safe[1]));
            if ego_ok && ps >= 1.0 - cfg.epsilon - 1e-12 {
                let v = iv.belief.p_leader * rew[0] + iv.belief.p_follower * rew[1];
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        let (i, v) = best.expect("a feasible candidate");
        assert!(res.feasible);
        assert_eq!(res.chosen_index, i, "p={pl} gap={gap}");
        assert!((res.expected_reward - v).abs() < 1e-9);
    }
}

#[test]
fn planning_is_deterministic() {
    let road = RoadGeometry::default();
    let cfg = PlannerConfig::default();
    let t = traffic(0.5, -6.0);
    let a = plan(&t, &road, &cfg).unwrap();
    let b = plan(&t, &road, &cfg).unwrap();
    assert_eq!(a, b);
    let mut shared = Predictor::new(&cfg, &road, t.ego_params);
    let c = plan_with(&t, &road, &cfg, &mut shared).unwrap();
    assert_eq!(a.chosen, c.chosen);
}

#[test]
fn distant_vehicle_is_always_safe() {
    let road = RoadGeometry::default();
    let cfg = PlannerConfig::default();
    let mut t = traffic(0.5, -8.0);
    let base = plan(&t, &road, &cfg).unwrap();
    let p = VehicleParams::default();
    t.environment.push(EnvironmentVehicle { id: 7, state: VehicleState::new(-400.0, 3.6, 20.0, 0.0), params: p });
    let with_env = plan(&t, &road, &cfg).unwrap();
    assert_eq!(base.chosen_index, with_env.chosen_index);
    t.interacting.push(InteractingVehicle {
        id: 8,
        state: VehicleState::new(-400.0, 3.6, 20.0, 0.0),
        params: p,
        belief: BeliefState::uniform(),
        front: None,
    });
    let with_far = plan(&t, &road, &cfg).unwrap();
    assert!(with_far.feasible);
    assert_eq!(with_far.pairs[1].safety_probability, 1.0);
    assert_eq!(with_far.pairs[1].role_safe, [true, true]);
}

#[test]
fn leader_belief_discourages_cutting_in() {
    let road = RoadGeometry::default();
    let cfg = PlannerConfig::default();
    let res = plan(&traffic(1.0 - 1e-6, -4.0), &road, &cfg).unwrap();
    assert!(res.feasible);
    assert!(res.pairs[0].role_safe[0]);
}
