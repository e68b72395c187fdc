use lfgc::dynamics::{VehicleParams, VehicleState};
use lfgc::game::{follower_best_set, follower_value, solve_follower, solve_leader, PayoffMatrix, Role, VALUE_TIE_TOL};
use lfgc::planner::{PlannerConfig, Predictor};
use lfgc::road::RoadGeometry;
use lfgc::trajectories::ManeuverStatus;
use proptest::prelude::*;

/// Straightforward enumeration used as the reference solver.
fn brute_force(r_l: &[Vec<f64>], r_f: &[Vec<f64>]) -> (f64, f64) {
    let cols = r_l[0].len();
    let mut q_f = Vec::new();
    for f in 0..cols {
        let mut worst = f64::INFINITY;
        for row in r_f {
            worst = worst.min(row[f]);
        }
        q_f.push(worst);
    }
    let best_f = q_f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let best_set: Vec<usize> = (0..cols).filter(|&f| q_f[f] >= best_f - VALUE_TIE_TOL).collect();
    let mut best_l = f64::NEG_INFINITY;
    for row in r_l {
        let mut worst = f64::INFINITY;
        for &f in &best_set {
            worst = worst.min(row[f]);
        }
        best_l = best_l.max(worst);
    }
    (best_l, best_f)
}

#[test]
fn two_by_two_table() {
    let r_f = PayoffMatrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 3.0]]).unwrap();
    let r_l = PayoffMatrix::from_rows(&[vec![5.0, 0.0], vec![4.0, 9.0]]).unwrap();
    assert_eq!(follower_value(&r_f, 0), 1.0);
    assert_eq!(follower_value(&r_f, 1), 0.0);
    let f = solve_follower(&r_f);
    assert_eq!((f.index, f.value, f.follower_best_set_size), (0, 1.0, 1));
    let l = solve_leader(&r_l, &r_f).unwrap();
    assert_eq!((l.index, l.value), (0, 5.0));
}

#[test]
fn singleton_sets() {
    let r_f = PayoffMatrix::from_rows(&[vec![-3.5]]).unwrap();
    let r_l = PayoffMatrix::from_rows(&[vec![7.0]]).unwrap();
    assert_eq!(solve_follower(&r_f).value, -3.5);
    let l = solve_leader(&r_l, &r_f).unwrap();
    assert_eq!((l.index, l.value), (0, 7.0));
}

#[test]
fn rejects_bad_shapes() {
    assert!(PayoffMatrix::new(2, 2, vec![1.0; 3]).is_err());
    assert!(PayoffMatrix::from_rows(&[]).is_err());
    let a = PayoffMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
    let b = PayoffMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
    assert!(solve_leader(&a, &b).is_err());
}

#[test]
fn leader_and_follower_policies_differ() {
    let cfg = PlannerConfig::default();
    let road = RoadGeometry::default();
    let p = VehicleParams::default();
    let mut pred = Predictor::new(&cfg, &road, p);
    let ego = VehicleState::new(0.0, 0.0, 25.0, 0.0);
    let other = VehicleState::new(-6.0, 3.6, 25.0, 0.0);
    let lead = pred.policy(Role::Leader, &ego, &ManeuverStatus::Keeping, &other, &p, None).unwrap();
    let follow = pred.policy(Role::Follower, &ego, &ManeuverStatus::Keeping, &other, &p, None).unwrap();
    assert!(lead.control.a > follow.control.a, "{lead:?} {follow:?}");
}

fn matrices() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (1..7usize, 1..7usize).prop_flat_map(|(r, c)| {
        let m = || prop::collection::vec(prop::collection::vec(-10i32..10, c), r);
        (m(), m()).prop_map(|(a, b)| {
            let f = |m: Vec<Vec<i32>>| m.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
            (f(a), f(b))
        })
    })
}

proptest! {
    #[test]
    fn matches_enumeration((l, f) in matrices()) {
        let (bl, bf) = brute_force(&l, &f);
        let r_l = PayoffMatrix::from_rows(&l).unwrap();
        let r_f = PayoffMatrix::from_rows(&f).unwrap();
        prop_assert_eq!(solve_follower(&r_f).value, bf);
        prop_assert_eq!(solve_leader(&r_l, &r_f).unwrap().value, bl);
    }

    #[test]
    fn invariant_under_follower_permutation((l, f) in matrices(), seed in any::<u64>()) {
        let cols = l[0].len();
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut s = seed;
        for i in (1..cols).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let p = |m: &[Vec<f64>]| m.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect::<Vec<Vec<f64>>>();
        let a = solve_leader(&PayoffMatrix::from_rows(&l).unwrap(), &PayoffMatrix::from_rows(&f).unwrap()).unwrap();
        let b = solve_leader(&PayoffMatrix::from_rows(&p(&l)).unwrap(), &PayoffMatrix::from_rows(&p(&f)).unwrap()).unwrap();
        prop_assert_eq!(a.value, b.value);
        prop_assert_eq!(a.index, b.index);
        let fa = solve_follower(&PayoffMatrix::from_rows(&f).unwrap());
        let fb = solve_follower(&PayoffMatrix::from_rows(&p(&f)).unwrap());
        prop_assert_eq!(fa.value, fb.value);
        prop_assert!(follower_best_set(&PayoffMatrix::from_rows(&f).unwrap()).contains(&perm[fb.index]));
    }

    #[test]
    fn invariant_under_positive_scaling((l, f) in matrices(), k in 0.5..20.0f64) {
        let s = |m: &[Vec<f64>]| PayoffMatrix::from_rows(&m.iter().map(|r| r.iter().map(|v| v * k).collect()).collect::<Vec<_>>()).unwrap();
        let a = solve_leader(&PayoffMatrix::from_rows(&l).unwrap(), &PayoffMatrix::from_rows(&f).unwrap()).unwrap();
        let b = solve_leader(&s(&l), &s(&f)).unwrap();
        prop_assert_eq!(a.index, b.index);
        prop_assert!((b.value - k * a.value).abs() < 1e-9);
        prop_assert_eq!(solve_follower(&PayoffMatrix::from_rows(&f).unwrap()).index, solve_follower(&s(&f)).index);
    }
}
