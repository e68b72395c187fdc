//! Pairwise leader-follower game solved by enumeration.
//!
//! Payoff tables are indexed `[leader][follower]`. The follower maximizes its
//! worst case over every leader action; the leader maximizes its worst case
//! over the follower's best-response set.

use serde::{Deserialize, Serialize};

use crate::dynamics::{VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::rewards::{interaction_score, interaction_score_states, self_score, RewardConfig};
use crate::road::RoadGeometry;
use crate::trajectories::Trajectory;

/// Value ties within this tolerance are treated as equal.
pub const VALUE_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Leader,
    Follower,
}

impl Role {
    pub const ALL: [Role; 2] = [Role::Leader, Role::Follower];

    pub fn index(self) -> usize {
        match self {
            Role::Leader => 0,
            Role::Follower => 1,
        }
    }
}

/// Dense row-major payoff table.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PayoffMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptySet("strategy"));
        }
        if data.len() != rows * cols {
            return Err(Error::Domain(format!(
                "payoff data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for l in 0..rows {
            for c in 0..cols {
                data.push(f(l, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Domain("ragged payoff rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, leader: usize, follower: usize) -> f64 {
        self.data[leader * self.cols + follower]
    }
}

/// Result of one player's optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameOutcome {
    /// Index of the optimal action in the acting player's set.
    pub index: usize,
    pub value: f64,
    pub follower_best_set_size: usize,
}

fn argmax_lowest(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    let values: Vec<f64> = values.collect();
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .position(|v| *v >= best - VALUE_TIE_TOL)
        .map(|i| (i, values[i]))
}

/// `Q_f(f) = min_l R_f[l][f]`.
pub fn follower_value(r_f: &PayoffMatrix, follower: usize) -> f64 {
    (0..r_f.rows)
        .map(|l| r_f.get(l, follower))
        .fold(f64::INFINITY, f64::min)
}

pub fn follower_values(r_f: &PayoffMatrix) -> Vec<f64> {
    let mut q = vec![f64::INFINITY; r_f.cols];
    for l in 0..r_f.rows {
        let row = &r_f.data[l * r_f.cols..(l + 1) * r_f.cols];
        for (qf, r) in q.iter_mut().zip(row) {
            if *r < *qf {
                *qf = *r;
            }
        }
    }
    q
}

/// Every follower action whose max-min value ties the best.
pub fn follower_best_set(r_f: &PayoffMatrix) -> Vec<usize> {
    let q = follower_values(r_f);
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..q.len()).filter(|&i| q[i] >= best - VALUE_TIE_TOL).collect()
}

pub fn solve_follower(r_f: &PayoffMatrix) -> GameOutcome {
    let q = follower_values(r_f);
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let size = q.iter().filter(|v| **v >= best - VALUE_TIE_TOL).count();
    let (index, value) = argmax_lowest(q.into_iter()).expect("non-empty matrix");
    GameOutcome {
        index,
        value,
        follower_best_set_size: size,
    }
}

/// `Q_l(l) = min_{f in best set} R_l[l][f]`, maximized over `l`.
pub fn solve_leader(r_l: &PayoffMatrix, r_f: &PayoffMatrix) -> Result<GameOutcome> {
    if r_l.rows != r_f.rows || r_l.cols != r_f.cols {
        return Err(Error::Domain("leader and follower tables differ in shape".into()));
    }
    let best = follower_best_set(r_f);
    let (index, value) = argmax_lowest(
        (0..r_l.rows).map(|l| best.iter().map(|&f| r_l.get(l, f)).fold(f64::INFINITY, f64::min)),
    )
    .expect("non-empty matrix");
    Ok(GameOutcome {
        index,
        value,
        follower_best_set_size: best.len(),
    })
}

/// A vehicle's trajectory set with the data needed to score it.
#[derive(Debug, Clone, Copy)]
pub struct Player<'a> {
    pub set: &'a [Trajectory],
    pub params: &'a VehicleParams,
}

/// Discounted self terms per trajectory, plus interaction with an optional
/// preceding vehicle assumed to hold its speed.
pub fn self_scores(
    player: &Player<'_>,
    front: Option<(&VehicleState, &VehicleParams)>,
    road: &RoadGeometry,
    cfg: &RewardConfig,
    lambda: f64,
) -> Vec<f64> {
    let front_states: Option<Vec<VehicleState>> = front.and_then(|(s, _)| {
        let n = player.set.first()?.steps();
        let dt = player.set.first()?.dt;
        Some(
            (1..=n)
                .map(|k| VehicleState {
                    x: s.x + s.v * dt * k as f64,
                    ..*s
                })
                .collect(),
        )
    });
    player
        .set
        .iter()
        .map(|t| {
            let mut v = self_score(t, player.params, road, cfg, lambda);
            if let (Some(fs), Some((_, fp))) = (&front_states, front) {
                v += interaction_score_states(&t.states[1..], player.params, fs, fp, road, cfg, lambda);
            }
            v
        })
        .collect()
}

/// Symmetric interaction scores, `[a][b]`.
pub fn interaction_matrix(a: &Player<'_>, b: &Player<'_>, road: &RoadGeometry, cfg: &RewardConfig, lambda: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.set.len() * b.set.len());
    for ta in a.set {
        for tb in b.set {
            out.push(interaction_score(ta, a.params, tb, b.params, road, cfg, lambda));
        }
    }
    out
}

/// The acting vehicle's optimal trajectory index under `role`, playing
/// against `opponent`. Scores are `self + interaction` for each side.
pub fn policy_action(
    role: Role,
    actor: &Player<'_>,
    actor_self: &[f64],
    opponent: &Player<'_>,
    opponent_self: &[f64],
    interaction: &[f64],
) -> Result<GameOutcome> {
    let (na, no) = (actor.set.len(), opponent.set.len());
    if na == 0 || no == 0 {
        return Err(Error::EmptySet("trajectory"));
    }
    // interaction is indexed [actor][opponent]
    match role {
        Role::Follower => {
            let r_f = PayoffMatrix::from_fn(no, na, |l, f| actor_self[f] + interaction[f * no + l])?;
            Ok(solve_follower(&r_f))
        }
        Role::Leader => {
            let r_l = PayoffMatrix::from_fn(na, no, |l, f| actor_self[l] + interaction[l * no + f])?;
            let r_f = PayoffMatrix::from_fn(na, no, |l, f| opponent_self[f] + interaction[l * no + f])?;
            solve_leader(&r_l, &r_f)
        }
    }
}
