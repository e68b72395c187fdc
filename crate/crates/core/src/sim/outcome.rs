//! Episode classification, as a pure function of logged snapshots.

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleParams;
use crate::error::{Error, Result};
use crate::rewards::boxes_overlap;
use crate::road::RoadGeometry;

use super::log::{EventLog, LogHeader, StepRecord};

/// Lateral distance to the target-lane centre that counts as merged (m).
pub const MERGE_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    Success,
    FailToMerge,
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub class: OutcomeClass,
    /// Snapshot index at which the episode ended.
    pub final_step: usize,
    /// First snapshot with the merge complete.
    pub merge_step: Option<usize>,
    /// Nearest target-lane vehicle ahead of the ego at the merge.
    pub front_id: Option<u32>,
    /// Nearest target-lane vehicle behind the ego at the merge.
    pub rear_id: Option<u32>,
    pub collided_with: Option<u32>,
}

impl Outcome {
    /// Merged directly behind `id`.
    pub fn merged_behind(&self, id: u32) -> bool {
        self.class == OutcomeClass::Success && self.front_id == Some(id)
    }

    /// Merged directly in front of `id`.
    pub fn merged_ahead_of(&self, id: u32) -> bool {
        self.class == OutcomeClass::Success && self.rear_id == Some(id)
    }
}

/// Terminal condition reached by one snapshot, if any.
pub(crate) fn snapshot_class(
    snap: &StepRecord,
    params: &dyn Fn(u32) -> Option<VehicleParams>,
    road: &RoadGeometry,
    margin: f64,
    ego_id: u32,
) -> Result<Option<(OutcomeClass, Option<u32>)>> {
    let ego = snap
        .states
        .iter()
        .find(|s| s.id == ego_id)
        .ok_or_else(|| Error::Domain(format!("step {} has no ego state", snap.step)))?;
    let ep = params(ego_id).ok_or_else(|| Error::Domain("ego parameters missing".into()))?;
    let es = ego.state();
    for o in snap.states.iter().filter(|s| s.id != ego_id) {
        let op = params(o.id).ok_or_else(|| Error::Domain(format!("parameters of vehicle {} missing", o.id)))?;
        if boxes_overlap(&es, &ep, &o.state(), &op, margin) {
            return Ok(Some((OutcomeClass::Collision, Some(o.id))));
        }
    }
    if !snap.ego_changing && (es.y - road.lane_center(road.target_lane)).abs() < MERGE_TOLERANCE {
        return Ok(Some((OutcomeClass::Success, None)));
    }
    if road.overran_merge_lane(es.x, es.y) || !road.within_lateral_bounds(es.y) {
        return Ok(Some((OutcomeClass::FailToMerge, None)));
    }
    Ok(None)
}

fn neighbours(snap: &StepRecord, road: &RoadGeometry, ego_id: u32) -> (Option<u32>, Option<u32>) {
    let Some(ego) = snap.states.iter().find(|s| s.id == ego_id) else {
        return (None, None);
    };
    let lane: Vec<_> = snap
        .states
        .iter()
        .filter(|s| s.id != ego_id && road.in_target_lane(s.y))
        .collect();
    let front = lane
        .iter()
        .filter(|s| s.x > ego.x)
        .min_by(|a, b| a.x.total_cmp(&b.x))
        .map(|s| s.id);
    let rear = lane
        .iter()
        .filter(|s| s.x <= ego.x)
        .max_by(|a, b| a.x.total_cmp(&b.x))
        .map(|s| s.id);
    (front, rear)
}

/// Classifies a finished episode from its log. `margin` is the collision
/// box inflation.
pub fn classify_outcome(log: &EventLog, margin: f64) -> Result<Outcome> {
    let header: &LogHeader = log.header().ok_or_else(|| Error::Domain("log has no header".into()))?;
    let lookup = |id: u32| header.vehicles.iter().find(|v| v.id == id).map(|v| v.params);
    let mut last = 0;
    for snap in log.steps() {
        last = snap.step;
        if let Some((class, with)) = snapshot_class(snap, &lookup, &header.road, margin, header.ego_id)? {
            let (front_id, rear_id) = if class == OutcomeClass::Success {
                neighbours(snap, &header.road, header.ego_id)
            } else {
                (None, None)
            };
            return Ok(Outcome {
                class,
                final_step: snap.step,
                merge_step: (class == OutcomeClass::Success).then_some(snap.step),
                front_id,
                rear_id,
                collided_with: with,
            });
        }
    }
    Ok(Outcome {
        class: OutcomeClass::FailToMerge,
        final_step: last,
        merge_step: None,
        front_id: None,
        rear_id: None,
        collided_with: None,
    })
}
