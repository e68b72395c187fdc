//! Choice of interacting vehicles: target-lane vehicles inside a box whose
//! front edge sits a fixed time headway ahead of the ego.

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
use crate::error::FieldError;
use crate::road::RoadGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Front edge of the box, in seconds of ego travel (s).
    pub headway: f64,
    /// How far behind the ego the box reaches (m).
    pub rear_extent: f64,
    pub max_vehicles: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            headway: 2.0,
            rear_extent: 60.0,
            max_vehicles: 3,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self, path: &str) -> Vec<FieldError> {
        let mut errs = Vec::new();
        if !(self.headway.is_finite() && self.headway >= 0.0) {
            errs.push(FieldError::new(format!("{path}.headway"), "must be finite and >= 0"));
        }
        if !(self.rear_extent.is_finite() && self.rear_extent >= 0.0) {
            errs.push(FieldError::new(format!("{path}.rear_extent"), "must be finite and >= 0"));
        }
        errs
    }

    pub fn front_edge(&self, ego: &VehicleState) -> f64 {
        ego.x + self.headway * ego.v
    }
}

/// Interacting vehicle ids, first one nearest the box front, at most
/// `max_vehicles`.
pub fn select_interacting(
    ego: &VehicleState,
    vehicles: &[(u32, VehicleState)],
    road: &RoadGeometry,
    cfg: &SelectionConfig,
) -> Vec<u32> {
    let front = cfg.front_edge(ego);
    let rear = ego.x - cfg.rear_extent;
    let mut inside: Vec<&(u32, VehicleState)> = vehicles
        .iter()
        .filter(|(_, s)| road.in_target_lane(s.y) && s.x <= front && s.x >= rear)
        .collect();
    inside.sort_by(|a, b| b.1.x.total_cmp(&a.1.x).then(a.0.cmp(&b.0)));
    inside.into_iter().take(cfg.max_vehicles).map(|(id, _)| *id).collect()
}
