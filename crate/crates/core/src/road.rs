use serde::{Deserialize, Serialize};

use crate::error::FieldError;

/// Lane layout of a merge section. Lane ids index `lane_centers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadGeometry {
    pub lane_centers: Vec<f64>,
    pub lane_width: f64,
    /// Lateral extent of the drivable surface.
    pub y_min: f64,
    pub y_max: f64,
    /// The acceleration lane that ends at `merge_lane_end_x`.
    pub merge_lane: usize,
    /// Lane the merging vehicle has to reach.
    pub target_lane: usize,
    pub merge_lane_end_x: f64,
}

impl Default for RoadGeometry {
    /// Acceleration lane centred on `y = 0` with the target lane to its left.
    fn default() -> Self {
        Self {
            lane_centers: vec![0.0, 3.6],
            lane_width: 3.6,
            y_min: -1.8,
            y_max: 5.4,
            merge_lane: 0,
            target_lane: 1,
            merge_lane_end_x: 250.0,
        }
    }
}

impl RoadGeometry {
    pub fn validate(&self, path: &str) -> Vec<FieldError> {
        let mut errs = Vec::new();
        if self.lane_centers.is_empty() {
            errs.push(FieldError::new(format!("{path}.lane_centers"), "must not be empty"));
        }
        if self.lane_centers.iter().any(|c| !c.is_finite()) {
            errs.push(FieldError::new(format!("{path}.lane_centers"), "must be finite"));
        }
        if !(self.lane_width.is_finite() && self.lane_width > 0.0) {
            errs.push(FieldError::new(format!("{path}.lane_width"), "must be finite and > 0"));
        }
        if !(self.y_min.is_finite() && self.y_max.is_finite() && self.y_min < self.y_max) {
            errs.push(FieldError::new(format!("{path}.y_max"), "must be finite and > y_min"));
        }
        for (name, lane) in [("merge_lane", self.merge_lane), ("target_lane", self.target_lane)] {
            if lane >= self.lane_centers.len() {
                errs.push(FieldError::new(format!("{path}.{name}"), "lane id out of range"));
            }
        }
        if self.merge_lane == self.target_lane {
            errs.push(FieldError::new(
                format!("{path}.target_lane"),
                "must differ from merge_lane",
            ));
        }
        if !self.merge_lane_end_x.is_finite() {
            errs.push(FieldError::new(format!("{path}.merge_lane_end_x"), "must be finite"));
        }
        errs
    }

    pub fn lane_center(&self, lane: usize) -> f64 {
        self.lane_centers[lane]
    }

    /// Lane whose band (centre +- half width) contains `y`.
    pub fn lane_of(&self, y: f64) -> Option<usize> {
        let half = 0.5 * self.lane_width;
        self.lane_centers
            .iter()
            .enumerate()
            .filter(|(_, c)| (y - **c).abs() < half)
            .min_by(|a, b| (y - a.1).abs().total_cmp(&(y - b.1).abs()))
            .map(|(i, _)| i)
    }

    /// Nearest lane centre to `y`.
    pub fn nearest_lane(&self, y: f64) -> usize {
        self.lane_centers
            .iter()
            .enumerate()
            .min_by(|a, b| (y - a.1).abs().total_cmp(&(y - b.1).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn in_lane(&self, y: f64, lane: usize) -> bool {
        (y - self.lane_centers[lane]).abs() < 0.5 * self.lane_width
    }

    pub fn in_target_lane(&self, y: f64) -> bool {
        self.in_lane(y, self.target_lane)
    }

    pub fn in_merge_lane(&self, y: f64) -> bool {
        self.in_lane(y, self.merge_lane)
    }

    pub fn within_lateral_bounds(&self, y: f64) -> bool {
        y >= self.y_min && y <= self.y_max
    }

    /// Past the end of the acceleration lane while still in it.
    pub fn overran_merge_lane(&self, x: f64, y: f64) -> bool {
        x > self.merge_lane_end_x && self.in_merge_lane(y)
    }
}
