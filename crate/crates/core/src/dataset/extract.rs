//! Merge cases: ramp-to-main-lane transitions turned into replay scenarios.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentModel, ReplayTrack};
use crate::dynamics::{VehicleParams, VehicleState};
use crate::road::RoadGeometry;
use crate::selection::{select_interacting, SelectionConfig};
use crate::sim::{AgentSpec, ScenarioConfig, MERGE_TOLERANCE};

use super::{Diagnostic, RecordedTrack, SchemaMap, TrackFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    /// Longitudinal window around the ego, behind and ahead (m).
    pub behind: f64,
    pub ahead: f64,
    /// Added to the recorded merge duration for `max_steps` (s).
    pub slack: f64,
    /// Template for planner, belief and selection settings.
    pub template: Option<ScenarioConfig>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            behind: 150.0,
            ahead: 250.0,
            slack: 10.0,
            template: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeCase {
    pub ego_id: u32,
    /// Selected at the first frame, nearest first.
    pub interacting: Vec<u32>,
    pub environment: Vec<u32>,
    pub start_frame: i64,
    /// Last ramp frame before the main lane.
    pub transition_frame: i64,
    pub end_frame: i64,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    /// Ordered by ego id.
    pub cases: Vec<MergeCase>,
    pub diagnostics: Vec<Diagnostic>,
}

fn lane_centres(tracks: &[RecordedTrack]) -> BTreeMap<i64, f64> {
    let mut acc: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for f in tracks.iter().flat_map(|t| &t.frames) {
        let e = acc.entry(f.lane).or_insert((0.0, 0));
        e.0 += f.y;
        e.1 += 1;
    }
    acc.into_iter().map(|(l, (s, n))| (l, s / n as f64)).collect()
}

struct Frame {
    origin_x: f64,
    merge_y: f64,
    /// +1 when the target lane lies at larger dataset `y`.
    sign: f64,
}

impl Frame {
    fn state(&self, f: &TrackFrame) -> VehicleState {
        VehicleState::new(f.x - self.origin_x, self.sign * (f.y - self.merge_y), f.v, self.sign * f.psi)
    }
}

/// Finds every track that moves from a ramp lane into a main lane and
/// builds a replay scenario around it. Output does not depend on track
/// order.
pub fn extract_merge_cases(tracks: &[RecordedTrack], map: &SchemaMap, cfg: &ExtractConfig) -> Extraction {
    let mut tracks: Vec<&RecordedTrack> = tracks.iter().collect();
    tracks.sort_by_key(|t| t.id);
    let owned: Vec<RecordedTrack> = tracks.iter().map(|t| (*t).clone()).collect();
    let centres = lane_centres(&owned);
    let mut out = Extraction::default();
    let ramp_end = map.merge_lane_end.map(|e| e * map.units.to_meters()).unwrap_or_else(|| {
        owned
            .iter()
            .flat_map(|t| &t.frames)
            .filter(|f| map.ramp_lane_ids.contains(&f.lane))
            .map(|f| f.x)
            .fold(f64::NEG_INFINITY, f64::max)
    });

    for ego in &owned {
        let Some(k) = ego
            .frames
            .windows(2)
            .position(|w| map.ramp_lane_ids.contains(&w[0].lane) && map.main_lane_ids.contains(&w[1].lane))
        else {
            continue;
        };
        let ramp_lane = ego.frames[k].lane;
        let target_lane = ego.frames[k + 1].lane;
        let start = ego.frames[..=k]
            .iter()
            .rposition(|f| f.lane != ramp_lane)
            .map_or(0, |i| i + 1);
        let (Some(&cm), Some(&ct)) = (centres.get(&ramp_lane), centres.get(&target_lane)) else {
            continue;
        };
        let width = (ct - cm).abs();
        if width < 1.0 {
            out.diagnostics.push(Diagnostic {
                row: None,
                vehicle: Some(ego.id),
                message: format!("lanes {ramp_lane} and {target_lane} are not laterally separated"),
            });
            continue;
        }
        let frame = Frame {
            origin_x: ego.frames[start].x,
            merge_y: cm,
            sign: (ct - cm).signum(),
        };
        let end = ego.frames[k + 1..]
            .iter()
            .position(|f| f.lane == target_lane && (f.y - ct).abs() < MERGE_TOLERANCE)
            .map_or(ego.frames.len() - 1, |i| k + 1 + i);
        let f0 = ego.frames[start].frame;
        let road = RoadGeometry {
            lane_centers: vec![0.0, width],
            lane_width: width,
            y_min: -0.5 * width,
            y_max: 1.5 * width,
            merge_lane: 0,
            target_lane: 1,
            merge_lane_end_x: ramp_end - frame.origin_x,
        };
        let ego_state = frame.state(&ego.frames[start]);
        let template = cfg.template.clone().unwrap_or_else(|| ScenarioConfig::new("", ego_state, vec![]));
        let dt = template.planner.dt;
        let duration = (ego.frames[end].time - ego.frames[start].time).max(0.0);
        let max_steps = ((duration + cfg.slack) / dt).ceil() as usize;
        let keep_until = f0 + ((max_steps as f64 * dt + template.planner.horizon as f64 * dt) / map.frame_period).ceil() as i64;

        let mut agents = Vec::new();
        for other in owned.iter().filter(|t| t.id != ego.id) {
            let Some(at) = other.frame(f0) else { continue };
            if at.lane != ramp_lane && at.lane != target_lane {
                continue;
            }
            let s = frame.state(at);
            if s.x < -cfg.behind || s.x > cfg.ahead {
                continue;
            }
            let i0 = (f0 - other.frames[0].frame) as usize;
            let states: Vec<VehicleState> = other.frames[i0..]
                .iter()
                .take_while(|f| f.frame <= keep_until)
                .map(|f| frame.state(f))
                .collect();
            agents.push(AgentSpec {
                id: other.id,
                state: s,
                params: VehicleParams {
                    length: other.length,
                    width: other.width,
                    ..VehicleParams::default()
                },
                model: AgentModel::Replay {
                    track: ReplayTrack {
                        t0: 0.0,
                        period: map.frame_period,
                        states,
                    },
                },
            });
        }
        let pool: Vec<(u32, VehicleState)> = agents.iter().map(|a| (a.id, a.state)).collect();
        let selection = if cfg.template.is_some() { template.selection } else { SelectionConfig::default() };
        let interacting = select_interacting(&ego_state, &pool, &road, &selection);
        let environment = agents.iter().map(|a| a.id).filter(|id| !interacting.contains(id)).collect();

        let scenario = ScenarioConfig {
            name: format!("case_{}_{}", ego.id, f0),
            max_steps,
            road,
            ego: crate::sim::EgoSpec {
                state: ego_state,
                params: VehicleParams {
                    length: ego.length,
                    width: ego.width,
                    ..template.ego.params
                },
            },
            agents,
            interacting: None,
            ..template
        };
        if let Err(e) = scenario.validate() {
            out.diagnostics.push(Diagnostic {
                row: None,
                vehicle: Some(ego.id),
                message: format!("case skipped: {e}"),
            });
            continue;
        }
        out.cases.push(MergeCase {
            ego_id: ego.id,
            interacting,
            environment,
            start_frame: f0,
            transition_frame: ego.frames[k].frame,
            end_frame: ego.frames[end].frame,
            scenario,
        });
    }
    out
}
