//! JSONL event logs: a header line, one line per step, and an outcome line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::agents::AgentFlags;
use crate::dynamics::{VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::road::RoadGeometry;
use crate::trajectories::Maneuver;

use super::outcome::Outcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleInfo {
    pub id: u32,
    pub params: VehicleParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub ego_id: u32,
    pub road: RoadGeometry,
    /// Ego first.
    pub vehicles: Vec<VehicleInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub psi: f64,
}

impl StateRecord {
    pub fn new(id: u32, s: &VehicleState) -> Self {
        Self {
            id,
            x: s.x,
            y: s.y,
            v: s.v,
            psi: s.psi,
        }
    }

    pub fn state(&self) -> VehicleState {
        VehicleState::new(self.x, self.y, self.v, self.psi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefRecord {
    pub id: u32,
    pub p_leader: f64,
    pub p_follower: f64,
    /// The last update had no usable evidence.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSafetyRecord {
    pub id: u32,
    pub probability: f64,
    /// `[leader, follower]` rollouts stay safe.
    pub role_safe: [bool; 2],
    pub expected_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub chosen_index: usize,
    pub maneuver: Maneuver,
    pub candidates: usize,
    pub feasible: bool,
    pub feasible_count: usize,
    pub expected_reward: f64,
    pub safety_sum: f64,
    pub pairs: Vec<PairSafetyRecord>,
    pub policy_solves: usize,
    /// Wall-clock planning time; left out of canonical output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_time_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagRecord {
    pub id: u32,
    #[serde(flatten)]
    pub flags: AgentFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    /// Ego first, then the other vehicles in id order.
    pub states: Vec<StateRecord>,
    pub ego_changing: bool,
    pub interacting: Vec<u32>,
    pub beliefs: Vec<BeliefRecord>,
    /// Absent on the final snapshot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<FlagRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header(LogHeader),
    Step(StepRecord),
    Outcome(Outcome),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventLog {
    pub records: Vec<LogRecord>,
}

impl EventLog {
    pub fn header(&self) -> Option<&LogHeader> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Header(h) => Some(h),
            _ => None,
        })
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|r| match r {
            LogRecord::Step(s) => Some(s),
            _ => None,
        })
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.records.iter().find_map(|r| match r {
            LogRecord::Outcome(o) => Some(o),
            _ => None,
        })
    }

    /// Planning times of every planned step.
    pub fn plan_times(&self) -> Vec<f64> {
        self.steps()
            .filter_map(|s| s.plan.as_ref().and_then(|p| p.plan_time_s))
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io("<log>", e))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// The log without wall-clock timings: identical inputs give identical
    /// bytes.
    pub fn canonical_jsonl(&self) -> String {
        let mut c = self.clone();
        for r in &mut c.records {
            if let LogRecord::Step(s) = r {
                if let Some(p) = &mut s.plan {
                    p.plan_time_s = None;
                }
            }
        }
        c.to_jsonl()
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<log>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| Error::config(format!("line {}", i + 1), e.to_string()))?;
            records.push(rec);
        }
        Ok(Self { records })
    }
}
