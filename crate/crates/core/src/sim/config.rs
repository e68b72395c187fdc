//! Scenario files.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::AgentModel;
use crate::beliefs::BeliefConfig;
use crate::dynamics::{VehicleParams, VehicleState};
use crate::error::{Error, FieldError, Result};
use crate::planner::PlannerConfig;
use crate::road::RoadGeometry;
use crate::selection::SelectionConfig;

/// Version of the scenario and event-log formats.
pub const SCHEMA_VERSION: u32 = 1;

/// The ego's vehicle id in logs.
pub const EGO_ID: u32 = 0;

/// JSON Schema of the scenario format.
pub const SCENARIO_SCHEMA: &str = include_str!("../../schemas/scenario.schema.json");

fn default_max_steps() -> usize {
    30
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    pub state: VehicleState,
    #[serde(default)]
    pub params: VehicleParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: u32,
    pub state: VehicleState,
    #[serde(default)]
    pub params: VehicleParams,
    pub model: AgentModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub road: RoadGeometry,
    pub ego: EgoSpec,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    /// Fixed interacting vehicles, nearest first. When absent they are
    /// re-selected every step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interacting: Option<Vec<u32>>,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub beliefs: BeliefConfig,
    /// The ego announces its merge from the first step.
    #[serde(default = "default_true")]
    pub ego_signals_merge: bool,
}

impl ScenarioConfig {
    /// A scenario with default settings around the given vehicles.
    pub fn new(name: impl Into<String>, ego: VehicleState, agents: Vec<AgentSpec>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            seed: 0,
            max_steps: default_max_steps(),
            road: RoadGeometry::default(),
            ego: EgoSpec {
                state: ego,
                params: VehicleParams::default(),
            },
            agents,
            interacting: None,
            selection: SelectionConfig::default(),
            planner: PlannerConfig::default(),
            beliefs: BeliefConfig::default(),
            ego_signals_merge: true,
        }
    }

    /// Parses and validates; errors carry field paths.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "$".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(FieldError::new(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        errs.extend(self.road.validate("road"));
        errs.extend(self.ego.params.validate("ego.params"));
        errs.extend(self.planner.validate("planner"));
        errs.extend(self.beliefs.validate("beliefs"));
        errs.extend(self.selection.validate("selection"));
        if !self.ego.state.is_finite() {
            errs.push(FieldError::new("ego.state", "must be finite"));
        } else if self.road.validate("road").is_empty() && !self.road.in_merge_lane(self.ego.state.y) {
            errs.push(FieldError::new("ego.state.y", "ego must start in the merge lane"));
        }
        let mut ids = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            let p = format!("agents[{i}]");
            if a.id == EGO_ID {
                errs.push(FieldError::new(format!("{p}.id"), format!("id {EGO_ID} is reserved for the ego")));
            }
            if !ids.insert(a.id) {
                errs.push(FieldError::new(format!("{p}.id"), format!("duplicate id {}", a.id)));
            }
            if !a.state.is_finite() {
                errs.push(FieldError::new(format!("{p}.state"), "must be finite"));
            }
            errs.extend(a.params.validate(&format!("{p}.params")));
            errs.extend(a.model.validate(&format!("{p}.model")));
        }
        if let Some(list) = &self.interacting {
            for (i, id) in list.iter().enumerate() {
                if !ids.contains(id) {
                    errs.push(FieldError::new(format!("interacting[{i}]"), format!("unknown vehicle id {id}")));
                }
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.field_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}
