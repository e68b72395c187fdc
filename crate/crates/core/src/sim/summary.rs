//! Batch execution and the merge summary table.

use std::fmt::Write as _;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::config::ScenarioConfig;
use super::outcome::OutcomeClass;
use super::{run_scenario, Episode};

/// Result of one scenario in a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub scenario: String,
    pub seed: u64,
    /// Absent when the scenario failed to run.
    pub class: Option<OutcomeClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub final_step: Option<usize>,
    pub merge_step: Option<usize>,
    pub front_id: Option<u32>,
    pub rear_id: Option<u32>,
    pub planned_steps: usize,
    pub total_plan_time_s: f64,
}

impl EpisodeSummary {
    pub fn from_episode(name: &str, seed: u64, ep: &Episode) -> Self {
        let times = ep.log.plan_times();
        Self {
            scenario: name.to_string(),
            seed,
            class: Some(ep.outcome.class),
            error: None,
            final_step: Some(ep.outcome.final_step),
            merge_step: ep.outcome.merge_step,
            front_id: ep.outcome.front_id,
            rear_id: ep.outcome.rear_id,
            planned_steps: times.len(),
            total_plan_time_s: times.iter().sum(),
        }
    }

    pub fn failed(name: &str, seed: u64, error: String) -> Self {
        Self {
            scenario: name.to_string(),
            seed,
            class: None,
            error: Some(error),
            final_step: None,
            merge_step: None,
            front_id: None,
            rear_id: None,
            planned_steps: 0,
            total_plan_time_s: 0.0,
        }
    }
}

/// Outcome counts over a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    /// Episodes that ran to an outcome.
    pub merges: usize,
    pub success: usize,
    pub fail_to_merge: usize,
    pub collision: usize,
    /// Scenarios that could not be run.
    pub errors: usize,
    /// `success / merges`, 0 for an empty batch.
    pub success_rate: f64,
    /// Mean wall-clock time per planned step (s).
    pub mean_plan_time_s: f64,
}

impl BatchSummary {
    pub fn from_episodes(episodes: &[EpisodeSummary]) -> Self {
        let count = |c: OutcomeClass| episodes.iter().filter(|e| e.class == Some(c)).count();
        let success = count(OutcomeClass::Success);
        let fail_to_merge = count(OutcomeClass::FailToMerge);
        let collision = count(OutcomeClass::Collision);
        let merges = success + fail_to_merge + collision;
        let steps: usize = episodes.iter().map(|e| e.planned_steps).sum();
        let time: f64 = episodes.iter().map(|e| e.total_plan_time_s).sum();
        Self {
            merges,
            success,
            fail_to_merge,
            collision,
            errors: episodes.len() - merges,
            success_rate: if merges == 0 { 0.0 } else { success as f64 / merges as f64 },
            mean_plan_time_s: if steps == 0 { 0.0 } else { time / steps as f64 },
        }
    }

    /// Plain-text table, one row per count.
    pub fn to_table(&self, label: &str) -> String {
        let rows = [
            ("Number of Merges", self.merges.to_string()),
            ("Success", self.success.to_string()),
            ("Fail to Merge", self.fail_to_merge.to_string()),
            ("Collision", self.collision.to_string()),
            ("Success Rate", format!("{:.1}%", 100.0 * self.success_rate)),
        ];
        let label = if label.is_empty() { "LFGC" } else { label };
        let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(label.len());
        let rule = format!("+{}+{}+\n", "-".repeat(w0 + 2), "-".repeat(w1 + 2));
        let mut out = String::new();
        out.push_str(&rule);
        let _ = writeln!(out, "| {:w0$} | {:>w1$} |", "", label);
        out.push_str(&rule);
        for (name, value) in rows {
            let _ = writeln!(out, "| {name:w0$} | {value:>w1$} |");
        }
        out.push_str(&rule);
        if self.errors > 0 {
            let _ = writeln!(out, "{} scenario(s) failed to run", self.errors);
        }
        let _ = writeln!(out, "mean planning time per step: {:.3} s", self.mean_plan_time_s);
        out
    }
}

/// Everything a batch produced, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub summary: BatchSummary,
    pub episodes: Vec<EpisodeSummary>,
}

impl BatchReport {
    pub fn from_episodes(episodes: Vec<EpisodeSummary>) -> Self {
        Self {
            summary: BatchSummary::from_episodes(&episodes),
            episodes,
        }
    }
}

/// Runs every scenario, on as many threads as the machine offers. Items that
/// failed to load are passed as `Err` and recorded. `sink` sees each finished
/// episode (e.g. to write its log); an error from it is recorded against that
/// scenario. The batch itself never aborts.
pub fn batch_run<F>(items: Vec<(String, Result<ScenarioConfig>)>, sink: F) -> BatchReport
where
    F: Fn(&str, &Episode) -> Result<()> + Sync,
{
    let n = items.len();
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(n.max(1));
    let slots: Vec<Mutex<Option<EpisodeSummary>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    let run_one = |(name, cfg): &(String, Result<ScenarioConfig>)| -> EpisodeSummary {
        let cfg = match cfg {
            Ok(c) => c,
            Err(e) => return EpisodeSummary::failed(name, 0, e.to_string()),
        };
        match run_scenario(cfg).and_then(|ep| sink(name, &ep).map(|_| ep)) {
            Ok(ep) => EpisodeSummary::from_episode(name, cfg.seed, &ep),
            Err(e) => EpisodeSummary::failed(name, cfg.seed, e.to_string()),
        }
    };
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = {
                    let mut g = next.lock().expect("counter lock");
                    let i = *g;
                    *g += 1;
                    i
                };
                if i >= n {
                    break;
                }
                let r = run_one(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    BatchReport::from_episodes(
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
            .collect(),
    )
}
