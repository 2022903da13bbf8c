//! JSON-lines run logs: one line per step, then a summary line.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiscardRecord, ExplorationRun, FallbackRecord, StrategyId};
use crate::model::{ErrorRecord, StateFingerprint, Termination, Trajectory, TrajectoryStep};

#[derive(Debug, thiserror::Error)]
pub enum RunLogError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Serialize, Deserialize)]
struct StepLine {
    trajectory_idx: usize,
    step_idx: usize,
    #[serde(flatten)]
    step: TrajectoryStep,
}

#[derive(Serialize, Deserialize)]
struct TrajectorySummary {
    steps: usize,
    termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error_reason: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Summary {
    env_id: String,
    strategy_id: StrategyId,
    seed: u64,
    budget: u64,
    rng: String,
    initial_fp: StateFingerprint,
    steps_used: u64,
    unique_actions: usize,
    completed: bool,
    trajectories: Vec<TrajectorySummary>,
    visited: BTreeSet<StateFingerprint>,
    observed_names: BTreeSet<String>,
    visited_state_ids: BTreeSet<String>,
    discards: Vec<DiscardRecord>,
    fallbacks: Vec<FallbackRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Footer {
    summary: Summary,
}

/// Serializes a run; identical runs give identical bytes.
pub fn run_to_jsonl(run: &ExplorationRun) -> String {
    let mut out = String::new();
    for (ti, t) in run.trajectories.iter().enumerate() {
        for (si, step) in t.steps.iter().enumerate() {
            let line = StepLine { trajectory_idx: ti, step_idx: si, step: step.clone() };
            out.push_str(&serde_json::to_string(&line).expect("step serializes"));
            out.push('\n');
        }
    }
    let footer = Footer {
        summary: Summary {
            env_id: run.env_id.clone(),
            strategy_id: run.strategy_id,
            seed: run.seed,
            budget: run.budget,
            rng: run.rng.clone(),
            initial_fp: run.initial_fp.clone(),
            steps_used: run.steps_used(),
            unique_actions: run.unique_actions(),
            completed: run.completed,
            trajectories: run
                .trajectories
                .iter()
                .map(|t| TrajectorySummary {
                    steps: t.steps.len(),
                    termination: t.termination,
                    error_reason: t.error_record.as_ref().map(|e| e.reason.clone()),
                })
                .collect(),
            visited: run.visited.clone(),
            observed_names: run.observed_names.clone(),
            visited_state_ids: run.visited_state_ids.clone(),
            discards: run.discards.clone(),
            fallbacks: run.fallbacks.clone(),
        },
    };
    out.push_str(&serde_json::to_string(&footer).expect("summary serializes"));
    out.push('\n');
    out
}

/// Rebuilds a run from its log.
pub fn run_from_jsonl(text: &str) -> Result<ExplorationRun, RunLogError> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let Some((last, step_lines)) = lines.split_last() else {
        return Err(RunLogError::Format { line: 1, message: "empty run log".into() });
    };
    let footer: Footer = serde_json::from_str(last)
        .map_err(|e| RunLogError::Format { line: lines.len(), message: format!("summary: {e}") })?;
    let s = footer.summary;

    let mut steps: Vec<Vec<TrajectoryStep>> = s.trajectories.iter().map(|t| Vec::with_capacity(t.steps)).collect();
    for (i, raw) in step_lines.iter().enumerate() {
        let bad = |message: String| RunLogError::Format { line: i + 1, message };
        let line: StepLine = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        let slot = steps.get_mut(line.trajectory_idx).ok_or_else(|| bad("trajectory index out of range".into()))?;
        if slot.len() != line.step_idx {
            return Err(bad(format!("expected step {} of trajectory {}", slot.len(), line.trajectory_idx)));
        }
        slot.push(line.step);
    }

    let mut trajectories = Vec::with_capacity(steps.len());
    for (ti, (t, st)) in s.trajectories.into_iter().zip(steps).enumerate() {
        if st.len() != t.steps {
            return Err(RunLogError::Format {
                line: lines.len(),
                message: format!("trajectory {ti} declares {} steps but the log has {}", t.steps, st.len()),
            });
        }
        let error_record = t.error_reason.map(|reason| ErrorRecord { reason, steps: st.clone() });
        trajectories.push(Trajectory { steps: st, termination: t.termination, error_record });
    }
    let actuated_names =
        trajectories.iter().flat_map(|t| t.steps.iter().map(|s| s.action.target_name().to_owned())).collect();
    let run = ExplorationRun {
        env_id: s.env_id,
        strategy_id: s.strategy_id,
        seed: s.seed,
        budget: s.budget,
        rng: s.rng,
        initial_fp: s.initial_fp,
        trajectories,
        actuated_names,
        visited: s.visited,
        observed_names: s.observed_names,
        visited_state_ids: s.visited_state_ids,
        discards: s.discards,
        fallbacks: s.fallbacks,
        completed: s.completed,
    };
    if run.steps_used() != s.steps_used || run.unique_actions() != s.unique_actions {
        return Err(RunLogError::Format { line: lines.len(), message: "summary counts disagree with the steps".into() });
    }
    Ok(run)
}

pub fn write_run_log(path: &Path, run: &ExplorationRun) -> Result<(), RunLogError> {
    Ok(fs::write(path, run_to_jsonl(run))?)
}

pub fn read_run_log(path: &Path) -> Result<ExplorationRun, RunLogError> {
    run_from_jsonl(&fs::read_to_string(path)?)
}
