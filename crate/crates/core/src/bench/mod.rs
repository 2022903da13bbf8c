//! Strategy comparison against the environment oracle, and grounding evaluation.

mod grounding;
mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::NullRecorder;
use crate::explorer::{run_exploration, ExplorationRun, ExplorerConfig, RunSpec, StrategyId};
use crate::llm::RemoteSelector;
use crate::model::{StateFingerprint, Termination};
use crate::parser::{GuiParser, ParserConfig};
use crate::sim::{oracle_enumerate, EnvDefinition, OracleSummary, SimEnv};

pub use grounding::{evaluate_grounding, parse_predictions, Accuracy, GroundingError, GroundingEvalResult, Prediction};
pub use stats::{mean, spearman};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Distinct actuated element names.
    pub unique_actions: usize,
    /// Distinct screen fingerprints.
    pub unique_states: usize,
    pub element_coverage: f64,
    pub state_coverage: f64,
    /// Distinct fingerprints of screens that ended a trajectory as errors.
    pub error_states_found: usize,
    pub steps_used: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("run is from env `{run}` but the oracle describes `{oracle}`")]
pub struct EnvMismatch {
    pub run: String,
    pub oracle: String,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Coverage and diversity of one run relative to the oracle.
pub fn compute_metrics(run: &ExplorationRun, oracle: &OracleSummary) -> Result<Metrics, EnvMismatch> {
    if run.env_id != oracle.env_id {
        return Err(EnvMismatch { run: run.env_id.clone(), oracle: oracle.env_id.clone() });
    }
    let observed = run.observed_names.intersection(&oracle.element_names).count();
    let states = run.visited_state_ids.intersection(&oracle.reachable_states).count();
    let errors: BTreeSet<&StateFingerprint> = run
        .trajectories
        .iter()
        .filter(|t| t.termination == Termination::ErrorState)
        .filter_map(|t| t.steps.last().map(|s| &s.post_fp))
        .collect();
    Ok(Metrics {
        unique_actions: run.unique_actions(),
        unique_states: run.visited.len(),
        element_coverage: ratio(observed, oracle.element_names.len()),
        state_coverage: ratio(states, oracle.reachable_states.len()),
        error_states_found: errors.len(),
        steps_used: run.steps_used(),
    })
}

/// Shared inputs for every cell of a matrix.
#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub budget: u64,
    pub explorer: ExplorerConfig,
    pub parser: ParserConfig,
    /// Used by `llm_selector` cells; `None` makes them fall back to random.
    pub selector: Option<RemoteSelector>,
    /// Concurrent cells; 0 means one per available core.
    pub jobs: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            budget: crate::explorer::DEFAULT_BUDGET,
            explorer: ExplorerConfig::default(),
            parser: ParserConfig::default(),
            selector: None,
            jobs: 0,
        }
    }
}

/// An environment with its oracle and parsers, shared by all its cells.
#[derive(Debug)]
pub struct BenchEnv {
    pub def: Arc<EnvDefinition>,
    pub oracle: OracleSummary,
    icon_parser: GuiParser,
    text_parser: GuiParser,
}

impl BenchEnv {
    pub fn new(def: Arc<EnvDefinition>, parser: ParserConfig) -> Self {
        let oracle = oracle_enumerate(&def);
        let icon_parser = GuiParser::new(Arc::new(def.templates().to_vec()), parser);
        Self { def, oracle, icon_parser, text_parser: GuiParser::text_only(parser) }
    }

    /// The parser a strategy perceives through.
    pub fn parser_for(&self, strategy: StrategyId) -> &GuiParser {
        if strategy.uses_templates() {
            &self.icon_parser
        } else {
            &self.text_parser
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub env_id: String,
    pub strategy: StrategyId,
    pub seed: u64,
    pub run: Result<ExplorationRun, String>,
}

/// Runs one cell in isolation.
pub fn run_cell(env: &BenchEnv, strategy: StrategyId, seed: u64, options: &BenchOptions) -> CellOutcome {
    let spec = RunSpec {
        strategy,
        budget: options.budget,
        seed,
        config: &options.explorer,
        parser: env.parser_for(strategy),
        selector: options.selector.as_ref(),
    };
    let mut sim = SimEnv::new(env.def.clone(), true);
    let run = run_exploration(&mut sim, spec, &mut NullRecorder).map_err(|e| e.to_string());
    CellOutcome { env_id: env.def.env_id().to_owned(), strategy, seed, run }
}

/// Runs every (env, strategy, seed) cell, in parallel up to `options.jobs`.
/// Outcomes come back in env, strategy, seed order.
pub fn run_matrix(envs: &[BenchEnv], strategies: &[StrategyId], seeds: &[u64], options: &BenchOptions) -> Vec<CellOutcome> {
    let cells: Vec<(&BenchEnv, StrategyId, u64)> = envs
        .iter()
        .flat_map(|e| strategies.iter().flat_map(move |s| seeds.iter().map(move |seed| (e, *s, *seed))))
        .collect();
    let go = || cells.par_iter().map(|(e, s, seed)| run_cell(e, *s, *seed, options)).collect::<Vec<_>>();
    match rayon::ThreadPoolBuilder::new().num_threads(options.jobs).build() {
        Ok(pool) => pool.install(go),
        Err(e) => {
            tracing::warn!(error = %e, "thread pool unavailable, running cells sequentially");
            cells.iter().map(|(e, s, seed)| run_cell(e, *s, *seed, options)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub env_id: String,
    pub strategy: StrategyId,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub cells: usize,
    pub failed: usize,
    pub unique_actions: f64,
    pub unique_states: f64,
    pub element_coverage: f64,
    pub state_coverage: f64,
    pub error_states_found: f64,
    pub steps_used: f64,
}

impl MetricMeans {
    fn over<'a>(cells: impl Iterator<Item = &'a Cell>) -> Self {
        let cells: Vec<&Cell> = cells.collect();
        let ok: Vec<&Metrics> = cells.iter().filter_map(|c| c.metrics.as_ref()).collect();
        let m = |f: fn(&Metrics) -> f64| mean(&ok.iter().map(|x| f(x)).collect::<Vec<_>>());
        Self {
            cells: cells.len(),
            failed: cells.len() - ok.len(),
            unique_actions: m(|x| x.unique_actions as f64),
            unique_states: m(|x| x.unique_states as f64),
            element_coverage: m(|x| x.element_coverage),
            state_coverage: m(|x| x.state_coverage),
            error_states_found: m(|x| x.error_states_found as f64),
            steps_used: m(|x| x.steps_used as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub per_strategy: BTreeMap<StrategyId, MetricMeans>,
    pub per_env: BTreeMap<String, BTreeMap<StrategyId, MetricMeans>>,
    /// `"a/b"`: mean unique actions of `a` over those of `b`.
    pub unique_action_ratios: BTreeMap<String, f64>,
    /// Between strategy-mean unique actions and strategy-mean element coverage.
    pub spearman_unique_actions_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub budget: u64,
    pub envs: Vec<String>,
    pub strategies: Vec<StrategyId>,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
    pub aggregates: Aggregates,
}

/// Derives every aggregate from the cells alone.
pub fn aggregate(cells: &[Cell], strategies: &[StrategyId]) -> Aggregates {
    let per_strategy: BTreeMap<StrategyId, MetricMeans> =
        strategies.iter().map(|s| (*s, MetricMeans::over(cells.iter().filter(|c| c.strategy == *s)))).collect();
    let mut per_env: BTreeMap<String, BTreeMap<StrategyId, MetricMeans>> = BTreeMap::new();
    let env_ids: BTreeSet<&str> = cells.iter().map(|c| c.env_id.as_str()).collect();
    for env in env_ids {
        let row = strategies
            .iter()
            .map(|s| (*s, MetricMeans::over(cells.iter().filter(|c| c.strategy == *s && c.env_id == env))))
            .collect();
        per_env.insert(env.to_owned(), row);
    }
    let mut unique_action_ratios = BTreeMap::new();
    for (a, ma) in &per_strategy {
        for (b, mb) in &per_strategy {
            if a != b && mb.unique_actions > 0.0 {
                unique_action_ratios.insert(format!("{a}/{b}"), ma.unique_actions / mb.unique_actions);
            }
        }
    }
    let live: Vec<&MetricMeans> = per_strategy.values().filter(|m| m.cells > m.failed).collect();
    let xs: Vec<f64> = live.iter().map(|m| m.unique_actions).collect();
    let ys: Vec<f64> = live.iter().map(|m| m.element_coverage).collect();
    Aggregates { per_strategy, per_env, unique_action_ratios, spearman_unique_actions_coverage: spearman(&xs, &ys) }
}

/// Scores finished cells against their oracles.
pub fn build_report(
    outcomes: &[CellOutcome],
    oracles: &BTreeMap<String, OracleSummary>,
    budget: u64,
    strategies: &[StrategyId],
    seeds: &[u64],
) -> BenchReport {
    let mut cells: Vec<Cell> = outcomes
        .iter()
        .map(|o| {
            let scored = o.run.as_ref().map_err(Clone::clone).and_then(|run| {
                let oracle = oracles.get(&o.env_id).ok_or_else(|| format!("no oracle for env `{}`", o.env_id))?;
                compute_metrics(run, oracle).map_err(|e| e.to_string())
            });
            Cell {
                env_id: o.env_id.clone(),
                strategy: o.strategy,
                seed: o.seed,
                metrics: scored.as_ref().ok().copied(),
                error: scored.err(),
            }
        })
        .collect();
    cells.sort_by(|a, b| (&a.env_id, a.strategy, a.seed).cmp(&(&b.env_id, b.strategy, b.seed)));
    let envs: Vec<String> = cells.iter().map(|c| c.env_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let aggregates = aggregate(&cells, strategies);
    BenchReport { budget, envs, strategies: strategies.to_vec(), seeds: seeds.to_vec(), cells, aggregates }
}

/// Runs the full matrix and builds its report; failed cells are kept.
pub fn compare_strategies(
    envs: &[Arc<EnvDefinition>],
    strategies: &[StrategyId],
    seeds: &[u64],
    options: &BenchOptions,
) -> (BenchReport, Vec<CellOutcome>) {
    let bench_envs: Vec<BenchEnv> = envs.iter().map(|d| BenchEnv::new(d.clone(), options.parser)).collect();
    let outcomes = run_matrix(&bench_envs, strategies, seeds, options);
    let oracles = bench_envs.into_iter().map(|e| (e.def.env_id().to_owned(), e.oracle)).collect();
    (build_report(&outcomes, &oracles, options.budget, strategies, seeds), outcomes)
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    /// Plain-text summary tables.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let header = format!(
            "{:<20} {:>5} {:>6} {:>14} {:>13} {:>11} {:>9} {:>7} {:>8}\n",
            "strategy", "cells", "failed", "unique_actions", "unique_states", "element_cov", "state_cov", "errors", "steps"
        );
        let row = |out: &mut String, s: &StrategyId, m: &MetricMeans| {
            let _ = writeln!(
                out,
                "{:<20} {:>5} {:>6} {:>14.2} {:>13.2} {:>11.4} {:>9.4} {:>7.2} {:>8.1}",
                s.as_str(),
                m.cells,
                m.failed,
                m.unique_actions,
                m.unique_states,
                m.element_coverage,
                m.state_coverage,
                m.error_states_found,
                m.steps_used
            );
        };
        let seeds = self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "budget {}  seeds [{}]  envs {}", self.budget, seeds, self.envs.join(", "));
        out.push_str("\nall environments\n");
        out.push_str(&header);
        for (s, m) in &self.aggregates.per_strategy {
            row(&mut out, s, m);
        }
        for (env, rows) in &self.aggregates.per_env {
            let _ = writeln!(out, "\n{env}");
            out.push_str(&header);
            for (s, m) in rows {
                row(&mut out, s, m);
            }
        }
        out.push('\n');
        for (k, v) in &self.aggregates.unique_action_ratios {
            let _ = writeln!(out, "unique_actions {k} = {v:.4}");
        }
        match self.aggregates.spearman_unique_actions_coverage {
            Some(r) => {
                let _ = writeln!(out, "spearman(unique_actions, element_coverage) = {r:.4}");
            }
            None => out.push_str("spearman(unique_actions, element_coverage) = undefined\n"),
        }
        out
    }
}

#[cfg(test)]
mod tests;
