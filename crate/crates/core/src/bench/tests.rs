use super::*;
use crate::explorer::{run_from_jsonl, run_to_jsonl};
use crate::model::{Action, StepVerdict, Trajectory, TrajectoryStep};
use crate::sim::testing::{load, LINEAR_CHAIN};

fn chain_env() -> BenchEnv {
    BenchEnv::new(load(LINEAR_CHAIN), ParserConfig::default())
}

fn opts(budget: u64) -> BenchOptions {
    BenchOptions { budget, jobs: 1, ..Default::default() }
}

#[test]
fn chain_metrics() {
    let env = chain_env();
    let out = run_cell(&env, StrategyId::FrontierAuto, 0, &opts(10));
    let m = compute_metrics(out.run.as_ref().unwrap(), &env.oracle).unwrap();
    assert_eq!(m.unique_actions, 2);
    assert_eq!(m.state_coverage, 1.0);
    assert_eq!(m.element_coverage, 1.0);
    assert_eq!(m.unique_states, 3);
}

#[test]
fn zero_budget_covers_only_the_initial_state() {
    let env = chain_env();
    let out = run_cell(&env, StrategyId::RandomWalkParser, 0, &opts(0));
    let m = compute_metrics(out.run.as_ref().unwrap(), &env.oracle).unwrap();
    assert_eq!(m.unique_actions, 0);
    assert_eq!(m.state_coverage, 1.0 / 3.0);
    assert_eq!(m.steps_used, 0);
}

#[test]
fn repeated_actuation_counts_once() {
    let env = chain_env();
    let mut run = run_cell(&env, StrategyId::RandomWalkParser, 0, &opts(0)).run.unwrap();
    let fp = run.initial_fp.clone();
    let step = TrajectoryStep { pre_fp: fp.clone(), action: Action::click("A"), post_fp: fp, verdict: StepVerdict::Continue };
    run.trajectories.push(Trajectory { steps: vec![step; 5], termination: Termination::BudgetExhausted, error_record: None });
    run.actuated_names = vec!["A".into(); 5];
    let m = compute_metrics(&run, &env.oracle).unwrap();
    assert_eq!((m.unique_actions, m.steps_used), (1, 5));
}

#[test]
fn oracle_from_another_env_is_rejected() {
    let env = chain_env();
    let run = run_cell(&env, StrategyId::FrontierAuto, 0, &opts(3)).run.unwrap();
    let mut other = env.oracle.clone();
    other.env_id = "elsewhere".into();
    assert!(compute_metrics(&run, &other).is_err());
}

#[test]
fn one_cell_report() {
    let (report, outcomes) = compare_strategies(&[load(LINEAR_CHAIN)], &[StrategyId::FrontierAuto], &[1], &opts(10));
    assert_eq!(report.cells.len(), 1);
    assert_eq!(outcomes.len(), 1);
    assert_eq!(report.failed_cells(), 0);
    assert_eq!(report.aggregates.per_strategy[&StrategyId::FrontierAuto].unique_actions, 2.0);
    assert_eq!(report.aggregates.spearman_unique_actions_coverage, None);
    assert!(report.to_text().contains("frontier_auto"));
}

#[test]
fn failed_cells_are_kept() {
    let env = chain_env();
    let outcomes = vec![
        run_cell(&env, StrategyId::FrontierAuto, 0, &opts(10)),
        CellOutcome { env_id: "chain3".into(), strategy: StrategyId::RandomWalkOcr, seed: 0, run: Err("boom".into()) },
    ];
    let oracles = BTreeMap::from([("chain3".to_owned(), env.oracle.clone())]);
    let report = build_report(&outcomes, &oracles, 10, &[StrategyId::RandomWalkOcr, StrategyId::FrontierAuto], &[0]);
    assert_eq!(report.failed_cells(), 1);
    let failed = &report.aggregates.per_strategy[&StrategyId::RandomWalkOcr];
    assert_eq!((failed.cells, failed.failed), (1, 1));
    assert_eq!(report.cells[0].error.as_deref(), Some("boom"));
}

#[test]
fn report_recomputes_from_run_logs() {
    let defs = [load(LINEAR_CHAIN)];
    let strategies = StrategyId::ALL;
    let seeds = [0, 1, 2];
    let (report, outcomes) = compare_strategies(&defs, &strategies, &seeds, &opts(12));
    let reloaded: Vec<CellOutcome> = outcomes
        .iter()
        .map(|o| CellOutcome { run: Ok(run_from_jsonl(&run_to_jsonl(o.run.as_ref().unwrap())).unwrap()), ..o.clone() })
        .collect();
    let oracles = BTreeMap::from([("chain3".to_owned(), oracle_enumerate(&defs[0]))]);
    let again = build_report(&reloaded, &oracles, 12, &strategies, &seeds);
    assert_eq!(again.to_json(), report.to_json());
    assert_eq!(aggregate(&report.cells, &strategies), report.aggregates);
}

#[test]
fn parallel_and_sequential_agree() {
    let defs = [load(LINEAR_CHAIN)];
    let seq = compare_strategies(&defs, &StrategyId::ALL, &[3, 4], &opts(8)).0;
    let par = compare_strategies(&defs, &StrategyId::ALL, &[3, 4], &BenchOptions { jobs: 3, ..opts(8) }).0;
    assert_eq!(seq, par);
}

#[test]
fn coverage_bounds_unique_actions() {
    let env = chain_env();
    for s in StrategyId::ALL {
        for seed in 0..5 {
            let run = run_cell(&env, s, seed, &opts(15)).run.unwrap();
            let m = compute_metrics(&run, &env.oracle).unwrap();
            let floor = m.unique_actions as f64 / env.oracle.element_names.len() as f64;
            assert!(m.element_coverage >= floor);
            assert!((0.0..=1.0).contains(&m.element_coverage) && (0.0..=1.0).contains(&m.state_coverage));
            assert!(m.unique_actions as u64 <= m.steps_used);
        }
    }
}
