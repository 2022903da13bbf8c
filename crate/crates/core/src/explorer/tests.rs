use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::dataset::{NullRecorder, RecordOutcome};
use crate::llm::mock::{MockBehavior, MockServer};
use crate::llm::SelectorConfig;
use crate::parser::ParserConfig;
use crate::raster::Screenshot;
use crate::sim::testing::{load, LINEAR_CHAIN};
use crate::sim::{oracle_enumerate, EnvDefinition};

/// Keeps every parse it is handed, in order.
#[derive(Default)]
struct MemoryRecorder {
    parses: Vec<ScreenParse>,
}

impl Recorder for MemoryRecorder {
    fn record(&mut self, parse: &ScreenParse, _: &Screenshot) -> Result<RecordOutcome, DatasetError> {
        self.parses.push(parse.clone());
        Ok(RecordOutcome::DuplicateSkipped)
    }
}

fn text_parser() -> GuiParser {
    GuiParser::text_only(ParserConfig::default())
}

fn run_with(
    def: &Arc<EnvDefinition>,
    strategy: StrategyId,
    budget: u64,
    seed: u64,
    recorder: &mut dyn Recorder,
) -> ExplorationRun {
    let parser = text_parser();
    let config = ExplorerConfig::default();
    let spec = RunSpec { strategy, budget, seed, config: &config, parser: &parser, selector: None };
    let mut env = SimEnv::new(def.clone(), true);
    run_exploration(&mut env, spec, recorder).unwrap()
}

fn run(def: &Arc<EnvDefinition>, strategy: StrategyId, budget: u64, seed: u64) -> ExplorationRun {
    run_with(def, strategy, budget, seed, &mut NullRecorder)
}

fn distinct(run: &ExplorationRun) -> BTreeSet<String> {
    run.actuated_names.iter().cloned().collect()
}

#[test]
fn chain_is_fully_explored() {
    let def = load(LINEAR_CHAIN);
    let r = run(&def, StrategyId::FrontierAuto, 10, 0);
    assert_eq!(r.visited_state_ids, BTreeSet::from(["S0".into(), "S1".into(), "S2".into()]));
    assert_eq!(r.visited.len(), 3);
    assert_eq!(distinct(&r).len(), 2);
    assert!(r.completed);
    assert!(r.is_consistent());
}

#[test]
fn empty_initial_screen_completes_immediately() {
    let def = load(r#"{"env_id":"blank","screen":{"w":20,"h":20},"initial_state":"S0","states":{"S0":{"background":[9,9,9]}}}"#);
    for s in StrategyId::ALL {
        let r = run(&def, s, 10, 1);
        assert!(r.completed, "{s}");
        assert_eq!(r.steps_used(), 0);
        assert!(r.trajectories.is_empty());
    }
}

#[test]
fn zero_budget_records_only_the_initial_screen() {
    let def = load(LINEAR_CHAIN);
    for s in StrategyId::ALL {
        let mut rec = MemoryRecorder::default();
        let r = run_with(&def, s, 0, 1, &mut rec);
        assert!(r.trajectories.is_empty());
        assert_eq!(r.visited, BTreeSet::from([r.initial_fp.clone()]));
        let fps: BTreeSet<_> = rec.parses.iter().map(|p| p.fingerprint.clone()).collect();
        assert_eq!(fps.len(), 1, "{s}");
    }
}

const CRITIC_FIXTURE: &str = r#"{
  "env_id": "critic",
  "screen": {"w": 160, "h": 80},
  "initial_state": "Home",
  "states": {
    "Home": {"background": [240,240,240], "elements": [
      {"name": "Open", "kind": "text", "bbox": {"x": 0, "y": 0, "w": 24, "h": 8}, "render": {"text": "Open"},
       "transitions": {"click": "Doc"}},
      {"name": "Label", "kind": "text", "bbox": {"x": 0, "y": 20, "w": 30, "h": 8}, "render": {"text": "Label"}}]},
    "Doc": {"background": [240,240,240], "elements": [
      {"name": "Purge", "kind": "text", "bbox": {"x": 0, "y": 0, "w": 30, "h": 8}, "render": {"text": "Purge"},
       "transitions": {"click": "Crash"}},
      {"name": "Export", "kind": "text", "bbox": {"x": 40, "y": 0, "w": 36, "h": 8}, "render": {"text": "Export"},
       "transitions": {"click": "Warn"}}]},
    "Crash": {"background": [200,60,60], "is_error": true, "elements": [
      {"name": "Cannot purge", "kind": "text", "bbox": {"x": 0, "y": 0, "w": 72, "h": 8}, "render": {"text": "Cannot purge"}}]},
    "Warn": {"background": [240,240,240], "elements": [
      {"name": "Warning: unsaved changes", "kind": "text", "bbox": {"x": 0, "y": 0, "w": 144, "h": 8},
       "render": {"text": "Warning: unsaved changes"}}]}
  }
}"#;

#[test]
fn critic_records_errors_and_no_change() {
    let def = load(CRITIC_FIXTURE);
    for seed in 0..8 {
        let r = run(&def, StrategyId::FrontierAuto, 100, seed);
        assert!(r.completed && r.is_consistent());
        let errors: Vec<_> = r.trajectories.iter().filter(|t| t.termination == Termination::ErrorState).collect();
        // reaching each error screen, then actuating the one element queued on each
        assert_eq!(errors.len(), 4, "seed {seed}");
        let error_fps: BTreeSet<_> = errors.iter().map(|t| t.steps.last().unwrap().post_fp.clone()).collect();
        assert_eq!(error_fps.len(), 2);
        for t in &errors {
            let rec = t.error_record.as_ref().unwrap();
            assert_eq!(rec.steps, t.steps);
            assert!(rec.steps.len() >= 2, "the error follows Open");
            assert_eq!(rec.steps[0].action, Action::click("Open"));
        }
        let reasons: BTreeSet<_> = errors.iter().map(|t| t.error_record.as_ref().unwrap().reason.clone()).collect();
        assert!(reasons.contains("environment reported an error dialog"));
        assert!(reasons.iter().any(|r| r.contains("\"warning\"")));

        let label = r
            .trajectories
            .iter()
            .flat_map(|t| &t.steps)
            .find(|s| s.action.target_name() == "Label")
            .expect("Label is actuated");
        assert_eq!(label.verdict, StepVerdict::NoChange);
        assert_eq!(label.pre_fp, label.post_fp);
    }
}

#[test]
fn replay_reaches_the_recorded_state() {
    let def = load(LINEAR_CHAIN);
    let mut env = SimEnv::new(def.clone(), true);
    let empty = replay_prefix(&mut env, &[]);
    assert_eq!(empty.observation.truth.unwrap().state_id, "S0");
    let r = replay_prefix(&mut env, &[Action::click("A"), Action::click("B")]);
    assert_eq!(r.stale_at, None);
    assert_eq!(r.observation.truth.unwrap().state_id, "S2");
}

/// `Tools` in the middle state is called `Utilities` in the revised build,
/// so a path recorded against the first build no longer replays.
const SHADOW_V1: &str = r#"{
  "env_id": "shadow",
  "screen": {"w": 120, "h": 40},
  "initial_state": "S0",
  "states": {
    "S0": {"background": [250,250,250], "elements": [
      {"name": "Open", "kind": "text", "bbox": {"x": 0, "y": 0, "w": 24, "h": 8}, "render": {"text": "Open"}, "transitions": {"click": "S1"}}]},
    "S1": {"background": [250,250,250], "elements": [
      {"name": "Tools", "kind": "text", "bbox": {"x": 0, "y": 10, "w": 30, "h": 8}, "render": {"text": "Tools"}, "transitions": {"click": "S2"}}]},
    "S2": {"background": [250,250,250], "elements": [
      {"name": "Deep", "kind": "text", "bbox": {"x": 0, "y": 20, "w": 24, "h": 8}, "render": {"text": "Deep"}}]}
  }
}"#;

fn shadow_v2() -> String {
    SHADOW_V1
        .replace(r#""name": "Tools""#, r#""name": "Utilities""#)
        .replace(r#""text": "Tools""#, r#""text": "Utilities""#)
        .replace(r#""w": 30, "h": 8}, "render": {"text": "Utilities"}"#, r#""w": 54, "h": 8}, "render": {"text": "Utilities"}"#)
}

#[test]
fn renamed_route_makes_replay_stale() {
    let v1 = load(SHADOW_V1);
    let r = run(&v1, StrategyId::FrontierAuto, 50, 0);
    assert!(r.discards.is_empty());
    let path = [Action::click("Open"), Action::click("Tools")];

    let v2 = load(&shadow_v2());
    let mut env = SimEnv::new(v2, true);
    let out = replay_prefix(&mut env, &path);
    assert_eq!(out.stale_at, Some(1));
    assert!(out.observation.flags.target_missing);
}

#[test]
fn stale_entries_are_discarded_during_a_run() {
    let hits: usize = (0..8).map(stale_run).sum();
    assert!(hits > 0, "no seed popped the stale entry before its element was reached");
}

/// Returns 1 when the stale entry was popped and discarded.
fn stale_run(seed: u64) -> usize {
    let v1 = load(SHADOW_V1);
    let mut env = SimEnv::new(v1.clone(), true);
    let deep_fp = {
        let out = replay_prefix(&mut env, &[Action::click("Open"), Action::click("Tools")]);
        let parse = text_parser()
            .parse(
                &out.observation.screenshot,
                &OracleTextRecognizer::new(&out.observation.truth.unwrap().elements, 0.0, 0).unwrap(),
            )
            .unwrap();
        parse.fingerprint
    };

    let v2 = load(&shadow_v2());
    let parser = text_parser();
    let config = ExplorerConfig::default();
    let spec = RunSpec { strategy: StrategyId::FrontierAuto, budget: 50, seed, config: &config, parser: &parser, selector: None };
    let mut env = SimEnv::new(v2, true);
    let mut recorder = NullRecorder;
    let mut runner = Runner {
        env: &mut env,
        spec,
        recorder: &mut recorder,
        category: None,
        dropout: 0.0,
        rng: ChaCha8Rng::seed_from_u64(seed),
        run: ExplorationRun {
            env_id: "shadow".into(),
            strategy_id: StrategyId::FrontierAuto,
            seed,
            budget: 50,
            rng: RNG_ALGORITHM.into(),
            initial_fp: deep_fp.clone(),
            trajectories: vec![],
            actuated_names: vec![],
            visited: BTreeSet::new(),
            observed_names: BTreeSet::new(),
            visited_state_ids: BTreeSet::new(),
            discards: vec![],
            fallbacks: vec![],
            completed: false,
        },
        frontier: Frontier::new(DedupMode::GlobalName),
        history: History::new(DedupMode::GlobalName),
        explored: BTreeSet::new(),
        steps: 0,
    };
    runner.frontier.offer("Deep", &deep_fp, &[Action::click("Open"), Action::click("Tools")], &[ActionKind::Click]);
    assert!(runner.explore().is_ok());
    let r = runner.run;
    assert!(r.completed);
    // the renamed route is still explored normally
    assert!(r.actuated_names.iter().any(|n| n == "Utilities"));
    if r.discards.is_empty() {
        // `Deep` was reached through `Utilities` first, so its entry was never replayed
        return 0;
    }
    assert_eq!(r.discards.len(), 1);
    assert_eq!(r.discards[0].element_name, "Deep");
    assert_eq!(r.discards[0].reason, "replay step 1 had no effect");
    let stale = r
        .trajectories
        .iter()
        .find(|t| t.steps.iter().all(|s| s.verdict == StepVerdict::Replay))
        .expect("the stale replay is kept as a trajectory");
    assert_eq!(stale.termination, Termination::NoChange);
    assert_eq!(stale.steps.len(), 2);
    1
}

#[test]
fn seeded_runs_serialize_identically() {
    let def = load(CRITIC_FIXTURE);
    for s in StrategyId::ALL {
        let a = run_to_jsonl(&run(&def, s, 40, 17));
        let b = run_to_jsonl(&run(&def, s, 40, 17));
        assert_eq!(a, b, "{s}");
    }
}

#[test]
fn run_log_round_trips() {
    let def = load(CRITIC_FIXTURE);
    for s in StrategyId::ALL {
        let r = run(&def, s, 30, 2);
        let text = run_to_jsonl(&r);
        let back = run_from_jsonl(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(run_to_jsonl(&back), text);
    }
    let first_step = run_to_jsonl(&run(&def, StrategyId::FrontierAuto, 5, 0)).lines().next().unwrap().to_owned();
    let v: serde_json::Value = serde_json::from_str(&first_step).unwrap();
    for key in ["trajectory_idx", "step_idx", "pre_fp", "action", "post_fp", "verdict"] {
        assert!(v.get(key).is_some(), "{key} missing from {first_step}");
    }
}

#[test]
fn corrupt_logs_name_the_line() {
    let def = load(LINEAR_CHAIN);
    let text = run_to_jsonl(&run(&def, StrategyId::FrontierAuto, 10, 0));
    let mut lines: Vec<&str> = text.lines().collect();
    lines[1] = "{\"trajectory_idx\": 0}";
    match run_from_jsonl(&lines.join("\n")) {
        Err(RunLogError::Format { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn random_walks_spend_the_whole_budget() {
    let def = load(CRITIC_FIXTURE);
    for s in [StrategyId::RandomWalkParser, StrategyId::RandomWalkOcr, StrategyId::LlmSelector] {
        let r = run(&def, s, 37, 3);
        assert_eq!(r.steps_used(), 37, "{s}");
        assert!(!r.completed);
        assert!(r.is_consistent());
    }
}

#[test]
fn llm_selector_without_endpoint_falls_back_every_step() {
    let def = load(CRITIC_FIXTURE);
    let r = run(&def, StrategyId::LlmSelector, 20, 3);
    assert_eq!(r.fallbacks.len(), 20);
    assert!(r.fallbacks.iter().all(|f| f.code == "selector_unavailable"));
}

#[test]
fn llm_selector_with_mock_is_reproducible() {
    let def = load(CRITIC_FIXTURE);
    let server = MockServer::start(MockBehavior::FirstUnexplored).unwrap();
    let selector = RemoteSelector::new(SelectorConfig::new(server.url())).unwrap();
    let parser = text_parser();
    let config = ExplorerConfig::default();
    let go = || {
        let spec = RunSpec { strategy: StrategyId::LlmSelector, budget: 30, seed: 9, config: &config, parser: &parser, selector: Some(&selector) };
        run_to_jsonl(&run_exploration(&mut SimEnv::new(def.clone(), true), spec, &mut NullRecorder).unwrap())
    };
    let a = go();
    assert_eq!(a, go());
    let r = run_from_jsonl(&a).unwrap();
    assert!(r.fallbacks.is_empty());
    assert_eq!(distinct(&r), BTreeSet::from(["Open", "Label", "Purge", "Export"].map(String::from)));
}

#[test]
fn bad_configuration_is_rejected() {
    let def = load(LINEAR_CHAIN);
    let parser = text_parser();
    for config in [
        ExplorerConfig { text_dropout: Some(1.0), ..Default::default() },
        ExplorerConfig { action_kinds: vec![], ..Default::default() },
    ] {
        let spec = RunSpec { strategy: StrategyId::FrontierAuto, budget: 5, seed: 0, config: &config, parser: &parser, selector: None };
        let err = run_exploration(&mut SimEnv::new(def.clone(), true), spec, &mut NullRecorder).unwrap_err();
        assert!(matches!(err, ExploreError::Config(_)));
    }
}

/// Fails on the n-th call.
struct FailingRecorder(usize);

impl Recorder for FailingRecorder {
    fn record(&mut self, _: &ScreenParse, _: &Screenshot) -> Result<RecordOutcome, DatasetError> {
        if self.0 == 0 {
            return Err(DatasetError::Integrity("disk full".into()));
        }
        self.0 -= 1;
        Ok(RecordOutcome::DuplicateSkipped)
    }
}

#[test]
fn recorder_failure_aborts_with_partial_run() {
    let def = load(CRITIC_FIXTURE);
    let parser = text_parser();
    let config = ExplorerConfig::default();
    let spec = RunSpec { strategy: StrategyId::FrontierAuto, budget: 50, seed: 0, config: &config, parser: &parser, selector: None };
    let err = run_exploration(&mut SimEnv::new(def, true), spec, &mut FailingRecorder(6)).unwrap_err();
    let partial = err.partial().unwrap();
    assert!(partial.steps_used() < 50);
    assert!(err.to_string().contains("disk full"));
}

// ---- random environments for the property tests ----

#[derive(Debug, Clone)]
struct GraphSpec {
    /// Per state, per element: optional transition target.
    states: Vec<Vec<Option<usize>>>,
}

fn graph() -> impl Strategy<Value = GraphSpec> {
    (1usize..7).prop_flat_map(|n| {
        proptest::collection::vec(proptest::collection::vec(proptest::option::weighted(0.7, 0..n), 0..4), n)
            .prop_map(|states| GraphSpec { states })
    })
}

fn graph_env(g: &GraphSpec, shared_back: bool) -> Arc<EnvDefinition> {
    let mut states = serde_json::Map::new();
    for (s, els) in g.states.iter().enumerate() {
        let mut elements: Vec<serde_json::Value> = els
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let name = format!("s{s}e{i}");
                let mut el = serde_json::json!({
                    "name": name, "kind": "text",
                    "bbox": {"x": 0, "y": 10 * i, "w": 6 * name.len(), "h": 8},
                    "render": {"text": name}
                });
                if let Some(t) = t {
                    el["transitions"] = serde_json::json!({"click": format!("S{t}")});
                }
                el
            })
            .collect();
        if shared_back && s > 0 {
            elements.push(serde_json::json!({
                "name": "Back", "kind": "text", "bbox": {"x": 100, "y": 0, "w": 24, "h": 8},
                "render": {"text": "Back"}, "transitions": {"click": "S0"}
            }));
        }
        states.insert(format!("S{s}"), serde_json::json!({"background": [240, 240, 240], "elements": elements}));
    }
    let file = serde_json::json!({
        "env_id": "graph", "screen": {"w": 140, "h": 48}, "initial_state": "S0", "states": states
    });
    load(&file.to_string())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unlimited_budget_matches_bfs(g in graph(), seed in 0u64..1000) {
        let def = graph_env(&g, false);
        prop_assume!(def.has_globally_unique_names() && def.is_click_only());
        let oracle = oracle_enumerate(&def);
        let r = run(&def, StrategyId::FrontierAuto, u64::MAX, seed);
        prop_assert!(r.completed);
        prop_assert_eq!(&r.visited_state_ids, &oracle.reachable_states);
        prop_assert_eq!(distinct(&r), oracle.element_names.clone());
        prop_assert!(r.discards.is_empty());
    }

    #[test]
    fn budget_law(g in graph(), seed in 0u64..1000, budget in 0u64..25, back in any::<bool>()) {
        let def = graph_env(&g, back);
        let full = run(&def, StrategyId::FrontierAuto, u64::MAX, seed).steps_used();
        let capped = run(&def, StrategyId::FrontierAuto, budget, seed);
        prop_assert_eq!(capped.steps_used(), budget.min(full));
        prop_assert!(capped.is_consistent());
        let walk = run(&def, StrategyId::RandomWalkParser, budget, seed);
        let expected = if def.initial_state().def.elements.is_empty() { 0 } else { budget };
        prop_assert_eq!(walk.steps_used(), expected);
    }

    #[test]
    fn frontier_only_actuates_what_was_seen(g in graph(), seed in 0u64..1000, back in any::<bool>()) {
        let def = graph_env(&g, back);
        let mut rec = MemoryRecorder::default();
        let r = run_with(&def, StrategyId::FrontierAuto, 200, seed, &mut rec);
        let by_fp: BTreeMap<_, BTreeSet<String>> =
            rec.parses.iter().map(|p| (p.fingerprint.clone(), p.names().map(str::to_owned).collect())).collect();
        let mut starts = BTreeSet::new();
        for t in &r.trajectories {
            for s in &t.steps {
                prop_assert!(by_fp[&s.pre_fp].contains(s.action.target_name()));
            }
            if let Some(first) = t.steps.iter().find(|s| s.verdict != StepVerdict::Replay) {
                prop_assert!(starts.insert(first.action.target_name().to_owned()), "two trajectories start on {}", first.action.target_name());
            }
        }
    }
}
