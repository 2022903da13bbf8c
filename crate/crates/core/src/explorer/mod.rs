//! The exploration loop: difference spotting, the critic, the frontier of
//! discovered elements, and the baseline strategies.

mod critic;
mod frontier;
mod log;

use std::collections::BTreeSet;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{DatasetError, Recorder};
use crate::llm::{select_remote, RemoteSelector, SelectorContext};
use crate::model::{
    Action, ActionKind, ErrorRecord, ScreenParse, StateFingerprint, StepVerdict, Termination, Trajectory,
    TrajectoryStep,
};
use crate::parser::{GuiParser, NullTextRecognizer, OracleTextRecognizer, ParseError, TextRecognizer};
use crate::sim::{Observation, SimEnv, StepFlags};

pub use critic::{critic_evaluate, diff_elements, Critic, ElementDiff, DEFAULT_ERROR_LEXICON};
pub use frontier::{select_next, DedupMode, Frontier, FrontierEntry, History, Selection};
pub use log::{read_run_log, run_from_jsonl, run_to_jsonl, write_run_log, RunLogError};

pub const DEFAULT_BUDGET: u64 = 500;
pub const RNG_ALGORITHM: &str = "chacha8";
pub const DEFAULT_OCR_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    RandomWalkOcr,
    RandomWalkParser,
    FrontierAuto,
    LlmSelector,
}

impl StrategyId {
    pub const ALL: [StrategyId; 4] =
        [StrategyId::RandomWalkOcr, StrategyId::RandomWalkParser, StrategyId::FrontierAuto, StrategyId::LlmSelector];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyId::RandomWalkOcr => "random_walk_ocr",
            StrategyId::RandomWalkParser => "random_walk_parser",
            StrategyId::FrontierAuto => "frontier_auto",
            StrategyId::LlmSelector => "llm_selector",
        }
    }

    /// Whether the strategy perceives icons; the OCR baseline sees text only.
    pub fn uses_templates(&self) -> bool {
        *self != StrategyId::RandomWalkOcr
    }

    pub fn default_text_dropout(&self) -> f64 {
        match self {
            StrategyId::RandomWalkOcr => DEFAULT_OCR_DROPOUT,
            _ => 0.0,
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyId::ALL.into_iter().find(|id| id.as_str() == s).ok_or_else(|| {
            format!("unknown strategy `{s}` (expected random_walk_ocr, random_walk_parser, frontier_auto or llm_selector)")
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorerConfig {
    pub action_kinds: Vec<ActionKind>,
    pub dedup: DedupMode,
    pub critic: Critic,
    /// Text-adapter dropout; `None` takes the strategy default.
    pub text_dropout: Option<f64>,
}

impl Default for ExplorerConfig {
    fn default() -> Self {
        Self { action_kinds: vec![ActionKind::Click], dedup: DedupMode::GlobalName, critic: Critic::default(), text_dropout: None }
    }
}

/// Everything a single run needs besides the environment and recorder.
#[derive(Debug, Clone, Copy)]
pub struct RunSpec<'a> {
    pub strategy: StrategyId,
    pub budget: u64,
    pub seed: u64,
    pub config: &'a ExplorerConfig,
    /// Should be text-only for `random_walk_ocr`.
    pub parser: &'a GuiParser,
    /// Only consulted by `llm_selector`; `None` makes every call fall back.
    pub selector: Option<&'a RemoteSelector>,
}

/// A queued element dropped because its path no longer leads to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardRecord {
    pub element_name: String,
    pub action_kind: ActionKind,
    pub discovered_in: StateFingerprint,
    pub prefix_len: usize,
    pub reason: String,
}

/// A remote selection that failed and was replaced by a random choice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackRecord {
    /// Steps already taken when the selection was made.
    pub step: u64,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationRun {
    pub env_id: String,
    pub strategy_id: StrategyId,
    pub seed: u64,
    pub budget: u64,
    pub rng: String,
    pub initial_fp: StateFingerprint,
    pub trajectories: Vec<Trajectory>,
    /// Every actuated element name in order, replays included.
    pub actuated_names: Vec<String>,
    pub visited: BTreeSet<StateFingerprint>,
    /// Every element name that appeared in any parse.
    pub observed_names: BTreeSet<String>,
    /// Environment state ids behind the visited screens, for evaluation only.
    pub visited_state_ids: BTreeSet<String>,
    pub discards: Vec<DiscardRecord>,
    pub fallbacks: Vec<FallbackRecord>,
    /// True when the strategy ran out of things to do before the budget.
    pub completed: bool,
}

impl ExplorationRun {
    pub fn steps_used(&self) -> u64 {
        self.trajectories.iter().map(|t| t.steps.len() as u64).sum()
    }

    pub fn unique_actions(&self) -> usize {
        self.actuated_names.iter().collect::<BTreeSet<_>>().len()
    }

    pub fn error_records(&self) -> impl Iterator<Item = &ErrorRecord> {
        self.trajectories.iter().filter_map(|t| t.error_record.as_ref())
    }

    /// Checks the budget law, step chaining and the initial-state invariant.
    pub fn is_consistent(&self) -> bool {
        self.steps_used() <= self.budget
            && self.visited.contains(&self.initial_fp)
            && self.trajectories.iter().all(|t| !t.steps.is_empty() && t.is_well_formed())
            && self.actuated_names.len() as u64 == self.steps_used()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExploreError {
    #[error("recording failed after {} steps: {source}", partial.steps_used())]
    Recorder {
        #[source]
        source: DatasetError,
        partial: Box<ExplorationRun>,
    },
    #[error("parsing failed after {} steps: {source}", partial.steps_used())]
    Parse {
        #[source]
        source: ParseError,
        partial: Box<ExplorationRun>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl ExploreError {
    pub fn partial(&self) -> Option<&ExplorationRun> {
        match self {
            ExploreError::Recorder { partial, .. } | ExploreError::Parse { partial, .. } => Some(partial),
            ExploreError::Config(_) => None,
        }
    }
}

/// Result of replaying a prefix from a fresh reset.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub observation: Observation,
    /// Index of the first step that had no effect.
    pub stale_at: Option<usize>,
}

/// Steps `prefix` in order on a freshly reset env, stopping at the first no-op.
pub fn replay_prefix(env: &mut SimEnv, prefix: &[Action]) -> ReplayOutcome {
    let mut observation = env.reset();
    for (i, a) in prefix.iter().enumerate() {
        observation = env.step(a);
        if observation.flags.no_op {
            return ReplayOutcome { observation, stale_at: Some(i) };
        }
    }
    ReplayOutcome { observation, stale_at: None }
}

/// Per-screen seed for the text adapter, so a screen drops the same text
/// every time it is seen within a run.
fn text_seed(run_seed: u64, content_ref: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(content_ref.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

enum Abort {
    Record(DatasetError),
    Parse(ParseError),
}

struct Runner<'a> {
    env: &'a mut SimEnv,
    spec: RunSpec<'a>,
    recorder: &'a mut dyn Recorder,
    category: Option<String>,
    dropout: f64,
    rng: ChaCha8Rng,
    run: ExplorationRun,
    frontier: Frontier,
    history: History,
    explored: BTreeSet<String>,
    steps: u64,
}

impl Runner<'_> {
    fn remaining(&self) -> bool {
        self.steps < self.spec.budget
    }

    fn perceive(&mut self, obs: &Observation) -> Result<ScreenParse, Abort> {
        let parse = match &obs.truth {
            Some(t) => {
                let seed = text_seed(self.spec.seed, obs.screenshot.content_ref());
                let text = OracleTextRecognizer::new(&t.elements, self.dropout, seed).expect("dropout validated");
                self.spec.parser.parse(&obs.screenshot, &text as &dyn TextRecognizer)
            }
            None => self.spec.parser.parse(&obs.screenshot, &NullTextRecognizer),
        }
        .map_err(Abort::Parse)?;
        self.recorder.record(&parse, &obs.screenshot).map_err(Abort::Record)?;
        self.run.visited.insert(parse.fingerprint.clone());
        self.run.observed_names.extend(parse.names().map(str::to_owned));
        if let Some(t) = &obs.truth {
            self.run.visited_state_ids.insert(t.state_id.clone());
        }
        Ok(parse)
    }

    fn act(&mut self, pre: &ScreenParse, action: &Action) -> Result<(ScreenParse, StepFlags, ElementDiff), Abort> {
        let obs = self.env.step(action);
        self.steps += 1;
        self.run.actuated_names.push(action.target_name().to_owned());
        self.explored.insert(action.target_name().to_owned());
        self.history.mark_actuated(&pre.fingerprint, action.target_name(), action.kind());
        let post = self.perceive(&obs)?;
        let diff = diff_elements(pre, &post);
        Ok((post, obs.flags, diff))
    }

    fn offer_new(&mut self, diff: &ElementDiff, post: &ScreenParse, prefix: &[Action]) {
        if self.spec.strategy != StrategyId::FrontierAuto {
            return;
        }
        for name in &diff.new {
            self.frontier.offer(name, &post.fingerprint, prefix, &self.spec.config.action_kinds);
        }
    }

    fn close(&mut self, steps: Vec<TrajectoryStep>, termination: Termination, error: Option<String>) {
        self.history.end_trajectory();
        if steps.is_empty() {
            return;
        }
        let error_record = error.map(|reason| ErrorRecord { reason, steps: steps.clone() });
        self.run.trajectories.push(Trajectory { steps, termination, error_record });
    }

    fn close_on(&mut self, steps: Vec<TrajectoryStep>, verdict: &StepVerdict) {
        let t = verdict.termination().expect("terminal verdict");
        let reason = match verdict {
            StepVerdict::ErrorState(r) => Some(r.clone()),
            _ => None,
        };
        self.close(steps, t, reason);
    }

    fn reset(&mut self) -> Result<ScreenParse, Abort> {
        let obs = self.env.reset();
        self.perceive(&obs)
    }

    fn explore(&mut self) -> Result<(), Abort> {
        let initial = self.reset()?;
        self.run.initial_fp = initial.fingerprint.clone();
        if self.spec.strategy == StrategyId::FrontierAuto {
            self.frontier.seed(&initial, &[], &self.spec.config.action_kinds);
        }
        loop {
            if self.spec.strategy == StrategyId::FrontierAuto {
                let kinds = self.spec.config.action_kinds.clone();
                match select_next(self.spec.strategy, &initial, &mut self.frontier, &self.history, &kinds, &mut self.rng) {
                    Selection::Start(entry) if self.remaining() => self.frontier_trajectory(entry)?,
                    Selection::ExplorationComplete => {
                        self.run.completed = true;
                        return Ok(());
                    }
                    _ => return Ok(()),
                }
            } else {
                if !self.remaining() {
                    return Ok(());
                }
                let start = self.reset()?;
                if start.is_empty() {
                    self.run.completed = true;
                    return Ok(());
                }
                self.walk_trajectory(start)?;
            }
        }
    }

    fn frontier_trajectory(&mut self, entry: FrontierEntry) -> Result<(), Abort> {
        let mut cur = self.reset()?;
        let mut steps = Vec::new();
        let mut taken: Vec<Action> = Vec::new();
        let mut stale = None;
        for (i, a) in entry.prefix.iter().enumerate() {
            if !self.remaining() {
                self.close(steps, Termination::BudgetExhausted, None);
                return Ok(());
            }
            let (post, flags, diff) = self.act(&cur, a)?;
            taken.push(a.clone());
            self.offer_new(&diff, &post, &taken);
            steps.push(TrajectoryStep {
                pre_fp: cur.fingerprint.clone(),
                action: a.clone(),
                post_fp: post.fingerprint.clone(),
                verdict: StepVerdict::Replay,
            });
            cur = post;
            if flags.no_op {
                stale = Some(format!("replay step {i} had no effect"));
                break;
            }
        }
        if stale.is_none() && !cur.contains_name(&entry.element_name) {
            stale = Some("element absent after replay".to_owned());
        }
        if let Some(reason) = stale {
            tracing::debug!(element = %entry.element_name, %reason, "discarding stale frontier entry");
            self.run.discards.push(DiscardRecord {
                element_name: entry.element_name.clone(),
                action_kind: entry.action_kind,
                discovered_in: entry.discovered_in.clone(),
                prefix_len: entry.prefix.len(),
                reason,
            });
            self.close(steps, Termination::NoChange, None);
            return Ok(());
        }

        self.history.begin_trajectory();
        let mut action = Action::of_kind(entry.element_name.clone(), entry.action_kind);
        loop {
            if !self.remaining() {
                self.close(steps, Termination::BudgetExhausted, None);
                return Ok(());
            }
            let (post, flags, diff) = self.act(&cur, &action)?;
            let verdict = self.spec.config.critic.evaluate(&cur, &post, &diff, flags);
            taken.push(action.clone());
            self.offer_new(&diff, &post, &taken);
            self.history.extend_pool(&diff.new);
            steps.push(TrajectoryStep {
                pre_fp: cur.fingerprint.clone(),
                action: action.clone(),
                post_fp: post.fingerprint.clone(),
                verdict: verdict.clone(),
            });
            if verdict.termination().is_some() {
                self.close_on(steps, &verdict);
                return Ok(());
            }
            cur = post;
            let kinds = self.spec.config.action_kinds.clone();
            match select_next(self.spec.strategy, &cur, &mut self.frontier, &self.history, &kinds, &mut self.rng) {
                Selection::Act(a) => action = a,
                _ => {
                    self.close(steps, Termination::NoNewElements, None);
                    return Ok(());
                }
            }
        }
    }

    fn choose_walk(&mut self, cur: &ScreenParse) -> Option<Action> {
        let kinds = self.spec.config.action_kinds.clone();
        if self.spec.strategy == StrategyId::LlmSelector {
            let ctx = SelectorContext { parse: cur, explored: &self.explored, category: self.category.as_deref() };
            match select_remote(self.spec.selector, &ctx) {
                Ok(name) => {
                    let kind = if kinds.len() == 1 {
                        kinds[0]
                    } else {
                        kinds[rand::Rng::random_range(&mut self.rng, 0..kinds.len())]
                    };
                    return Some(Action::of_kind(name, kind));
                }
                Err(e) => {
                    tracing::debug!(error = %e, "selector fallback");
                    self.run.fallbacks.push(FallbackRecord { step: self.steps, code: e.code().to_owned() });
                }
            }
        }
        match select_next(self.spec.strategy, cur, &mut self.frontier, &self.history, &kinds, &mut self.rng) {
            Selection::Act(a) => Some(a),
            _ => None,
        }
    }

    fn walk_trajectory(&mut self, mut cur: ScreenParse) -> Result<(), Abort> {
        let mut steps = Vec::new();
        self.history.begin_trajectory();
        loop {
            if !self.remaining() {
                self.close(steps, Termination::BudgetExhausted, None);
                return Ok(());
            }
            let Some(action) = self.choose_walk(&cur) else {
                self.close(steps, Termination::NoNewElements, None);
                return Ok(());
            };
            let (post, flags, diff) = self.act(&cur, &action)?;
            let verdict = self.spec.config.critic.evaluate(&cur, &post, &diff, flags);
            steps.push(TrajectoryStep {
                pre_fp: cur.fingerprint.clone(),
                action,
                post_fp: post.fingerprint.clone(),
                verdict: verdict.clone(),
            });
            if verdict.termination().is_some() {
                self.close_on(steps, &verdict);
                return Ok(());
            }
            cur = post;
        }
    }
}

/// Runs one exploration of `env` and hands every observed screen to `recorder`.
pub fn run_exploration(
    env: &mut SimEnv,
    spec: RunSpec<'_>,
    recorder: &mut dyn Recorder,
) -> Result<ExplorationRun, ExploreError> {
    let dropout = spec.config.text_dropout.unwrap_or_else(|| spec.strategy.default_text_dropout());
    if !(0.0..1.0).contains(&dropout) {
        return Err(ExploreError::Config(format!("text dropout must lie in [0, 1), got {dropout}")));
    }
    if spec.config.action_kinds.is_empty() {
        return Err(ExploreError::Config("at least one action kind is required".into()));
    }
    let def = env.definition().clone();
    let run = ExplorationRun {
        env_id: def.env_id().to_owned(),
        strategy_id: spec.strategy,
        seed: spec.seed,
        budget: spec.budget,
        rng: RNG_ALGORITHM.to_owned(),
        initial_fp: StateFingerprint::from_hex(&"0".repeat(64)).expect("valid placeholder"),
        trajectories: Vec::new(),
        actuated_names: Vec::new(),
        visited: BTreeSet::new(),
        observed_names: BTreeSet::new(),
        visited_state_ids: BTreeSet::new(),
        discards: Vec::new(),
        fallbacks: Vec::new(),
        completed: false,
    };
    let mut runner = Runner {
        env,
        spec,
        recorder,
        category: def.category().map(str::to_owned),
        dropout,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        run,
        frontier: Frontier::new(spec.config.dedup),
        history: History::new(spec.config.dedup),
        explored: BTreeSet::new(),
        steps: 0,
    };
    match runner.explore() {
        Ok(()) => Ok(runner.run),
        Err(Abort::Record(source)) => Err(ExploreError::Recorder { source, partial: Box::new(runner.run) }),
        Err(Abort::Parse(source)) => Err(ExploreError::Parse { source, partial: Box::new(runner.run) }),
    }
}

#[cfg(test)]
mod tests;
