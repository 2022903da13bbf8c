use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StrategyId;
use crate::model::{Action, ActionKind, ScreenParse, StateFingerprint};

/// How "already seen" and "already actuated" are keyed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupMode {
    /// By element name alone, wherever it appears.
    #[default]
    GlobalName,
    /// By element name within one state fingerprint.
    StateName,
}

impl std::str::FromStr for DedupMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global_name" => Ok(DedupMode::GlobalName),
            "state_name" => Ok(DedupMode::StateName),
            _ => Err(format!("unknown dedup mode `{s}` (expected global_name or state_name)")),
        }
    }
}

type NameKey = (Option<StateFingerprint>, String);

impl DedupMode {
    fn key(self, fp: &StateFingerprint, name: &str) -> NameKey {
        match self {
            DedupMode::GlobalName => (None, name.to_owned()),
            DedupMode::StateName => (Some(fp.clone()), name.to_owned()),
        }
    }
}

/// A discovered element waiting to be actuated, with the path that reaches it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub element_name: String,
    pub discovered_in: StateFingerprint,
    /// Actions from reset that reached `discovered_in`.
    pub prefix: Vec<Action>,
    pub action_kind: ActionKind,
}

/// The queue of discovered elements.
#[derive(Debug, Clone, Default)]
pub struct Frontier {
    dedup: DedupMode,
    entries: Vec<FrontierEntry>,
    seen: BTreeSet<NameKey>,
}

impl Frontier {
    pub fn new(dedup: DedupMode) -> Self {
        Self { dedup, ..Default::default() }
    }

    /// Queues every element of `parse` as reachable by `prefix`.
    pub fn seed(&mut self, parse: &ScreenParse, prefix: &[Action], kinds: &[ActionKind]) {
        for name in parse.names() {
            self.offer(name, &parse.fingerprint, prefix, kinds);
        }
    }

    /// Queues `name` unless it was seen before. Returns whether it was new.
    pub fn offer(&mut self, name: &str, discovered_in: &StateFingerprint, prefix: &[Action], kinds: &[ActionKind]) -> bool {
        if !self.seen.insert(self.dedup.key(discovered_in, name)) {
            return false;
        }
        for &kind in kinds {
            self.entries.push(FrontierEntry {
                element_name: name.to_owned(),
                discovered_in: discovered_in.clone(),
                prefix: prefix.to_vec(),
                action_kind: kind,
            });
        }
        true
    }

    pub fn entries(&self) -> &[FrontierEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Drops entries already actuated, then removes and returns a uniformly
    /// chosen survivor.
    pub fn pop_unactuated(&mut self, history: &History, rng: &mut ChaCha8Rng) -> Option<FrontierEntry> {
        self.entries.retain(|e| !history.is_actuated(&e.discovered_in, &e.element_name, e.action_kind));
        if self.entries.is_empty() {
            return None;
        }
        let i = rng.random_range(0..self.entries.len());
        Some(self.entries.swap_remove(i))
    }
}

/// What has been actuated, and what the current trajectory has discovered.
#[derive(Debug, Clone, Default)]
pub struct History {
    dedup: DedupMode,
    actuated: BTreeSet<(NameKey, ActionKind)>,
    pool: Vec<String>,
    active: bool,
}

impl History {
    pub fn new(dedup: DedupMode) -> Self {
        Self { dedup, ..Default::default() }
    }

    pub fn mark_actuated(&mut self, state: &StateFingerprint, name: &str, kind: ActionKind) {
        self.actuated.insert((self.dedup.key(state, name), kind));
    }

    pub fn is_actuated(&self, state: &StateFingerprint, name: &str, kind: ActionKind) -> bool {
        self.actuated.contains(&(self.dedup.key(state, name), kind))
    }

    pub fn begin_trajectory(&mut self) {
        self.pool.clear();
        self.active = true;
    }

    pub fn end_trajectory(&mut self) {
        self.pool.clear();
        self.active = false;
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    /// Adds newly discovered names to the trajectory's pool.
    pub fn extend_pool<'a>(&mut self, names: impl IntoIterator<Item = &'a String>) {
        for n in names {
            if !self.pool.contains(n) {
                self.pool.push(n.clone());
            }
        }
    }

    pub fn pool(&self) -> &[String] {
        &self.pool
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    /// Perform this action next.
    Act(Action),
    /// Start a trajectory towards this queued element.
    Start(FrontierEntry),
    /// Nothing left to try in this trajectory.
    EndTrajectory,
    ExplorationComplete,
}

/// Picks the next move. For `llm_selector` this is the fallback used when
/// the remote selector gives no usable answer, identical to the random walk.
pub fn select_next(
    strategy: StrategyId,
    parse: &ScreenParse,
    frontier: &mut Frontier,
    history: &History,
    kinds: &[ActionKind],
    rng: &mut ChaCha8Rng,
) -> Selection {
    match strategy {
        StrategyId::FrontierAuto if history.is_active() => {
            let candidates: Vec<(&str, ActionKind)> = history
                .pool()
                .iter()
                .filter(|n| parse.contains_name(n))
                .flat_map(|n| kinds.iter().map(move |k| (n.as_str(), *k)))
                .filter(|(n, k)| !history.is_actuated(&parse.fingerprint, n, *k))
                .collect();
            if candidates.is_empty() {
                return Selection::EndTrajectory;
            }
            let (name, kind) = candidates[rng.random_range(0..candidates.len())];
            Selection::Act(Action::of_kind(name, kind))
        }
        StrategyId::FrontierAuto => match frontier.pop_unactuated(history, rng) {
            Some(entry) => Selection::Start(entry),
            None => Selection::ExplorationComplete,
        },
        StrategyId::RandomWalkOcr | StrategyId::RandomWalkParser | StrategyId::LlmSelector => {
            if parse.elements.is_empty() || kinds.is_empty() {
                return if history.is_active() { Selection::EndTrajectory } else { Selection::ExplorationComplete };
            }
            let el = &parse.elements[rng.random_range(0..parse.elements.len())];
            let kind = kinds[rng.random_range(0..kinds.len())];
            Selection::Act(Action::of_kind(el.name.clone(), kind))
        }
    }
}
