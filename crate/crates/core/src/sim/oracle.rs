use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::definition::EnvDefinition;
use crate::model::ActionKind;

/// A `(state, element, action kind)` triple with a declared transition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeasibleAction {
    pub state: String,
    pub element: String,
    pub kind: ActionKind,
}

/// Exhaustive ground truth about what an explorer could ever see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub env_id: String,
    pub reachable_states: BTreeSet<String>,
    /// Distinct element names across reachable states.
    pub element_names: BTreeSet<String>,
    pub feasible_actions: BTreeSet<FeasibleAction>,
    /// Reachable states flagged `is_error`.
    pub error_states: BTreeSet<String>,
}

/// Breadth-first traversal of the declared transition graph from the initial state.
pub fn oracle_enumerate(env: &EnvDefinition) -> OracleSummary {
    let mut seen = vec![false; env.state_count()];
    let mut queue = VecDeque::from([env.initial_idx()]);
    seen[env.initial_idx()] = true;
    let mut summary = OracleSummary {
        env_id: env.env_id().to_owned(),
        reachable_states: BTreeSet::new(),
        element_names: BTreeSet::new(),
        feasible_actions: BTreeSet::new(),
        error_states: BTreeSet::new(),
    };

    while let Some(idx) = queue.pop_front() {
        let state = env.state_at(idx);
        summary.reachable_states.insert(state.id.clone());
        if state.def.is_error {
            summary.error_states.insert(state.id.clone());
        }
        for el in &state.def.elements {
            summary.element_names.insert(el.name.clone());
            for (kind, target) in &el.transitions {
                summary.feasible_actions.insert(FeasibleAction {
                    state: state.id.clone(),
                    element: el.name.clone(),
                    kind: *kind,
                });
                let next = env.state_idx(target).expect("validated at load");
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
    }
    summary
}
