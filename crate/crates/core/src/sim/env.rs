use std::sync::Arc;

use serde::Serialize;

use super::definition::{EnvDefinition, State};
use super::render::render;
use crate::model::{Action, UIElement};
use crate::raster::Screenshot;

/// Ground truth for the current state; only populated in oracle mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateTruth {
    pub state_id: String,
    pub is_error: bool,
    pub elements: Vec<UIElement>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StepFlags {
    /// The action named an element that is not on screen.
    pub target_missing: bool,
    /// The state did not change.
    pub no_op: bool,
    /// The environment is showing a modal error dialog.
    pub error_dialog: bool,
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub screenshot: Arc<Screenshot>,
    pub truth: Option<StateTruth>,
    pub flags: StepFlags,
}

/// A running instance of an environment. One driver at a time; clone the
/// `Arc<EnvDefinition>` to run independent instances side by side.
#[derive(Debug, Clone)]
pub struct SimEnv {
    def: Arc<EnvDefinition>,
    current: usize,
    oracle_mode: bool,
}

impl SimEnv {
    pub fn new(def: Arc<EnvDefinition>, oracle_mode: bool) -> Self {
        let current = def.initial_idx();
        Self { def, current, oracle_mode }
    }

    pub fn definition(&self) -> &Arc<EnvDefinition> {
        &self.def
    }

    pub fn current_state(&self) -> &State {
        self.def.state_at(self.current)
    }

    pub fn reset(&mut self) -> Observation {
        self.current = self.def.initial_idx();
        self.observe(StepFlags::default())
    }

    /// Applies `action` if the current state defines a transition for it;
    /// anything else is a no-op, flagged `target_missing` when the element
    /// does not exist.
    pub fn step(&mut self, action: &Action) -> Observation {
        let state = self.def.state_at(self.current);
        let mut flags = StepFlags::default();
        match state.element(action.target_name()) {
            None => {
                flags.target_missing = true;
                flags.no_op = true;
            }
            Some(el) => match el.transitions.get(&action.kind()).and_then(|t| self.def.state_idx(t)) {
                Some(next) => {
                    flags.no_op = next == self.current;
                    self.current = next;
                }
                None => flags.no_op = true,
            },
        }
        self.observe(flags)
    }

    fn observe(&self, mut flags: StepFlags) -> Observation {
        let state = self.def.state_at(self.current);
        flags.error_dialog = state.def.is_error;
        let screenshot = state
            .screenshot
            .get_or_init(|| Arc::new(Screenshot::from_rgb(render(&state.def, &self.def))))
            .clone();
        let truth = self.oracle_mode.then(|| StateTruth {
            state_id: state.id.clone(),
            is_error: state.def.is_error,
            elements: state.truth().to_vec(),
        });
        Observation { screenshot, truth, flags }
    }
}
