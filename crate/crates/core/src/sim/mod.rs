//! Deterministic synthetic GUI environments.
//!
//! An environment is a declarative state machine read from JSON. States are
//! rendered to RGB screenshots (flat background, verbatim icon blits, text
//! in a built-in bitmap font) and driven through [`SimEnv::reset`] and
//! [`SimEnv::step`]. [`oracle_enumerate`] gives the exhaustive ground truth
//! that coverage metrics are measured against.

mod definition;
mod env;
pub mod font;
mod oracle;
mod render;

pub use definition::{
    parse_env_json, ElementDef, EnvDefinition, EnvError, EnvFile, Render, ScreenSize, State, StateDef, TemplateRef,
    ValidationIssue,
};
pub use env::{Observation, SimEnv, StateTruth, StepFlags};
pub use oracle::{oracle_enumerate, FeasibleAction, OracleSummary};
pub use render::render;

#[cfg(test)]
pub(crate) mod testing {
    //! Small hand-written environments shared by unit tests.

    use std::sync::Arc;

    use super::*;

    /// States `S0 -A-> S1 -B-> S2`, text elements only.
    pub const LINEAR_CHAIN: &str = r#"{
      "env_id": "chain3",
      "screen": {"w": 96, "h": 48},
      "initial_state": "S0",
      "states": {
        "S0": {"background": [240,240,240], "elements": [
          {"name": "A", "kind": "text", "bbox": {"x": 4, "y": 4, "w": 12, "h": 8}, "render": {"text": "A"},
           "transitions": {"click": "S1"}}]},
        "S1": {"background": [240,240,240], "elements": [
          {"name": "B", "kind": "text", "bbox": {"x": 40, "y": 20, "w": 12, "h": 8}, "render": {"text": "B"},
           "transitions": {"click": "S2"}}]},
        "S2": {"background": [200,220,240], "elements": []}
      }
    }"#;

    pub fn load(json: &str) -> Arc<EnvDefinition> {
        Arc::new(EnvDefinition::from_json(json, std::path::Path::new(".")).unwrap())
    }
}
