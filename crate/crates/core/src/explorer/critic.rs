use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{ScreenParse, StepVerdict};
use crate::sim::StepFlags;

pub const DEFAULT_ERROR_LEXICON: [&str; 2] = ["error", "warning"];

/// Names that appeared and disappeared across one action.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDiff {
    pub new: BTreeSet<String>,
    pub removed: BTreeSet<String>,
}

/// Compares two parses by element name only.
pub fn diff_elements(pre: &ScreenParse, post: &ScreenParse) -> ElementDiff {
    let a: BTreeSet<&str> = pre.names().collect();
    let b: BTreeSet<&str> = post.names().collect();
    ElementDiff {
        new: b.difference(&a).map(|s| (*s).to_owned()).collect(),
        removed: a.difference(&b).map(|s| (*s).to_owned()).collect(),
    }
}

/// Decides whether a trajectory goes on after a step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Critic {
    lexicon: Vec<String>,
}

impl Default for Critic {
    fn default() -> Self {
        Self::new(DEFAULT_ERROR_LEXICON)
    }
}

impl Critic {
    /// Patterns match as case-insensitive substrings of element names.
    pub fn new<I, S>(patterns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let lexicon = patterns.into_iter().map(|p| p.as_ref().to_lowercase()).filter(|p| !p.is_empty()).collect();
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &[String] {
        &self.lexicon
    }

    fn error_reason(&self, post: &ScreenParse, flags: StepFlags) -> Option<String> {
        for e in &post.elements {
            let lower = e.name.to_lowercase();
            if let Some(p) = self.lexicon.iter().find(|p| lower.contains(p.as_str())) {
                return Some(format!("element {:?} matches {:?}", e.name, p));
            }
        }
        flags.error_dialog.then(|| "environment reported an error dialog".to_owned())
    }

    /// Error first, then no change, then no new elements.
    pub fn evaluate(&self, pre: &ScreenParse, post: &ScreenParse, diff: &ElementDiff, flags: StepFlags) -> StepVerdict {
        if let Some(reason) = self.error_reason(post, flags) {
            StepVerdict::ErrorState(reason)
        } else if pre.fingerprint == post.fingerprint || flags.no_op || flags.target_missing {
            StepVerdict::NoChange
        } else if diff.new.is_empty() {
            StepVerdict::NoNewElements
        } else {
            StepVerdict::Continue
        }
    }
}

pub fn critic_evaluate(
    critic: &Critic,
    pre: &ScreenParse,
    post: &ScreenParse,
    diff: &ElementDiff,
    flags: StepFlags,
) -> StepVerdict {
    critic.evaluate(pre, post, diff, flags)
}
