use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{InstructionSample, QueryType};
use crate::model::{grounding_correct, BBox, ElementKind};

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub sample_id: String,
    pub query_id: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GroundingError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("prediction for unknown query `{query_id}` (sample `{sample_id}`)")]
    UnknownQuery { sample_id: String, query_id: String },
    #[error("query `{0}` has more than one prediction")]
    Duplicate(String),
}

/// Parses JSON-lines predictions, skipping blank lines.
pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>, GroundingError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| GroundingError::Malformed { line: i + 1, message: e.to_string() }))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl Accuracy {
    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += usize::from(ok);
    }

    fn finish(&mut self) {
        self.accuracy = if self.total == 0 { 0.0 } else { self.correct as f64 / self.total as f64 };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingEvalResult {
    pub overall: Accuracy,
    pub per_type: BTreeMap<QueryType, Accuracy>,
    pub per_kind: BTreeMap<ElementKind, Accuracy>,
    /// Queries without any prediction; scored as incorrect.
    pub missing: usize,
}

/// Scores predictions against ground truth with the IoU > 0.3 rule.
pub fn evaluate_grounding(
    predictions: &[Prediction],
    gt: &[InstructionSample],
) -> Result<GroundingEvalResult, GroundingError> {
    let by_query: HashMap<(&str, &str), &InstructionSample> =
        gt.iter().map(|s| ((s.sample_id.as_str(), s.query_id.as_str()), s)).collect();
    let mut predicted: HashMap<(&str, &str), BBox> = HashMap::new();
    for p in predictions {
        let key = (p.sample_id.as_str(), p.query_id.as_str());
        if !by_query.contains_key(&key) {
            return Err(GroundingError::UnknownQuery { sample_id: p.sample_id.clone(), query_id: p.query_id.clone() });
        }
        if predicted.insert(key, p.bbox).is_some() {
            return Err(GroundingError::Duplicate(p.query_id.clone()));
        }
    }

    let mut overall = Accuracy::default();
    let mut per_type: BTreeMap<QueryType, Accuracy> = BTreeMap::new();
    let mut per_kind: BTreeMap<ElementKind, Accuracy> = BTreeMap::new();
    let mut missing = 0;
    for s in gt {
        let ok = match predicted.get(&(s.sample_id.as_str(), s.query_id.as_str())) {
            Some(b) => grounding_correct(b, &s.gt_bbox),
            None => {
                missing += 1;
                false
            }
        };
        overall.add(ok);
        per_type.entry(s.query_type).or_default().add(ok);
        per_kind.entry(s.element_kind).or_default().add(ok);
    }
    overall.finish();
    per_type.values_mut().for_each(Accuracy::finish);
    per_kind.values_mut().for_each(Accuracy::finish);
    Ok(GroundingEvalResult { overall, per_type, per_kind, missing })
}
