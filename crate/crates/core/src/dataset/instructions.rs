use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotatedElement, DatasetSample};
use crate::model::{BBox, ElementKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryType {
    Name,
    Shape,
    Function,
    Refexpr,
}

impl QueryType {
    pub const ALL: [QueryType; 4] = [QueryType::Name, QueryType::Shape, QueryType::Function, QueryType::Refexpr];

    pub fn as_str(&self) -> &'static str {
        match self {
            QueryType::Name => "name",
            QueryType::Shape => "shape",
            QueryType::Function => "function",
            QueryType::Refexpr => "refexpr",
        }
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for QueryType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QueryType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown query type `{s}` (expected name, shape, function or refexpr)"))
    }
}

/// One grounding query with its answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionSample {
    pub query_id: String,
    pub sample_id: String,
    pub query_type: QueryType,
    pub query: String,
    pub gt_bbox: BBox,
    pub element_name: String,
    pub element_kind: ElementKind,
}

/// Query wording. `{name}`, `{desc}` and `{relation}` are substituted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplates {
    pub name: String,
    pub shape: String,
    pub function: String,
    pub refexpr: String,
}

impl Default for InstructionTemplates {
    fn default() -> Self {
        Self {
            name: "Find \"{name}\"".into(),
            shape: "Find the element which has the following description: {desc}".into(),
            function: "Find the element which has the following function: {desc}".into(),
            refexpr: "Find {name}. The surrounding information is: {relation}".into(),
        }
    }
}

fn fill(template: &str, name: &str, desc: &str, relation: &str) -> String {
    template.replace("{name}", name).replace("{desc}", desc).replace("{relation}", relation)
}

fn vertical_overlap(a: &BBox, b: &BBox) -> bool {
    u64::from(a.y) < b.bottom() && u64::from(b.y) < a.bottom()
}

/// Nearest elements to the left and right of `target` by bbox center, among
/// elements sharing some of its rows. Ties go to the smaller name.
fn horizontal_neighbors<'a>(
    target: &AnnotatedElement,
    all: &'a [AnnotatedElement],
) -> (Option<&'a AnnotatedElement>, Option<&'a AnnotatedElement>) {
    let (cx, _) = target.bbox.center2();
    let mut left: Option<(u64, &AnnotatedElement)> = None;
    let mut right: Option<(u64, &AnnotatedElement)> = None;
    for e in all {
        if e.name == target.name || !vertical_overlap(&e.bbox, &target.bbox) {
            continue;
        }
        let (ex, _) = e.bbox.center2();
        let slot = match ex.cmp(&cx) {
            std::cmp::Ordering::Less => &mut left,
            std::cmp::Ordering::Greater => &mut right,
            std::cmp::Ordering::Equal => continue,
        };
        let d = ex.abs_diff(cx);
        let better = match slot {
            None => true,
            Some((bd, be)) => d < *bd || (d == *bd && e.name < be.name),
        };
        if better {
            *slot = Some((d, e));
        }
    }
    (left.map(|(_, e)| e), right.map(|(_, e)| e))
}

fn relation_phrase(target: &AnnotatedElement, all: &[AnnotatedElement]) -> Option<String> {
    match horizontal_neighbors(target, all) {
        (Some(l), Some(r)) => Some(format!("To the right of \"{}\" and to the left of \"{}\"", l.name, r.name)),
        (Some(l), None) => Some(format!("To the right of \"{}\"", l.name)),
        (None, Some(r)) => Some(format!("To the left of \"{}\"", r.name)),
        (None, None) => target.meta.as_ref().and_then(|m| m.neighbors_desc.clone()),
    }
}

/// Generates queries of the requested `types` for every element of every
/// sample. Returns the queries, shuffled by `seed`, and per-type skip counts.
pub fn gen_instructions(
    samples: &[DatasetSample],
    types: &[QueryType],
    templates: &InstructionTemplates,
    seed: u64,
) -> (Vec<InstructionSample>, BTreeMap<QueryType, usize>) {
    let mut out = Vec::new();
    let mut skipped: BTreeMap<QueryType, usize> = QueryType::ALL.iter().map(|t| (*t, 0)).collect();
    for sample in samples {
        for el in &sample.elements {
            for &qt in QueryType::ALL.iter().filter(|t| types.contains(t)) {
                let meta = el.meta.as_ref();
                let query = match qt {
                    QueryType::Name => Some(fill(&templates.name, &el.name, "", "")),
                    QueryType::Shape => meta.and_then(|m| m.shape_desc.as_deref()).map(|d| fill(&templates.shape, &el.name, d, "")),
                    QueryType::Function => {
                        meta.and_then(|m| m.function_desc.as_deref()).map(|d| fill(&templates.function, &el.name, d, ""))
                    }
                    QueryType::Refexpr => relation_phrase(el, &sample.elements).map(|r| fill(&templates.refexpr, &el.name, "", &r)),
                };
                match query {
                    Some(query) => out.push(InstructionSample {
                        query_id: String::new(),
                        sample_id: sample.sample_id.clone(),
                        query_type: qt,
                        query,
                        gt_bbox: el.bbox,
                        element_name: el.name.clone(),
                        element_kind: el.kind,
                    }),
                    None => *skipped.entry(qt).or_default() += 1,
                }
            }
        }
    }
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (i, s) in out.iter_mut().enumerate() {
        s.query_id = format!("q{i:06}");
    }
    (out, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ElementMeta, StateFingerprint};

    fn el(name: &str, x: u32, y: u32, meta: Option<ElementMeta>) -> AnnotatedElement {
        AnnotatedElement { name: name.into(), kind: ElementKind::Icon, bbox: BBox::new(x, y, 16, 16), meta }
    }

    fn sample(elements: Vec<AnnotatedElement>) -> DatasetSample {
        DatasetSample {
            sample_id: "s00000".into(),
            screenshot_path: "screens/s00000.png".into(),
            state_fingerprint: StateFingerprint::from_hex(&"0".repeat(64)).unwrap(),
            elements,
        }
    }

    fn only(samples: &[DatasetSample], qt: QueryType) -> Vec<InstructionSample> {
        gen_instructions(samples, &[qt], &InstructionTemplates::default(), 1).0
    }

    #[test]
    fn name_query() {
        let s = sample(vec![el("Save", 4, 4, None)]);
        let q = only(&[s], QueryType::Name);
        assert_eq!(q[0].query, "Find \"Save\"");
        assert_eq!(q[0].gt_bbox, BBox::new(4, 4, 16, 16));
    }

    #[test]
    fn function_and_shape_queries() {
        let meta = ElementMeta {
            function_desc: Some("Marks the file as a favorite or important for easy access".into()),
            shape_desc: Some("A gray star with an empty center".into()),
            neighbors_desc: None,
        };
        let s = sample(vec![el("Star", 4, 4, Some(meta)), el("Plain", 40, 40, None)]);
        let (q, skipped) = gen_instructions(&[s], &[QueryType::Function, QueryType::Shape], &InstructionTemplates::default(), 3);
        let f = q.iter().find(|i| i.query_type == QueryType::Function).unwrap();
        assert_eq!(f.query, "Find the element which has the following function: Marks the file as a favorite or important for easy access");
        let s = q.iter().find(|i| i.query_type == QueryType::Shape).unwrap();
        assert_eq!(s.query, "Find the element which has the following description: A gray star with an empty center");
        assert_eq!(skipped[&QueryType::Function], 1);
        assert_eq!(skipped[&QueryType::Shape], 1);
    }

    #[test]
    fn refexpr_names_nearest_row_neighbors() {
        let s = sample(vec![
            el("Left far", 0, 10, None),
            el("Left", 30, 12, None),
            el("Target", 60, 10, None),
            el("Right", 90, 8, None),
            el("Right far", 120, 10, None),
            el("Below", 60, 60, None),
        ]);
        let q = only(&[s], QueryType::Refexpr);
        let t = q.iter().find(|i| i.element_name == "Target").unwrap();
        assert_eq!(
            t.query,
            "Find Target. The surrounding information is: To the right of \"Left\" and to the left of \"Right\""
        );
        let edge = q.iter().find(|i| i.element_name == "Left far").unwrap();
        assert!(edge.query.ends_with("To the left of \"Left\""));
        // "Below" shares no rows with anything
        assert!(q.iter().all(|i| i.element_name != "Below"));
    }

    #[test]
    fn refexpr_falls_back_to_authored_description() {
        let meta = ElementMeta { neighbors_desc: Some("In the status bar".into()), ..Default::default() };
        let q = only(&[sample(vec![el("Alone", 0, 0, Some(meta))])], QueryType::Refexpr);
        assert_eq!(q[0].query, "Find Alone. The surrounding information is: In the status bar");
        let (q, skipped) = gen_instructions(&[sample(vec![el("Alone", 0, 0, None)])], &[QueryType::Refexpr], &InstructionTemplates::default(), 0);
        assert!(q.is_empty());
        assert_eq!(skipped[&QueryType::Refexpr], 1);
    }

    #[test]
    fn deterministic_under_seed_and_gt_verbatim() {
        let s = sample((0..8).map(|i| el(&format!("E{i}"), i * 20, 0, None)).collect());
        let a = gen_instructions(std::slice::from_ref(&s), &QueryType::ALL, &InstructionTemplates::default(), 9);
        let b = gen_instructions(std::slice::from_ref(&s), &QueryType::ALL, &InstructionTemplates::default(), 9);
        assert_eq!(a, b);
        for q in &a.0 {
            assert!(s.elements.iter().any(|e| e.bbox == q.gt_bbox && e.name == q.element_name));
            let line = serde_json::to_string(q).unwrap();
            assert_eq!(serde_json::to_string(&serde_json::from_str::<InstructionSample>(&line).unwrap()).unwrap(), line);
        }
    }
}
