//! Shared domain types: boxes, elements, parses, actions and trajectories.
//!
//! Everything here is an immutable value once built. Serialization uses
//! snake_case keys throughout; fingerprints render as lowercase hex.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// IoU a prediction must strictly exceed to count as a correct grounding.
pub const GROUNDING_IOU_THRESHOLD: f64 = 0.3;

/// Grid (in pixels) onto which boxes are snapped before fingerprinting.
pub const FINGERPRINT_GRID: u32 = 4;

/// Axis-aligned pixel box: `x`,`y` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    /// Non-degenerate and inside a `width` x `height` screen.
    pub fn is_valid_within(&self, width: u32, height: u32) -> bool {
        self.w > 0 && self.h > 0 && self.right() <= width as u64 && self.bottom() <= height as u64
    }

    /// Center in doubled coordinates, which keeps it integral.
    pub fn center2(&self) -> (u64, u64) {
        (2 * self.x as u64 + self.w as u64, 2 * self.y as u64 + self.h as u64)
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let left = self.x.max(other.x) as u64;
        let top = self.y.max(other.y) as u64;
        let right = self.right().min(other.right());
        let bottom = self.bottom().min(other.bottom());
        if right <= left || bottom <= top {
            0
        } else {
            (right - left) * (bottom - top)
        }
    }

    fn union_area(&self, other: &BBox) -> u64 {
        self.area() + other.area() - self.intersection_area(other)
    }

    pub fn translated(&self, dx: i64, dy: i64) -> Option<BBox> {
        let x = u32::try_from(self.x as i64 + dx).ok()?;
        let y = u32::try_from(self.y as i64 + dy).ok()?;
        Some(BBox { x, y, ..*self })
    }
}

/// Intersection over union of two valid boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let union = a.union_area(b);
    if union == 0 {
        return 0.0;
    }
    a.intersection_area(b) as f64 / union as f64
}

/// `true` iff `iou(pred, gt)` is strictly greater than 0.3.
///
/// The comparison is done on the exact rational `inter / union`, so a box
/// pair at exactly 0.3 is never nudged over the line by rounding.
pub fn grounding_correct(pred: &BBox, gt: &BBox) -> bool {
    let inter = pred.intersection_area(gt) as u128;
    let union = pred.union_area(gt) as u128;
    // inter / union > 3 / 10
    union > 0 && inter * 10 > union * 3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Icon,
    Text,
    Control,
}

impl ElementKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ElementKind::Icon => "icon",
            ElementKind::Text => "text",
            ElementKind::Control => "control",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementSource {
    Template,
    Ocr,
    SyntheticOracle,
}

/// Free-text annotations attached to an element.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape_desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighbors_desc: Option<String>,
}

impl ElementMeta {
    pub fn is_empty(&self) -> bool {
        self.function_desc.is_none() && self.shape_desc.is_none() && self.neighbors_desc.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UIElement {
    pub id: String,
    pub name: String,
    pub kind: ElementKind,
    pub bbox: BBox,
    pub source: ElementSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ElementMeta>,
}

impl UIElement {
    pub fn new(name: impl Into<String>, kind: ElementKind, bbox: BBox, source: ElementSource) -> Self {
        Self { id: String::new(), name: name.into(), kind, bbox, source, meta: None }
    }

    pub fn with_meta(mut self, meta: Option<ElementMeta>) -> Self {
        self.meta = meta.filter(|m| !m.is_empty());
        self
    }

    /// The identity used for dedup and fingerprinting.
    pub fn key(&self) -> (&str, ElementKind, BBox) {
        (&self.name, self.kind, self.bbox)
    }
}

/// Canonical hash identifying a screen state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateFingerprint(String);

impl StateFingerprint {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Accepts a 64-char lowercase hex string.
    pub fn from_hex(hex: &str) -> Option<Self> {
        let ok = hex.len() == 64 && hex.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        ok.then(|| Self(hex.to_owned()))
    }

    /// First 12 hex digits, for human-facing output.
    pub fn short(&self) -> &str {
        &self.0[..12]
    }
}

impl fmt::Display for StateFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Order-insensitive hash of `(name, kind, bbox on a 4px grid)` over all elements.
///
/// Element ids, sources and meta are deliberately left out.
pub fn state_fingerprint(elements: &[UIElement]) -> StateFingerprint {
    let q = |v: u32| v / FINGERPRINT_GRID;
    let mut canon: Vec<(&str, &str, [u32; 4])> = elements
        .iter()
        .map(|e| (e.name.as_str(), e.kind.as_str(), [q(e.bbox.x), q(e.bbox.y), q(e.bbox.w), q(e.bbox.h)]))
        .collect();
    canon.sort_unstable();

    let mut hasher = Sha256::new();
    hasher.update(b"guiscout.fp.v1");
    hasher.update((canon.len() as u64).to_le_bytes());
    for (name, kind, coords) in canon {
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update(kind.as_bytes());
        for c in coords {
            hasher.update(c.to_le_bytes());
        }
    }
    StateFingerprint(hex::encode(hasher.finalize()))
}

/// Parser output for one screenshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenParse {
    pub screenshot_ref: String,
    pub elements: Vec<UIElement>,
    pub fingerprint: StateFingerprint,
}

impl ScreenParse {
    /// Sorts elements into canonical order, drops exact `(name, kind, bbox)`
    /// duplicates, assigns ids and computes the fingerprint.
    pub fn from_elements(screenshot_ref: impl Into<String>, mut elements: Vec<UIElement>) -> Self {
        elements.sort_by(|a, b| {
            (a.bbox.y, a.bbox.x, &a.name, a.kind, a.bbox.w, a.bbox.h).cmp(&(
                b.bbox.y, b.bbox.x, &b.name, b.kind, b.bbox.w, b.bbox.h,
            ))
        });
        elements.dedup_by(|a, b| a.key() == b.key());
        for (i, e) in elements.iter_mut().enumerate() {
            e.id = format!("e{i}");
        }
        let fingerprint = state_fingerprint(&elements);
        Self { screenshot_ref: screenshot_ref.into(), elements, fingerprint }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.elements.iter().map(|e| e.name.as_str())
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.elements.iter().any(|e| e.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    Drag,
    Scroll,
}

impl ActionKind {
    pub const ALL: [ActionKind; 3] = [ActionKind::Click, ActionKind::Drag, ActionKind::Scroll];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Drag => "drag",
            ActionKind::Scroll => "scroll",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ActionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "click" => Ok(ActionKind::Click),
            "drag" => Ok(ActionKind::Drag),
            "scroll" => Ok(ActionKind::Scroll),
            other => Err(format!("unknown action kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionOp {
    Click,
    Drag { dx: i32, dy: i32 },
    Scroll { ticks: i32 },
}

impl ActionOp {
    pub fn kind(&self) -> ActionKind {
        match self {
            ActionOp::Click => ActionKind::Click,
            ActionOp::Drag { .. } => ActionKind::Drag,
            ActionOp::Scroll { .. } => ActionKind::Scroll,
        }
    }

    /// Default parameters used by explorers for each kind.
    pub fn default_for(kind: ActionKind) -> Self {
        match kind {
            ActionKind::Click => ActionOp::Click,
            ActionKind::Drag => ActionOp::Drag { dx: 40, dy: 0 },
            ActionKind::Scroll => ActionOp::Scroll { ticks: 3 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("scroll actions need a non-zero tick count")]
pub struct ZeroScroll;

/// One GUI interaction aimed at an element by name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawAction", into = "RawAction")]
pub struct Action {
    target_name: String,
    op: ActionOp,
}

impl Action {
    pub fn new(target_name: impl Into<String>, op: ActionOp) -> Result<Self, ZeroScroll> {
        if let ActionOp::Scroll { ticks: 0 } = op {
            return Err(ZeroScroll);
        }
        Ok(Self { target_name: target_name.into(), op })
    }

    pub fn click(target_name: impl Into<String>) -> Self {
        Self { target_name: target_name.into(), op: ActionOp::Click }
    }

    pub fn of_kind(target_name: impl Into<String>, kind: ActionKind) -> Self {
        Self { target_name: target_name.into(), op: ActionOp::default_for(kind) }
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn op(&self) -> ActionOp {
        self.op
    }

    pub fn kind(&self) -> ActionKind {
        self.op.kind()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op {
            ActionOp::Click => write!(f, "click {:?}", self.target_name),
            ActionOp::Drag { dx, dy } => write!(f, "drag {:?} by ({dx},{dy})", self.target_name),
            ActionOp::Scroll { ticks } => write!(f, "scroll {:?} {ticks}", self.target_name),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawAction {
    target_name: String,
    #[serde(flatten)]
    op: ActionOp,
}

impl TryFrom<RawAction> for Action {
    type Error = ZeroScroll;

    fn try_from(raw: RawAction) -> Result<Self, Self::Error> {
        Action::new(raw.target_name, raw.op)
    }
}

impl From<Action> for RawAction {
    fn from(a: Action) -> Self {
        RawAction { target_name: a.target_name, op: a.op }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    NoNewElements,
    NoChange,
    ErrorState,
    BudgetExhausted,
}

/// What the explorer concluded about a single step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "reason")]
pub enum StepVerdict {
    /// Prefix replay on the way to a queued element; the critic is not consulted.
    Replay,
    Continue,
    NoNewElements,
    NoChange,
    ErrorState(String),
}

impl StepVerdict {
    pub fn termination(&self) -> Option<Termination> {
        match self {
            StepVerdict::Replay | StepVerdict::Continue => None,
            StepVerdict::NoNewElements => Some(Termination::NoNewElements),
            StepVerdict::NoChange => Some(Termination::NoChange),
            StepVerdict::ErrorState(_) => Some(Termination::ErrorState),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub pre_fp: StateFingerprint,
    pub action: Action,
    pub post_fp: StateFingerprint,
    #[serde(flatten)]
    pub verdict: StepVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub reason: String,
    pub steps: Vec<TrajectoryStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_record: Option<ErrorRecord>,
}

impl Trajectory {
    /// Checks step chaining and the error-record requirement.
    pub fn is_well_formed(&self) -> bool {
        let chained = self.steps.windows(2).all(|w| w[0].post_fp == w[1].pre_fp);
        let error_ok = (self.termination == Termination::ErrorState) == self.error_record.is_some();
        chained && error_ok
    }
}
