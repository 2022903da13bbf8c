//! Environment files: schema, loading and eager validation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::model::{ActionKind, BBox, ElementKind, ElementMeta, ElementSource, UIElement};
use crate::parser::{IconTemplate, TemplateError};
use crate::raster::{self, Screenshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenSize {
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateRef {
    pub template_id: String,
    /// Relative to the env file's directory.
    pub path: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ElementMeta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Render {
    Icon(String),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementDef {
    pub name: String,
    pub kind: ElementKind,
    pub bbox: BBox,
    pub render: Render,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ElementMeta>,
    /// Absent kinds are no-ops.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub transitions: BTreeMap<ActionKind, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDef {
    pub background: [u8; 3],
    #[serde(default)]
    pub is_error: bool,
    #[serde(default)]
    pub elements: Vec<ElementDef>,
}

/// On-disk form of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvFile {
    pub env_id: String,
    /// Free-form hint (e.g. "productive", "commercial") passed to remote selectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub screen: ScreenSize,
    pub initial_state: String,
    #[serde(default)]
    pub templates: Vec<TemplateRef>,
    #[serde(deserialize_with = "unique_keys")]
    pub states: BTreeMap<String, StateDef>,
}

/// Like the default map impl, but a repeated key is an error instead of
/// silently replacing the earlier entry.
fn unique_keys<'de, D, V>(de: D) -> Result<BTreeMap<String, V>, D::Error>
where
    D: Deserializer<'de>,
    V: Deserialize<'de>,
{
    struct UniqueVisitor<V>(std::marker::PhantomData<V>);

    impl<'de, V: Deserialize<'de>> Visitor<'de> for UniqueVisitor<V> {
        type Value = BTreeMap<String, V>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a map with unique keys")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
            let mut out = BTreeMap::new();
            while let Some((k, v)) = access.next_entry::<String, V>()? {
                if out.contains_key(&k) {
                    return Err(serde::de::Error::custom(format!("duplicate state id `{k}`")));
                }
                out.insert(k, v);
            }
            Ok(out)
        }
    }

    de.deserialize_map(UniqueVisitor(std::marker::PhantomData))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationIssue {
    EmptyScreen,
    UndefinedInitialState(String),
    DanglingTransition { state: String, element: String, kind: ActionKind, target: String },
    ErrorStateHasTransitions { state: String, element: String },
    EmptyElementName { state: String },
    DuplicateElementName { state: String, name: String },
    BBoxOutOfScreen { state: String, element: String, bbox: BBox },
    ControlKindNotRenderable { state: String, element: String },
    RenderKindMismatch { state: String, element: String },
    UnknownTemplate { state: String, element: String, template_id: String },
    IconNameMismatch { state: String, element: String, template_name: String },
    IconSizeMismatch { state: String, element: String, template: (u32, u32) },
    EmptyText { state: String, element: String },
    DuplicateTemplateId(String),
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationIssue::*;
        match self {
            EmptyScreen => write!(f, "screen dimensions must be positive"),
            UndefinedInitialState(s) => write!(f, "initial_state `{s}` is not a defined state"),
            DanglingTransition { state, element, kind, target } => {
                write!(f, "{state}/{element}: {kind} transition targets undefined state `{target}`")
            }
            ErrorStateHasTransitions { state, element } => {
                write!(f, "{state}/{element}: error states cannot have outgoing transitions")
            }
            EmptyElementName { state } => write!(f, "{state}: element with an empty name"),
            DuplicateElementName { state, name } => write!(f, "{state}: element name `{name}` used twice"),
            BBoxOutOfScreen { state, element, bbox } => {
                write!(f, "{state}/{element}: bbox {bbox:?} is empty or leaves the screen")
            }
            ControlKindNotRenderable { state, element } => {
                write!(f, "{state}/{element}: kind `control` cannot be rendered")
            }
            RenderKindMismatch { state, element } => write!(f, "{state}/{element}: render directive does not match kind"),
            UnknownTemplate { state, element, template_id } => {
                write!(f, "{state}/{element}: unknown template_id `{template_id}`")
            }
            IconNameMismatch { state, element, template_name } => {
                write!(f, "{state}/{element}: icon must be named after its template `{template_name}`")
            }
            IconSizeMismatch { state, element, template } => {
                write!(f, "{state}/{element}: icon bbox must be {}x{} like its template", template.0, template.1)
            }
            EmptyText { state, element } => write!(f, "{state}/{element}: text content is empty"),
            DuplicateTemplateId(id) => write!(f, "template_id `{id}` declared twice"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema error at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("invalid environment: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<ValidationIssue>),
    #[error("template `{template_id}`: {source}")]
    Template {
        template_id: String,
        #[source]
        source: TemplateError,
    },
}

impl EnvError {
    pub fn issues(&self) -> &[ValidationIssue] {
        match self {
            EnvError::Validation(v) => v,
            _ => &[],
        }
    }
}

/// One state after validation, with its ground-truth element list.
#[derive(Debug)]
pub struct State {
    pub id: String,
    pub def: StateDef,
    truth: Vec<UIElement>,
    pub(crate) screenshot: OnceLock<Arc<Screenshot>>,
}

impl State {
    pub fn truth(&self) -> &[UIElement] {
        &self.truth
    }

    pub fn element(&self, name: &str) -> Option<&ElementDef> {
        self.def.elements.iter().find(|e| e.name == name)
    }
}

/// A validated environment with its template images loaded.
#[derive(Debug)]
pub struct EnvDefinition {
    file: EnvFile,
    templates: Vec<IconTemplate>,
    template_index: HashMap<String, usize>,
    states: Vec<State>,
    state_index: HashMap<String, usize>,
    initial: usize,
}

impl EnvDefinition {
    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path).map_err(|source| EnvError::Io { path: path.display().to_string(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Self::from_json(&text, &base)
    }

    /// Parses and validates, resolving template paths against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, EnvError> {
        let file = parse_env_json(text)?;
        let templates = file
            .templates
            .iter()
            .map(|t| {
                let wrap = |source| EnvError::Template { template_id: t.template_id.clone(), source };
                let image = raster::load_gray_png(&base_dir.join(&t.path)).map_err(|e| wrap(e.into()))?;
                Ok(IconTemplate::new(&t.template_id, &t.name, image).map_err(wrap)?.with_meta(t.meta.clone()))
            })
            .collect::<Result<Vec<_>, EnvError>>()?;
        Self::from_parts(file, templates)
    }

    /// Builds from an already-parsed file and in-memory templates (matched by `template_id`).
    pub fn from_parts(file: EnvFile, templates: Vec<IconTemplate>) -> Result<Self, EnvError> {
        let mut issues = Vec::new();
        if file.screen.w == 0 || file.screen.h == 0 {
            issues.push(ValidationIssue::EmptyScreen);
        }
        let mut template_index = HashMap::new();
        for (i, t) in templates.iter().enumerate() {
            if template_index.insert(t.template_id().to_owned(), i).is_some() {
                issues.push(ValidationIssue::DuplicateTemplateId(t.template_id().to_owned()));
            }
        }
        if !file.states.contains_key(&file.initial_state) {
            issues.push(ValidationIssue::UndefinedInitialState(file.initial_state.clone()));
        }
        for (sid, state) in &file.states {
            validate_state(sid, state, &file, &templates, &template_index, &mut issues);
        }
        if !issues.is_empty() {
            return Err(EnvError::Validation(issues));
        }

        let states: Vec<State> = file
            .states
            .iter()
            .map(|(id, def)| State { id: id.clone(), def: def.clone(), truth: truth_elements(def), screenshot: OnceLock::new() })
            .collect();
        let state_index: HashMap<String, usize> = states.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        let initial = state_index[&file.initial_state];
        Ok(Self { file, templates, template_index, states, state_index, initial })
    }

    pub fn env_id(&self) -> &str {
        &self.file.env_id
    }

    pub fn category(&self) -> Option<&str> {
        self.file.category.as_deref()
    }

    pub fn screen(&self) -> ScreenSize {
        self.file.screen
    }

    pub fn file(&self) -> &EnvFile {
        &self.file
    }

    pub fn templates(&self) -> &[IconTemplate] {
        &self.templates
    }

    pub fn template(&self, template_id: &str) -> Option<&IconTemplate> {
        self.template_index.get(template_id).map(|&i| &self.templates[i])
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn initial_state(&self) -> &State {
        &self.states[self.initial]
    }

    pub fn state(&self, id: &str) -> Option<&State> {
        self.state_index.get(id).map(|&i| &self.states[i])
    }

    pub(crate) fn state_idx(&self, id: &str) -> Option<usize> {
        self.state_index.get(id).copied()
    }

    pub(crate) fn state_at(&self, idx: usize) -> &State {
        &self.states[idx]
    }

    pub(crate) fn initial_idx(&self) -> usize {
        self.initial
    }

    /// Whether every element name occurs in exactly one state.
    pub fn has_globally_unique_names(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.states.iter().flat_map(|s| &s.def.elements).all(|e| seen.insert(e.name.as_str()))
    }

    /// Whether every declared transition is a click.
    pub fn is_click_only(&self) -> bool {
        self.states
            .iter()
            .flat_map(|s| &s.def.elements)
            .all(|e| e.transitions.keys().all(|k| *k == ActionKind::Click))
    }
}

/// Deserializes an env file, reporting the JSON path of the first bad field.
pub fn parse_env_json(text: &str) -> Result<EnvFile, EnvError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        EnvError::Schema { field, message: e.into_inner().to_string() }
    })
}

fn validate_state(
    sid: &str,
    state: &StateDef,
    file: &EnvFile,
    templates: &[IconTemplate],
    template_index: &HashMap<String, usize>,
    issues: &mut Vec<ValidationIssue>,
) {
    let mut names = BTreeSet::new();
    for el in &state.elements {
        let (state_s, element) = (sid.to_owned(), el.name.clone());
        if el.name.trim().is_empty() {
            issues.push(ValidationIssue::EmptyElementName { state: state_s.clone() });
        }
        if !names.insert(el.name.as_str()) {
            issues.push(ValidationIssue::DuplicateElementName { state: state_s.clone(), name: element.clone() });
        }
        if !el.bbox.is_valid_within(file.screen.w, file.screen.h) {
            issues.push(ValidationIssue::BBoxOutOfScreen { state: state_s.clone(), element: element.clone(), bbox: el.bbox });
        }
        match (&el.kind, &el.render) {
            (ElementKind::Control, _) => {
                issues.push(ValidationIssue::ControlKindNotRenderable { state: state_s.clone(), element: element.clone() })
            }
            (ElementKind::Icon, Render::Icon(tid)) => match template_index.get(tid) {
                None => issues.push(ValidationIssue::UnknownTemplate {
                    state: state_s.clone(),
                    element: element.clone(),
                    template_id: tid.clone(),
                }),
                Some(&i) => {
                    let t = &templates[i];
                    if t.name() != el.name {
                        issues.push(ValidationIssue::IconNameMismatch {
                            state: state_s.clone(),
                            element: element.clone(),
                            template_name: t.name().to_owned(),
                        });
                    }
                    if (el.bbox.w, el.bbox.h) != (t.width(), t.height()) {
                        issues.push(ValidationIssue::IconSizeMismatch {
                            state: state_s.clone(),
                            element: element.clone(),
                            template: (t.width(), t.height()),
                        });
                    }
                }
            },
            (ElementKind::Text, Render::Text(content)) => {
                if content.trim().is_empty() {
                    issues.push(ValidationIssue::EmptyText { state: state_s.clone(), element: element.clone() });
                }
            }
            _ => issues.push(ValidationIssue::RenderKindMismatch { state: state_s.clone(), element: element.clone() }),
        }
        if state.is_error && !el.transitions.is_empty() {
            issues.push(ValidationIssue::ErrorStateHasTransitions { state: state_s.clone(), element: element.clone() });
        }
        for (kind, target) in &el.transitions {
            if !file.states.contains_key(target) {
                issues.push(ValidationIssue::DanglingTransition {
                    state: state_s.clone(),
                    element: element.clone(),
                    kind: *kind,
                    target: target.clone(),
                });
            }
        }
    }
}

fn truth_elements(def: &StateDef) -> Vec<UIElement> {
    def.elements
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut el = UIElement::new(&e.name, e.kind, e.bbox, ElementSource::SyntheticOracle).with_meta(e.meta.clone());
            el.id = format!("truth{i}");
            el
        })
        .collect()
}
