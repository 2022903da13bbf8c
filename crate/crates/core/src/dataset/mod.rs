//! Grounding datasets built from explored screens.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest.json
//! screens/<sample_id>.png
//! annotations/<sample_id>.json
//! instructions.jsonl
//! ```

mod instructions;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, BufRead};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{BBox, ElementKind, ElementMeta, ScreenParse, StateFingerprint};
use crate::raster::Screenshot;

pub use instructions::{gen_instructions, InstructionSample, InstructionTemplates, QueryType};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCREENS_DIR: &str = "screens";
pub const ANNOTATIONS_DIR: &str = "annotations";
pub const INSTRUCTIONS_FILE: &str = "instructions.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("dataset integrity: {0}")]
    Integrity(String),
    #[error("encoding screenshot: {0}")]
    Encode(#[from] crate::raster::RasterError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedElement {
    pub name: String,
    pub kind: ElementKind,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ElementMeta>,
}

/// One stored screen with its parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSample {
    pub sample_id: String,
    /// Relative to the dataset directory.
    pub screenshot_path: String,
    pub state_fingerprint: StateFingerprint,
    pub elements: Vec<AnnotatedElement>,
}

impl DatasetSample {
    pub fn from_parse(sample_id: String, parse: &ScreenParse) -> Self {
        Self {
            screenshot_path: format!("{SCREENS_DIR}/{sample_id}.png"),
            sample_id,
            state_fingerprint: parse.fingerprint.clone(),
            elements: parse
                .elements
                .iter()
                .map(|e| AnnotatedElement { name: e.name.clone(), kind: e.kind, bbox: e.bbox, meta: e.meta.clone() })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sample serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordOutcome {
    Recorded(String),
    DuplicateSkipped,
}

/// Receives every screen an exploration run observes.
pub trait Recorder {
    fn record(&mut self, parse: &ScreenParse, screenshot: &Screenshot) -> Result<RecordOutcome, DatasetError>;
}

/// Discards everything; for runs whose screens are not needed.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullRecorder;

impl Recorder for NullRecorder {
    fn record(&mut self, _: &ScreenParse, _: &Screenshot) -> Result<RecordOutcome, DatasetError> {
        Ok(RecordOutcome::DuplicateSkipped)
    }
}

/// Writes one sample per distinct state fingerprint.
#[derive(Debug)]
pub struct DatasetRecorder {
    dir: PathBuf,
    seen: HashSet<StateFingerprint>,
    samples: Vec<DatasetSample>,
}

impl DatasetRecorder {
    /// Creates the directory layout. Existing samples are not read back;
    /// point this at a fresh directory.
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let dir = dir.into();
        for sub in [SCREENS_DIR, ANNOTATIONS_DIR] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        Ok(Self { dir, seen: HashSet::new(), samples: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn samples(&self) -> &[DatasetSample] {
        &self.samples
    }
}

impl Recorder for DatasetRecorder {
    fn record(&mut self, parse: &ScreenParse, screenshot: &Screenshot) -> Result<RecordOutcome, DatasetError> {
        if self.seen.contains(&parse.fingerprint) {
            return Ok(RecordOutcome::DuplicateSkipped);
        }
        let id = format!("s{:05}", self.samples.len());
        let sample = DatasetSample::from_parse(id.clone(), parse);
        let png = self.dir.join(&sample.screenshot_path);
        fs::write(&png, screenshot.encode_png()?).map_err(io_err(&png))?;
        let ann = self.dir.join(ANNOTATIONS_DIR).join(format!("{id}.json"));
        fs::write(&ann, sample.to_json()).map_err(io_err(&ann))?;
        self.seen.insert(parse.fingerprint.clone());
        self.samples.push(sample);
        Ok(RecordOutcome::Recorded(id))
    }
}

fn sorted_entries(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, DatasetError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let p = entry.map_err(io_err(dir))?.path();
        if p.extension().is_some_and(|e| e == ext) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Reads every annotation in a dataset directory, ordered by sample id.
pub fn load_samples(dir: &Path) -> Result<Vec<DatasetSample>, DatasetError> {
    sorted_entries(&dir.join(ANNOTATIONS_DIR), "json")?
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(io_err(&p))?;
            serde_json::from_str(&text).map_err(|e| DatasetError::Format { path: p.clone(), message: e.to_string() })
        })
        .collect()
}

/// Writes instructions as JSON lines.
pub fn write_instructions(dir: &Path, samples: &[InstructionSample]) -> Result<(), DatasetError> {
    let path = dir.join(INSTRUCTIONS_FILE);
    let mut text = String::new();
    for s in samples {
        text.push_str(&serde_json::to_string(s).expect("instruction serializes"));
        text.push('\n');
    }
    fs::write(&path, text).map_err(io_err(&path))
}

pub fn load_instructions(path: &Path) -> Result<Vec<InstructionSample>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetError::Format {
            path: path.to_owned(),
            message: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

/// How the dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreationParams {
    pub budget: u64,
    pub tau: f64,
    pub nms_overlap: f64,
    pub text_dropout: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub env_id: String,
    pub strategy_id: String,
    pub seed: u64,
    pub sample_count: usize,
    pub instruction_counts: BTreeMap<QueryType, usize>,
    /// Elements for which a query type could not be generated.
    pub skipped_counts: BTreeMap<QueryType, usize>,
    pub params: CreationParams,
}

impl DatasetManifest {
    pub fn new(env_id: impl Into<String>, strategy_id: impl Into<String>, seed: u64, params: CreationParams) -> Self {
        let zeros: BTreeMap<_, _> = QueryType::ALL.iter().map(|t| (*t, 0)).collect();
        Self {
            env_id: env_id.into(),
            strategy_id: strategy_id.into(),
            seed,
            sample_count: 0,
            instruction_counts: zeros.clone(),
            skipped_counts: zeros,
            params,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| DatasetError::Format { path, message: e.to_string() })
    }
}

/// Recounts the directory, fills the counts of `manifest` and writes it.
/// Fails when screens and annotations disagree.
pub fn write_manifest(dir: &Path, mut manifest: DatasetManifest) -> Result<DatasetManifest, DatasetError> {
    let stem = |p: &PathBuf| p.file_stem().map(|s| s.to_string_lossy().into_owned());
    let screens: Vec<_> = sorted_entries(&dir.join(SCREENS_DIR), "png")?.iter().filter_map(stem).collect();
    let annotations: Vec<_> = sorted_entries(&dir.join(ANNOTATIONS_DIR), "json")?.iter().filter_map(stem).collect();
    if screens != annotations {
        return Err(DatasetError::Integrity(format!(
            "{} screenshots but {} annotations, or their ids differ",
            screens.len(),
            annotations.len()
        )));
    }
    manifest.sample_count = screens.len();
    for v in manifest.instruction_counts.values_mut() {
        *v = 0;
    }
    let instr = dir.join(INSTRUCTIONS_FILE);
    if instr.exists() {
        for s in load_instructions(&instr)? {
            if !screens.contains(&s.sample_id) {
                return Err(DatasetError::Integrity(format!("instruction {} refers to missing sample {}", s.query_id, s.sample_id)));
            }
            *manifest.instruction_counts.entry(s.query_type).or_default() += 1;
        }
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json()).map_err(io_err(&path))?;
    Ok(manifest)
}
