//! Screen parsing: icon template matching plus adapter-supplied text.

mod ncc;
mod template;
mod text;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use image::imageops::{self, FilterType};
use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::model::{iou, ElementKind, ElementSource, ScreenParse, UIElement};
use crate::raster::Screenshot;

pub use ncc::Detection;
pub use template::{load_template_dir, IconTemplate, TemplateError, TemplateSidecar, MIN_TEMPLATE_SIDE};
pub use text::{
    HttpTextRecognizer, InvalidDropout, NullTextRecognizer, OracleTextRecognizer, TextCapabilities,
    TextRecognizer, TextRecognizerError,
};

use ncc::{Canvas, PreparedTemplate};

pub const DEFAULT_TAU: f64 = 0.95;
pub const DEFAULT_NMS_OVERLAP: f64 = 0.5;
pub const DEFAULT_DEDUP_IOU: f64 = 0.5;
pub const MULTISCALE_FACTORS: [f64; 5] = [0.75, 0.875, 1.0, 1.125, 1.25];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParserConfig {
    /// Minimum NCC score for a detection.
    pub tau: f64,
    /// IoU at or above which a weaker detection is suppressed.
    pub nms_overlap: f64,
    /// Text elements overlapping a same-named icon by more than this are dropped.
    pub dedup_iou: f64,
    /// Sweep template scales 0.75..=1.25 in steps of 0.125.
    pub multiscale: bool,
}

impl Default for ParserConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU, nms_overlap: DEFAULT_NMS_OVERLAP, dedup_iou: DEFAULT_DEDUP_IOU, multiscale: false }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("template `{template_id}` ({tw}x{th}) is larger than the {sw}x{sh} screenshot")]
    TemplateTooLarge { template_id: String, tw: u32, th: u32, sw: u32, sh: u32 },
    #[error("threshold tau must lie in (0, 1], got {0}")]
    InvalidTau(f64),
    #[error("NMS overlap must lie in (0, 1), got {0}")]
    InvalidOverlap(f64),
    #[error("text recognition failed: {source}")]
    TextAdapter {
        #[source]
        source: TextRecognizerError,
        /// Icon elements found before the adapter failed.
        partial: Vec<UIElement>,
    },
}

fn check_tau(tau: f64) -> Result<(), ParseError> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(ParseError::InvalidTau(tau))
    }
}

/// Every window whose zero-mean NCC with `template` is at least `tau`,
/// sized exactly like the template and sorted best first.
pub fn match_template(screenshot: &GrayImage, template: &IconTemplate, tau: f64) -> Result<Vec<Detection>, ParseError> {
    check_tau(tau)?;
    let canvas = Canvas::new(screenshot);
    match_prepared(&canvas, template.template_id(), template.image(), tau)
}

fn match_prepared(canvas: &Canvas<'_>, template_id: &str, image: &GrayImage, tau: f64) -> Result<Vec<Detection>, ParseError> {
    let prepared = PreparedTemplate::new(template_id, image);
    if prepared.width() > canvas.width() || prepared.height() > canvas.height() {
        return Err(ParseError::TemplateTooLarge {
            template_id: template_id.to_owned(),
            tw: prepared.width(),
            th: prepared.height(),
            sw: canvas.width(),
            sh: canvas.height(),
        });
    }
    Ok(prepared.scan(canvas, tau))
}

/// Greedy non-maximum suppression: walking detections best first, keep one
/// iff its IoU with every kept detection is below `overlap`.
pub fn nms(detections: &[Detection], overlap: f64) -> Vec<Detection> {
    let mut sorted = detections.to_vec();
    ncc::sort_by_score(&mut sorted);
    let mut kept: Vec<Detection> = Vec::new();
    for d in sorted {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) < overlap) {
            kept.push(d);
        }
    }
    kept
}

fn detect_icons(luma: &GrayImage, templates: &[IconTemplate], config: &ParserConfig) -> Result<Vec<UIElement>, ParseError> {
    check_tau(config.tau)?;
    if !(config.nms_overlap > 0.0 && config.nms_overlap < 1.0) {
        return Err(ParseError::InvalidOverlap(config.nms_overlap));
    }
    let canvas = Canvas::new(luma);
    let mut elements = Vec::new();
    for template in templates {
        let dets = if config.multiscale {
            let mut all = Vec::new();
            for scale in MULTISCALE_FACTORS {
                let w = (template.width() as f64 * scale).round() as u32;
                let h = (template.height() as f64 * scale).round() as u32;
                if w < MIN_TEMPLATE_SIDE || h < MIN_TEMPLATE_SIDE || w > luma.width() || h > luma.height() {
                    continue;
                }
                let scaled = if (w, h) == template.image().dimensions() {
                    template.image().clone()
                } else {
                    imageops::resize(template.image(), w, h, FilterType::Triangle)
                };
                all.extend(match_prepared(&canvas, template.template_id(), &scaled, config.tau)?);
            }
            all
        } else {
            match_prepared(&canvas, template.template_id(), template.image(), config.tau)?
        };
        for d in nms(&dets, config.nms_overlap) {
            elements.push(
                UIElement::new(template.name(), ElementKind::Icon, d.bbox, ElementSource::Template)
                    .with_meta(template.meta().cloned()),
            );
        }
    }
    Ok(elements)
}

fn merge(icons: Vec<UIElement>, texts: Vec<UIElement>, dedup_iou: f64, screenshot_ref: &str) -> ScreenParse {
    let texts = texts.into_iter().filter(|t| {
        !icons.iter().any(|i| i.name == t.name && iou(&i.bbox, &t.bbox) > dedup_iou)
    });
    let mut all = icons.clone();
    all.extend(texts);
    ScreenParse::from_elements(screenshot_ref, all)
}

/// Parses one screenshot into named, boxed elements.
pub fn parse_screen(
    screenshot: &Screenshot,
    templates: &[IconTemplate],
    text: &dyn TextRecognizer,
    config: &ParserConfig,
) -> Result<ScreenParse, ParseError> {
    let icons = detect_icons(screenshot.luma(), templates, config)?;
    let texts = text.recognize(screenshot).map_err(|source| ParseError::TextAdapter { source, partial: icons.clone() })?;
    Ok(merge(icons, texts, config.dedup_iou, screenshot.content_ref()))
}

/// A template set bound to a configuration, memoizing icon detections per
/// screenshot content hash. Safe to share between threads.
#[derive(Debug)]
pub struct GuiParser {
    templates: Arc<Vec<IconTemplate>>,
    config: ParserConfig,
    icon_cache: Mutex<HashMap<String, Arc<Vec<UIElement>>>>,
}

impl GuiParser {
    pub fn new(templates: Arc<Vec<IconTemplate>>, config: ParserConfig) -> Self {
        Self { templates, config, icon_cache: Mutex::new(HashMap::new()) }
    }

    /// A parser that sees text only.
    pub fn text_only(config: ParserConfig) -> Self {
        Self::new(Arc::new(Vec::new()), config)
    }

    pub fn config(&self) -> &ParserConfig {
        &self.config
    }

    pub fn templates(&self) -> &[IconTemplate] {
        &self.templates
    }

    fn icons_for(&self, screenshot: &Screenshot) -> Result<Arc<Vec<UIElement>>, ParseError> {
        if self.templates.is_empty() {
            return Ok(Arc::new(Vec::new()));
        }
        let key = screenshot.content_ref();
        if let Some(hit) = self.icon_cache.lock().expect("icon cache poisoned").get(key) {
            return Ok(hit.clone());
        }
        let icons = Arc::new(detect_icons(screenshot.luma(), &self.templates, &self.config)?);
        self.icon_cache.lock().expect("icon cache poisoned").insert(key.to_owned(), icons.clone());
        Ok(icons)
    }

    /// Same result as [`parse_screen`] with this parser's templates and config.
    pub fn parse(&self, screenshot: &Screenshot, text: &dyn TextRecognizer) -> Result<ScreenParse, ParseError> {
        let icons = self.icons_for(screenshot)?;
        let texts = text
            .recognize(screenshot)
            .map_err(|source| ParseError::TextAdapter { source, partial: icons.as_ref().clone() })?;
        Ok(merge(icons.as_ref().clone(), texts, self.config.dedup_iou, screenshot.content_ref()))
    }
}
