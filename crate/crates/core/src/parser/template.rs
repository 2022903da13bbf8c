use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::model::ElementMeta;
use crate::raster::{self, RasterError};

pub const MIN_TEMPLATE_SIDE: u32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template `{template_id}` is {w}x{h}; both sides must be at least {MIN_TEMPLATE_SIDE}")]
    TooSmall { template_id: String, w: u32, h: u32 },
    #[error("template `{0}` has an empty name")]
    EmptyName(String),
    #[error("template `{0}` is a single flat colour and cannot be correlated")]
    Flat(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("sidecar {path}: {message}")]
    Sidecar { path: String, message: String },
    #[error("no sidecar JSON next to {0}")]
    MissingSidecar(String),
    #[error("listing {path}: {source}")]
    Dir { path: String, source: std::io::Error },
}

/// A labelled grayscale icon image.
#[derive(Debug, Clone)]
pub struct IconTemplate {
    template_id: String,
    name: String,
    image: GrayImage,
    meta: Option<ElementMeta>,
}

impl IconTemplate {
    pub fn new(
        template_id: impl Into<String>,
        name: impl Into<String>,
        image: GrayImage,
    ) -> Result<Self, TemplateError> {
        let template_id = template_id.into();
        let name = name.into();
        let (w, h) = image.dimensions();
        if w < MIN_TEMPLATE_SIDE || h < MIN_TEMPLATE_SIDE {
            return Err(TemplateError::TooSmall { template_id, w, h });
        }
        if name.trim().is_empty() {
            return Err(TemplateError::EmptyName(template_id));
        }
        let first = image.as_raw()[0];
        if image.as_raw().iter().all(|&v| v == first) {
            return Err(TemplateError::Flat(template_id));
        }
        Ok(Self { template_id, name, image, meta: None })
    }

    pub fn with_meta(mut self, meta: Option<ElementMeta>) -> Self {
        self.meta = meta.filter(|m| !m.is_empty());
        self
    }

    pub fn template_id(&self) -> &str {
        &self.template_id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn image(&self) -> &GrayImage {
        &self.image
    }

    pub fn meta(&self) -> Option<&ElementMeta> {
        self.meta.as_ref()
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }
}

/// Sidecar JSON stored next to each template PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSidecar {
    pub template_id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ElementMeta>,
}

/// Loads `foo.png` + `foo.json` pairs from `dir`, in file-name order.
pub fn load_template_dir(dir: &Path) -> Result<Vec<IconTemplate>, TemplateError> {
    let read = std::fs::read_dir(dir).map_err(|source| TemplateError::Dir { path: dir.display().to_string(), source })?;
    let mut pngs = Vec::new();
    for entry in read {
        let entry = entry.map_err(|source| TemplateError::Dir { path: dir.display().to_string(), source })?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            pngs.push(path);
        }
    }
    pngs.sort();

    pngs.iter()
        .map(|png| {
            let sidecar_path = png.with_extension("json");
            if !sidecar_path.exists() {
                return Err(TemplateError::MissingSidecar(png.display().to_string()));
            }
            let text = std::fs::read_to_string(&sidecar_path).map_err(|e| TemplateError::Sidecar {
                path: sidecar_path.display().to_string(),
                message: e.to_string(),
            })?;
            let sidecar: TemplateSidecar = serde_json::from_str(&text).map_err(|e| TemplateError::Sidecar {
                path: sidecar_path.display().to_string(),
                message: e.to_string(),
            })?;
            let image = raster::load_gray_png(png)?;
            Ok(IconTemplate::new(sidecar.template_id, sidecar.name, image)?.with_meta(sidecar.meta))
        })
        .collect()
}
