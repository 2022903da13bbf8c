//! Text recognition adapters.
//!
//! The parser never runs OCR itself; it asks a [`TextRecognizer`] for text
//! elements. The oracle adapter serves ground truth from a simulated
//! environment with seeded per-element dropout, which stands in for a real
//! OCR engine's misses.

use std::time::Duration;

use base64::Engine as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{BBox, ElementKind, ElementSource, UIElement};
use crate::raster::Screenshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TextCapabilities {
    pub deterministic: bool,
    pub region_scoped: bool,
    pub concurrent_safe: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{adapter}: {message}")]
pub struct TextRecognizerError {
    pub adapter: String,
    pub message: String,
}

pub trait TextRecognizer {
    fn capabilities(&self) -> TextCapabilities;

    /// Text elements (kind `text`) with boxes inside the screenshot.
    fn recognize(&self, screenshot: &Screenshot) -> Result<Vec<UIElement>, TextRecognizerError>;
}

/// Recognizes nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullTextRecognizer;

impl TextRecognizer for NullTextRecognizer {
    fn capabilities(&self) -> TextCapabilities {
        TextCapabilities { deterministic: true, region_scoped: false, concurrent_safe: true }
    }

    fn recognize(&self, _: &Screenshot) -> Result<Vec<UIElement>, TextRecognizerError> {
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("dropout must lie in [0, 1), got {0}")]
pub struct InvalidDropout(pub f64);

/// Serves the ground-truth text elements of a rendered state, dropping each
/// one independently with probability `dropout`.
#[derive(Debug, Clone)]
pub struct OracleTextRecognizer {
    truth: Vec<UIElement>,
    dropout: f64,
    seed: u64,
}

impl OracleTextRecognizer {
    pub fn new(truth: &[UIElement], dropout: f64, seed: u64) -> Result<Self, InvalidDropout> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(InvalidDropout(dropout));
        }
        let truth = truth
            .iter()
            .filter(|e| e.kind == ElementKind::Text)
            .map(|e| UIElement { source: ElementSource::SyntheticOracle, ..e.clone() })
            .collect();
        Ok(Self { truth, dropout, seed })
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }
}

impl TextRecognizer for OracleTextRecognizer {
    fn capabilities(&self) -> TextCapabilities {
        TextCapabilities { deterministic: true, region_scoped: false, concurrent_safe: true }
    }

    fn recognize(&self, _: &Screenshot) -> Result<Vec<UIElement>, TextRecognizerError> {
        if self.dropout == 0.0 {
            return Ok(self.truth.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok(self.truth.iter().filter(|_| rng.random::<f64>() >= self.dropout).cloned().collect())
    }
}

/// Client for a remote OCR service.
///
/// Contract: `POST {"image_png_base64": ...}` answered by
/// `{"elements": [{"text": ..., "bbox": {"x","y","w","h"}}]}`.
#[derive(Debug, Clone)]
pub struct HttpTextRecognizer {
    endpoint: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct OcrRequest<'a> {
    image_png_base64: &'a str,
}

#[derive(Deserialize)]
struct OcrResponse {
    elements: Vec<OcrElement>,
}

#[derive(Deserialize)]
struct OcrElement {
    text: String,
    bbox: BBox,
}

impl HttpTextRecognizer {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, TextRecognizerError> {
        let client = reqwest::blocking::Client::builder().timeout(timeout).build().map_err(|e| Self::err(e.to_string()))?;
        Ok(Self { endpoint: endpoint.into(), client })
    }

    fn err(message: String) -> TextRecognizerError {
        TextRecognizerError { adapter: "http_ocr".into(), message }
    }
}

impl TextRecognizer for HttpTextRecognizer {
    fn capabilities(&self) -> TextCapabilities {
        TextCapabilities { deterministic: false, region_scoped: false, concurrent_safe: true }
    }

    fn recognize(&self, screenshot: &Screenshot) -> Result<Vec<UIElement>, TextRecognizerError> {
        let png = screenshot.encode_png().map_err(|e| Self::err(e.to_string()))?;
        let encoded = base64::engine::general_purpose::STANDARD.encode(png);
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&OcrRequest { image_png_base64: &encoded })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Self::err(e.to_string()))?;
        let body: OcrResponse = resp.json().map_err(|e| Self::err(e.to_string()))?;
        let (w, h) = (screenshot.width(), screenshot.height());
        Ok(body
            .elements
            .into_iter()
            .filter(|e| !e.text.trim().is_empty() && e.bbox.is_valid_within(w, h))
            .map(|e| UIElement::new(e.text, ElementKind::Text, e.bbox, ElementSource::Ocr))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::RgbImage;

    fn truth(n: usize) -> Vec<UIElement> {
        (0..n)
            .map(|i| UIElement::new(format!("t{i}"), ElementKind::Text, BBox::new(0, 0, 6, 8), ElementSource::Ocr))
            .chain(std::iter::once(UIElement::new("icon", ElementKind::Icon, BBox::new(0, 0, 8, 8), ElementSource::Template)))
            .collect()
    }

    fn shot() -> Screenshot {
        Screenshot::from_rgb(RgbImage::new(8, 8))
    }

    #[test]
    fn zero_dropout_returns_all_text_truth() {
        let adapter = OracleTextRecognizer::new(&truth(5), 0.0, 1).unwrap();
        let got = adapter.recognize(&shot()).unwrap();
        assert_eq!(got.len(), 5);
        assert!(got.iter().all(|e| e.kind == ElementKind::Text && e.source == ElementSource::SyntheticOracle));
    }

    #[test]
    fn same_seed_same_output() {
        let a = OracleTextRecognizer::new(&truth(50), 0.5, 42).unwrap();
        let b = OracleTextRecognizer::new(&truth(50), 0.5, 42).unwrap();
        assert_eq!(a.recognize(&shot()).unwrap(), b.recognize(&shot()).unwrap());
    }

    #[test]
    fn dropout_out_of_range_is_rejected() {
        assert!(OracleTextRecognizer::new(&[], 1.0, 0).is_err());
        assert!(OracleTextRecognizer::new(&[], -0.1, 0).is_err());
    }

    #[test]
    fn empirical_omission_rate_tracks_dropout() {
        let elements = truth(1000);
        for dropout in [0.1, 0.5, 0.9, 0.99] {
            let mut rates = Vec::new();
            for seed in 0..20 {
                let kept = OracleTextRecognizer::new(&elements, dropout, seed).unwrap().recognize(&shot()).unwrap().len();
                let rate = 1.0 - kept as f64 / 1000.0;
                assert!((rate - dropout).abs() <= 0.05, "dropout {dropout} seed {seed}: {rate}");
                rates.push(rate);
            }
            let mean = rates.iter().sum::<f64>() / rates.len() as f64;
            assert!((mean - dropout).abs() <= 0.02);
        }
    }
}
