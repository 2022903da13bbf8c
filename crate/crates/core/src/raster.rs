//! Screenshot rasters: luma conversion, content hashing and PNG I/O.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, Luma, RgbImage};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("decoding PNG {path}: {source}")]
    Decode { path: String, source: image::ImageError },
    #[error("encoding PNG: {0}")]
    Encode(#[source] image::ImageError),
}

/// `round_half_up(0.299 R + 0.587 G + 0.114 B)` in exact integer arithmetic.
pub fn luma_of(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

pub fn rgb_to_luma(img: &RgbImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let p = img.get_pixel(x, y).0;
        Luma([luma_of(p[0], p[1], p[2])])
    })
}

/// An RGB screenshot with its grayscale view and content hash precomputed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Screenshot {
    rgb: RgbImage,
    luma: GrayImage,
    content_ref: String,
}

impl Screenshot {
    pub fn from_rgb(rgb: RgbImage) -> Self {
        let luma = rgb_to_luma(&rgb);
        let content_ref = content_hash(&rgb);
        Self { rgb, luma, content_ref }
    }

    pub fn from_gray(gray: &GrayImage) -> Self {
        Self::from_rgb(DynamicImage::ImageLuma8(gray.clone()).to_rgb8())
    }

    /// Loads an 8-bit gray or RGB PNG. Other colour types are converted to RGB first.
    pub fn load_png(path: &Path) -> Result<Self, RasterError> {
        let bytes = std::fs::read(path)
            .map_err(|source| RasterError::Io { path: path.display().to_string(), source })?;
        Self::decode_png(&bytes).map_err(|source| RasterError::Decode { path: path.display().to_string(), source })
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, image::ImageError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        Ok(match img {
            DynamicImage::ImageLuma8(g) => Self::from_gray(&g),
            other => Self::from_rgb(other.to_rgb8()),
        })
    }

    pub fn rgb(&self) -> &RgbImage {
        &self.rgb
    }

    pub fn luma(&self) -> &GrayImage {
        &self.luma
    }

    /// Lowercase hex SHA-256 over dimensions and RGB bytes.
    pub fn content_ref(&self) -> &str {
        &self.content_ref
    }

    pub fn width(&self) -> u32 {
        self.rgb.width()
    }

    pub fn height(&self) -> u32 {
        self.rgb.height()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, RasterError> {
        encode_png(&DynamicImage::ImageRgb8(self.rgb.clone()))
    }
}

pub fn content_hash(img: &RgbImage) -> String {
    let mut h = Sha256::new();
    h.update(img.width().to_le_bytes());
    h.update(img.height().to_le_bytes());
    h.update(img.as_raw());
    hex::encode(h.finalize())
}

pub fn encode_png(img: &DynamicImage) -> Result<Vec<u8>, RasterError> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).map_err(RasterError::Encode)?;
    Ok(out.into_inner())
}

pub fn load_gray_png(path: &Path) -> Result<GrayImage, RasterError> {
    let bytes =
        std::fs::read(path).map_err(|source| RasterError::Io { path: path.display().to_string(), source })?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|source| RasterError::Decode { path: path.display().to_string(), source })?;
    Ok(match img {
        DynamicImage::ImageLuma8(g) => g,
        other => rgb_to_luma(&other.to_rgb8()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_rounds_half_up() {
        assert_eq!(luma_of(0, 0, 0), 0);
        assert_eq!(luma_of(255, 255, 255), 255);
        // 0.299 * 10 = 2.99 -> 3
        assert_eq!(luma_of(10, 0, 0), 3);
        // 0.114 * 5 = 0.57 -> 1
        assert_eq!(luma_of(0, 0, 5), 1);
        // gray stays gray
        for v in [0u8, 1, 77, 128, 254] {
            assert_eq!(luma_of(v, v, v), v);
        }
    }

    #[test]
    fn exact_half_rounds_up() {
        let (r, b) = (0..=255u32)
            .flat_map(|r| (0..=255u32).map(move |b| (r, b)))
            .find(|(r, b)| (299 * r + 114 * b) % 1000 == 500)
            .expect("a tie exists");
        assert_eq!(luma_of(r as u8, 0, b as u8) as u32, (299 * r + 114 * b) / 1000 + 1);
    }

    #[test]
    fn png_roundtrip_preserves_pixels_and_ref() {
        let img = RgbImage::from_fn(7, 5, |x, y| image::Rgb([x as u8 * 30, y as u8 * 40, 9]));
        let shot = Screenshot::from_rgb(img);
        let bytes = shot.encode_png().unwrap();
        let back = Screenshot::decode_png(&bytes).unwrap();
        assert_eq!(back, shot);
    }

    #[test]
    fn gray_png_is_accepted() {
        let g = GrayImage::from_fn(4, 4, |x, _| Luma([x as u8 * 50]));
        let bytes = encode_png(&DynamicImage::ImageLuma8(g.clone())).unwrap();
        let shot = Screenshot::decode_png(&bytes).unwrap();
        assert_eq!(shot.luma(), &g);
    }
}
