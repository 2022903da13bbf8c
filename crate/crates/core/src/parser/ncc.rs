//! Zero-mean normalized cross-correlation template matching.
//!
//! Window sums come from integral images, so flat windows are rejected in
//! constant time. For textured windows the correlation is accumulated one
//! template row at a time and abandoned as soon as a Cauchy-Schwarz bound on
//! the remaining rows shows the threshold is out of reach. Surviving windows
//! are scored from exact integer sums, which makes scores bit-identical
//! under translation.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::model::BBox;

/// One template hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub template_id: String,
    pub bbox: BBox,
    pub score: f64,
}

/// Integral images of a grayscale screenshot, shared by every template.
pub(crate) struct Canvas<'a> {
    image: &'a GrayImage,
    stride: usize,
    sum: Vec<u64>,
    sum_sq: Vec<u64>,
}

impl<'a> Canvas<'a> {
    pub(crate) fn new(image: &'a GrayImage) -> Self {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let stride = w + 1;
        let mut sum = vec![0u64; stride * (h + 1)];
        let mut sum_sq = vec![0u64; stride * (h + 1)];
        let raw = image.as_raw();
        for y in 0..h {
            let (mut row, mut row_sq) = (0u64, 0u64);
            for x in 0..w {
                let v = raw[y * w + x] as u64;
                row += v;
                row_sq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
                sum_sq[(y + 1) * stride + x + 1] = sum_sq[y * stride + x + 1] + row_sq;
            }
        }
        Self { image, stride, sum, sum_sq }
    }

    fn rect(table: &[u64], stride: usize, x: usize, y: usize, w: usize, h: usize) -> u64 {
        let (x1, y1) = (x + w, y + h);
        table[y1 * stride + x1] + table[y * stride + x] - table[y * stride + x1] - table[y1 * stride + x]
    }

    fn sums(&self, x: usize, y: usize, w: usize, h: usize) -> (u64, u64) {
        (Self::rect(&self.sum, self.stride, x, y, w, h), Self::rect(&self.sum_sq, self.stride, x, y, w, h))
    }

    pub(crate) fn width(&self) -> u32 {
        self.image.width()
    }

    pub(crate) fn height(&self) -> u32 {
        self.image.height()
    }
}

/// Template statistics reused at every window position.
pub(crate) struct PreparedTemplate<'t> {
    pub(crate) template_id: &'t str,
    w: usize,
    h: usize,
    pixels: Vec<u64>,
    n: u64,
    sum: u64,
    /// n * sum(T^2) - sum(T)^2
    spread: u128,
    /// sum(T) over rows [0, r)
    row_prefix_sum: Vec<u64>,
    /// sum((T - mean)^2) over rows [r, h)
    rest_energy: Vec<f64>,
}

impl<'t> PreparedTemplate<'t> {
    pub(crate) fn new(template_id: &'t str, image: &GrayImage) -> Self {
        let (w, h) = (image.width() as usize, image.height() as usize);
        let pixels: Vec<u64> = image.as_raw().iter().map(|&v| v as u64).collect();
        let n = (w * h) as u64;
        let sum: u64 = pixels.iter().sum();
        let sum_sq: u64 = pixels.iter().map(|v| v * v).sum();
        let spread = n as u128 * sum_sq as u128 - (sum as u128) * (sum as u128);
        let mean = sum as f64 / n as f64;

        let mut row_prefix_sum = vec![0u64; h + 1];
        let mut row_energy = vec![0f64; h];
        for r in 0..h {
            let row = &pixels[r * w..(r + 1) * w];
            row_prefix_sum[r + 1] = row_prefix_sum[r] + row.iter().sum::<u64>();
            row_energy[r] = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
        }
        let mut rest_energy = vec![0f64; h + 1];
        for r in (0..h).rev() {
            rest_energy[r] = rest_energy[r + 1] + row_energy[r];
        }
        Self { template_id, w, h, pixels, n, sum, spread, row_prefix_sum, rest_energy }
    }

    pub(crate) fn width(&self) -> u32 {
        self.w as u32
    }

    pub(crate) fn height(&self) -> u32 {
        self.h as u32
    }

    /// Exact score at `(x, y)`, or `None` when the window cannot reach `tau`.
    fn score_at(&self, canvas: &Canvas<'_>, x: usize, y: usize, tau: f64) -> Option<f64> {
        let (s1, s2) = canvas.sums(x, y, self.w, self.h);
        let n = self.n as u128;
        let window_spread = n * s2 as u128 - (s1 as u128) * (s1 as u128);
        if window_spread == 0 || self.spread == 0 {
            return None;
        }

        let nf = self.n as f64;
        let mean_t = self.sum as f64 / nf;
        let mean_i = s1 as f64 / nf;
        // ||T'|| * ||I'|| = sqrt(spread_t * spread_i) / n
        let norm = (self.spread as f64).sqrt() * (window_spread as f64).sqrt() / nf;
        let need = tau * norm - 1e-9 * norm - 1e-6;

        let raw = canvas.image.as_raw();
        let stride = canvas.image.width() as usize;
        let mut cross: u64 = 0;
        for r in 0..self.h {
            let img_row = &raw[(y + r) * stride + x..(y + r) * stride + x + self.w];
            let tpl_row = &self.pixels[r * self.w..(r + 1) * self.w];
            cross += tpl_row.iter().zip(img_row).map(|(&t, &i)| t * i as u64).sum::<u64>();

            let done = r + 1;
            if done == self.h {
                break;
            }
            // zero-mean cross term over rows [0, done)
            let (part_i, _) = canvas.sums(x, y, self.w, done);
            let part_n = (done * self.w) as f64;
            let part_t = self.row_prefix_sum[done] as f64;
            let partial = cross as f64 - mean_t * part_i as f64 - mean_i * part_t + part_n * mean_t * mean_i;
            // remaining image energy about the window mean
            let (rest_s1, rest_s2) = canvas.sums(x, y + done, self.w, self.h - done);
            let rest_n = nf - part_n;
            let rest_img = (rest_s2 as f64 - 2.0 * mean_i * rest_s1 as f64 + rest_n * mean_i * mean_i).max(0.0);
            let bound = partial + (self.rest_energy[done] * rest_img).sqrt();
            if bound < need {
                return None;
            }
        }

        let numerator = n as i128 * cross as i128 - self.sum as i128 * s1 as i128;
        let score = numerator as f64 / ((self.spread as f64).sqrt() * (window_spread as f64).sqrt());
        Some(score.clamp(-1.0, 1.0))
    }

    /// All windows scoring at least `tau`, best first.
    pub(crate) fn scan(&self, canvas: &Canvas<'_>, tau: f64) -> Vec<Detection> {
        let (cw, ch) = (canvas.width() as usize, canvas.height() as usize);
        if self.w > cw || self.h > ch {
            return Vec::new();
        }
        let mut out = Vec::new();
        for y in 0..=(ch - self.h) {
            for x in 0..=(cw - self.w) {
                if let Some(score) = self.score_at(canvas, x, y, tau) {
                    if score >= tau {
                        out.push(Detection {
                            template_id: self.template_id.to_owned(),
                            bbox: BBox::new(x as u32, y as u32, self.w as u32, self.h as u32),
                            score,
                        });
                    }
                }
            }
        }
        sort_by_score(&mut out);
        out
    }
}

/// Descending score; ties broken top-to-bottom, left-to-right.
pub(crate) fn sort_by_score(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then((a.bbox.y, a.bbox.x, a.bbox.w, a.bbox.h).cmp(&(b.bbox.y, b.bbox.x, b.bbox.w, b.bbox.h)))
            .then(a.template_id.cmp(&b.template_id))
    });
}

/// Reference scorer used by tests: plain floating-point zero-mean NCC.
#[cfg(test)]
pub(crate) fn naive_ncc(image: &GrayImage, template: &GrayImage, x: u32, y: u32) -> f64 {
    let (tw, th) = template.dimensions();
    let n = (tw * th) as f64;
    let t: Vec<f64> = template.pixels().map(|p| p.0[0] as f64).collect();
    let i: Vec<f64> = (0..th)
        .flat_map(|r| (0..tw).map(move |c| (c, r)))
        .map(|(c, r)| image.get_pixel(x + c, y + r).0[0] as f64)
        .collect();
    let mt = t.iter().sum::<f64>() / n;
    let mi = i.iter().sum::<f64>() / n;
    let num: f64 = t.iter().zip(&i).map(|(a, b)| (a - mt) * (b - mi)).sum();
    let dt: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    let di: f64 = i.iter().map(|b| (b - mi).powi(2)).sum();
    if dt == 0.0 || di == 0.0 {
        0.0
    } else {
        num / (dt.sqrt() * di.sqrt())
    }
}
