use crate::corpus::ImageCorpus;
use crate::error::{Error, Result};

use super::ContextQuery;

/// Squared channel differences are accumulated on the raw 0..=255 scale and
/// divided by this once, which equals working in [0, 1].
pub const SSD_SCALE: f64 = 255.0 * 255.0;

/// Unnormalized `w × w` Gaussian weights, peak 1 at the center.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    window: usize,
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.window + col]
    }
}

pub fn gaussian_kernel(window: usize, sigma: f64) -> Result<GaussianKernel> {
    if window.is_multiple_of(2) {
        return Err(Error::Config(format!("kernel window {window} must be odd")));
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::Config(format!("kernel sigma {sigma} must be > 0")));
    }
    let c = (window / 2) as f64;
    let two_s2 = 2.0 * sigma * sigma;
    let mut weights = Vec::with_capacity(window * window);
    for i in 0..window {
        for j in 0..window {
            let (di, dj) = (i as f64 - c, j as f64 - c);
            weights.push((-(di * di + dj * dj) / two_s2).exp());
        }
    }
    Ok(GaussianKernel { window, weights })
}

/// A `w × w` window of a source image; entries outside the image are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceWindow {
    pub values: Vec<u8>,
    pub valid: Vec<bool>,
}

impl SourceWindow {
    pub fn extract(corpus: &ImageCorpus, image: u32, center: (usize, usize), window: usize) -> Self {
        let (h, w, ch) = (corpus.height(), corpus.width(), corpus.channels());
        let half = window as isize / 2;
        let mut values = vec![0u8; window * window * ch];
        let mut valid = vec![false; window * window];
        for dy in -half..=half {
            let y = center.0 as isize + dy;
            for dx in -half..=half {
                let x = center.1 as isize + dx;
                if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                    continue;
                }
                let k = ((dy + half) as usize) * window + (dx + half) as usize;
                valid[k] = true;
                values[k * ch..(k + 1) * ch]
                    .copy_from_slice(corpus.pixel(image, y as usize, x as usize));
            }
        }
        Self { values, valid }
    }
}

/// Gaussian-weighted SSD over the entries filled in the query and valid in
/// the candidate, normalized by the covered kernel mass. Channel differences
/// are taken in [0, 1] and summed over channels.
pub fn masked_ssd(query: &ContextQuery, candidate: &SourceWindow, kernel: &GaussianKernel) -> Result<f64> {
    let n = query.window() * query.window();
    let ch = query.channels();
    if kernel.window() != query.window() || candidate.valid.len() != n {
        return Err(Error::Config("kernel/window size mismatch".into()));
    }
    let (q, m) = (query.values(), query.mask());
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for k in 0..n {
        if !(m[k] && candidate.valid[k]) {
            continue;
        }
        let mut d2 = 0u32;
        for c in 0..ch {
            let d = q[k * ch + c] as i32 - candidate.values[k * ch + c] as i32;
            d2 += (d * d) as u32;
        }
        let g = kernel.weights[k];
        num += g * d2 as f64;
        den += g;
    }
    if den == 0.0 {
        return Err(Error::EmptyJointMask);
    }
    Ok(num / (den * SSD_SCALE))
}
