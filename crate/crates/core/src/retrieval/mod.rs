//! Candidate pool construction.
//!
//! A pool is built in three stages, cheapest first:
//!
//! 1. locality: source centers within an L∞ ball of radius `r_loc` around the
//!    target coordinate (whole image plane in [`Mode::SsdOnly`]);
//! 2. semantics: source images whose embedding lies within
//!    `(1 + eps_ssl) · min` of the conditioning vector, or whose label equals
//!    the target class in [`Mode::ClassConditional`];
//! 3. appearance: Gaussian-weighted masked SSD within `(1 + eps_ssd) · min`.
//!
//! Both minima are taken over the survivors of the previous stage, so a pool
//! is never empty when stage 1 yields a candidate.

mod oracle;
mod pool;
mod ssd;

use std::fmt;
use std::str::FromStr;

pub use oracle::oracle_pool;
pub use pool::{build_pool, Retriever};
pub use ssd::{gaussian_kernel, masked_ssd, GaussianKernel, SourceWindow, SSD_SCALE};

use crate::corpus::ImageRef;
use crate::error::{Error, Result};

/// Generator ablation modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Appearance only, anywhere in any source image.
    SsdOnly,
    /// Locality + appearance.
    NsSsd,
    /// Locality + embedding + appearance (the full model).
    NsSsdSsl,
    /// Locality + embedding, no appearance match.
    NsSsl,
    /// Locality + label equality + appearance.
    ClassConditional,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::SsdOnly,
        Mode::NsSsd,
        Mode::NsSsdSsl,
        Mode::NsSsl,
        Mode::ClassConditional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SsdOnly => "ssd_only",
            Mode::NsSsd => "ns_ssd",
            Mode::NsSsdSsl => "ns_ssd_ssl",
            Mode::NsSsl => "ns_ssl",
            Mode::ClassConditional => "class_conditional",
        }
    }

    pub fn uses_locality(self) -> bool {
        self != Mode::SsdOnly
    }

    pub fn uses_embedding(self) -> bool {
        matches!(self, Mode::NsSsdSsl | Mode::NsSsl)
    }

    pub fn uses_label(self) -> bool {
        self == Mode::ClassConditional
    }

    pub fn uses_appearance(self) -> bool {
        self != Mode::NsSsl
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    pub window: usize,
    pub sigma: f64,
    pub eps_ssd: f64,
    pub eps_ssl: f64,
    pub r_loc: usize,
    pub mode: Mode,
    /// Required in [`Mode::ClassConditional`].
    pub target_class: Option<u8>,
}

pub const DEFAULT_WINDOW: usize = 11;
pub const DEFAULT_EPS_SSD: f64 = 0.1;
/// The built-in grid embedding separates classes weakly. A tight ball around
/// the seed keeps only a handful of near-duplicate images.
pub const DEFAULT_EPS_SSL: f64 = 3.0;
pub const DEFAULT_R_LOC: usize = 4;

pub fn default_sigma(window: usize) -> f64 {
    window as f64 / 6.4
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            sigma: default_sigma(DEFAULT_WINDOW),
            eps_ssd: DEFAULT_EPS_SSD,
            eps_ssl: DEFAULT_EPS_SSL,
            r_loc: DEFAULT_R_LOC,
            mode: Mode::NsSsdSsl,
            target_class: None,
        }
    }
}

impl RetrievalConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "window must be odd and ≥ 3, got {}",
                self.window
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        for (name, eps) in [("eps_ssd", self.eps_ssd), ("eps_ssl", self.eps_ssl)] {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::Config(format!("{name} must be ≥ 0, got {eps}")));
            }
        }
        if self.mode.uses_label() && self.target_class.is_none() {
            return Err(Error::Config("class_conditional mode needs a target class".into()));
        }
        Ok(())
    }
}

/// The partially filled `w × w` neighborhood of a target pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextQuery {
    target: (usize, usize),
    window: usize,
    channels: usize,
    values: Vec<u8>,
    mask: Vec<bool>,
    canvas_dims: (usize, usize),
}

impl ContextQuery {
    pub fn new(
        target: (usize, usize),
        window: usize,
        channels: usize,
        values: Vec<u8>,
        mask: Vec<bool>,
        canvas_dims: (usize, usize),
    ) -> Result<Self> {
        let (h, w) = canvas_dims;
        if window.is_multiple_of(2) || window < 3 || window > h.min(w) {
            return Err(Error::Config(format!(
                "window {window} must be odd and in [3, {}]",
                h.min(w)
            )));
        }
        if target.0 >= h || target.1 >= w {
            return Err(Error::Config(format!("target {target:?} outside canvas")));
        }
        if mask.len() != window * window || values.len() != window * window * channels {
            return Err(Error::Config("query window size mismatch".into()));
        }
        let half = window / 2;
        if mask[half * window + half] {
            return Err(Error::Config("query center must be unfilled".into()));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Config("query has no filled context".into()));
        }
        Ok(Self {
            target,
            window,
            channels,
            values,
            mask,
            canvas_dims,
        })
    }

    /// Cuts the window around `target` out of a canvas; off-canvas entries are unfilled.
    pub fn from_canvas(
        pixels: &[u8],
        filled: &[bool],
        canvas_dims: (usize, usize),
        channels: usize,
        target: (usize, usize),
        window: usize,
    ) -> Result<Self> {
        let (h, w) = canvas_dims;
        let half = window as isize / 2;
        let mut values = vec![0u8; window * window * channels];
        let mut mask = vec![false; window * window];
        for dy in -half..=half {
            let y = target.0 as isize + dy;
            if y < 0 || y >= h as isize {
                continue;
            }
            for dx in -half..=half {
                let x = target.1 as isize + dx;
                if x < 0 || x >= w as isize {
                    continue;
                }
                let at = y as usize * w + x as usize;
                if !filled[at] {
                    continue;
                }
                let k = ((dy + half) as usize) * window + (dx + half) as usize;
                mask[k] = true;
                values[k * channels..(k + 1) * channels]
                    .copy_from_slice(&pixels[at * channels..(at + 1) * channels]);
            }
        }
        Self::new(target, window, channels, values, mask, canvas_dims)
    }

    pub fn target(&self) -> (usize, usize) {
        self.target
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn canvas_dims(&self) -> (usize, usize) {
        self.canvas_dims
    }
}

/// Channel values of one pixel (up to 4 channels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelValue {
    len: u8,
    v: [u8; 4],
}

impl PixelValue {
    pub fn from_slice(s: &[u8]) -> Self {
        assert!(s.len() <= 4, "at most 4 channels");
        let mut v = [0u8; 4];
        v[..s.len()].copy_from_slice(s);
        Self {
            len: s.len() as u8,
            v,
        }
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.v[..self.len as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub image: ImageRef,
    pub center: (usize, usize),
    /// Masked SSD to the query; `None` when the appearance stage is inactive.
    pub ssd: Option<f64>,
    pub emb_dist: f64,
    pub center_value: PixelValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    /// Sorted by `(image index, row, col)`.
    pub candidates: Vec<Candidate>,
    pub r_ssd: Option<f64>,
    pub r_ssl: Option<f64>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// `(image index, row, col)` of each member, in canonical order.
    pub fn keys(&self) -> Vec<(u32, usize, usize)> {
        self.candidates
            .iter()
            .map(|c| (c.image.index, c.center.0, c.center.1))
            .collect()
    }
}

/// `(1 + eps) · min` over per-image embedding distances.
pub fn semantic_threshold(distances: impl IntoIterator<Item = f64>, eps: f64) -> f64 {
    (1.0 + eps) * distances.into_iter().fold(f64::INFINITY, f64::min)
}

/// `(1 + eps) · min` over appearance distances.
pub fn appearance_threshold(min_ssd: f64, eps: f64) -> f64 {
    (1.0 + eps) * min_ssd
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("full".parse::<Mode>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RetrievalConfig::default().validate().is_ok());
        let c = RetrievalConfig { window: 10, ..Default::default() };
        assert!(c.validate().is_err());
        let c = RetrievalConfig { sigma: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
        let mut c = RetrievalConfig::with_mode(Mode::ClassConditional);
        assert!(c.validate().is_err());
        c.target_class = Some(7);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn query_invariants() {
        let v = vec![0u8; 9];
        let mut m = vec![false; 9];
        assert!(ContextQuery::new((1, 1), 3, 1, v.clone(), m.clone(), (5, 5)).is_err());
        m[0] = true;
        assert!(ContextQuery::new((1, 1), 3, 1, v.clone(), m.clone(), (5, 5)).is_ok());
        m[4] = true;
        assert!(ContextQuery::new((1, 1), 3, 1, v.clone(), m.clone(), (5, 5)).is_err());
        m[4] = false;
        assert!(ContextQuery::new((1, 1), 7, 1, vec![0; 49], vec![true; 49], (5, 5)).is_err());
    }

    #[test]
    fn query_from_canvas_clips_at_border() {
        let dims = (4, 4);
        let pixels: Vec<u8> = (0..16).collect();
        let mut filled = vec![false; 16];
        filled[1] = true; // (0, 1)
        filled[4] = true; // (1, 0)
        let q = ContextQuery::from_canvas(&pixels, &filled, dims, 1, (0, 0), 3).unwrap();
        assert_eq!(
            q.mask(),
            &[false, false, false, false, false, true, false, true, false]
        );
        assert_eq!(q.values()[5], 1);
        assert_eq!(q.values()[7], 4);
    }

    #[test]
    fn semantic_threshold_scales_minimum() {
        assert_eq!(semantic_threshold([4.0, 2.0, 3.0], 0.5), 3.0);
        assert_eq!(semantic_threshold([0.0, 1.0], 0.5), 0.0);
    }
}
