//! Part-whole generalization measures over source maps.
//!
//! Entropies are in nats. Windows never overhang the map.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::retrieval::Mode;
use crate::trace::TraceLog;

pub const ENTROPY_WINDOW: usize = 7;
pub const ENTROPY_STRIDE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Class,
    ImageId,
}

impl MapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MapKind::Class => "class",
            MapKind::ImageId => "image_id",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub mean_entropy: f64,
    pub window: usize,
    pub stride: usize,
    /// Entropy of each window, raster order of window origins.
    pub per_window: Vec<f64>,
}

/// Shannon entropy (nats) of the label multiset in `buf`. Sorts `buf`.
fn window_entropy<T: Ord + Copy>(buf: &mut [T]) -> f64 {
    buf.sort_unstable();
    let n = buf.len() as f64;
    let mut h = 0.0f64;
    let mut start = 0;
    while start < buf.len() {
        let mut end = start + 1;
        while end < buf.len() && buf[end] == buf[start] {
            end += 1;
        }
        if end - start < buf.len() {
            let p = (end - start) as f64 / n;
            h -= p * p.ln();
        }
        start = end;
    }
    h
}

/// Mean over all fully contained `window × window` windows (origins every
/// `stride` pixels) of the within-window label entropy.
pub fn sliding_entropy<T: Ord + Copy>(
    map: &[T],
    height: usize,
    width: usize,
    window: usize,
    stride: usize,
) -> Result<EntropyReport> {
    if map.len() != height * width {
        return Err(Error::DimMismatch {
            expected: height * width,
            found: map.len(),
        });
    }
    if window == 0 || stride == 0 {
        return Err(Error::Config("window and stride must be ≥ 1".into()));
    }
    if window > height.min(width) {
        return Err(Error::Config(format!(
            "entropy window {window} larger than {height}x{width} map"
        )));
    }
    let mut buf = Vec::with_capacity(window * window);
    let mut per_window = Vec::new();
    for y in (0..=height - window).step_by(stride) {
        for x in (0..=width - window).step_by(stride) {
            buf.clear();
            for r in y..y + window {
                buf.extend_from_slice(&map[r * width + x..r * width + x + window]);
            }
            per_window.push(window_entropy(&mut buf));
        }
    }
    let mean_entropy = per_window.iter().sum::<f64>() / per_window.len() as f64;
    Ok(EntropyReport {
        mean_entropy,
        window,
        stride,
        per_window,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceUsage {
    /// Pixels contributed per source image.
    pub counts: BTreeMap<u32, usize>,
    /// Most used sources: count descending, then index ascending.
    pub top_k: Vec<(u32, usize)>,
    /// Share of pixels from the most used source.
    pub dominance: f64,
    pub total: usize,
}

pub fn source_usage(log: &TraceLog, k: usize) -> SourceUsage {
    let mut counts = BTreeMap::new();
    for r in &log.records {
        *counts.entry(r.source_image).or_insert(0usize) += 1;
    }
    let mut ranked: Vec<(u32, usize)> = counts.iter().map(|(&i, &c)| (i, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let total = log.records.len();
    let dominance = ranked.first().map_or(0.0, |&(_, c)| c as f64 / total as f64);
    ranked.truncate(k);
    SourceUsage {
        counts,
        top_k: ranked,
        dominance,
        total,
    }
}

/// Per-sample entropies of one generation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSamples {
    pub mode: Mode,
    pub class_entropy: Vec<f64>,
    pub id_entropy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: Mode,
    pub samples: usize,
    pub class_mean: f64,
    pub id_mean: f64,
}

/// Orderings expected of part-whole generalization; `None` when a mode
/// needed for the check is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeComparison {
    pub summaries: Vec<ModeSummary>,
    /// class(ns_ssd_ssl) < class(ns_ssd)
    pub class_full_below_no_rep: Option<bool>,
    /// id(ns_ssd_ssl) > id(class_conditional)
    pub id_full_above_class_conditional: Option<bool>,
    /// class(class_conditional) == 0
    pub class_conditional_zero: Option<bool>,
    /// class(ssd_only) > class(ns_ssd_ssl)
    pub class_ssd_only_above_full: Option<bool>,
}

impl ModeComparison {
    pub fn summary(&self, mode: Mode) -> Option<&ModeSummary> {
        self.summaries.iter().find(|s| s.mode == mode)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn compare_modes(groups: &[ModeSamples], min_samples: usize) -> Result<ModeComparison> {
    if groups.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 modes to compare, got {}",
            groups.len()
        )));
    }
    let min_samples = min_samples.max(1);
    let mut summaries: Vec<ModeSummary> = Vec::new();
    for g in groups {
        if g.class_entropy.len() < min_samples || g.id_entropy.len() < min_samples {
            return Err(Error::Config(format!(
                "mode {} has fewer than {min_samples} samples",
                g.mode
            )));
        }
        if summaries.iter().any(|s| s.mode == g.mode) {
            return Err(Error::Config(format!("mode {} listed twice", g.mode)));
        }
        summaries.push(ModeSummary {
            mode: g.mode,
            samples: g.class_entropy.len(),
            class_mean: mean(&g.class_entropy),
            id_mean: mean(&g.id_entropy),
        });
    }
    let get = |m: Mode| summaries.iter().find(|s| s.mode == m);
    let full = get(Mode::NsSsdSsl);
    let both = |a: Option<&ModeSummary>, b: Option<&ModeSummary>, f: fn(&ModeSummary, &ModeSummary) -> bool| {
        Some(f(a?, b?))
    };
    let cmp = ModeComparison {
        class_full_below_no_rep: both(full, get(Mode::NsSsd), |f, n| f.class_mean < n.class_mean),
        id_full_above_class_conditional: both(full, get(Mode::ClassConditional), |f, c| f.id_mean > c.id_mean),
        class_conditional_zero: get(Mode::ClassConditional).map(|c| c.class_mean == 0.0),
        class_ssd_only_above_full: both(get(Mode::SsdOnly), full, |s, f| s.class_mean > f.class_mean),
        summaries: Vec::new(),
    };
    Ok(ModeComparison { summaries, ..cmp })
}
