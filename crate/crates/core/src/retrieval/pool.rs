use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::corpus::{CorpusSelection, ImageCorpus};
use crate::embedding::{embedding_distance, ConditioningVector, EmbeddingTable};
use crate::error::{Error, Result};

use super::ssd::{gaussian_kernel, GaussianKernel, SSD_SCALE};
use super::{
    appearance_threshold, semantic_threshold, Candidate, CandidatePool, ContextQuery, PixelValue,
    RetrievalConfig,
};

/// Relative slack on the pruning bound; far above accumulated rounding error.
const PRUNE_SLACK: f64 = 1e-9;

/// Images processed per rayon task.
const IMAGES_PER_TASK: usize = 16;

/// Reusable pool builder for a fixed corpus, selection and conditioning.
///
/// The semantic stage depends only on the conditioning vector, so its
/// survivors are computed once here instead of per query.
pub struct Retriever<'a> {
    corpus: &'a ImageCorpus,
    cfg: RetrievalConfig,
    kernel: GaussianKernel,
    /// `(image, embedding distance)` passing the semantic stage, ascending by image.
    survivors: Vec<(u32, f64)>,
    r_ssl: Option<f64>,
}

impl<'a> Retriever<'a> {
    pub fn new(
        corpus: &'a ImageCorpus,
        selection: &CorpusSelection,
        table: Option<&EmbeddingTable>,
        z: &ConditioningVector,
        cfg: &RetrievalConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.window > corpus.height().min(corpus.width()) {
            return Err(Error::Config(format!(
                "window {} exceeds source images {}x{}",
                cfg.window,
                corpus.height(),
                corpus.width()
            )));
        }
        if selection.indices().last().is_some_and(|&i| i as usize >= corpus.len()) {
            return Err(Error::Config("selection does not belong to this corpus".into()));
        }
        let kernel = gaussian_kernel(cfg.window, cfg.sigma)?;
        let mode = cfg.mode;

        let (survivors, r_ssl) = if mode.uses_embedding() {
            let table = table.ok_or_else(|| {
                Error::Config(format!("mode {mode} needs an embedding table"))
            })?;
            if !z.is_active() {
                return Err(Error::Config(format!("mode {mode} needs a conditioning vector")));
            }
            if table.count() != corpus.len() {
                return Err(Error::CountMismatch {
                    what: "embedding rows vs corpus images",
                    left: table.count(),
                    right: corpus.len(),
                });
            }
            let dists = selection
                .indices()
                .iter()
                .map(|&i| embedding_distance(z, table, i).map(|d| (i, d)))
                .collect::<Result<Vec<_>>>()?;
            let r = semantic_threshold(dists.iter().map(|&(_, d)| d), cfg.eps_ssl);
            (dists.into_iter().filter(|&(_, d)| d <= r).collect(), Some(r))
        } else if mode.uses_label() {
            let class = cfg.target_class.expect("validated");
            let kept: Vec<_> = selection
                .indices()
                .iter()
                .filter(|&&i| corpus.label(i) == class)
                .map(|&i| (i, 0.0))
                .collect();
            if kept.is_empty() {
                return Err(Error::EmptyPool(format!("no source image of class {class}")));
            }
            (kept, None)
        } else {
            (selection.indices().iter().map(|&i| (i, 0.0)).collect(), None)
        };

        Ok(Self {
            corpus,
            cfg: cfg.clone(),
            kernel,
            survivors,
            r_ssl,
        })
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.cfg
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    /// Images that pass the semantic stage.
    pub fn semantic_survivors(&self) -> impl Iterator<Item = u32> + '_ {
        self.survivors.iter().map(|&(i, _)| i)
    }

    /// Inclusive `(row range, col range)` of admissible source centers.
    fn center_box(&self, target: (usize, usize)) -> Option<((usize, usize), (usize, usize))> {
        let (h, w) = (self.corpus.height() as i64, self.corpus.width() as i64);
        if !self.cfg.mode.uses_locality() {
            return Some(((0, h as usize - 1), (0, w as usize - 1)));
        }
        let r = self.cfg.r_loc as i64;
        let (ty, tx) = (target.0 as i64, target.1 as i64);
        let (r0, r1) = ((ty - r).max(0), (ty + r).min(h - 1));
        let (c0, c1) = ((tx - r).max(0), (tx + r).min(w - 1));
        (r0 <= r1 && c0 <= c1).then_some(((r0 as usize, r1 as usize), (c0 as usize, c1 as usize)))
    }

    pub fn pool(&self, query: &ContextQuery) -> Result<CandidatePool> {
        let ch = self.corpus.channels();
        if query.window() != self.cfg.window || query.channels() != ch {
            return Err(Error::Config("query does not match retrieval configuration".into()));
        }
        let ((r0, r1), (c0, c1)) = self
            .center_box(query.target())
            .ok_or_else(|| Error::EmptyPool("locality window lies outside every source image".into()))?;

        if !self.cfg.mode.uses_appearance() {
            let mut candidates = Vec::new();
            for &(img, dist) in &self.survivors {
                for y in r0..=r1 {
                    for x in c0..=c1 {
                        candidates.push(self.candidate(img, (y, x), None, dist));
                    }
                }
            }
            return Ok(CandidatePool {
                candidates,
                r_ssd: None,
                r_ssl: self.r_ssl,
            });
        }

        let active = ActiveSet::new(query, &self.kernel, self.corpus.width());
        let eps = self.cfg.eps_ssd;
        let best = AtomicU64::new(f64::INFINITY.to_bits());
        let scored: Vec<Vec<(u16, u16, f64)>> = self
            .survivors
            .par_iter()
            .with_min_len(IMAGES_PER_TASK)
            .map(|&(img, _)| {
                let pixels = self.corpus.image(img);
                let mut kept = Vec::new();
                for y in r0..=r1 {
                    for x in c0..=c1 {
                        let cur = f64::from_bits(best.load(Ordering::Relaxed));
                        let limit = if cur.is_finite() {
                            appearance_threshold(cur, eps) * active.total_weight * SSD_SCALE * (1.0 + PRUNE_SLACK)
                        } else {
                            f64::INFINITY
                        };
                        if let Some(ssd) = active.score(pixels, self.corpus, (y, x), limit) {
                            if ssd < cur {
                                best.fetch_min(ssd.to_bits(), Ordering::Relaxed);
                            }
                            kept.push((y as u16, x as u16, ssd));
                        }
                    }
                }
                kept
            })
            .collect();

        let min_ssd = scored
            .iter()
            .flatten()
            .map(|&(_, _, s)| s)
            .fold(f64::INFINITY, f64::min);
        if !min_ssd.is_finite() {
            return Err(Error::EmptyPool("no candidate overlaps the query context".into()));
        }
        let r_ssd = appearance_threshold(min_ssd, eps);
        let mut candidates = Vec::new();
        for (&(img, dist), kept) in self.survivors.iter().zip(&scored) {
            for &(y, x, ssd) in kept {
                if ssd <= r_ssd {
                    candidates.push(self.candidate(img, (y as usize, x as usize), Some(ssd), dist));
                }
            }
        }
        Ok(CandidatePool {
            candidates,
            r_ssd: Some(r_ssd),
            r_ssl: self.r_ssl,
        })
    }

    fn candidate(&self, img: u32, center: (usize, usize), ssd: Option<f64>, emb_dist: f64) -> Candidate {
        Candidate {
            image: self.corpus.image_ref(img),
            center,
            ssd,
            emb_dist,
            center_value: PixelValue::from_slice(self.corpus.pixel(img, center.0, center.1)),
        }
    }
}

struct Entry {
    dy: isize,
    dx: isize,
    /// Offset of this entry from the center within a source image, in pixels.
    offset: isize,
    weight: f64,
    value: [u8; 4],
}

/// The filled entries of a query in raster order, so scoring accumulates in
/// exactly the order [`super::masked_ssd`] does.
struct ActiveSet {
    entries: Vec<Entry>,
    half: usize,
    channels: usize,
    total_weight: f64,
}

impl ActiveSet {
    fn new(query: &ContextQuery, kernel: &GaussianKernel, src_width: usize) -> Self {
        let w = query.window();
        let ch = query.channels();
        let half = (w / 2) as isize;
        let mut entries = Vec::new();
        let mut total_weight = 0.0;
        for (k, &m) in query.mask().iter().enumerate() {
            if !m {
                continue;
            }
            let dy = (k / w) as isize - half;
            let dx = (k % w) as isize - half;
            let mut value = [0u8; 4];
            value[..ch].copy_from_slice(&query.values()[k * ch..(k + 1) * ch]);
            let weight = kernel.weights()[k];
            total_weight += weight;
            entries.push(Entry {
                dy,
                dx,
                offset: dy * src_width as isize + dx,
                weight,
                value,
            });
        }
        Self {
            entries,
            half: half as usize,
            channels: ch,
            total_weight,
        }
    }

    /// Masked SSD at `center`, or `None` when the running numerator exceeds
    /// `limit` (the candidate cannot make the pool) or no entry overlaps.
    #[inline]
    fn score(&self, pixels: &[u8], corpus: &ImageCorpus, center: (usize, usize), limit: f64) -> Option<f64> {
        let (h, w) = (corpus.height(), corpus.width());
        let (cy, cx) = center;
        let interior = cy >= self.half && cx >= self.half && cy + self.half < h && cx + self.half < w;
        let base = (cy * w + cx) as isize;
        let ch = self.channels;
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        if interior && ch == 1 {
            for e in &self.entries {
                let d = e.value[0] as i32 - pixels[(base + e.offset) as usize] as i32;
                num += e.weight * (d * d) as u32 as f64;
                den += e.weight;
                if num > limit {
                    return None;
                }
            }
        } else {
            for e in &self.entries {
                let y = cy as isize + e.dy;
                let x = cx as isize + e.dx;
                if !interior && (y < 0 || x < 0 || y >= h as isize || x >= w as isize) {
                    continue;
                }
                let at = (base + e.offset) as usize * ch;
                let mut d2 = 0u32;
                for c in 0..ch {
                    let d = e.value[c] as i32 - pixels[at + c] as i32;
                    d2 += (d * d) as u32;
                }
                num += e.weight * d2 as f64;
                den += e.weight;
                if num > limit {
                    return None;
                }
            }
        }
        if den == 0.0 {
            return None;
        }
        Some(num / (den * SSD_SCALE))
    }
}

/// One-shot convenience around [`Retriever`].
pub fn build_pool(
    query: &ContextQuery,
    corpus: &ImageCorpus,
    selection: &CorpusSelection,
    table: Option<&EmbeddingTable>,
    z: &ConditioningVector,
    cfg: &RetrievalConfig,
) -> Result<CandidatePool> {
    Retriever::new(corpus, selection, table, z, cfg)?.pool(query)
}
