//! Exhaustive reference for [`super::build_pool`].
//!
//! Visits every pixel of every selected image as a potential center and
//! evaluates each constraint directly, without precomputed survivors,
//! bounding boxes or pruning. Only suitable for tiny corpora.

use crate::corpus::{CorpusSelection, ImageCorpus};
use crate::embedding::{embedding_distance, ConditioningVector, EmbeddingTable};
use crate::error::{Error, Result};

use super::ssd::{gaussian_kernel, masked_ssd, SourceWindow};
use super::{
    appearance_threshold, semantic_threshold, Candidate, CandidatePool, ContextQuery, PixelValue,
    RetrievalConfig,
};

pub fn oracle_pool(
    query: &ContextQuery,
    corpus: &ImageCorpus,
    selection: &CorpusSelection,
    table: Option<&EmbeddingTable>,
    z: &ConditioningVector,
    cfg: &RetrievalConfig,
) -> Result<CandidatePool> {
    cfg.validate()?;
    let mode = cfg.mode;
    let kernel = gaussian_kernel(cfg.window, cfg.sigma)?;
    let (ty, tx) = (query.target().0 as i64, query.target().1 as i64);

    // stage 1: every (image, center) within the locality ball
    let mut stage1: Vec<(u32, usize, usize)> = Vec::new();
    for &img in selection.indices() {
        for y in 0..corpus.height() {
            for x in 0..corpus.width() {
                let linf = (y as i64 - ty).abs().max((x as i64 - tx).abs());
                if !mode.uses_locality() || linf <= cfg.r_loc as i64 {
                    stage1.push((img, y, x));
                }
            }
        }
    }
    if stage1.is_empty() {
        return Err(Error::EmptyPool("locality window lies outside every source image".into()));
    }

    // stage 2: semantic filter
    let mut r_ssl = None;
    let stage2: Vec<(u32, usize, usize, f64)> = if mode.uses_embedding() {
        let table = table.ok_or_else(|| Error::Config(format!("mode {mode} needs an embedding table")))?;
        if !z.is_active() {
            return Err(Error::Config(format!("mode {mode} needs a conditioning vector")));
        }
        let scored = stage1
            .iter()
            .map(|&(i, y, x)| embedding_distance(z, table, i).map(|d| (i, y, x, d)))
            .collect::<Result<Vec<_>>>()?;
        let r = semantic_threshold(scored.iter().map(|c| c.3), cfg.eps_ssl);
        r_ssl = Some(r);
        scored.into_iter().filter(|c| c.3 <= r).collect()
    } else if mode.uses_label() {
        let class = cfg.target_class.expect("validated");
        stage1
            .into_iter()
            .filter(|&(i, _, _)| corpus.label(i) == class)
            .map(|(i, y, x)| (i, y, x, 0.0))
            .collect()
    } else {
        stage1.into_iter().map(|(i, y, x)| (i, y, x, 0.0)).collect()
    };
    if stage2.is_empty() {
        return Err(Error::EmptyPool("semantic stage removed every candidate".into()));
    }

    let make = |i: u32, y: usize, x: usize, ssd: Option<f64>, d: f64| Candidate {
        image: corpus.image_ref(i),
        center: (y, x),
        ssd,
        emb_dist: d,
        center_value: PixelValue::from_slice(corpus.pixel(i, y, x)),
    };

    if !mode.uses_appearance() {
        return Ok(CandidatePool {
            candidates: stage2.into_iter().map(|(i, y, x, d)| make(i, y, x, None, d)).collect(),
            r_ssd: None,
            r_ssl,
        });
    }

    // stage 3: appearance
    let mut scored = Vec::new();
    for (i, y, x, d) in stage2 {
        let win = SourceWindow::extract(corpus, i, (y, x), cfg.window);
        match masked_ssd(query, &win, &kernel) {
            Ok(s) => scored.push((i, y, x, d, s)),
            Err(Error::EmptyJointMask) => {}
            Err(e) => return Err(e),
        }
    }
    let min = scored.iter().map(|c| c.4).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::EmptyPool("no candidate overlaps the query context".into()));
    }
    let r_ssd = appearance_threshold(min, cfg.eps_ssd);
    let mut candidates: Vec<Candidate> = scored
        .into_iter()
        .filter(|c| c.4 <= r_ssd)
        .map(|(i, y, x, d, s)| make(i, y, x, Some(s), d))
        .collect();
    candidates.sort_by_key(|c| (c.image.index, c.center));
    Ok(CandidatePool {
        candidates,
        r_ssd: Some(r_ssd),
        r_ssl,
    })
}
