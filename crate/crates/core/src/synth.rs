//! Shell-order image growth.
//!
//! A canvas starts from an 8×8 block copied from a randomly chosen source
//! image at the same (centered) coordinates. Each step picks the unfilled
//! pixel whose window covers the most filled pixels, builds its candidate
//! pool and copies the center value of a uniformly drawn candidate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusSelection, ImageCorpus, ImageRef};
use crate::embedding::{make_conditioning, ConditioningVector, EmbeddingTable};
use crate::error::{Error, Result};
use crate::retrieval::{Candidate, CandidatePool, ContextQuery, PixelValue, RetrievalConfig, Retriever};
use crate::rng::{stream, Stream};
use crate::trace::{TraceLog, TraceRecord};

pub const SEED_SIZE: usize = 8;

/// Partially synthesized image plus, for every position, how many filled
/// pixels its `w × w` window currently covers.
#[derive(Debug, Clone)]
pub struct Canvas {
    height: usize,
    width: usize,
    channels: usize,
    window: usize,
    pixels: Vec<u8>,
    filled: Vec<bool>,
    overlap: Vec<u32>,
    filled_count: usize,
}

impl Canvas {
    pub fn new(height: usize, width: usize, channels: usize, window: usize) -> Self {
        Self {
            height,
            width,
            channels,
            window,
            pixels: vec![0; height * width * channels],
            filled: vec![false; height * width],
            overlap: vec![0; height * width],
            filled_count: 0,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn filled(&self) -> &[bool] {
        &self.filled
    }

    pub fn filled_count(&self) -> usize {
        self.filled_count
    }

    pub fn is_full(&self) -> bool {
        self.filled_count == self.height * self.width
    }

    pub fn is_filled(&self, row: usize, col: usize) -> bool {
        self.filled[row * self.width + col]
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[u8] {
        let at = (row * self.width + col) * self.channels;
        &self.pixels[at..at + self.channels]
    }

    /// Filled pixels inside the window centered at `(row, col)`.
    pub fn overlap(&self, row: usize, col: usize) -> u32 {
        self.overlap[row * self.width + col]
    }

    /// Writes a pixel. Panics if it is already filled.
    pub fn fill(&mut self, row: usize, col: usize, value: &[u8]) {
        let at = row * self.width + col;
        assert!(!self.filled[at], "pixel ({row}, {col}) filled twice");
        self.filled[at] = true;
        self.filled_count += 1;
        self.pixels[at * self.channels..(at + 1) * self.channels].copy_from_slice(value);
        let half = self.window / 2;
        for y in row.saturating_sub(half)..=(row + half).min(self.height - 1) {
            for x in col.saturating_sub(half)..=(col + half).min(self.width - 1) {
                self.overlap[y * self.width + x] += 1;
            }
        }
    }

    pub fn query(&self, target: (usize, usize)) -> Result<ContextQuery> {
        ContextQuery::from_canvas(
            &self.pixels,
            &self.filled,
            (self.height, self.width),
            self.channels,
            target,
            self.window,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPlacement {
    pub source: ImageRef,
    /// Top-left corner of the seed block; identical in canvas and source.
    pub origin: (usize, usize),
    pub size: usize,
}

/// Top-left corner of the centered seed block.
pub fn seed_origin(height: usize, width: usize) -> (usize, usize) {
    ((height - SEED_SIZE) / 2, (width - SEED_SIZE) / 2)
}

/// Copies the centered 8×8 block of a uniformly chosen image from `candidates`.
pub fn place_seed(
    corpus: &ImageCorpus,
    candidates: &[u32],
    window: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Canvas, SeedPlacement, Vec<TraceRecord>)> {
    if candidates.is_empty() {
        return Err(Error::EmptySelection("no image to draw the seed from".into()));
    }
    let (h, w) = (corpus.height(), corpus.width());
    if h < SEED_SIZE || w < SEED_SIZE {
        return Err(Error::Config(format!("images must be at least {SEED_SIZE}x{SEED_SIZE}")));
    }
    let source = corpus.image_ref(candidates[rng.random_range(0..candidates.len())]);
    let origin = seed_origin(h, w);
    let mut canvas = Canvas::new(h, w, corpus.channels(), window);
    let mut records = Vec::with_capacity(SEED_SIZE * SEED_SIZE);
    for row in origin.0..origin.0 + SEED_SIZE {
        for col in origin.1..origin.1 + SEED_SIZE {
            canvas.fill(row, col, corpus.pixel(source.index, row, col));
            records.push(TraceRecord {
                step: 0,
                target: (row, col),
                source_image: source.index,
                source_center: (row, col),
                class_label: source.label,
                pool_size: 1,
            });
        }
    }
    Ok((
        canvas,
        SeedPlacement {
            source,
            origin,
            size: SEED_SIZE,
        },
        records,
    ))
}

/// Unfilled pixel with maximal window overlap; ties drawn uniformly in raster order.
pub fn next_pixel(canvas: &Canvas, rng: &mut ChaCha8Rng) -> Result<(usize, usize)> {
    if canvas.is_full() {
        return Err(Error::CanvasFull);
    }
    let mut best = 0u32;
    let mut ties: Vec<usize> = Vec::new();
    for (at, (&f, &o)) in canvas.filled.iter().zip(&canvas.overlap).enumerate() {
        if f || o < best {
            continue;
        }
        if o > best {
            best = o;
            ties.clear();
        }
        ties.push(at);
    }
    if best == 0 {
        return Err(Error::Config("no unfilled pixel touches the filled region".into()));
    }
    let at = ties[rng.random_range(0..ties.len())];
    Ok((at / canvas.width, at % canvas.width))
}

/// Uniform draw over the pool's members.
pub fn sample_pixel<'p>(pool: &'p CandidatePool, rng: &mut ChaCha8Rng) -> Result<(PixelValue, &'p Candidate)> {
    if pool.is_empty() {
        return Err(Error::EmptyPool("cannot sample from an empty pool".into()));
    }
    let c = &pool.candidates[rng.random_range(0..pool.len())];
    Ok((c.center_value, c))
}

/// Where the conditioning vector of a generation comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Conditioning {
    /// Embedding row of the seed image.
    SeedImage,
    UserSupplied(Vec<f32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub retrieval: RetrievalConfig,
    pub rng_seed: u64,
    /// Only consulted by modes that use the embedding stage.
    pub conditioning: Conditioning,
    /// Keep the seed's source image out of retrieval for sampled pixels,
    /// unless no other eligible image would remain.
    pub hold_out_seed_source: bool,
}

impl GenerationConfig {
    pub fn new(retrieval: RetrievalConfig, rng_seed: u64) -> Self {
        Self {
            retrieval,
            rng_seed,
            conditioning: Conditioning::SeedImage,
            hold_out_seed_source: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub canvas: Canvas,
    pub trace: TraceLog,
    pub seed: SeedPlacement,
    pub conditioning: ConditioningVector,
    /// Retrieval settings actually used (target class resolved).
    pub retrieval: RetrievalConfig,
}

impl Generation {
    pub fn pixels(&self) -> &[u8] {
        self.canvas.pixels()
    }
}

pub fn generate(
    corpus: &ImageCorpus,
    selection: &CorpusSelection,
    table: Option<&EmbeddingTable>,
    cfg: &GenerationConfig,
) -> Result<Generation> {
    let mut rcfg = cfg.retrieval.clone();
    let mode = rcfg.mode;
    let mut seed_rng = stream(cfg.rng_seed, Stream::Seed);
    let mut tie_rng = stream(cfg.rng_seed, Stream::TieBreak);
    let mut pool_rng = stream(cfg.rng_seed, Stream::Pool);

    let seed_candidates: Vec<u32> = match (mode.uses_label(), rcfg.target_class) {
        (true, Some(class)) => selection
            .indices()
            .iter()
            .copied()
            .filter(|&i| corpus.label(i) == class)
            .collect(),
        _ => selection.indices().to_vec(),
    };
    let (mut canvas, seed, mut records) = place_seed(corpus, &seed_candidates, rcfg.window, &mut seed_rng)?;
    if mode.uses_label() && rcfg.target_class.is_none() {
        rcfg.target_class = Some(seed.source.label);
    }

    let conditioning = if mode.uses_embedding() {
        match &cfg.conditioning {
            Conditioning::SeedImage => {
                let table = table.ok_or_else(|| Error::Config(format!("mode {mode} needs an embedding table")))?;
                if table.count() != corpus.len() {
                    return Err(Error::CountMismatch {
                        what: "embedding rows vs corpus images",
                        left: table.count(),
                        right: corpus.len(),
                    });
                }
                make_conditioning(seed.source.index, table)
            }
            Conditioning::UserSupplied(z) => ConditioningVector::user_supplied(z.clone())?,
        }
    } else {
        ConditioningVector::none()
    };

    let held_out;
    let retrieval_selection = if cfg.hold_out_seed_source && seed_candidates.len() > 1 {
        held_out = selection.without(seed.source.index)?;
        &held_out
    } else {
        selection
    };
    let retriever = Retriever::new(corpus, retrieval_selection, table, &conditioning, &rcfg)?;
    let total = canvas.dims().0 * canvas.dims().1;
    records.reserve(total - records.len());
    let mut step = 0u32;
    while !canvas.is_full() {
        let target = next_pixel(&canvas, &mut tie_rng)?;
        let pool = retriever.pool(&canvas.query(target)?)?;
        let (value, chosen) = sample_pixel(&pool, &mut pool_rng)?;
        canvas.fill(target.0, target.1, value.as_slice());
        step += 1;
        records.push(TraceRecord {
            step,
            target,
            source_image: chosen.image.index,
            source_center: chosen.center,
            class_label: chosen.image.label,
            pool_size: pool.len() as u32,
        });
    }

    let (h, w) = canvas.dims();
    Ok(Generation {
        canvas,
        trace: TraceLog::new(h, w, records),
        seed,
        conditioning,
        retrieval: rcfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    /// Filled pixels in the window of `(row, col)`, counted directly.
    fn recount(canvas: &Canvas, row: usize, col: usize) -> u32 {
        let (h, w) = canvas.dims();
        let half = canvas.window() as i64 / 2;
        let mut n = 0;
        for y in row as i64 - half..=row as i64 + half {
            for x in col as i64 - half..=col as i64 + half {
                if y >= 0 && x >= 0 && y < h as i64 && x < w as i64 && canvas.is_filled(y as usize, x as usize) {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn single_filled_pixel_neighbors() {
        let mut c = Canvas::new(9, 9, 1, 3);
        c.fill(4, 4, &[1]);
        for s in 0..50 {
            let (r, col) = next_pixel(&c, &mut stream(s, Stream::TieBreak)).unwrap();
            assert!((r as i64 - 4).abs() <= 1 && (col as i64 - 4).abs() <= 1);
            assert!((r, col) != (4, 4));
        }
    }

    #[test]
    fn last_unfilled_pixel_is_forced() {
        let mut c = Canvas::new(5, 5, 1, 3);
        for r in 0..5 {
            for col in 0..5 {
                if (r, col) != (3, 1) {
                    c.fill(r, col, &[0]);
                }
            }
        }
        let mut rng = stream(0, Stream::TieBreak);
        assert_eq!(next_pixel(&c, &mut rng).unwrap(), (3, 1));
        c.fill(3, 1, &[0]);
        assert!(matches!(next_pixel(&c, &mut rng), Err(Error::CanvasFull)));
    }

    #[test]
    fn incremental_overlap_matches_recount() {
        let mut c = Canvas::new(12, 12, 1, 5);
        for r in 4..8 {
            for col in 4..8 {
                c.fill(r, col, &[9]);
            }
        }
        let mut rng = stream(3, Stream::TieBreak);
        for _ in 0..20 {
            for r in 0..12 {
                for col in 0..12 {
                    assert_eq!(c.overlap(r, col), recount(&c, r, col));
                }
            }
            let (r, col) = next_pixel(&c, &mut rng).unwrap();
            let max = (0..144)
                .filter(|&a| !c.is_filled(a / 12, a % 12))
                .map(|a| recount(&c, a / 12, a % 12))
                .max()
                .unwrap();
            assert_eq!(recount(&c, r, col), max);
            c.fill(r, col, &[1]);
        }
    }

    #[test]
    fn seed_from_single_image() {
        let px: Vec<u8> = (0..28 * 28).map(|i| (i % 251) as u8).collect();
        let corpus = ImageCorpus::new(px, vec![2], 28, 28, 1, 10).unwrap();
        let (canvas, seed, recs) = place_seed(&corpus, &[0], 11, &mut stream(1, Stream::Seed)).unwrap();
        assert_eq!(canvas.filled_count(), 64);
        assert_eq!(seed.origin, (10, 10));
        assert_eq!(recs.len(), 64);
        for r in 10..18 {
            for col in 10..18 {
                assert_eq!(canvas.pixel(r, col), corpus.pixel(0, r, col));
            }
        }
        assert!(recs.iter().all(|t| t.step == 0 && t.class_label == 2 && t.target == t.source_center));
        assert!(place_seed(&corpus, &[], 11, &mut stream(1, Stream::Seed)).is_err());
    }

    #[test]
    fn seed_is_deterministic() {
        let px: Vec<u8> = (0..50 * 144).map(|i| (i * 13 % 256) as u8).collect();
        let corpus = ImageCorpus::new(px, vec![0; 50], 12, 12, 1, 10).unwrap();
        let all: Vec<u32> = (0..50).collect();
        let a = place_seed(&corpus, &all, 5, &mut stream(8, Stream::Seed)).unwrap();
        let b = place_seed(&corpus, &all, 5, &mut stream(8, Stream::Seed)).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.pixels(), b.0.pixels());
    }

    fn pool_of(values: &[u8]) -> CandidatePool {
        CandidatePool {
            candidates: values
                .iter()
                .enumerate()
                .map(|(i, &v)| Candidate {
                    image: ImageRef { index: i as u32, label: 0 },
                    center: (0, 0),
                    ssd: Some(0.0),
                    emb_dist: 0.0,
                    center_value: PixelValue::from_slice(&[v]),
                })
                .collect(),
            r_ssd: Some(0.0),
            r_ssl: None,
        }
    }

    #[test]
    fn sampling_single_and_empty_pools() {
        let mut rng = stream(0, Stream::Pool);
        let p = pool_of(&[77]);
        for _ in 0..10 {
            assert_eq!(sample_pixel(&p, &mut rng).unwrap().0.as_slice(), &[77]);
        }
        assert!(sample_pixel(&pool_of(&[]), &mut rng).is_err());
    }

    #[test]
    fn sampling_two_thirds_zero() {
        let p = pool_of(&[0, 0, 255]);
        let mut rng = stream(11, Stream::Pool);
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| sample_pixel(&p, &mut rng).unwrap().0.as_slice() == [0])
            .count();
        assert!((zeros as f64 / n as f64 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn sampling_chi_square_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p = pool_of(&[0, 1, 2, 3, 4, 5, 6]);
        let mut rng = stream(12, Stream::Pool);
        let n = 100_000;
        let mut counts = [0f64; 7];
        for _ in 0..n {
            counts[sample_pixel(&p, &mut rng).unwrap().1.image.index as usize] += 1.0;
        }
        let e = n as f64 / 7.0;
        let stat: f64 = counts.iter().map(|c| (c - e) * (c - e) / e).sum();
        let pval = 1.0 - ChiSquared::new(6.0).unwrap().cdf(stat);
        assert!(pval > 0.001, "chi2 {stat}, p {pval}");
    }
}
