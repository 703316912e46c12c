//! Self-contained consistency checks on synthetic data.
//!
//! Two suites:
//! * retrieval: the optimized pool builder against [`oracle_pool`] over random
//!   partial-context queries in every mode;
//! * overlap: the canvas's incremental overlap counts and [`next_pixel`]
//!   against a brute-force recount while a canvas fills up.
//!
//! The pool builder is injected so a deliberately broken implementation can
//! be shown to fail.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusSelection, ImageCorpus};
use crate::embedding::{builtin_embedding, make_conditioning, ConditioningVector, EmbeddingTable};
use crate::error::{Error, Result};
use crate::retrieval::{oracle_pool, CandidatePool, ContextQuery, Mode, RetrievalConfig};
use crate::rng::{stream, Stream};
use crate::synth::{next_pixel, seed_origin, Canvas, SEED_SIZE};

pub const SYNTH_IMAGES: usize = 64;
pub const SYNTH_SIDE: usize = 12;
pub const SYNTH_CLASSES: usize = 2;
pub const DEFAULT_QUERIES_PER_MODE: usize = 24;
pub const DEFAULT_OVERLAP_RUNS: usize = 8;

/// Signature shared by [`crate::retrieval::build_pool`] and the oracle.
pub type PoolBuilder<'f> = dyn Fn(
        &ContextQuery,
        &ImageCorpus,
        &CorpusSelection,
        Option<&EmbeddingTable>,
        &ConditioningVector,
        &RetrievalConfig,
    ) -> Result<CandidatePool>
    + 'f;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub queries_per_mode: usize,
    pub overlap_runs: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            queries_per_mode: DEFAULT_QUERIES_PER_MODE,
            overlap_runs: DEFAULT_OVERLAP_RUNS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteReport {
    pub oracle_comparisons: usize,
    pub oracle_comparisons_per_mode: Vec<(Mode, usize)>,
    pub overlap_checks: usize,
    /// First few mismatch descriptions; the counts below are complete.
    pub failures: Vec<String>,
    pub oracle_failures: usize,
    pub overlap_failures: usize,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.oracle_failures == 0 && self.overlap_failures == 0
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (mode, n) in &self.oracle_comparisons_per_mode {
            s.push_str(&format!("retrieval {:<18} {n} queries\n", mode.as_str()));
        }
        s.push_str(&format!(
            "retrieval oracle comparisons: {} ({} mismatches)\n",
            self.oracle_comparisons, self.oracle_failures
        ));
        s.push_str(&format!(
            "overlap checks: {} ({} mismatches)\n",
            self.overlap_checks, self.overlap_failures
        ));
        for f in &self.failures {
            s.push_str(&format!("  FAIL {f}\n"));
        }
        s.push_str(if self.passed() { "PASS\n" } else { "FAIL\n" });
        s
    }

    fn fail(&mut self, msg: String) {
        if self.failures.len() < 20 {
            self.failures.push(msg);
        }
    }
}

/// 64 grayscale 12×12 images in two classes. Pixels take few distinct
/// levels so exact SSD ties and threshold-boundary cases occur.
pub fn synthetic_corpus(seed: u64) -> ImageCorpus {
    let mut rng = stream(seed, Stream::Seed);
    let n = SYNTH_SIDE * SYNTH_SIDE;
    let mut pixels = Vec::with_capacity(SYNTH_IMAGES * n);
    let mut labels = Vec::with_capacity(SYNTH_IMAGES);
    for i in 0..SYNTH_IMAGES {
        let label = (i % SYNTH_CLASSES) as u8;
        // class 0 is brighter on the left, class 1 on the right
        for _ in 0..SYNTH_SIDE {
            for x in 0..SYNTH_SIDE {
                let bright = (x < SYNTH_SIDE / 2) == (label == 0);
                let level: u8 = match (bright, rng.random_range(0..4u8)) {
                    (true, 0) | (false, 3) => 128,
                    (true, _) => 255,
                    (false, _) => 0,
                };
                pixels.push(level);
            }
        }
        labels.push(label);
    }
    ImageCorpus::new(pixels, labels, SYNTH_SIDE, SYNTH_SIDE, 1, SYNTH_CLASSES)
        .expect("synthetic corpus is well formed")
}

/// Random partial context: some window positions are copied from a corpus
/// image (sometimes perturbed), the center stays empty.
pub fn random_query(corpus: &ImageCorpus, window: usize, rng: &mut ChaCha8Rng) -> Result<ContextQuery> {
    let (h, w) = (corpus.height(), corpus.width());
    let ch = corpus.channels();
    let src = rng.random_range(0..corpus.len() as u32);
    let target = (rng.random_range(0..h), rng.random_range(0..w));
    let density: f64 = rng.random_range(0.15..0.9);
    let perturb = rng.random_bool(0.5);
    let half = window as isize / 2;
    loop {
        let mut values = vec![0u8; window * window * ch];
        let mut mask = vec![false; window * window];
        for dy in -half..=half {
            for dx in -half..=half {
                let (y, x) = (target.0 as isize + dy, target.1 as isize + dx);
                if (dy, dx) == (0, 0) || y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                    continue;
                }
                if !rng.random_bool(density) {
                    continue;
                }
                let k = (dy + half) as usize * window + (dx + half) as usize;
                mask[k] = true;
                for (c, &v) in corpus.pixel(src, y as usize, x as usize).iter().enumerate() {
                    values[k * ch + c] = if perturb && rng.random_bool(0.2) {
                        rng.random()
                    } else {
                        v
                    };
                }
            }
        }
        if mask.iter().any(|&m| m) {
            return ContextQuery::new(target, window, ch, values, mask, (h, w));
        }
    }
}

fn random_config(mode: Mode, rng: &mut ChaCha8Rng) -> RetrievalConfig {
    const WINDOWS: [usize; 4] = [3, 5, 7, 11];
    const EPS: [f64; 4] = [0.0, 0.1, 0.5, 3.0];
    let window = WINDOWS[rng.random_range(0..WINDOWS.len())];
    RetrievalConfig {
        window,
        sigma: window as f64 / 6.4,
        eps_ssd: EPS[rng.random_range(0..EPS.len())],
        eps_ssl: EPS[rng.random_range(0..EPS.len())],
        r_loc: rng.random_range(0..=4),
        mode,
        target_class: (mode == Mode::ClassConditional).then(|| rng.random_range(0..SYNTH_CLASSES as u8)),
    }
}

fn compare(
    built: Result<CandidatePool>,
    oracle: Result<CandidatePool>,
) -> std::result::Result<(), String> {
    let (b, o) = match (built, oracle) {
        (Ok(b), Ok(o)) => (b, o),
        (Err(e), Err(f)) if e.kind() == f.kind() => return Ok(()),
        (b, o) => return Err(format!("outcome differs: builder {:?}, oracle {:?}", b.err(), o.err())),
    };
    let (mut bk, ok) = (b.keys(), o.keys());
    bk.sort_unstable();
    if bk != ok {
        let extra = bk.iter().filter(|k| !ok.contains(k)).count();
        let missing = ok.iter().filter(|k| !bk.contains(k)).count();
        return Err(format!("pool differs: {extra} extra, {missing} missing of {}", ok.len()));
    }
    let same = |a: Option<f64>, b: Option<f64>| a.map(f64::to_bits) == b.map(f64::to_bits);
    if !same(b.r_ssd, o.r_ssd) || !same(b.r_ssl, o.r_ssl) {
        return Err(format!(
            "thresholds differ: builder ({:?}, {:?}), oracle ({:?}, {:?})",
            b.r_ssd, b.r_ssl, o.r_ssd, o.r_ssl
        ));
    }
    Ok(())
}

/// Compares `builder` to the oracle on random queries in every mode.
pub fn check_retrieval(builder: &PoolBuilder<'_>, cfg: &SuiteConfig, report: &mut SuiteReport) -> Result<()> {
    let corpus = synthetic_corpus(cfg.seed);
    let table = builtin_embedding(&corpus, 4)?;
    let selection = CorpusSelection::all(&corpus);
    let mut rng = stream(cfg.seed, Stream::Pool);
    for mode in Mode::ALL {
        for q in 0..cfg.queries_per_mode {
            let rcfg = random_config(mode, &mut rng);
            let query = random_query(&corpus, rcfg.window, &mut rng)?;
            let z = make_conditioning(rng.random_range(0..corpus.len() as u32), &table);
            let built = builder(&query, &corpus, &selection, Some(&table), &z, &rcfg);
            let oracle = oracle_pool(&query, &corpus, &selection, Some(&table), &z, &rcfg);
            report.oracle_comparisons += 1;
            if let Err(msg) = compare(built, oracle) {
                report.oracle_failures += 1;
                report.fail(format!("{mode} query {q} target {:?} {rcfg:?}: {msg}", query.target()));
            }
        }
        report.oracle_comparisons_per_mode.push((mode, cfg.queries_per_mode));
    }
    Ok(())
}

fn brute_overlap(canvas: &Canvas, row: usize, col: usize) -> u32 {
    let (h, w) = canvas.dims();
    let half = canvas.window() / 2;
    let mut n = 0;
    for y in row.saturating_sub(half)..=(row + half).min(h - 1) {
        for x in col.saturating_sub(half)..=(col + half).min(w - 1) {
            n += u32::from(canvas.is_filled(y, x));
        }
    }
    n
}

/// Fills canvases in max-overlap order, recounting every position after each step.
pub fn check_overlap(cfg: &SuiteConfig, report: &mut SuiteReport) -> Result<()> {
    let (h, w) = (SYNTH_SIDE, SYNTH_SIDE);
    for run in 0..cfg.overlap_runs {
        let seed = cfg.seed.wrapping_add(run as u64);
        let mut rng = stream(seed, Stream::TieBreak);
        let window = [3, 5, 7, 11][run % 4];
        let mut canvas = Canvas::new(h, w, 1, window);
        let (oy, ox) = seed_origin(h, w);
        for y in oy..oy + SEED_SIZE {
            for x in ox..ox + SEED_SIZE {
                canvas.fill(y, x, &[0]);
            }
        }
        while !canvas.is_full() {
            let (ty, tx) = next_pixel(&canvas, &mut rng)?;
            let mut best = 0;
            for y in 0..h {
                for x in 0..w {
                    let b = brute_overlap(&canvas, y, x);
                    report.overlap_checks += 1;
                    if b != canvas.overlap(y, x) {
                        report.overlap_failures += 1;
                        report.fail(format!(
                            "run {run}: overlap at ({y}, {x}) is {} but recount gives {b}",
                            canvas.overlap(y, x)
                        ));
                    }
                    if !canvas.is_filled(y, x) {
                        best = best.max(b);
                    }
                }
            }
            report.overlap_checks += 1;
            if canvas.is_filled(ty, tx) || brute_overlap(&canvas, ty, tx) != best {
                report.overlap_failures += 1;
                report.fail(format!("run {run}: next_pixel chose ({ty}, {tx}), not a maximal-overlap pixel"));
            }
            canvas.fill(ty, tx, &[0]);
        }
    }
    Ok(())
}

/// Runs both suites.
pub fn run_suite(builder: &PoolBuilder<'_>, cfg: &SuiteConfig) -> Result<SuiteReport> {
    if cfg.queries_per_mode == 0 {
        return Err(Error::Config("validation needs at least one query per mode".into()));
    }
    let mut report = SuiteReport::default();
    check_retrieval(builder, cfg, &mut report)?;
    check_overlap(cfg, &mut report)?;
    Ok(report)
}
