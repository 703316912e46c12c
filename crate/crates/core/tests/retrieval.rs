use patchgen_core::corpus::CorpusSelection;
use patchgen_core::embedding::{builtin_embedding, make_conditioning, EmbeddingTable};
use patchgen_core::retrieval::{appearance_threshold, build_pool, Mode, RetrievalConfig, Retriever};
use patchgen_core::rng::{stream, Stream};
use patchgen_core::validate::{random_query, run_suite, synthetic_corpus, SuiteConfig};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn builder_matches_oracle_on_default_suite() {
    let r = run_suite(&build_pool, &SuiteConfig::default()).unwrap();
    assert!(r.passed(), "{}", r.summary());
    assert!(r.oracle_comparisons >= 100);
    assert!(r.overlap_checks > 0);
}

#[test]
fn widened_locality_is_caught() {
    let mutant = |q: &_, c: &_, s: &_, t: Option<&EmbeddingTable>, z: &_, cfg: &RetrievalConfig| {
        let mut cfg = cfg.clone();
        cfg.r_loc += 1;
        build_pool(q, c, s, t, z, &cfg)
    };
    let r = run_suite(&mutant, &SuiteConfig::default()).unwrap();
    assert!(!r.passed());
    assert!(r.oracle_failures > 0);
    assert_eq!(r.overlap_failures, 0);
}

fn fixture() -> (patchgen_core::corpus::ImageCorpus, EmbeddingTable) {
    let corpus = synthetic_corpus(11);
    let table = builtin_embedding(&corpus, 4).unwrap();
    (corpus, table)
}

fn keys(
    corpus: &patchgen_core::corpus::ImageCorpus,
    table: &EmbeddingTable,
    q: &patchgen_core::retrieval::ContextQuery,
    z_img: u32,
    cfg: &RetrievalConfig,
) -> Vec<(u32, usize, usize)> {
    let sel = CorpusSelection::all(corpus);
    let z = make_conditioning(z_img, table);
    let mut k = build_pool(q, corpus, &sel, Some(table), &z, cfg).unwrap().keys();
    k.sort_unstable();
    k
}

fn mode_strategy() -> impl Strategy<Value = Mode> {
    prop::sample::select(Mode::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn larger_eps_ssd_never_shrinks_pool(
        seed in any::<u64>(),
        mode in mode_strategy(),
        eps in 0.0f64..1.0,
        extra in 0.0f64..2.0,
        r_loc in 0usize..4,
    ) {
        let (corpus, table) = fixture();
        let mut rng = stream(seed, Stream::Pool);
        let q = random_query(&corpus, 5, &mut rng).unwrap();
        let z_img = rng.random_range(0..corpus.len() as u32);
        let mut cfg = RetrievalConfig { window: 5, sigma: 5.0 / 6.4, r_loc, mode, target_class: Some(1), ..RetrievalConfig::default() };
        cfg.eps_ssd = eps;
        let small = keys(&corpus, &table, &q, z_img, &cfg);
        cfg.eps_ssd = eps + extra;
        let large = keys(&corpus, &table, &q, z_img, &cfg);
        prop_assert!(small.iter().all(|k| large.binary_search(k).is_ok()));
    }

    // Without the appearance stage the semantic ball is the last filter, so
    // widening it can only add members.
    #[test]
    fn larger_eps_ssl_never_shrinks_semantic_only_pool(
        seed in any::<u64>(),
        eps in 0.0f64..1.0,
        extra in 0.0f64..4.0,
    ) {
        let (corpus, table) = fixture();
        let mut rng = stream(seed, Stream::Pool);
        let q = random_query(&corpus, 5, &mut rng).unwrap();
        let z_img = rng.random_range(0..corpus.len() as u32);
        let mut cfg = RetrievalConfig { window: 5, sigma: 5.0 / 6.4, mode: Mode::NsSsl, ..RetrievalConfig::default() };
        cfg.eps_ssl = eps;
        let small = keys(&corpus, &table, &q, z_img, &cfg);
        cfg.eps_ssl = eps + extra;
        let large = keys(&corpus, &table, &q, z_img, &cfg);
        prop_assert!(small.iter().all(|k| large.binary_search(k).is_ok()));
    }

    #[test]
    fn pool_respects_locality_and_contains_minimum(
        seed in any::<u64>(),
        mode in mode_strategy(),
        r_loc in 0usize..5,
        window in prop::sample::select(vec![3usize, 5, 7]),
    ) {
        let (corpus, table) = fixture();
        let mut rng = stream(seed, Stream::Pool);
        let q = random_query(&corpus, window, &mut rng).unwrap();
        let z = make_conditioning(rng.random_range(0..corpus.len() as u32), &table);
        let cfg = RetrievalConfig { window, sigma: window as f64 / 6.4, r_loc, mode, target_class: Some(0), ..RetrievalConfig::default() };
        let pool = build_pool(&q, &corpus, &CorpusSelection::all(&corpus), Some(&table), &z, &cfg).unwrap();
        prop_assert!(!pool.is_empty());
        let (ty, tx) = q.target();
        for c in &pool.candidates {
            if mode.uses_locality() {
                prop_assert!(c.center.0.abs_diff(ty).max(c.center.1.abs_diff(tx)) <= r_loc);
            }
            if mode.uses_label() {
                prop_assert_eq!(c.image.label, 0);
            }
            prop_assert_eq!(c.center_value.as_slice(), corpus.pixel(c.image.index, c.center.0, c.center.1));
        }
        if mode.uses_appearance() {
            let ssd: Vec<f64> = pool.candidates.iter().map(|c| c.ssd.unwrap()).collect();
            let min = ssd.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(pool.r_ssd, Some(appearance_threshold(min, cfg.eps_ssd)));
            prop_assert!(ssd.iter().all(|&s| s <= pool.r_ssd.unwrap()));
        } else {
            prop_assert!(pool.candidates.iter().all(|c| c.ssd.is_none()));
            let min = pool.candidates.iter().map(|c| c.emb_dist).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(pool.r_ssl, Some((1.0 + cfg.eps_ssl) * min));
        }
    }
}

#[test]
fn pools_do_not_depend_on_worker_count() {
    let (corpus, table) = fixture();
    let sel = CorpusSelection::all(&corpus);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let eight = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    let mut rng = stream(99, Stream::Pool);
    for i in 0..50 {
        let mode = Mode::ALL[i % Mode::ALL.len()];
        let cfg = RetrievalConfig {
            window: 7,
            sigma: 7.0 / 6.4,
            mode,
            target_class: Some(1),
            ..RetrievalConfig::default()
        };
        let q = random_query(&corpus, 7, &mut rng).unwrap();
        let z = make_conditioning(rng.random_range(0..corpus.len() as u32), &table);
        let retriever = Retriever::new(&corpus, &sel, Some(&table), &z, &cfg).unwrap();
        let a = single.install(|| retriever.pool(&q)).unwrap();
        let b = eight.install(|| retriever.pool(&q)).unwrap();
        assert_eq!(a, b, "query {i} in {mode}");
    }
}
