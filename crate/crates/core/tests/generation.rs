use patchgen_core::corpus::{CorpusSelection, ImageCorpus};
use patchgen_core::embedding::{builtin_embedding, EmbeddingTable};
use patchgen_core::metrics::sliding_entropy;
use patchgen_core::retrieval::{Mode, RetrievalConfig};
use patchgen_core::synth::{generate, Conditioning, Generation, GenerationConfig, SEED_SIZE};
use patchgen_core::trace::build_maps;
use patchgen_core::validate::synthetic_corpus;
use patchgen_core::ErrorKind;

fn run(corpus: &ImageCorpus, table: &EmbeddingTable, mode: Mode, seed: u64) -> Generation {
    let rcfg = RetrievalConfig {
        window: 5,
        sigma: 5.0 / 6.4,
        r_loc: 2,
        ..RetrievalConfig::with_mode(mode)
    };
    let sel = CorpusSelection::all(corpus);
    generate(corpus, &sel, Some(table), &GenerationConfig::new(rcfg, seed)).unwrap()
}

fn fixture() -> (ImageCorpus, EmbeddingTable) {
    let corpus = synthetic_corpus(4);
    let table = builtin_embedding(&corpus, 4).unwrap();
    (corpus, table)
}

#[test]
fn every_pixel_comes_from_its_recorded_source() {
    let (corpus, table) = fixture();
    for mode in Mode::ALL {
        for seed in 0..3 {
            let g = run(&corpus, &table, mode, seed);
            let (h, w) = g.canvas.dims();
            assert_eq!(g.trace.records.len(), h * w);
            for r in &g.trace.records {
                let (ty, tx) = r.target;
                let (sy, sx) = r.source_center;
                assert_eq!(g.canvas.pixel(ty, tx), corpus.pixel(r.source_image, sy, sx));
                assert_eq!(r.class_label, corpus.label(r.source_image));
                if r.step > 0 && mode.uses_locality() {
                    assert!(ty.abs_diff(sy).max(tx.abs_diff(sx)) <= g.retrieval.r_loc, "{mode} {r:?}");
                }
            }
        }
    }
}

#[test]
fn sampling_steps_are_sequential_and_cover_the_canvas() {
    let (corpus, table) = fixture();
    let g = run(&corpus, &table, Mode::NsSsdSsl, 8);
    let (h, w) = g.canvas.dims();
    let seeded = g.trace.records.iter().filter(|r| r.step == 0).count();
    assert_eq!(seeded, SEED_SIZE * SEED_SIZE);
    let steps: Vec<u32> = g.trace.records.iter().filter(|r| r.step > 0).map(|r| r.step).collect();
    assert_eq!(steps, (1..=(h * w - SEED_SIZE * SEED_SIZE) as u32).collect::<Vec<_>>());
    assert!(g.canvas.is_full());
    assert!(build_maps(&g.trace).is_ok());
}

#[test]
fn identical_configs_reproduce_exactly() {
    let (corpus, table) = fixture();
    for mode in Mode::ALL {
        let a = run(&corpus, &table, mode, 17);
        let b = run(&corpus, &table, mode, 17);
        assert_eq!(a.pixels(), b.pixels());
        assert_eq!(a.trace.to_csv(), b.trace.to_csv());
    }
    let a = run(&corpus, &table, Mode::NsSsdSsl, 1);
    let b = run(&corpus, &table, Mode::NsSsdSsl, 2);
    assert_ne!(a.trace.to_csv(), b.trace.to_csv());
}

#[test]
fn class_conditional_maps_are_constant() {
    let (corpus, table) = fixture();
    for seed in 0..4 {
        let g = run(&corpus, &table, Mode::ClassConditional, seed);
        let class = g.seed.source.label;
        assert_eq!(g.retrieval.target_class, Some(class));
        let maps = build_maps(&g.trace).unwrap();
        assert!(maps.class_map.iter().all(|&c| c == class));
        let (h, w) = g.canvas.dims();
        assert_eq!(sliding_entropy(&maps.class_map, h, w, 7, 1).unwrap().mean_entropy, 0.0);
    }
}

#[test]
fn explicit_target_class_drives_seed_and_pool() {
    let (corpus, table) = fixture();
    let rcfg = RetrievalConfig {
        window: 5,
        sigma: 5.0 / 6.4,
        target_class: Some(1),
        ..RetrievalConfig::with_mode(Mode::ClassConditional)
    };
    let g = generate(&corpus, &CorpusSelection::all(&corpus), Some(&table), &GenerationConfig::new(rcfg, 3)).unwrap();
    assert!(g.trace.records.iter().all(|r| r.class_label == 1));
}

#[test]
fn seed_source_is_held_out_of_retrieval() {
    let (corpus, table) = fixture();
    for mode in Mode::ALL {
        let g = run(&corpus, &table, mode, 5);
        let src = g.seed.source.index;
        assert!(g.trace.records.iter().filter(|r| r.step > 0).all(|r| r.source_image != src), "{mode}");
    }
}

#[test]
fn single_image_corpus_falls_back_to_the_seed_source() {
    let (corpus, table) = fixture();
    let sel = CorpusSelection::from_indices(&corpus, vec![9]).unwrap();
    let rcfg = RetrievalConfig {
        window: 5,
        sigma: 5.0 / 6.4,
        ..RetrievalConfig::with_mode(Mode::NsSsd)
    };
    let g = generate(&corpus, &sel, Some(&table), &GenerationConfig::new(rcfg, 0)).unwrap();
    assert!(g.trace.records.iter().all(|r| r.source_image == 9));
}

#[test]
fn user_supplied_conditioning_is_used() {
    let (corpus, table) = fixture();
    let mut cfg = GenerationConfig::new(
        RetrievalConfig {
            window: 5,
            sigma: 5.0 / 6.4,
            eps_ssl: 0.0,
            ..RetrievalConfig::default()
        },
        2,
    );
    cfg.conditioning = Conditioning::UserSupplied(table.row(6).to_vec());
    let g = generate(&corpus, &CorpusSelection::all(&corpus), Some(&table), &cfg).unwrap();
    assert_eq!(g.conditioning.z, table.row(6));
    // with a zero-width ball only images at distance zero from row 6 remain
    assert!(g.trace.records.iter().filter(|r| r.step > 0).all(|r| table.row(r.source_image) == table.row(6)));

    cfg.conditioning = Conditioning::UserSupplied(vec![0.0; table.dim() + 1]);
    let err = generate(&corpus, &CorpusSelection::all(&corpus), Some(&table), &cfg).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
}

#[test]
fn embedding_mode_without_table_is_a_config_error() {
    let (corpus, _) = fixture();
    let rcfg = RetrievalConfig {
        window: 5,
        sigma: 5.0 / 6.4,
        ..RetrievalConfig::default()
    };
    let err = generate(&corpus, &CorpusSelection::all(&corpus), None, &GenerationConfig::new(rcfg, 0)).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
}
