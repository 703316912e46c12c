//! Generates a few samples per mode on an MNIST directory and prints mean
//! class/image-ID entropies and timings.
//!
//! cargo run --release -p patchgen-core --example mode_sweep -- DATA_DIR [SAMPLES] [CORPUS_SIZE] [MODES] [EPS_SSL]

use std::path::PathBuf;
use std::time::Instant;

use patchgen_core::corpus::{load_mnist, select};
use patchgen_core::embedding::builtin_embedding;
use patchgen_core::metrics::{sliding_entropy, source_usage};
use patchgen_core::retrieval::{Mode, RetrievalConfig};
use patchgen_core::synth::{generate, GenerationConfig};
use patchgen_core::trace::build_maps;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let dir = PathBuf::from(args.get(1).map(String::as_str).unwrap_or("data/mnist-5k"));
    let samples: u64 = args.get(2).map_or(Ok(5), |s| s.parse())?;
    let size: usize = args.get(3).map_or(Ok(5000), |s| s.parse())?;
    let modes: Vec<Mode> = match args.get(4) {
        Some(s) => s.split(',').map(|m| m.parse()).collect::<Result<_, _>>()?,
        None => vec![Mode::NsSsdSsl, Mode::NsSsd, Mode::ClassConditional],
    };
    let eps_ssl: Option<f64> = args.get(5).map(|s| s.parse()).transpose()?;

    let corpus = load_mnist(
        &dir.join("train-images-idx3-ubyte.gz"),
        &dir.join("train-labels-idx1-ubyte.gz"),
    )?;
    let selection = select(&corpus, None, Some(size), 0)?;
    let table = builtin_embedding(&corpus, 4)?;

    for mode in modes {
        let mut rcfg = RetrievalConfig::with_mode(mode);
        if let Some(e) = eps_ssl {
            rcfg.eps_ssl = e;
        }
        let (mut ce, mut ie, mut dom) = (0.0, 0.0, 0.0);
        let t = Instant::now();
        for s in 0..samples {
            let g = generate(&corpus, &selection, Some(&table), &GenerationConfig::new(rcfg.clone(), s))?;
            let maps = build_maps(&g.trace)?;
            ce += sliding_entropy(&maps.class_map, 28, 28, 7, 1)?.mean_entropy;
            ie += sliding_entropy(&maps.id_map, 28, 28, 7, 1)?.mean_entropy;
            dom += source_usage(&g.trace, 5).dominance;
        }
        let n = samples as f64;
        println!(
            "{mode:>18}: class {:.4}  id {:.4}  dominance {:.3}  {:.2}s/sample",
            ce / n,
            ie / n,
            dom / n,
            t.elapsed().as_secs_f64() / n
        );
    }
    Ok(())
}
