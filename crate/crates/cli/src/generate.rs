use std::fs;
use std::path::{Path, PathBuf};

use patchgen_core::corpus::{select, CorpusSelection, ImageCorpus};
use patchgen_core::embedding::{builtin_embedding, load_embeddings, EmbeddingTable};
use patchgen_core::synth::{generate, Conditioning, Generation, GenerationConfig};
use patchgen_core::trace::{build_maps, render_maps, save_generated, write_trace};
use patchgen_core::{Error, Result};
use rayon::prelude::*;

use crate::args::GenerateArgs;
use crate::dataset::load_dataset;
use crate::manifest::{RunManifest, RunSettings, TOOL_NAME, TOOL_VERSION};
use crate::report::SampleMetrics;

pub const TOP_K: usize = 5;

/// Corpus, retrieval subset and embeddings loaded once per batch.
pub struct Prepared {
    pub corpus: ImageCorpus,
    pub selection: CorpusSelection,
    pub table: Option<EmbeddingTable>,
    pub corpus_checksum: String,
    pub embedding_checksum: Option<String>,
}

impl Prepared {
    pub fn load(settings: &RunSettings) -> Result<Self> {
        let mode = settings.mode()?;
        let corpus = load_dataset(settings.dataset, settings.split, &settings.data_dir)?;
        let selection = match settings.corpus_size {
            Some(n) => select(&corpus, None, Some(n), settings.corpus_seed)?,
            None => CorpusSelection::all(&corpus),
        };
        let table = if mode.uses_embedding() {
            Some(match &settings.embeddings {
                Some(path) => load_embeddings(path, &corpus)?,
                None => builtin_embedding(&corpus, settings.builtin_embedding_grid)?,
            })
        } else {
            None
        };
        Ok(Self {
            corpus_checksum: corpus.checksum(),
            embedding_checksum: table.as_ref().map(EmbeddingTable::checksum),
            corpus,
            selection,
            table,
        })
    }
}

pub fn sample_dir(out_dir: &Path, index: usize) -> PathBuf {
    out_dir.join(format!("sample_{index:04}"))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn generate_sample(settings: &RunSettings, prepared: &Prepared, master_seed: u64, index: usize) -> Result<(Generation, RunManifest)> {
    let rng_seed = master_seed.wrapping_add(index as u64);
    let cfg = GenerationConfig {
        retrieval: settings.retrieval()?,
        rng_seed,
        conditioning: Conditioning::SeedImage,
        hold_out_seed_source: settings.hold_out_seed_source,
    };
    let g = generate(&prepared.corpus, &prepared.selection, prepared.table.as_ref(), &cfg)?;
    let manifest = RunManifest {
        tool: TOOL_NAME.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        settings: settings.clone(),
        master_seed,
        sample_index: index,
        rng_seed,
        corpus_images: prepared.selection.len(),
        corpus_checksum: prepared.corpus_checksum.clone(),
        embedding_checksum: prepared.embedding_checksum.clone(),
        seed_image: g.seed.source.index,
        target_class: g.retrieval.target_class,
    };
    Ok((g, manifest))
}

/// Writes image, trace, maps, metrics and manifest of one sample into `dir`.
pub fn write_sample(g: &Generation, manifest: &RunManifest, channels: usize, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let (h, w) = g.canvas.dims();
    save_generated(g.pixels(), h, w, channels, &dir.join("image.png"))?;
    write_trace(&g.trace, &dir.join("trace.csv"))?;
    let maps = build_maps(&g.trace)?;
    render_maps(&maps, Some((g.pixels(), channels)), dir, manifest.settings.scale)?;
    let metrics = SampleMetrics::from_trace(&g.trace, g.retrieval.mode, TOP_K)?;
    let kv_path = dir.join("metrics.kv");
    fs::write(&kv_path, metrics.to_kv()).map_err(io(&kv_path))?;
    manifest.write(&dir.join("manifest.json"))
}

/// Runs `generate`; returns the sample directories in index order.
pub fn run_generate(args: &GenerateArgs) -> Result<Vec<PathBuf>> {
    let (settings, master_seed, indices, expected) = match &args.manifest {
        Some(path) => {
            let m = RunManifest::read(path)?;
            let mut settings = m.settings.clone();
            if let Some(dir) = &args.data_dir {
                settings.data_dir = dir.clone();
            }
            (settings, m.master_seed, vec![m.sample_index], Some(m))
        }
        None => {
            if args.count == 0 {
                return Err(Error::Config("--count must be at least 1".into()));
            }
            (RunSettings::from_args(args)?, args.seed, (0..args.count).collect(), None)
        }
    };
    settings.retrieval()?;
    let prepared = Prepared::load(&settings)?;
    if let Some(m) = &expected {
        if m.corpus_checksum != prepared.corpus_checksum {
            return Err(Error::Malformed("corpus checksum differs from the manifest".into()));
        }
        if m.embedding_checksum != prepared.embedding_checksum {
            return Err(Error::Malformed("embedding checksum differs from the manifest".into()));
        }
    }
    fs::create_dir_all(&args.out_dir).map_err(io(&args.out_dir))?;
    let channels = prepared.corpus.channels();
    indices
        .par_iter()
        .map(|&i| {
            let (g, manifest) = generate_sample(&settings, &prepared, master_seed, i)?;
            let dir = sample_dir(&args.out_dir, i);
            write_sample(&g, &manifest, channels, &dir)?;
            Ok(dir)
        })
        .collect()
}
