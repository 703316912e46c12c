//! Per-sample `manifest.json`: everything needed to regenerate the sample.

use std::fs;
use std::path::{Path, PathBuf};

use patchgen_core::retrieval::{default_sigma, Mode, RetrievalConfig};
use patchgen_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::args::{Dataset, GenerateArgs, Split};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Settings shared by every sample of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub dataset: Dataset,
    pub data_dir: PathBuf,
    pub split: Split,
    pub embeddings: Option<PathBuf>,
    pub builtin_embedding_grid: usize,
    pub mode: String,
    pub class: Option<u8>,
    pub window: usize,
    pub sigma: f64,
    pub eps_ssd: f64,
    pub eps_ssl: f64,
    pub r_loc: usize,
    pub corpus_size: Option<usize>,
    pub corpus_seed: u64,
    pub hold_out_seed_source: bool,
    pub scale: usize,
}

impl RunSettings {
    pub fn from_args(args: &GenerateArgs) -> Result<Self> {
        let data_dir = args
            .data_dir
            .clone()
            .ok_or_else(|| Error::Config("--data-dir is required".into()))?;
        if args.scale == 0 {
            return Err(Error::Config("--scale must be at least 1".into()));
        }
        Ok(Self {
            dataset: args.dataset,
            data_dir,
            split: args.split,
            embeddings: args.embeddings.clone(),
            builtin_embedding_grid: args.builtin_embedding_grid,
            mode: args.mode.as_str().to_string(),
            class: args.class,
            window: args.window,
            sigma: args.sigma.unwrap_or_else(|| default_sigma(args.window)),
            eps_ssd: args.eps_ssd,
            eps_ssl: args.eps_ssl,
            r_loc: args.r_loc,
            corpus_size: args.corpus_size,
            corpus_seed: args.corpus_seed,
            hold_out_seed_source: !args.no_hold_out,
            scale: args.scale,
        })
    }

    pub fn mode(&self) -> Result<Mode> {
        self.mode.parse()
    }

    pub fn retrieval(&self) -> Result<RetrievalConfig> {
        let mode = self.mode()?;
        if self.class.is_some() && !mode.uses_label() {
            return Err(Error::Config(format!("--class only applies to class_conditional, not {mode}")));
        }
        let cfg = RetrievalConfig {
            window: self.window,
            sigma: self.sigma,
            eps_ssd: self.eps_ssd,
            eps_ssl: self.eps_ssl,
            r_loc: self.r_loc,
            mode,
            target_class: self.class,
        };
        // without --class the target class comes from the seed image
        let mut probe = cfg.clone();
        if mode.uses_label() {
            probe.target_class.get_or_insert(0);
        }
        probe.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub settings: RunSettings,
    pub master_seed: u64,
    pub sample_index: usize,
    pub rng_seed: u64,
    pub corpus_images: usize,
    pub corpus_checksum: String,
    pub embedding_checksum: Option<String>,
    pub seed_image: u32,
    pub target_class: Option<u8>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
    }
}
