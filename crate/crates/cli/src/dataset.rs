//! Locating dataset files on disk.
//!
//! ```text
//! mnist    {train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]
//! cifar10  data_batch_{1..5}.bin[.gz] or test_batch.bin[.gz],
//!          directly in the directory or under cifar-10-batches-bin/
//! ```

use std::path::{Path, PathBuf};

use patchgen_core::corpus::{load_cifar10, load_mnist, ImageCorpus};
use patchgen_core::{Error, Result};

use crate::args::{Dataset, Split};

fn find(dir: &Path, subdirs: &[&str], name: &str) -> Result<PathBuf> {
    let mut tried = Vec::new();
    let bases = std::iter::once(dir.to_path_buf()).chain(subdirs.iter().map(|s| dir.join(s)));
    for base in bases {
        for candidate in [base.join(name), base.join(format!("{name}.gz"))] {
            if candidate.is_file() {
                return Ok(candidate);
            }
            tried.push(candidate.display().to_string());
        }
    }
    Err(Error::Io {
        path: dir.join(name),
        source: std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("dataset file not found; tried {}", tried.join(", ")),
        ),
    })
}

pub fn dataset_files(dataset: Dataset, split: Split, dir: &Path) -> Result<Vec<PathBuf>> {
    let names: Vec<String> = match (dataset, split) {
        (Dataset::Mnist, Split::Train) => vec!["train-images-idx3-ubyte".into(), "train-labels-idx1-ubyte".into()],
        (Dataset::Mnist, Split::Test) => vec!["t10k-images-idx3-ubyte".into(), "t10k-labels-idx1-ubyte".into()],
        (Dataset::Cifar10, Split::Train) => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        (Dataset::Cifar10, Split::Test) => vec!["test_batch.bin".into()],
    };
    let subdirs: &[&str] = match dataset {
        Dataset::Mnist => &[],
        Dataset::Cifar10 => &["cifar-10-batches-bin"],
    };
    names.iter().map(|n| find(dir, subdirs, n)).collect()
}

pub fn load_dataset(dataset: Dataset, split: Split, dir: &Path) -> Result<ImageCorpus> {
    let files = dataset_files(dataset, split, dir)?;
    match dataset {
        Dataset::Mnist => load_mnist(&files[0], &files[1]),
        Dataset::Cifar10 => load_cifar10(&files),
    }
}
