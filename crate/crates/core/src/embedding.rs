//! Per-image embedding vectors and the conditioning vector used by the
//! semantic retrieval stage.
//!
//! Tables come either from a frozen external encoder (PEM1 files) or from the
//! built-in grid mean-pool summary.
//!
//! PEM1 layout, little-endian: `b"PEM1" | u32 count | u32 dim | count*dim f32`,
//! row `i` belonging to corpus image `i`.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::ImageCorpus;
use crate::error::{Error, Result};

pub const PEM1_MAGIC: &[u8; 4] = b"PEM1";
pub const DEFAULT_GRID: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vectors: Vec<f32>,
    dim: usize,
    count: usize,
}

impl EmbeddingTable {
    pub fn new(vectors: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Malformed("embedding dimension must be ≥ 1".into()));
        }
        if !vectors.len().is_multiple_of(dim) {
            return Err(Error::Malformed(format!(
                "{} values do not form rows of length {dim}",
                vectors.len()
            )));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::Malformed(format!(
                "non-finite embedding value in row {}",
                pos / dim
            )));
        }
        let count = vectors.len() / dim;
        Ok(Self {
            vectors,
            dim,
            count,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn row(&self, index: u32) -> &[f32] {
        let start = index as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    pub fn to_pem1(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.vectors.len() * 4);
        out.extend_from_slice(PEM1_MAGIC);
        out.extend_from_slice(&(self.count as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_pem1(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Truncated {
                what: "PEM1 header",
                expected: 12,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != PEM1_MAGIC {
            return Err(Error::BadMagic {
                what: "PEM1 file",
                expected: u32::from_be_bytes(*PEM1_MAGIC),
                found: u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
            });
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = 12 + count * dim * 4;
        if bytes.len() != expected {
            return Err(Error::Truncated {
                what: "PEM1 body",
                expected,
                found: bytes.len(),
            });
        }
        let vectors = bytes[12..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(vectors, dim)
    }

    pub fn write_pem1(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pem1()).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the PEM1 encoding, hex encoded.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_pem1()))
    }
}

/// Reads a PEM1 file and checks it row-aligns with `corpus`.
pub fn load_embeddings(path: &Path, corpus: &ImageCorpus) -> Result<EmbeddingTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let table = EmbeddingTable::from_pem1(&bytes)?;
    if table.count() != corpus.len() {
        return Err(Error::CountMismatch {
            what: "embedding rows vs corpus images",
            left: table.count(),
            right: corpus.len(),
        });
    }
    Ok(table)
}

/// Mean pixel value per cell of a `grid × grid` partition, per channel, in [0, 1].
///
/// Cell `k` along an axis of length `n` covers `[k*n/grid, (k+1)*n/grid)`.
/// Layout is cell-row-major with channels innermost.
pub fn builtin_embedding(corpus: &ImageCorpus, grid: usize) -> Result<EmbeddingTable> {
    let (h, w, ch) = (corpus.height(), corpus.width(), corpus.channels());
    if grid < 2 || grid > h.min(w) {
        return Err(Error::Config(format!(
            "embedding grid {grid} must be in [2, {}]",
            h.min(w)
        )));
    }
    let dim = grid * grid * ch;
    let mut vectors = Vec::with_capacity(corpus.len() * dim);
    let mut sums = vec![0u64; dim];
    for i in 0..corpus.len() as u32 {
        let img = corpus.image(i);
        sums.iter_mut().for_each(|s| *s = 0);
        for gy in 0..grid {
            let (r0, r1) = (gy * h / grid, (gy + 1) * h / grid);
            for gx in 0..grid {
                let (c0, c1) = (gx * w / grid, (gx + 1) * w / grid);
                let base = (gy * grid + gx) * ch;
                for r in r0..r1 {
                    for c in c0..c1 {
                        let px = &img[(r * w + c) * ch..(r * w + c + 1) * ch];
                        for (k, &v) in px.iter().enumerate() {
                            sums[base + k] += v as u64;
                        }
                    }
                }
            }
        }
        for gy in 0..grid {
            let rows = (gy + 1) * h / grid - gy * h / grid;
            for gx in 0..grid {
                let cols = (gx + 1) * w / grid - gx * w / grid;
                let n = (rows * cols) as f64 * 255.0;
                let base = (gy * grid + gx) * ch;
                for k in 0..ch {
                    vectors.push((sums[base + k] as f64 / n) as f32);
                }
            }
        }
    }
    EmbeddingTable::new(vectors, dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    SeedImage,
    UserSupplied,
    None,
}

/// The fixed query-side vector `z` for one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningVector {
    pub z: Vec<f32>,
    pub origin: Origin,
}

impl ConditioningVector {
    pub fn none() -> Self {
        Self {
            z: Vec::new(),
            origin: Origin::None,
        }
    }

    pub fn user_supplied(z: Vec<f32>) -> Result<Self> {
        if z.is_empty() || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "conditioning vector must be non-empty and finite".into(),
            ));
        }
        Ok(Self {
            z,
            origin: Origin::UserSupplied,
        })
    }

    pub fn is_active(&self) -> bool {
        self.origin != Origin::None
    }
}

pub fn make_conditioning(seed_image: u32, table: &EmbeddingTable) -> ConditioningVector {
    ConditioningVector {
        z: table.row(seed_image).to_vec(),
        origin: Origin::SeedImage,
    }
}

/// Euclidean distance between `z` and the table row of `image`.
///
/// Inactive conditioning (origin `None`) yields 0 for every image.
pub fn embedding_distance(z: &ConditioningVector, table: &EmbeddingTable, image: u32) -> Result<f64> {
    if !z.is_active() {
        return Ok(0.0);
    }
    if z.z.len() != table.dim() {
        return Err(Error::DimMismatch {
            expected: table.dim(),
            found: z.z.len(),
        });
    }
    Ok(l2(&z.z, table.row(image)))
}

pub(crate) fn l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}
