//! Image datasets held fully in memory.
//!
//! Pixels stay as `u8` and are stored channel-interleaved (`N × H × W × Ch`),
//! so a window of one image is a run of contiguous rows. Two on-disk formats
//! are understood:
//!
//! ```text
//! MNIST IDX (big-endian)   images: 0x00000803 count rows cols | count*rows*cols bytes
//!                          labels: 0x00000801 count           | count bytes
//! CIFAR-10 binary          records of 3073 bytes: label | 1024 R | 1024 G | 1024 B
//! ```
//!
//! Files ending in `.gz` are transparently (de)compressed.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

pub const MNIST_SIDE: usize = 28;
pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CHANNELS: usize = 3;
pub const CIFAR_PLANE: usize = CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_RECORD: usize = 1 + CIFAR_PLANE * CIFAR_CHANNELS;
pub const NUM_CLASSES: usize = 10;

/// Identity of one image in a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ImageRef {
    pub index: u32,
    pub label: u8,
}

/// Immutable collection of equally sized, labeled 8-bit images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageCorpus {
    pixels: Vec<u8>,
    labels: Vec<u8>,
    height: usize,
    width: usize,
    channels: usize,
    class_count: usize,
}

impl ImageCorpus {
    pub fn new(
        pixels: Vec<u8>,
        labels: Vec<u8>,
        height: usize,
        width: usize,
        channels: usize,
        class_count: usize,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Malformed(format!(
                "degenerate image dimensions {height}x{width}x{channels}"
            )));
        }
        if labels.is_empty() {
            return Err(Error::Malformed("corpus has no images".into()));
        }
        let per_image = height * width * channels;
        if pixels.len() != labels.len() * per_image {
            return Err(Error::CountMismatch {
                what: "pixel bytes vs labels × image size",
                left: pixels.len(),
                right: labels.len() * per_image,
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= class_count) {
            return Err(Error::Malformed(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        Ok(Self {
            pixels,
            labels,
            height,
            width,
            channels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, index: u32) -> u8 {
        self.labels[index as usize]
    }

    pub fn image_ref(&self, index: u32) -> ImageRef {
        ImageRef {
            index,
            label: self.label(index),
        }
    }

    /// Bytes of one image, `H × W × Ch`.
    pub fn image(&self, index: u32) -> &[u8] {
        let n = self.height * self.width * self.channels;
        let start = index as usize * n;
        &self.pixels[start..start + n]
    }

    /// Channel values of one pixel.
    pub fn pixel(&self, index: u32, row: usize, col: usize) -> &[u8] {
        let img = self.image(index);
        let at = (row * self.width + col) * self.channels;
        &img[at..at + self.channels]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// SHA-256 over dimensions, labels and pixels, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for d in [self.height, self.width, self.channels, self.class_count, self.len()] {
            h.update((d as u64).to_le_bytes());
        }
        h.update(&self.labels);
        h.update(&self.pixels);
        hex::encode(h.finalize())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        let gz = enc.finish().map_err(|e| Error::io(path, e))?;
        fs::write(path, gz).map_err(|e| Error::io(path, e))
    } else {
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &'static str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated {
            what,
            expected: at + 4,
            found: bytes.len(),
        })
}

/// Parsed IDX image file: `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, "IDX image header")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            what: "IDX image file",
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4, "IDX image header")? as usize;
    let rows = be_u32(bytes, 8, "IDX image header")? as usize;
    let cols = be_u32(bytes, 12, "IDX image header")? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            what: "IDX image data",
            expected,
            found: bytes.len(),
        });
    }
    Ok((count, rows, cols, bytes[16..expected].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "IDX label header")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            what: "IDX label file",
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4, "IDX label header")? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            what: "IDX label data",
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..expected].to_vec())
}

pub fn mnist_from_bytes(images: &[u8], labels: &[u8]) -> Result<ImageCorpus> {
    let (count, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != count {
        return Err(Error::CountMismatch {
            what: "MNIST images vs labels",
            left: count,
            right: labels.len(),
        });
    }
    if rows != MNIST_SIDE || cols != MNIST_SIDE {
        return Err(Error::Malformed(format!(
            "MNIST images must be 28x28, found {rows}x{cols}"
        )));
    }
    ImageCorpus::new(pixels, labels, rows, cols, 1, NUM_CLASSES)
}

pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<ImageCorpus> {
    mnist_from_bytes(&read_file(images_path)?, &read_file(labels_path)?)
}

pub fn mnist_to_bytes(corpus: &ImageCorpus) -> Result<(Vec<u8>, Vec<u8>)> {
    if corpus.channels != 1 {
        return Err(Error::Config("IDX export needs a single-channel corpus".into()));
    }
    let mut images = Vec::with_capacity(16 + corpus.pixels.len());
    for v in [
        IDX_IMAGES_MAGIC,
        corpus.len() as u32,
        corpus.height as u32,
        corpus.width as u32,
    ] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend_from_slice(&corpus.pixels);
    let mut labels = Vec::with_capacity(8 + corpus.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(corpus.len() as u32).to_be_bytes());
    labels.extend_from_slice(&corpus.labels);
    Ok((images, labels))
}

pub fn write_mnist(corpus: &ImageCorpus, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (images, labels) = mnist_to_bytes(corpus)?;
    write_file(images_path, &images)?;
    write_file(labels_path, &labels)
}

/// Decodes CIFAR-10 records, interleaving the R, G, B planes into `H × W × 3`.
pub fn cifar10_from_bytes(bytes: &[u8], pixels: &mut Vec<u8>, labels: &mut Vec<u8>) -> Result<()> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Malformed(format!(
            "CIFAR-10 batch length {} is not a multiple of {CIFAR_RECORD}",
            bytes.len()
        )));
    }
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        let label = rec[0];
        if label as usize >= NUM_CLASSES {
            return Err(Error::Malformed(format!("CIFAR-10 label byte {label} ≥ 10")));
        }
        labels.push(label);
        let planes = &rec[1..];
        for i in 0..CIFAR_PLANE {
            for c in 0..CIFAR_CHANNELS {
                pixels.push(planes[c * CIFAR_PLANE + i]);
            }
        }
    }
    Ok(())
}

pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<ImageCorpus> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for p in batch_paths {
        cifar10_from_bytes(&read_file(p.as_ref())?, &mut pixels, &mut labels)?;
    }
    if labels.is_empty() {
        return Err(Error::Malformed("no CIFAR-10 batches given".into()));
    }
    ImageCorpus::new(pixels, labels, CIFAR_SIDE, CIFAR_SIDE, CIFAR_CHANNELS, NUM_CLASSES)
}

pub fn cifar10_to_bytes(corpus: &ImageCorpus) -> Result<Vec<u8>> {
    if corpus.channels != CIFAR_CHANNELS
        || corpus.height != CIFAR_SIDE
        || corpus.width != CIFAR_SIDE
    {
        return Err(Error::Config("CIFAR-10 export needs a 32x32x3 corpus".into()));
    }
    let mut out = Vec::with_capacity(corpus.len() * CIFAR_RECORD);
    for i in 0..corpus.len() as u32 {
        out.push(corpus.label(i));
        let img = corpus.image(i);
        for c in 0..CIFAR_CHANNELS {
            out.extend(img.iter().skip(c).step_by(CIFAR_CHANNELS));
        }
    }
    Ok(out)
}

pub fn write_cifar10(corpus: &ImageCorpus, path: &Path) -> Result<()> {
    write_file(path, &cifar10_to_bytes(corpus)?)
}

/// Ordered subset of a corpus that retrieval may draw from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSelection {
    indices: Vec<u32>,
}

impl CorpusSelection {
    /// Every image of the corpus.
    pub fn all(corpus: &ImageCorpus) -> Self {
        Self {
            indices: (0..corpus.len() as u32).collect(),
        }
    }

    /// Explicit index list; must be strictly increasing and in range.
    pub fn from_indices(corpus: &ImageCorpus, indices: Vec<u32>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptySelection("no indices given".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("selection indices must be strictly increasing".into()));
        }
        if *indices.last().unwrap() as usize >= corpus.len() {
            return Err(Error::Config("selection index out of range".into()));
        }
        Ok(Self { indices })
    }

    /// The same selection minus one image.
    pub fn without(&self, index: u32) -> Result<Self> {
        let indices: Vec<u32> = self.indices.iter().copied().filter(|&i| i != index).collect();
        if indices.is_empty() {
            return Err(Error::EmptySelection(format!("removing image {index} leaves nothing")));
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Filters by class, then keeps a seeded uniform subsample of at most `max_images`.
pub fn select(
    corpus: &ImageCorpus,
    class_filter: Option<u8>,
    max_images: Option<usize>,
    rng_seed: u64,
) -> Result<CorpusSelection> {
    if let Some(c) = class_filter {
        if c as usize >= corpus.class_count() {
            return Err(Error::Config(format!(
                "class {c} outside [0, {})",
                corpus.class_count()
            )));
        }
    }
    let pool: Vec<u32> = (0..corpus.len() as u32)
        .filter(|&i| class_filter.is_none_or(|c| corpus.label(i) == c))
        .collect();
    if pool.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no images of class {}",
            class_filter.unwrap_or_default()
        )));
    }
    let indices = match max_images {
        Some(0) => return Err(Error::EmptySelection("max_images is 0".into())),
        Some(cap) if cap < pool.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let mut picked: Vec<u32> = rand::seq::index::sample(&mut rng, pool.len(), cap)
                .into_iter()
                .map(|k| pool[k])
                .collect();
            picked.sort_unstable();
            picked
        }
        _ => pool,
    };
    Ok(CorpusSelection { indices })
}
