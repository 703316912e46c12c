//! Per-pixel provenance: CSV persistence, image-ID / class maps and their
//! renderings.
//!
//! Trace CSV columns: `step,ty,tx,src_image,sy,sx,class,pool_size`, one row
//! per canvas pixel. Seed pixels have step 0 and come first in raster order;
//! sampled pixels follow in step order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "step,ty,tx,src_image,sy,sx,class,pool_size";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub step: u32,
    pub target: (usize, usize),
    pub source_image: u32,
    pub source_center: (usize, usize),
    pub class_label: u8,
    pub pool_size: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLog {
    pub height: usize,
    pub width: usize,
    pub records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn new(height: usize, width: usize, records: Vec<TraceRecord>) -> Self {
        Self {
            height,
            width,
            records,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.step,
                r.target.0,
                r.target.1,
                r.source_image,
                r.source_center.0,
                r.source_center.1,
                r.class_label,
                r.pool_size
            )
            .unwrap();
        }
        out
    }

    /// Parses a trace CSV; the canvas size is inferred from the largest target.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TRACE_HEADER => {}
            other => {
                return Err(Error::Malformed(format!("unexpected trace header {other:?}")));
            }
        }
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<u64> = line
                .split(',')
                .map(|s| s.trim().parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Malformed(format!("trace line {}: {e}", n + 2)))?;
            if f.len() != 8 {
                return Err(Error::Malformed(format!(
                    "trace line {} has {} fields",
                    n + 2,
                    f.len()
                )));
            }
            records.push(TraceRecord {
                step: f[0] as u32,
                target: (f[1] as usize, f[2] as usize),
                source_image: f[3] as u32,
                source_center: (f[4] as usize, f[5] as usize),
                class_label: u8::try_from(f[6])
                    .map_err(|_| Error::Malformed(format!("class {} out of range", f[6])))?,
                pool_size: f[7] as u32,
            });
        }
        let height = records.iter().map(|r| r.target.0 + 1).max().unwrap_or(0);
        let width = records.iter().map(|r| r.target.1 + 1).max().unwrap_or(0);
        Ok(Self::new(height, width, records))
    }
}

pub fn write_trace(log: &TraceLog, path: &Path) -> Result<()> {
    fs::write(path, log.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<TraceLog> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TraceLog::from_csv(&text)
}

/// Image-ID and class label of the source of every canvas pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceMaps {
    pub height: usize,
    pub width: usize,
    pub id_map: Vec<u32>,
    pub class_map: Vec<u8>,
}

pub fn build_maps(log: &TraceLog) -> Result<SourceMaps> {
    let (h, w) = (log.height, log.width);
    let mut id_map = vec![0u32; h * w];
    let mut class_map = vec![0u8; h * w];
    let mut seen = vec![false; h * w];
    for r in &log.records {
        let (y, x) = r.target;
        if y >= h || x >= w {
            return Err(Error::Malformed(format!("trace target ({y}, {x}) outside {h}x{w}")));
        }
        let at = y * w + x;
        if seen[at] {
            return Err(Error::Malformed(format!("duplicate trace record for ({y}, {x})")));
        }
        seen[at] = true;
        id_map[at] = r.source_image;
        class_map[at] = r.class_label;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Malformed(format!(
            "no trace record for ({}, {})",
            missing / w,
            missing % w
        )));
    }
    Ok(SourceMaps {
        height: h,
        width: w,
        id_map,
        class_map,
    })
}

/// Class colors, index = class label (matplotlib "tab10").
pub const CLASS_PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

pub fn class_color(class: u8) -> [u8; 3] {
    match CLASS_PALETTE.get(class as usize) {
        Some(&c) => c,
        None => hashed_color(0x9e37_79b9_0000_0000 | class as u64),
    }
}

/// Deterministic color for a source image index: hashed hue, fixed saturation and value.
pub fn id_color(index: u32) -> [u8; 3] {
    hashed_color(index as u64)
}

fn hashed_color(key: u64) -> [u8; 3] {
    // splitmix64 finalizer
    let mut x = key.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    let hue = (x >> 11) as f64 / (1u64 << 53) as f64 * 6.0;
    hsv_to_rgb(hue, 0.7, 0.9)
}

fn hsv_to_rgb(h6: f64, s: f64, v: f64) -> [u8; 3] {
    let i = h6.floor();
    let f = h6 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match i as u32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

fn upscale(h: usize, w: usize, scale: usize, color: impl Fn(usize) -> [u8; 3]) -> RgbImage {
    ImageBuffer::from_fn((w * scale) as u32, (h * scale) as u32, |x, y| {
        Rgb(color(y as usize / scale * w + x as usize / scale))
    })
}

pub fn class_map_image(maps: &SourceMaps, scale: usize) -> RgbImage {
    upscale(maps.height, maps.width, scale, |at| class_color(maps.class_map[at]))
}

pub fn id_map_image(maps: &SourceMaps, scale: usize) -> RgbImage {
    upscale(maps.height, maps.width, scale, |at| id_color(maps.id_map[at]))
}

/// Generated pixels as RGB (gray replicated), upscaled.
pub fn generated_image(pixels: &[u8], height: usize, width: usize, channels: usize, scale: usize) -> RgbImage {
    upscale(height, width, scale, |at| match channels {
        1 => [pixels[at]; 3],
        _ => [pixels[at * channels], pixels[at * channels + 1], pixels[at * channels + 2]],
    })
}

/// Generated image, class map and image-ID map side by side.
pub fn composite(generated: &RgbImage, class_map: &RgbImage, id_map: &RgbImage) -> RgbImage {
    const GAP: u32 = 4;
    let (w, h) = generated.dimensions();
    let mut out = RgbImage::from_pixel(3 * w + 2 * GAP, h, Rgb([255, 255, 255]));
    for (k, img) in [generated, class_map, id_map].into_iter().enumerate() {
        image::imageops::replace(&mut out, img, (k as u32 * (w + GAP)) as i64, 0);
    }
    out
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Writes the generated image at native resolution as 8-bit gray or RGB PNG.
pub fn save_generated(pixels: &[u8], height: usize, width: usize, channels: usize, path: &Path) -> Result<()> {
    let color = match channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => return Err(Error::Config(format!("cannot write a {c}-channel image"))),
    };
    image::save_buffer_with_format(path, pixels, width as u32, height as u32, color, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Writes `class_map.png`, `id_map.png` and, when the generated pixels are
/// given, `composite.png` into `dir`. Returns the written paths.
pub fn render_maps(
    maps: &SourceMaps,
    generated: Option<(&[u8], usize)>,
    dir: &Path,
    scale: usize,
) -> Result<Vec<PathBuf>> {
    let class_img = class_map_image(maps, scale);
    let id_img = id_map_image(maps, scale);
    let mut written = vec![dir.join("class_map.png"), dir.join("id_map.png")];
    save_png(&class_img, &written[0])?;
    save_png(&id_img, &written[1])?;
    if let Some((pixels, channels)) = generated {
        let gen = generated_image(pixels, maps.height, maps.width, channels, scale);
        let path = dir.join("composite.png");
        save_png(&composite(&gen, &class_img, &id_img), &path)?;
        written.push(path);
    }
    Ok(written)
}
