//! Entropy metrics per sample and per mode, as text table and key-value file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use patchgen_core::metrics::{
    compare_modes, sliding_entropy, source_usage, ModeComparison, ModeSamples, ENTROPY_STRIDE, ENTROPY_WINDOW,
};
use patchgen_core::retrieval::Mode;
use patchgen_core::trace::{build_maps, read_trace, TraceLog};
use patchgen_core::{Error, Result};

use crate::args::MetricsArgs;
use crate::manifest::RunManifest;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMetrics {
    pub mode: Mode,
    pub class_entropy: f64,
    pub id_entropy: f64,
    pub dominance: f64,
    pub distinct_sources: usize,
    pub top_sources: Vec<(u32, usize)>,
}

impl SampleMetrics {
    pub fn from_trace(log: &TraceLog, mode: Mode, top_k: usize) -> Result<Self> {
        let maps = build_maps(log)?;
        let (h, w) = (maps.height, maps.width);
        let class = sliding_entropy(&maps.class_map, h, w, ENTROPY_WINDOW, ENTROPY_STRIDE)?;
        let id = sliding_entropy(&maps.id_map, h, w, ENTROPY_WINDOW, ENTROPY_STRIDE)?;
        let usage = source_usage(log, top_k);
        Ok(Self {
            mode,
            class_entropy: class.mean_entropy,
            id_entropy: id.mean_entropy,
            dominance: usage.dominance,
            distinct_sources: usage.counts.len(),
            top_sources: usage.top_k,
        })
    }

    pub fn to_kv(&self) -> String {
        let top: Vec<String> = self.top_sources.iter().map(|(i, c)| format!("{i}:{c}")).collect();
        format!(
            "mode={}\nentropy_window={ENTROPY_WINDOW}\nentropy_stride={ENTROPY_STRIDE}\n\
             class_entropy={}\nimage_id_entropy={}\ndominance={}\ndistinct_sources={}\ntop_sources={}\n",
            self.mode,
            self.class_entropy,
            self.id_entropy,
            self.dominance,
            self.distinct_sources,
            top.join(","),
        )
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Malformed(format!("key-value line without '=': {line}")))?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

/// Sample directories named by `runs`, each holding a manifest.json.
pub fn collect_samples(runs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for run in runs {
        if run.join("manifest.json").is_file() {
            out.push(run.clone());
            continue;
        }
        let entries = fs::read_dir(run).map_err(|e| Error::Io {
            path: run.clone(),
            source: e,
        })?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("manifest.json").is_file())
            .collect();
        found.sort();
        out.extend(found);
    }
    if out.is_empty() {
        return Err(Error::Config("no sample directories found".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRow {
    pub mode: Mode,
    pub samples: usize,
    pub class_entropy: f64,
    pub id_entropy: f64,
    pub dominance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub samples: Vec<(PathBuf, SampleMetrics)>,
    pub rows: Vec<ModeRow>,
    /// Present when at least two modes were measured.
    pub comparison: Option<ModeComparison>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn flag(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "true",
        Some(false) => "false",
        None => "n/a",
    }
}

impl MetricsReport {
    pub fn build(samples: Vec<(PathBuf, SampleMetrics)>) -> Result<Self> {
        let mut groups = Vec::new();
        let mut rows = Vec::new();
        for mode in Mode::ALL {
            let of_mode: Vec<&SampleMetrics> = samples.iter().map(|(_, m)| m).filter(|m| m.mode == mode).collect();
            if of_mode.is_empty() {
                continue;
            }
            groups.push(ModeSamples {
                mode,
                class_entropy: of_mode.iter().map(|m| m.class_entropy).collect(),
                id_entropy: of_mode.iter().map(|m| m.id_entropy).collect(),
            });
            rows.push(ModeRow {
                mode,
                samples: of_mode.len(),
                class_entropy: mean(of_mode.iter().map(|m| m.class_entropy)),
                id_entropy: mean(of_mode.iter().map(|m| m.id_entropy)),
                dominance: mean(of_mode.iter().map(|m| m.dominance)),
            });
        }
        let comparison = if groups.len() >= 2 {
            Some(compare_modes(&groups, 1)?)
        } else {
            None
        };
        Ok(Self {
            samples,
            rows,
            comparison,
        })
    }

    pub fn row(&self, mode: Mode) -> Option<&ModeRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    fn orderings(&self) -> [(&'static str, Option<bool>); 4] {
        let c = self.comparison.as_ref();
        [
            ("class_full_below_no_rep", c.and_then(|c| c.class_full_below_no_rep)),
            ("id_full_above_class_conditional", c.and_then(|c| c.id_full_above_class_conditional)),
            (
                "class_conditional_zero",
                self.row(Mode::ClassConditional).map(|r| r.class_entropy == 0.0),
            ),
            ("class_ssd_only_above_full", c.and_then(|c| c.class_ssd_only_above_full)),
        ]
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<18} {:>7} {:>14} {:>17} {:>10}\n",
            "mode", "samples", "class_entropy", "image_id_entropy", "dominance"
        );
        for r in &self.rows {
            writeln!(
                s,
                "{:<18} {:>7} {:>14.4} {:>17.4} {:>10.3}",
                r.mode.as_str(),
                r.samples,
                r.class_entropy,
                r.id_entropy,
                r.dominance
            )
            .unwrap();
        }
        s.push('\n');
        for (name, v) in self.orderings() {
            writeln!(s, "{name:<32} {}", flag(v)).unwrap();
        }
        s
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!("entropy_window={ENTROPY_WINDOW}\nentropy_stride={ENTROPY_STRIDE}\n");
        for r in &self.rows {
            let m = r.mode.as_str();
            writeln!(s, "{m}.samples={}", r.samples).unwrap();
            writeln!(s, "{m}.class_entropy={}", r.class_entropy).unwrap();
            writeln!(s, "{m}.image_id_entropy={}", r.id_entropy).unwrap();
            writeln!(s, "{m}.dominance={}", r.dominance).unwrap();
        }
        for (name, v) in self.orderings() {
            writeln!(s, "ordering.{name}={}", flag(v)).unwrap();
        }
        s
    }
}

/// Recomputes metrics from each sample's trace.csv.
pub fn sample_metrics_from_dir(dir: &Path, top_k: usize) -> Result<SampleMetrics> {
    let manifest = RunManifest::read(&dir.join("manifest.json"))?;
    let log = read_trace(&dir.join("trace.csv"))?;
    SampleMetrics::from_trace(&log, manifest.settings.mode()?, top_k)
}

pub fn run_metrics(args: &MetricsArgs) -> Result<MetricsReport> {
    let samples = collect_samples(&args.runs)?
        .into_iter()
        .map(|d| sample_metrics_from_dir(&d, args.top_k).map(|m| (d, m)))
        .collect::<Result<Vec<_>>>()?;
    let report = MetricsReport::build(samples)?;
    if let Some(out) = &args.out_dir {
        let write = |name: &str, text: String| {
            let path = out.join(name);
            fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
        };
        fs::create_dir_all(out).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
        write("metrics.txt", report.to_table())?;
        write("metrics.kv", report.to_kv())?;
    }
    Ok(report)
}
