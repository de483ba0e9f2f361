//! Coincidence histograms and their on-disk format.
//!
//! A histogram is a uniformly binned vector of counts. Counts are stored as
//! `f64`: raw data are integers, but background subtraction and repeat
//! averaging produce fractional and negative values, and analysis must keep
//! them (clamping would bias every fit).
//!
//! On disk a histogram is a two-column CSV (`bin_start_ps,count`) plus a
//! TOML sidecar `<stem>.meta.toml` carrying the label, bin width,
//! integration time, repeat count and correction flag. Floats are written
//! with Rust's shortest round-trip formatting, so save/load reproduces every
//! value exactly (well beyond the 15 significant digits the format
//! guarantees).

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

const CSV_HEADER: &str = "bin_start_ps,count";

/// Which arm of the experiment a histogram came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistogramLabel {
    /// Mirror measurement: instrument response only.
    Irf,
    /// Fluorescent-sample measurement.
    Fluorescence,
}

impl fmt::Display for HistogramLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HistogramLabel::Irf => write!(f, "irf"),
            HistogramLabel::Fluorescence => write!(f, "fluorescence"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HistogramError {
    #[error("bin width must be positive and finite, got {0}")]
    BadBinWidth(f64),
    #[error("histogram needs at least one bin")]
    Empty,
    #[error("count at bin {index} is {value}, but raw histograms must be non-negative")]
    NegativeCount { index: usize, value: f64 },
    #[error("count at bin {index} is not finite")]
    NonFiniteCount { index: usize },
    #[error("integration time must be positive and finite, got {0}")]
    BadIntegrationTime(f64),
    #[error("repeats_averaged must be at least 1")]
    ZeroRepeats,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: expected header `{CSV_HEADER}`")]
    BadHeader { path: PathBuf },
    #[error("{path}: bin starts are not uniformly spaced by the sidecar bin width")]
    NonUniformBins { path: PathBuf },
    #[error("sidecar {path}: {msg}")]
    BadMeta { path: PathBuf, msg: String },
}

/// Sidecar record; field names double as the documented file format.
#[derive(Debug, Serialize, Deserialize)]
struct SidecarMeta {
    label: HistogramLabel,
    bin_width_ps: f64,
    start_ps: f64,
    integration_time_s: f64,
    repeats_averaged: u32,
    background_corrected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    background_floor: Option<f64>,
}

/// A uniformly binned coincidence histogram.
///
/// Bin `i` covers `[start_ps + i*w, start_ps + (i+1)*w)`. Bin count and
/// width are fixed at construction; analysis steps produce new histograms
/// rather than resizing.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    label: HistogramLabel,
    bin_width_ps: f64,
    start_ps: f64,
    counts: Vec<f64>,
    integration_time_s: f64,
    repeats_averaged: u32,
    background_corrected: bool,
    background_floor: Option<f64>,
}

impl CoincidenceHistogram {
    /// Empty raw histogram with `n_bins` zeroed bins starting at t = 0.
    pub fn zeroed(
        label: HistogramLabel,
        bin_width_ps: f64,
        n_bins: usize,
        integration_time_s: f64,
    ) -> Result<Self, HistogramError> {
        Self::from_counts(label, bin_width_ps, 0.0, vec![0.0; n_bins], integration_time_s)
    }

    /// Raw histogram from explicit counts (all must be finite and >= 0).
    pub fn from_counts(
        label: HistogramLabel,
        bin_width_ps: f64,
        start_ps: f64,
        counts: Vec<f64>,
        integration_time_s: f64,
    ) -> Result<Self, HistogramError> {
        let h = Self {
            label,
            bin_width_ps,
            start_ps,
            counts,
            integration_time_s,
            repeats_averaged: 1,
            background_corrected: false,
            background_floor: None,
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<(), HistogramError> {
        if !(self.bin_width_ps > 0.0) || !self.bin_width_ps.is_finite() {
            return Err(HistogramError::BadBinWidth(self.bin_width_ps));
        }
        if self.counts.is_empty() {
            return Err(HistogramError::Empty);
        }
        if !(self.integration_time_s > 0.0) || !self.integration_time_s.is_finite() {
            return Err(HistogramError::BadIntegrationTime(self.integration_time_s));
        }
        if self.repeats_averaged == 0 {
            return Err(HistogramError::ZeroRepeats);
        }
        for (index, &value) in self.counts.iter().enumerate() {
            if !value.is_finite() {
                return Err(HistogramError::NonFiniteCount { index });
            }
            if value < 0.0 && !self.background_corrected {
                return Err(HistogramError::NegativeCount { index, value });
            }
        }
        Ok(())
    }

    pub fn label(&self) -> HistogramLabel {
        self.label
    }

    pub fn bin_width_ps(&self) -> f64 {
        self.bin_width_ps
    }

    pub fn start_ps(&self) -> f64 {
        self.start_ps
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Total span covered by the bins, in ps.
    pub fn span_ps(&self) -> f64 {
        self.bin_width_ps * self.counts.len() as f64
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        self.start_ps + self.bin_width_ps * i as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_start(i) + 0.5 * self.bin_width_ps
    }

    pub fn integration_time_s(&self) -> f64 {
        self.integration_time_s
    }

    pub fn repeats_averaged(&self) -> u32 {
        self.repeats_averaged
    }

    pub fn background_corrected(&self) -> bool {
        self.background_corrected
    }

    /// Per-bin floor estimated (and removed) by background subtraction.
    pub fn background_floor(&self) -> Option<f64> {
        self.background_floor
    }

    pub fn total_counts(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Index of the first maximal bin.
    pub fn argmax(&self) -> usize {
        let mut best = 0usize;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    // -- crate-internal mutation used by the simulator and the pipeline --

    pub(crate) fn counts_mut(&mut self) -> &mut [f64] {
        &mut self.counts
    }

    pub(crate) fn replace_counts(&mut self, counts: Vec<f64>) {
        debug_assert_eq!(counts.len(), self.counts.len());
        self.counts = counts;
    }

    pub(crate) fn mark_background_corrected(&mut self, floor: f64) {
        self.background_corrected = true;
        self.background_floor = Some(floor);
    }

    pub(crate) fn set_repeats_averaged(&mut self, n: u32) {
        self.repeats_averaged = n;
    }

    pub(crate) fn set_integration_time(&mut self, t_s: f64) {
        self.integration_time_s = t_s;
    }

    /// Sidecar path convention: `foo.csv` -> `foo.meta.toml`.
    pub fn meta_path_for(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("meta.toml")
    }

    /// Write the CSV and its sidecar next to each other.
    pub fn save(&self, csv_path: &Path) -> Result<(), HistogramError> {
        let io_err = |source| HistogramError::Io { path: csv_path.to_path_buf(), source };
        let file = fs::File::create(csv_path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(w, "{CSV_HEADER}")?;
            for (i, &c) in self.counts.iter().enumerate() {
                writeln!(w, "{},{}", self.bin_start(i), c)?;
            }
            w.flush()
        };
        write().map_err(io_err)?;

        let meta = SidecarMeta {
            label: self.label,
            bin_width_ps: self.bin_width_ps,
            start_ps: self.start_ps,
            integration_time_s: self.integration_time_s,
            repeats_averaged: self.repeats_averaged,
            background_corrected: self.background_corrected,
            background_floor: self.background_floor,
        };
        let meta_path = Self::meta_path_for(csv_path);
        let text = toml::to_string(&meta).expect("sidecar serializes");
        fs::write(&meta_path, text).map_err(|source| HistogramError::Io {
            path: meta_path.clone(),
            source,
        })
    }

    /// Load a histogram from a CSV and its sidecar.
    pub fn load(csv_path: &Path) -> Result<Self, HistogramError> {
        let meta_path = Self::meta_path_for(csv_path);
        let meta_text = fs::read_to_string(&meta_path).map_err(|source| HistogramError::Io {
            path: meta_path.clone(),
            source,
        })?;
        let meta: SidecarMeta =
            toml::from_str(&meta_text).map_err(|e| HistogramError::BadMeta {
                path: meta_path.clone(),
                msg: e.to_string(),
            })?;

        let file = fs::File::open(csv_path).map_err(|source| HistogramError::Io {
            path: csv_path.to_path_buf(),
            source,
        })?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let header = match lines.next() {
            Some((_, Ok(l))) => l,
            Some((_, Err(source))) => {
                return Err(HistogramError::Io { path: csv_path.to_path_buf(), source })
            }
            None => return Err(HistogramError::BadHeader { path: csv_path.to_path_buf() }),
        };
        if header.trim() != CSV_HEADER {
            return Err(HistogramError::BadHeader { path: csv_path.to_path_buf() });
        }

        let mut counts = Vec::new();
        let mut starts = Vec::new();
        for (idx, line) in lines {
            let line = line.map_err(|source| HistogramError::Io {
                path: csv_path.to_path_buf(),
                source,
            })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| HistogramError::Parse {
                path: csv_path.to_path_buf(),
                line: idx + 1,
                msg,
            };
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| parse_err("expected two comma-separated fields".into()))?;
            let start: f64 =
                a.trim().parse().map_err(|e| parse_err(format!("bad bin start: {e}")))?;
            let count: f64 =
                b.trim().parse().map_err(|e| parse_err(format!("bad count: {e}")))?;
            starts.push(start);
            counts.push(count);
        }
        if counts.is_empty() {
            return Err(HistogramError::Empty);
        }

        // Bin starts must agree with the sidecar's width/origin.
        let w = meta.bin_width_ps;
        if !(w > 0.0) || !w.is_finite() {
            return Err(HistogramError::BadBinWidth(w));
        }
        let tol = 1e-6 * w;
        for (i, &s) in starts.iter().enumerate() {
            let expect = meta.start_ps + w * i as f64;
            if (s - expect).abs() > tol {
                return Err(HistogramError::NonUniformBins { path: csv_path.to_path_buf() });
            }
        }

        let h = Self {
            label: meta.label,
            bin_width_ps: w,
            start_ps: meta.start_ps,
            counts,
            integration_time_s: meta.integration_time_s,
            repeats_averaged: meta.repeats_averaged,
            background_corrected: meta.background_corrected,
            background_floor: meta.background_floor,
        };
        h.validate()?;
        Ok(h)
    }
}
