//! Histogram-to-lifetime analysis pipeline.
//!
//! The stages run in a fixed order, and each one refuses inputs that have
//! not been through the stage before it:
//!
//! 1. [`subtract_background`] removes the mean of an early quiet window from
//!    every bin of each repeat and marks the histogram corrected.
//! 2. [`average_repeats`] folds the corrected repeats into one histogram.
//! 3. [`fit_irf`] fits a Gaussian to the averaged instrument response.
//! 4. [`align_histograms`] shifts both histograms so the response centre
//!    lands at t = 0, leaving only a sub-bin residual offset.
//! 5. [`fit_decay`] fits lifetime and amplitude with the response centre
//!    (the residual) and width held fixed.
//!
//! [`run_pipeline`] wires the stages together and keeps enough provenance to
//! audit a result: per-repeat background floors, the applied shift, and the
//! corrected but unaligned averages the summary metrics are computed from.

mod fits;
mod solver;

pub use fits::{fit_decay, fit_irf, DecayFit, FitError, GaussianFit};
pub use solver::{
    levenberg_marquardt, FitOutcome, IterationRecord, LeastSquaresProblem, SolverError,
    SolverOptions,
};

use serde::{Deserialize, Serialize};

use crate::histogram::{CoincidenceHistogram, HistogramLabel};
use crate::metrics::{self, MetricsError};

/// How the decay fit is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuessPolicy {
    /// Lifetime from the log-slope of the tail, amplitude from the peak.
    MomentBased,
    /// Caller-provided starting point.
    UserSupplied { tau_ps: f64, f0: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Leading bins treated as signal-free; sets both the background floor
    /// and the noise RMS used for SNR.
    pub background_window_bins: usize,
    /// Hard gate: an instrument response below this SNR is not fit.
    pub min_snr_irf: f64,
    /// Advisory: a decay below this SNR is fit but flagged.
    pub snr_f_warning_floor: f64,
    pub solver_max_iterations: usize,
    /// Convergence threshold on the relative parameter step.
    pub solver_relative_tolerance: f64,
    pub initial_guess_policy: InitialGuessPolicy,
    pub record_solver_trace: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            background_window_bins: 300,
            min_snr_irf: 3.0,
            snr_f_warning_floor: 9.0,
            solver_max_iterations: 200,
            solver_relative_tolerance: 1e-10,
            initial_guess_policy: InitialGuessPolicy::MomentBased,
            record_solver_trace: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("no {0} repeats supplied")]
    NoRepeats(HistogramLabel),
    #[error("expected {expected} repeats, found a {found} histogram")]
    WrongLabel { expected: HistogramLabel, found: HistogramLabel },
    #[error("histogram is already background-corrected")]
    AlreadyCorrected,
    #[error("background window of {window_bins} bins does not fit a {n_bins}-bin histogram")]
    BadWindow { window_bins: usize, n_bins: usize },
    #[error(
        "peak bin {peak_index} sits inside the {window_bins}-bin background window; \
         the window must be signal-free"
    )]
    PeakInsideWindow { peak_index: usize, window_bins: usize },
    #[error("repeats disagree on {what}")]
    MismatchedRepeats { what: String },
    #[error("alignment shift of {shift_bins} bins exceeds the {n_bins}-bin histogram")]
    ShiftTooLarge { shift_bins: i64, n_bins: usize },
    #[error("bin widths differ: response {irf_ps} ps vs decay {fluorescence_ps} ps")]
    BinWidthMismatch { irf_ps: f64, fluorescence_ps: f64 },
    #[error("{stage} fit failed")]
    Fit {
        stage: &'static str,
        #[source]
        source: FitError,
    },
    #[error("while processing {label} repeat {index}")]
    AtRepeat {
        label: HistogramLabel,
        index: usize,
        #[source]
        source: Box<PipelineError>,
    },
}

/// Estimate the background floor from the first `window_bins` bins and
/// subtract it from every bin. The input must be raw, and the histogram
/// maximum must be reachable beyond the window — a maximum found only inside
/// the quiet window means the window is not background and the measurement
/// geometry is wrong. (A flat histogram passes: its "peak" is everywhere.)
pub fn subtract_background(
    h: &CoincidenceHistogram,
    window_bins: usize,
) -> Result<CoincidenceHistogram, PipelineError> {
    if h.background_corrected() {
        return Err(PipelineError::AlreadyCorrected);
    }
    if window_bins == 0 || window_bins >= h.n_bins() {
        return Err(PipelineError::BadWindow { window_bins, n_bins: h.n_bins() });
    }
    let peak_index = h.argmax();
    if peak_index < window_bins {
        let peak = h.counts()[peak_index];
        let reachable_outside = h.counts()[window_bins..].iter().any(|&c| c >= peak);
        if !reachable_outside {
            return Err(PipelineError::PeakInsideWindow { peak_index, window_bins });
        }
    }
    let floor =
        h.counts()[..window_bins].iter().sum::<f64>() / window_bins as f64;
    let mut out = h.clone();
    for c in out.counts_mut() {
        *c -= floor;
    }
    out.mark_background_corrected(floor);
    Ok(out)
}

/// Bin-wise mean of repeats that agree on geometry, label and correction
/// state. `repeats_averaged` on the result records how many went in.
pub fn average_repeats(
    repeats: &[CoincidenceHistogram],
) -> Result<CoincidenceHistogram, PipelineError> {
    let first = repeats.first().ok_or(PipelineError::NoRepeats(HistogramLabel::Irf))?;
    for r in &repeats[1..] {
        if r.label() != first.label() {
            return Err(PipelineError::MismatchedRepeats { what: "label".into() });
        }
        if r.n_bins() != first.n_bins()
            || r.bin_width_ps() != first.bin_width_ps()
            || r.start_ps() != first.start_ps()
        {
            return Err(PipelineError::MismatchedRepeats { what: "bin layout".into() });
        }
        if r.background_corrected() != first.background_corrected() {
            return Err(PipelineError::MismatchedRepeats {
                what: "background correction state".into(),
            });
        }
    }

    // Sum each bin in a canonical (sorted) order so the mean is bit-exactly
    // invariant under reordering of the repeat list.
    let n = repeats.len() as f64;
    let mut scratch = vec![0.0; repeats.len()];
    let mut counts = vec![0.0; first.n_bins()];
    for (i, acc) in counts.iter_mut().enumerate() {
        for (slot, r) in scratch.iter_mut().zip(repeats) {
            *slot = r.counts()[i];
        }
        scratch.sort_unstable_by(f64::total_cmp);
        *acc = scratch.iter().sum::<f64>() / n;
    }
    let mut out = first.clone();
    out.replace_counts(counts);
    out.set_repeats_averaged(repeats.len() as u32);
    out.set_integration_time(
        repeats.iter().map(|r| r.integration_time_s()).sum::<f64>() / n,
    );
    if first.background_corrected() {
        let mean_floor = repeats
            .iter()
            .map(|r| r.background_floor().unwrap_or(0.0))
            .sum::<f64>()
            / n;
        out.mark_background_corrected(mean_floor);
    }
    Ok(out)
}

/// The pair of shifted histograms plus what was done to them.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub irf: CoincidenceHistogram,
    pub fluorescence: CoincidenceHistogram,
    /// Whole bins the content moved toward t = 0 (negative: away from it).
    pub shift_bins: i64,
    /// Sub-bin part of the response centre that no whole-bin shift can
    /// remove; the decay fit holds its centre at this value.
    pub mu_residual_ps: f64,
}

fn shift_counts(h: &CoincidenceHistogram, shift: i64) -> Vec<f64> {
    let n = h.n_bins() as i64;
    (0..n)
        .map(|i| {
            let src = i + shift;
            if src >= 0 && src < n {
                h.counts()[src as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// Shift both histograms by the same whole number of bins so the fitted
/// response centre `mu_irf_ps` lands at t = 0. Content sliding off the front
/// is dropped; bins exposed at the other end are zero-filled.
pub fn align_histograms(
    irf: &CoincidenceHistogram,
    fluorescence: &CoincidenceHistogram,
    mu_irf_ps: f64,
) -> Result<Alignment, PipelineError> {
    if irf.bin_width_ps() != fluorescence.bin_width_ps() {
        return Err(PipelineError::BinWidthMismatch {
            irf_ps: irf.bin_width_ps(),
            fluorescence_ps: fluorescence.bin_width_ps(),
        });
    }
    let w = irf.bin_width_ps();
    // nearest whole-bin shift, halves rounding down so that an exact
    // half-bin centre keeps a positive residual
    let shift_bins = (mu_irf_ps / w - 0.5).ceil() as i64;
    let n_bins = irf.n_bins().min(fluorescence.n_bins());
    if shift_bins.unsigned_abs() as usize >= n_bins {
        return Err(PipelineError::ShiftTooLarge { shift_bins, n_bins });
    }
    let mu_residual_ps = mu_irf_ps - shift_bins as f64 * w;

    let mut aligned_irf = irf.clone();
    aligned_irf.replace_counts(shift_counts(irf, shift_bins));
    let mut aligned_fluorescence = fluorescence.clone();
    aligned_fluorescence.replace_counts(shift_counts(fluorescence, shift_bins));

    Ok(Alignment {
        irf: aligned_irf,
        fluorescence: aligned_fluorescence,
        shift_bins,
        mu_residual_ps,
    })
}

/// Everything needed to audit a pipeline result.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineProvenance {
    pub irf_background_floors: Vec<f64>,
    pub fluorescence_background_floors: Vec<f64>,
    pub shift_bins: i64,
    pub mu_residual_ps: f64,
    /// Corrected, averaged, *unaligned* histograms — the inputs to the SNR
    /// and mass metrics.
    #[serde(skip)]
    pub corrected_irf: CoincidenceHistogram,
    #[serde(skip)]
    pub corrected_fluorescence: CoincidenceHistogram,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineOutput {
    pub irf_fit: GaussianFit,
    pub decay_fit: DecayFit,
    pub provenance: PipelineProvenance,
}

fn correct_repeats(
    repeats: &[CoincidenceHistogram],
    expected: HistogramLabel,
    window_bins: usize,
) -> Result<(Vec<CoincidenceHistogram>, Vec<f64>), PipelineError> {
    if repeats.is_empty() {
        return Err(PipelineError::NoRepeats(expected));
    }
    let mut corrected = Vec::with_capacity(repeats.len());
    let mut floors = Vec::with_capacity(repeats.len());
    for (index, r) in repeats.iter().enumerate() {
        if r.label() != expected {
            return Err(PipelineError::WrongLabel { expected, found: r.label() });
        }
        let c = subtract_background(r, window_bins).map_err(|e| PipelineError::AtRepeat {
            label: expected,
            index,
            source: Box::new(e),
        })?;
        floors.push(c.background_floor().unwrap_or(0.0));
        corrected.push(c);
    }
    Ok((corrected, floors))
}

/// Run the full pipeline on raw repeats of both histograms.
pub fn run_pipeline(
    irf_repeats: &[CoincidenceHistogram],
    fluorescence_repeats: &[CoincidenceHistogram],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let (irf_corrected, irf_floors) =
        correct_repeats(irf_repeats, HistogramLabel::Irf, cfg.background_window_bins)?;
    let (fluor_corrected, fluor_floors) = correct_repeats(
        fluorescence_repeats,
        HistogramLabel::Fluorescence,
        cfg.background_window_bins,
    )?;

    let irf_avg = average_repeats(&irf_corrected)?;
    let fluor_avg = average_repeats(&fluor_corrected)?;

    let irf_fit =
        fit_irf(&irf_avg, cfg).map_err(|source| PipelineError::Fit { stage: "response", source })?;

    let alignment = align_histograms(&irf_avg, &fluor_avg, irf_fit.mu_irf_ps)?;

    let mut decay_fit =
        fit_decay(&alignment.fluorescence, irf_fit.sigma_irf_ps, alignment.mu_residual_ps, cfg)
            .map_err(|source| PipelineError::Fit { stage: "decay", source })?;

    // The aligned histogram's early bins contain the peak, so the fit could
    // not judge SNR itself; do it here on the unaligned average.
    match metrics::snr(&fluor_avg, cfg.background_window_bins) {
        Ok(est)
            if !est.peak_inside_noise_window
                && est.value < cfg.snr_f_warning_floor
                && !decay_fit.warnings.iter().any(|w| w.contains("advisory floor")) =>
        {
            decay_fit.warnings.push(format!(
                "decay SNR {:.2} is below the advisory floor {:.2}; lifetime error bars will be wide",
                est.value, cfg.snr_f_warning_floor
            ));
        }
        Ok(_) | Err(MetricsError::UndefinedSnr { .. }) => {}
        Err(_) => {}
    }

    Ok(PipelineOutput {
        irf_fit,
        decay_fit,
        provenance: PipelineProvenance {
            irf_background_floors: irf_floors,
            fluorescence_background_floors: fluor_floors,
            shift_bins: alignment.shift_bins,
            mu_residual_ps: alignment.mu_residual_ps,
            corrected_irf: irf_avg,
            corrected_fluorescence: fluor_avg,
        },
    })
}
