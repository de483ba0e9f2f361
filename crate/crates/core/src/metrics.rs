//! Summary figures for a measurement: SNR, heralding efficiencies,
//! histogram mass and the photon-economy figure of merit.

use serde::Serialize;

use crate::analysis::DecayFit;
use crate::histogram::CoincidenceHistogram;
use crate::sim::ChannelRates;

/// Leading bins used for the noise RMS when the caller has no opinion.
pub const DEFAULT_NOISE_WINDOW_BINS: usize = 300;

/// A sweep setting counts as stable when the across-seed relative spread of
/// the fitted lifetime stays under this.
pub const STABILITY_REL_SPREAD: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("histogram must be background-corrected for {op}")]
    NotBackgroundCorrected { op: &'static str },
    #[error("noise window of {window_bins} bins does not fit a {n_bins}-bin histogram")]
    BadWindow { window_bins: usize, n_bins: usize },
    #[error("the {window_bins}-bin noise window is exactly silent; SNR is undefined")]
    UndefinedSnr { window_bins: usize },
    #[error("singles rate is zero; heralding efficiency is undefined")]
    ZeroSingles,
    #[error("coincidence rate {r_coin} exceeds the singles rate {r_single}")]
    CoincidencesExceedSingles { r_coin: f64, r_single: f64 },
    #[error("{name} must be positive and finite, got {value}")]
    OutOfDomain { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct SnrEstimate {
    /// Highest bin anywhere divided by the RMS of the noise window.
    pub value: f64,
    pub peak_index: usize,
    /// The argmax fell inside the noise window: there is no clear peak and
    /// `value` is not meaningful as a signal-to-noise ratio.
    pub peak_inside_noise_window: bool,
}

/// Peak-to-noise ratio of a background-corrected histogram. Noise is the
/// RMS of the first `window_bins` corrected counts; the peak is the maximum
/// over all bins. An exactly silent window (synthetic noise-free data) is an
/// error the caller may treat as "ideal".
pub fn snr(
    h: &CoincidenceHistogram,
    window_bins: usize,
) -> Result<SnrEstimate, MetricsError> {
    if !h.background_corrected() {
        return Err(MetricsError::NotBackgroundCorrected { op: "snr" });
    }
    if window_bins == 0 || window_bins >= h.n_bins() {
        return Err(MetricsError::BadWindow { window_bins, n_bins: h.n_bins() });
    }
    let mean_sq = h.counts()[..window_bins].iter().map(|c| c * c).sum::<f64>()
        / window_bins as f64;
    let rms = mean_sq.sqrt();
    if rms == 0.0 {
        return Err(MetricsError::UndefinedSnr { window_bins });
    }
    let peak_index = h.argmax();
    let peak_inside_noise_window = peak_index < window_bins;
    Ok(SnrEstimate {
        value: h.counts()[peak_index] / rms,
        peak_index,
        peak_inside_noise_window,
    })
}

/// Coincidence rate over a channel's singles rate.
pub fn heralding_efficiency(r_coin: f64, r_single: f64) -> Result<f64, MetricsError> {
    for (name, value) in [("r_coin", r_coin), ("r_single", r_single)] {
        if !value.is_finite() || value < 0.0 {
            return Err(MetricsError::OutOfDomain { name, value });
        }
    }
    if r_single == 0.0 {
        return Err(MetricsError::ZeroSingles);
    }
    if r_coin > r_single {
        return Err(MetricsError::CoincidencesExceedSingles { r_coin, r_single });
    }
    Ok(r_coin / r_single)
}

/// Total counts in a background-corrected histogram, negative residuals
/// included.
pub fn histogram_mass(h: &CoincidenceHistogram) -> Result<f64, MetricsError> {
    if !h.background_corrected() {
        return Err(MetricsError::NotBackgroundCorrected { op: "histogram_mass" });
    }
    Ok(h.total_counts())
}

/// `(sigma_tau / tau) * sqrt(n)`: 1 at the shot-noise limit, larger for any
/// real measurement. `sigma_tau` may be a fit standard error or an
/// across-seed spread, whichever the caller is studying.
pub fn figure_of_merit(tau_ps: f64, sigma_tau_ps: f64, n: f64) -> Result<f64, MetricsError> {
    if !(tau_ps > 0.0) || !tau_ps.is_finite() {
        return Err(MetricsError::OutOfDomain { name: "tau_ps", value: tau_ps });
    }
    if !(sigma_tau_ps >= 0.0) || !sigma_tau_ps.is_finite() {
        return Err(MetricsError::OutOfDomain { name: "sigma_tau_ps", value: sigma_tau_ps });
    }
    if !(n > 0.0) || !n.is_finite() {
        return Err(MetricsError::OutOfDomain { name: "n", value: n });
    }
    Ok(sigma_tau_ps / tau_ps * n.sqrt())
}

/// Sample standard deviation over the mean. `None` for fewer than two
/// values or a zero mean.
pub fn relative_spread(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return None;
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some(var.sqrt() / mean.abs())
}

/// Stability criterion used when reading thresholds off a sweep: relative
/// lifetime spread across seeds under [`STABILITY_REL_SPREAD`].
pub fn is_stable(tau_estimates: &[f64]) -> Option<bool> {
    relative_spread(tau_estimates).map(|s| s < STABILITY_REL_SPREAD)
}

/// The summary block attached to every analysis report and sweep row.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub snr_irf: Option<f64>,
    pub snr_f: Option<f64>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    /// Mass of the corrected decay histogram.
    pub n_total: f64,
    /// Per-run figure of merit from the fit standard error.
    pub figure_of_merit: Option<f64>,
    pub warnings: Vec<String>,
}

/// Assemble the report from the pipeline's corrected (unaligned) averages,
/// the decay fit, and — when the data came from the simulator — the
/// fluorescence run's channel rates. Anything that cannot be computed turns
/// into `None` plus a warning rather than an error: a report with gaps is
/// still a report.
pub fn compile_report(
    corrected_irf: &CoincidenceHistogram,
    corrected_fluorescence: &CoincidenceHistogram,
    rates: Option<&ChannelRates>,
    decay: &DecayFit,
    noise_window_bins: usize,
) -> MetricReport {
    let mut warnings = Vec::new();

    let mut snr_of = |h: &CoincidenceHistogram, what: &str| match snr(h, noise_window_bins) {
        Ok(est) => {
            if est.peak_inside_noise_window {
                warnings.push(format!(
                    "{what}: no clear peak (maximum inside the noise window)"
                ));
            }
            Some(est.value)
        }
        Err(MetricsError::UndefinedSnr { .. }) => {
            warnings.push(format!("{what}: silent noise window, SNR undefined (ideal data)"));
            None
        }
        Err(e) => {
            warnings.push(format!("{what}: {e}"));
            None
        }
    };
    let snr_irf = snr_of(corrected_irf, "response SNR");
    let snr_f = snr_of(corrected_fluorescence, "decay SNR");

    let (eta1, eta2) = match rates {
        Some(r) => {
            let mut eta = |singles: f64, which: &str| {
                match heralding_efficiency(r.coincidence_per_s, singles) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        warnings.push(format!("heralding efficiency {which}: {e}"));
                        None
                    }
                }
            };
            (eta(r.singles_ch1_per_s, "eta1"), eta(r.singles_ch2_per_s, "eta2"))
        }
        None => (None, None),
    };

    let n_total = histogram_mass(corrected_fluorescence).unwrap_or_else(|e| {
        warnings.push(format!("histogram mass: {e}"));
        f64::NAN
    });

    let figure_of_merit = match figure_of_merit(decay.tau_ps, decay.std_error_tau_ps, n_total) {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("figure of merit: {e}"));
            None
        }
    };

    MetricReport { snr_irf, snr_f, eta1, eta2, n_total, figure_of_merit, warnings }
}
