//! The two model fits: a three-parameter Gaussian for the instrument
//! response and a two-parameter lifetime fit with the instrument shape held
//! fixed.

use serde::Serialize;

use super::solver::{
    levenberg_marquardt, sandwich_std_errors, IterationRecord, LeastSquaresProblem, SolverError,
    SolverOptions,
};
use super::PipelineConfig;
use crate::histogram::{CoincidenceHistogram, HistogramLabel};
use crate::metrics::{self, MetricsError};
use crate::models;

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error("expected a {expected} histogram, got {found}")]
    WrongLabel { expected: HistogramLabel, found: HistogramLabel },
    #[error("histogram must be background-corrected before fitting")]
    NotBackgroundCorrected,
    #[error("histogram has {n_bins} bins; at least {needed} are required")]
    TooFewBins { n_bins: usize, needed: usize },
    #[error("histogram carries no positive counts")]
    NoSignal,
    #[error("instrument response SNR {snr:.3} is below the minimum {min:.3}")]
    LowSnrIrf { snr: f64, min: f64 },
    #[error(
        "response peak too narrow to resolve: width {sigma_ps:.6} ps against \
         {bin_width_ps} ps bins"
    )]
    SigmaCollapsed { sigma_ps: f64, bin_width_ps: f64 },
    #[error("fixed response width must be positive and finite, got {sigma_ps}")]
    BadFixedSigma { sigma_ps: f64 },
    #[error("solver stopped after {iterations} iterations without converging")]
    NonConvergence { iterations: usize },
    #[error("lifetime ran into the {which} search bound at {tau_ps:.3} ps")]
    TauAtBound { which: &'static str, tau_ps: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Gaussian fit to a unit-area-normalised instrument response histogram.
#[derive(Debug, Clone, Serialize)]
pub struct GaussianFit {
    pub mu_irf_ps: f64,
    pub sigma_irf_ps: f64,
    /// Fraction of the histogram mass captured by the Gaussian; ~1 for a
    /// clean response.
    pub amplitude: f64,
    pub std_error_mu_ps: f64,
    pub std_error_sigma_ps: f64,
    pub std_error_amplitude: f64,
    pub residual_sum_squares: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<IterationRecord>,
}

/// Lifetime fit with the response shape (centre and width) held fixed.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub tau_ps: f64,
    pub f0: f64,
    pub std_error_tau_ps: f64,
    pub std_error_f0: f64,
    pub residual_sum_squares: f64,
    pub converged: bool,
    pub iterations: usize,
    pub fixed_mu_ps: f64,
    pub fixed_sigma_ps: f64,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<IterationRecord>,
}

const MIN_BINS: usize = 8;

fn solver_options(cfg: &PipelineConfig) -> SolverOptions {
    SolverOptions {
        max_iterations: cfg.solver_max_iterations,
        step_tolerance: cfg.solver_relative_tolerance,
        record_trace: cfg.record_solver_trace,
        ..Default::default()
    }
}

/// Per-bin variances of corrected, repeat-averaged counts under counting
/// statistics: the pre-correction intensity is the corrected count plus the
/// subtracted floor, and averaging R repeats divides the variance by R.
/// `scale` maps counts into the space the fit ran in (1 for raw counts,
/// the normalisation factor for density fits); variances scale by its
/// square.
fn counting_variances(h: &CoincidenceHistogram, scale: f64) -> Vec<f64> {
    let floor = h.background_floor().unwrap_or(0.0);
    let r = h.repeats_averaged().max(1) as f64;
    let s2 = scale * scale;
    h.counts().iter().map(|&c| (c + floor).max(0.0) / r * s2).collect()
}

/// Variance of the estimated background floor itself. Subtracting it moved
/// every bin coherently by the same error, which the per-bin variances
/// cannot express; this feeds the sandwich's rank-one offset term.
fn floor_variance(h: &CoincidenceHistogram, scale: f64, cfg: &PipelineConfig) -> f64 {
    let floor = h.background_floor().unwrap_or(0.0);
    let r = h.repeats_averaged().max(1) as f64;
    let window = cfg.background_window_bins.max(1) as f64;
    floor.max(0.0) / (r * window) * scale * scale
}

fn check_basics(
    h: &CoincidenceHistogram,
    expected: Option<HistogramLabel>,
) -> Result<(), FitError> {
    if let Some(expected) = expected {
        if h.label() != expected {
            return Err(FitError::WrongLabel { expected, found: h.label() });
        }
    }
    if !h.background_corrected() {
        return Err(FitError::NotBackgroundCorrected);
    }
    if h.n_bins() < MIN_BINS {
        return Err(FitError::TooFewBins { n_bins: h.n_bins(), needed: MIN_BINS });
    }
    Ok(())
}

struct GaussianProblem {
    centers: Vec<f64>,
    density: Vec<f64>,
}

impl LeastSquaresProblem for GaussianProblem {
    fn n_params(&self) -> usize {
        3
    }
    fn n_residuals(&self) -> usize {
        self.centers.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (a, mu, sigma) = (p[0], p[1], p[2]);
        for (i, (&t, &d)) in self.centers.iter().zip(&self.density).enumerate() {
            out[i] = a * models::model_irf(t, mu, sigma) - d;
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut [f64]) {
        let (a, mu, sigma) = (p[0], p[1], p[2]);
        for (i, &t) in self.centers.iter().enumerate() {
            let g = models::model_irf(t, mu, sigma);
            let z = (t - mu) / sigma;
            out[i * 3] = g;
            out[i * 3 + 1] = a * g * z / sigma;
            out[i * 3 + 2] = a * g * (z * z - 1.0) / sigma;
        }
    }
}

/// Moment start for the Gaussian: mean and spread of the contiguous run of
/// bins around the peak that stay above 5% of it, plus the run length so
/// the caller can spot degenerate spikes. Truncation biases the width a few
/// percent low, which the solver absorbs immediately.
fn gaussian_moment_start(h: &CoincidenceHistogram) -> (f64, f64, usize) {
    let counts = h.counts();
    let peak_index = h.argmax();
    let threshold = counts[peak_index] * 0.05;
    let mut lo = peak_index;
    while lo > 0 && counts[lo - 1] > threshold {
        lo -= 1;
    }
    let mut hi = peak_index;
    while hi + 1 < counts.len() && counts[hi + 1] > threshold {
        hi += 1;
    }
    let run = hi - lo + 1;
    let mut mass = 0.0;
    let mut mean = 0.0;
    for i in lo..=hi {
        let w = counts[i].max(0.0);
        mass += w;
        mean += w * h.bin_center(i);
    }
    if mass <= 0.0 {
        return (h.bin_center(peak_index), h.bin_width_ps(), run);
    }
    mean /= mass;
    let mut var = 0.0;
    for i in lo..=hi {
        let w = counts[i].max(0.0);
        let d = h.bin_center(i) - mean;
        var += w * d * d;
    }
    var /= mass;
    (mean, var.sqrt().max(h.bin_width_ps()), run)
}

/// Fit a Gaussian to a background-corrected instrument response histogram.
///
/// The histogram is normalised to unit area first, so `amplitude` reports
/// the mass fraction under the Gaussian. Rejects responses whose SNR sits
/// below `cfg.min_snr_irf`; a histogram with an exactly silent noise window
/// (synthetic data) passes the gate by construction.
pub fn fit_irf(
    h: &CoincidenceHistogram,
    cfg: &PipelineConfig,
) -> Result<GaussianFit, FitError> {
    check_basics(h, Some(HistogramLabel::Irf))?;

    match metrics::snr(h, cfg.background_window_bins) {
        Ok(est) if est.value < cfg.min_snr_irf => {
            return Err(FitError::LowSnrIrf { snr: est.value, min: cfg.min_snr_irf });
        }
        Ok(_) | Err(MetricsError::UndefinedSnr { .. }) => {}
        // corrected-ness was checked above; nothing else can fail here
        Err(_) => {}
    }

    let total = h.total_counts();
    if !(total > 0.0) {
        return Err(FitError::NoSignal);
    }
    let norm = 1.0 / (total * h.bin_width_ps());
    let problem = GaussianProblem {
        centers: (0..h.n_bins()).map(|i| h.bin_center(i)).collect(),
        density: h.counts().iter().map(|&c| c * norm).collect(),
    };

    let (mu0, sigma0, run) = gaussian_moment_start(h);
    // a peak confined to one or two bins cannot constrain a width; refuse
    // rather than let the solver chase a sub-bin sigma
    if run < 3 {
        return Err(FitError::SigmaCollapsed { sigma_ps: sigma0, bin_width_ps: h.bin_width_ps() });
    }
    let span = h.span_ps();
    let bounds = [
        (0.0, f64::INFINITY),
        (h.start_ps() - span, h.start_ps() + 2.0 * span),
        (0.25 * h.bin_width_ps(), span),
    ];
    let out = levenberg_marquardt(&problem, &[1.0, mu0, sigma0], &bounds, &solver_options(cfg))?;
    if !out.converged {
        return Err(FitError::NonConvergence { iterations: out.iterations });
    }
    let sigma = out.params[2];
    if sigma < h.bin_width_ps() {
        return Err(FitError::SigmaCollapsed { sigma_ps: sigma, bin_width_ps: h.bin_width_ps() });
    }
    let se = sandwich_std_errors(
        &problem,
        &out.params,
        &counting_variances(h, norm),
        floor_variance(h, norm, cfg),
    );

    Ok(GaussianFit {
        amplitude: out.params[0],
        mu_irf_ps: out.params[1],
        sigma_irf_ps: sigma,
        std_error_amplitude: se[0],
        std_error_mu_ps: se[1],
        std_error_sigma_ps: se[2],
        residual_sum_squares: out.rss,
        converged: out.converged,
        iterations: out.iterations,
        trace: out.trace,
    })
}

struct DecayProblem {
    centers: Vec<f64>,
    counts: Vec<f64>,
    mu_ps: f64,
    sigma_ps: f64,
}

impl LeastSquaresProblem for DecayProblem {
    fn n_params(&self) -> usize {
        2
    }
    fn n_residuals(&self) -> usize {
        self.centers.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (tau, f0) = (p[0], p[1]);
        for (i, (&t, &c)) in self.centers.iter().zip(&self.counts).enumerate() {
            out[i] = models::model_convolved_decay(t, tau, self.sigma_ps, self.mu_ps, f0) - c;
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut [f64]) {
        let (tau, f0) = (p[0], p[1]);
        for (i, &t) in self.centers.iter().enumerate() {
            out[i * 2] =
                models::model_convolved_decay_dtau(t, tau, self.sigma_ps, self.mu_ps, f0);
            out[i * 2 + 1] = models::model_convolved_decay(t, tau, self.sigma_ps, self.mu_ps, 1.0);
        }
    }
}

/// Straight-line fit to `ln(counts)` over the tail beyond the peak; the
/// negative inverse slope seeds the lifetime. Returns `None` when too few
/// tail bins are positive to trust the slope.
fn tail_slope_tau(h: &CoincidenceHistogram, sigma_ps: f64) -> Option<f64> {
    let start = h.argmax() + (2.5 * sigma_ps / h.bin_width_ps()).ceil() as usize;
    if start + MIN_BINS >= h.n_bins() {
        return None;
    }
    let mut pts = Vec::new();
    for i in start..h.n_bins() {
        let c = h.counts()[i];
        if c > 0.0 {
            pts.push((h.bin_center(i), c.ln()));
        }
    }
    if pts.len() < MIN_BINS {
        return None;
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for &(t, y) in &pts {
        cov += (t - mean_t) * (y - mean_y);
        var += (t - mean_t) * (t - mean_t);
    }
    if var <= 0.0 {
        return None;
    }
    let slope = cov / var;
    if slope < 0.0 {
        Some(-1.0 / slope)
    } else {
        None
    }
}

/// The noise window only measures background if the convolved decay's rise
/// (centred on `mu_ps`, with a ~3-sigma Gaussian onset) starts beyond it.
fn signal_clears_window(
    h: &CoincidenceHistogram,
    sigma_ps: f64,
    mu_ps: f64,
    cfg: &PipelineConfig,
) -> bool {
    let window_end_ps =
        h.bin_center(cfg.background_window_bins) - 0.5 * h.bin_width_ps();
    mu_ps - 3.0 * sigma_ps > window_end_ps
}

/// Fit lifetime and amplitude to a background-corrected decay histogram,
/// holding the response width `fixed_sigma_ps` and centre `fixed_mu_ps`.
///
/// A lifetime that converges onto either search bound (one bin width below,
/// the histogram span above) is reported as an error rather than a number:
/// such fits track the bound, not the data. A decay SNR below
/// `cfg.snr_f_warning_floor` is allowed through with a warning attached;
/// the advisory is suppressed whenever the noise window cannot be trusted
/// as pure background — when the observed maximum sits inside it, or when
/// `fixed_mu_ps` places the signal's rise near or inside it (as it does
/// after alignment). Callers of aligned data judge SNR on the unaligned
/// histogram instead.
pub fn fit_decay(
    h: &CoincidenceHistogram,
    fixed_sigma_ps: f64,
    fixed_mu_ps: f64,
    cfg: &PipelineConfig,
) -> Result<DecayFit, FitError> {
    check_basics(h, None)?;
    if !(fixed_sigma_ps > 0.0) || !fixed_sigma_ps.is_finite() {
        return Err(FitError::BadFixedSigma { sigma_ps: fixed_sigma_ps });
    }
    let peak_index = h.argmax();
    let peak = h.counts()[peak_index];
    if !(peak > 0.0) {
        return Err(FitError::NoSignal);
    }

    let mut warnings = Vec::new();
    match metrics::snr(h, cfg.background_window_bins) {
        Ok(est)
            if !est.peak_inside_noise_window
                && signal_clears_window(h, fixed_sigma_ps, fixed_mu_ps, cfg)
                && est.value < cfg.snr_f_warning_floor =>
        {
            warnings.push(format!(
                "decay SNR {:.2} is below the advisory floor {:.2}; lifetime error bars will be wide",
                est.value, cfg.snr_f_warning_floor
            ));
        }
        Ok(_) | Err(MetricsError::UndefinedSnr { .. }) => {}
        Err(_) => {}
    }

    let span = h.span_ps();
    let tau_bounds = (h.bin_width_ps(), span);
    let tau0 = match cfg.initial_guess_policy {
        super::InitialGuessPolicy::UserSupplied { tau_ps, .. } => tau_ps,
        super::InitialGuessPolicy::MomentBased => {
            tail_slope_tau(h, fixed_sigma_ps).unwrap_or(span / 10.0)
        }
    }
    .clamp(tau_bounds.0, tau_bounds.1);

    let t_peak = h.bin_center(peak_index);
    let f0_0 = match cfg.initial_guess_policy {
        super::InitialGuessPolicy::UserSupplied { f0, .. } => f0.max(0.0),
        super::InitialGuessPolicy::MomentBased => {
            let unit = models::model_convolved_decay(t_peak, tau0, fixed_sigma_ps, fixed_mu_ps, 1.0);
            if unit > 0.0 && unit.is_finite() {
                peak / unit
            } else {
                peak
            }
        }
    };

    let problem = DecayProblem {
        centers: (0..h.n_bins()).map(|i| h.bin_center(i)).collect(),
        counts: h.counts().to_vec(),
        mu_ps: fixed_mu_ps,
        sigma_ps: fixed_sigma_ps,
    };
    let bounds = [tau_bounds, (0.0, f64::INFINITY)];
    let out =
        levenberg_marquardt(&problem, &[tau0, f0_0], &bounds, &solver_options(cfg))?;
    if !out.converged {
        return Err(FitError::NonConvergence { iterations: out.iterations });
    }
    if out.at_lower_bound[0] {
        return Err(FitError::TauAtBound { which: "lower", tau_ps: out.params[0] });
    }
    if out.at_upper_bound[0] {
        return Err(FitError::TauAtBound { which: "upper", tau_ps: out.params[0] });
    }
    let se = sandwich_std_errors(
        &problem,
        &out.params,
        &counting_variances(h, 1.0),
        floor_variance(h, 1.0, cfg),
    );

    Ok(DecayFit {
        tau_ps: out.params[0],
        f0: out.params[1],
        std_error_tau_ps: se[0],
        std_error_f0: se[1],
        residual_sum_squares: out.rss,
        converged: out.converged,
        iterations: out.iterations,
        fixed_mu_ps,
        fixed_sigma_ps,
        warnings,
        trace: out.trace,
    })
}
