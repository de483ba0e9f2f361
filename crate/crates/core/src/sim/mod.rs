//! Monte Carlo generation of coincidence histograms for both measurement
//! modes: mirror in the sample position (instrument response) and dye in the
//! sample position (fluorescence decay).
//!
//! The event model samples per *coincidence*, not per photon: a pair is
//! detected in coincidence with probability `p1 * p2` (the product of the
//! two leg efficiencies), and each detected coincidence lands at
//!
//! ```text
//! delay = apparatus_delay + N(0, s_ch1) + N(0, s_ch2) + N(0, s_tcspc) [+ Exp(tau)]
//! ```
//!
//! Uncorrelated-background coincidences are injected analytically as a
//! uniform Poisson floor (`r1 * r2 * bin_width * T` per bin) rather than by
//! pairing full time-tag streams; a brute-force stream-pairing oracle in the
//! acceptance tests validates that shortcut.
//!
//! Above [`EVENT_PATH_MAX_EXPECTED`] expected coincidences per repeat the
//! per-event loop switches to per-bin Poisson sampling from the closed-form
//! delay distribution. By Poisson thinning the two paths produce the same
//! binned distribution; they just consume the RNG differently.
//!
//! Determinism: every repeat owns a counter-based RNG stream keyed by
//! `(seed, 2*repeat + mode)`, so a rerun of the same `SimulationRun` is
//! bit-identical no matter how repeats are scheduled.

mod rng;
mod spdc;

pub use rng::derive_seed;
pub use spdc::{spdc_tuning, SpdcSpectrumPoint, SpdcTuning};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::histogram::{CoincidenceHistogram, HistogramError, HistogramLabel};
use crate::instrument::{FluorophoreModel, InstrumentModel, ModelError};
use crate::models;

use rng::repeat_rng;

/// Largest expected coincidence count still sampled event by event.
pub const EVENT_PATH_MAX_EXPECTED: f64 = 1.0e6;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Histogram(#[from] HistogramError),
    #[error("fluorescence mode requires a fluorophore model")]
    MissingFluorophore,
    #[error("integration time must be positive and finite, got {0} s")]
    BadIntegrationTime(f64),
    #[error("repeats must be at least 1")]
    ZeroRepeats,
    #[error("rate {name} must be finite and non-negative, got {value}")]
    BadRate { name: &'static str, value: f64 },
    #[error("waveguide temperature {temperature_c} °C is unsupported: {reason}")]
    UnsupportedTemperature { temperature_c: f64, reason: &'static str },
    #[error("tuning-curve calibration constants are out of range")]
    BadTuning,
}

/// One complete measurement request: apparatus, sample, time, repeats, seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationRun {
    pub instrument: InstrumentModel,
    /// `None` puts the mirror in the sample position (instrument-response
    /// mode); the IRF simulation ignores this field either way.
    pub fluorophore: Option<FluorophoreModel>,
    pub integration_time_s: f64,
    pub repeats: u32,
    pub rng_seed: u64,
    pub spdc: SpdcTuning,
}

impl Default for SimulationRun {
    fn default() -> Self {
        Self {
            instrument: InstrumentModel::default(),
            fluorophore: Some(FluorophoreModel::default()),
            integration_time_s: 900.0,
            repeats: 3,
            rng_seed: 7,
            spdc: SpdcTuning::default(),
        }
    }
}

impl SimulationRun {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.integration_time_s > 0.0) || !self.integration_time_s.is_finite() {
            return Err(SimError::BadIntegrationTime(self.integration_time_s));
        }
        if self.repeats == 0 {
            return Err(SimError::ZeroRepeats);
        }
        self.instrument.validate()?;
        if let Some(dye) = &self.fluorophore {
            dye.validate()?;
        }
        self.spdc.validate()
    }
}

/// Count rates as the instrument would report them: singles are Poisson
/// samples of the true channel rates, the coincidence rate is read off the
/// recorded histogram inside the coincidence window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelRates {
    pub singles_ch1_per_s: f64,
    pub singles_ch2_per_s: f64,
    pub coincidence_per_s: f64,
}

/// One repeat's histogram plus its bookkeeping.
#[derive(Debug, Clone)]
pub struct SimulatedRepeat {
    pub histogram: CoincidenceHistogram,
    pub rates: ChannelRates,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Irf,
    Fluorescence,
}

struct Legs {
    pair_rate_per_s: f64,
    /// Herald-leg detection probability per pair (channel 1).
    p1: f64,
    /// Sample-leg detection probability per pair (channel 2).
    p2: f64,
    tau_ps: Option<f64>,
    label: HistogramLabel,
    stream_bit: u64,
}

fn legs(run: &SimulationRun, mode: Mode) -> Result<Legs, SimError> {
    let inst = &run.instrument;
    let point = run.spdc.point(inst.waveguide_temperature_c)?;
    let pair_rate_per_s = inst.pair_generation_rate_per_s * point.relative_pair_rate;
    let p1 = inst.herald_path_efficiency * inst.nd_transmission_ch1();
    match mode {
        Mode::Irf => Ok(Legs {
            pair_rate_per_s,
            p1,
            p2: inst.excitation_path_efficiency * inst.collection_efficiency,
            tau_ps: None,
            label: HistogramLabel::Irf,
            stream_bit: 0,
        }),
        Mode::Fluorescence => {
            let dye = run.fluorophore.as_ref().ok_or(SimError::MissingFluorophore)?;
            let absorption = dye.absorption.probability(point.lambda_excite_nm);
            Ok(Legs {
                pair_rate_per_s,
                p1,
                p2: inst.excitation_path_efficiency
                    * absorption
                    * dye.quantum_yield
                    * inst.collection_efficiency,
                tau_ps: Some(dye.lifetime_ps()),
                label: HistogramLabel::Fluorescence,
                stream_bit: 1,
            })
        }
    }
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("positive finite Poisson mean").sample(rng)
}

fn sample_events(
    h: &mut CoincidenceHistogram,
    inst: &InstrumentModel,
    tau_ps: Option<f64>,
    expected: f64,
    rng: &mut ChaCha8Rng,
) {
    let n = poisson(rng, expected) as u64;
    let start = h.start_ps();
    let w = h.bin_width_ps();
    let span = h.span_ps();
    let n_bins = h.n_bins();
    let jitters: Vec<Normal<f64>> = [
        inst.detector_jitter_sigma_ch1_ps,
        inst.detector_jitter_sigma_ch2_ps,
        inst.tcspc_jitter_sigma_ps,
    ]
    .iter()
    .filter(|&&s| s > 0.0)
    .map(|&s| Normal::new(0.0, s).expect("non-negative jitter"))
    .collect();
    let decay = tau_ps.map(|tau| Exp::new(1.0 / tau).expect("positive lifetime"));

    let counts = h.counts_mut();
    for _ in 0..n {
        let mut t = inst.apparatus_delay_ps;
        for j in &jitters {
            t += j.sample(rng);
        }
        if let Some(d) = &decay {
            t += d.sample(rng);
        }
        let rel = t - start;
        // delays outside the recording window are simply never histogrammed
        if rel >= 0.0 && rel < span {
            counts[((rel / w) as usize).min(n_bins - 1)] += 1.0;
        }
    }
}

fn sample_binned(
    h: &mut CoincidenceHistogram,
    mu_ps: f64,
    sigma_ps: f64,
    tau_ps: Option<f64>,
    expected: f64,
    rng: &mut ChaCha8Rng,
) {
    let start = h.start_ps();
    let w = h.bin_width_ps();
    let cdf = |t: f64| match tau_ps {
        Some(tau) => models::convolved_decay_cdf(t, tau, sigma_ps, mu_ps),
        None => models::irf_cdf(t, mu_ps, sigma_ps),
    };
    let mut lo = cdf(start);
    let n_bins = h.n_bins();
    let counts = h.counts_mut();
    for (i, c) in counts.iter_mut().enumerate().take(n_bins) {
        let hi = cdf(start + w * (i as f64 + 1.0));
        let mass = (hi - lo).max(0.0);
        *c += poisson(rng, expected * mass);
        lo = hi;
    }
}

/// Return `histogram` plus an independent Poisson sample per bin with mean
/// `r1 * r2 * bin_width * T` — the uniform accidental-coincidence floor of
/// two uncorrelated detection streams. Zero rates leave the histogram
/// untouched and consume no randomness.
pub fn inject_accidentals<R: Rng>(
    histogram: &CoincidenceHistogram,
    r1_per_s: f64,
    r2_per_s: f64,
    integration_time_s: f64,
    rng: &mut R,
) -> Result<CoincidenceHistogram, SimError> {
    for (name, value) in [("r1", r1_per_s), ("r2", r2_per_s)] {
        if !value.is_finite() || value < 0.0 {
            return Err(SimError::BadRate { name, value });
        }
    }
    if !(integration_time_s > 0.0) || !integration_time_s.is_finite() {
        return Err(SimError::BadIntegrationTime(integration_time_s));
    }
    let mean =
        r1_per_s * r2_per_s * (histogram.bin_width_ps() * 1e-12) * integration_time_s;
    let mut out = histogram.clone();
    if mean > 0.0 {
        let floor = Poisson::new(mean).expect("positive finite Poisson mean");
        for c in out.counts_mut() {
            *c += floor.sample(rng);
        }
    }
    Ok(out)
}

fn simulate_mode(run: &SimulationRun, mode: Mode) -> Result<Vec<SimulatedRepeat>, SimError> {
    run.validate()?;
    let legs = legs(run, mode)?;
    let inst = &run.instrument;
    let t_s = run.integration_time_s;

    let r_coin_true = legs.pair_rate_per_s * legs.p1 * legs.p2;
    let r1_true = legs.pair_rate_per_s * legs.p1 + inst.dark_rate_ch1_per_s;
    let r2_true = legs.pair_rate_per_s * legs.p2 + inst.dark_rate_ch2_per_s;
    let sigma_eff = inst.sigma_irf_ps();

    let mut out = Vec::with_capacity(run.repeats as usize);
    for repeat in 0..run.repeats as u64 {
        let mut rng = repeat_rng(run.rng_seed, 2 * repeat + legs.stream_bit);
        let mut h = CoincidenceHistogram::zeroed(
            legs.label,
            inst.bin_width_ps,
            inst.n_bins,
            t_s,
        )?;

        let expected = r_coin_true * t_s;
        if expected > EVENT_PATH_MAX_EXPECTED && sigma_eff > 0.0 {
            sample_binned(
                &mut h,
                inst.apparatus_delay_ps,
                sigma_eff,
                legs.tau_ps,
                expected,
                &mut rng,
            );
        } else {
            sample_events(&mut h, inst, legs.tau_ps, expected, &mut rng);
        }

        let singles_ch1_per_s = poisson(&mut rng, r1_true * t_s) / t_s;
        let singles_ch2_per_s = poisson(&mut rng, r2_true * t_s) / t_s;
        let h = inject_accidentals(&h, r1_true, r2_true, t_s, &mut rng)?;

        let coincidences: f64 = (0..h.n_bins())
            .filter(|&i| h.bin_center(i) < inst.coincidence_window_ps)
            .map(|i| h.counts()[i])
            .sum();

        let mut warnings = Vec::new();
        for (channel, rate) in [("channel 1", r1_true), ("channel 2", r2_true)] {
            if rate > inst.detector_saturation_rate_per_s {
                let msg = format!(
                    "{channel} singles rate {rate:.3e}/s exceeds the detector saturation \
                     rate {:.3e}/s; expect pile-up artifacts in real hardware",
                    inst.detector_saturation_rate_per_s
                );
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }

        out.push(SimulatedRepeat {
            histogram: h,
            rates: ChannelRates {
                singles_ch1_per_s,
                singles_ch2_per_s,
                coincidence_per_s: coincidences / t_s,
            },
            warnings,
        });
    }
    Ok(out)
}

/// Record the instrument response: mirror in the sample position, so the
/// channel-2 leg is just path and collection losses and the delay carries
/// no decay term. Any fluorophore on the run is ignored.
pub fn simulate_irf(run: &SimulationRun) -> Result<Vec<SimulatedRepeat>, SimError> {
    simulate_mode(run, Mode::Irf)
}

/// Record the fluorescence decay: the channel-2 leg additionally requires
/// absorption at the excitation wavelength and emission (quantum yield),
/// and each coincidence delay gains an `Exp(tau)` term.
pub fn simulate_fluorescence(run: &SimulationRun) -> Result<Vec<SimulatedRepeat>, SimError> {
    simulate_mode(run, Mode::Fluorescence)
}
