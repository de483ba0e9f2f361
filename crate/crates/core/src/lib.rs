//! Core library for `pairflim`: a start-to-finish emulation of fluorescence
//! lifetime measurement with time-correlated photon pairs.
//!
//! The crate is organised the way the experiment is:
//!
//! * [`models`] — closed-form curves: the exponential decay, the Gaussian
//!   instrument response (IRF), and their convolution (the measured decay).
//! * [`sim`] — Monte Carlo generation of coincidence histograms from an
//!   [`InstrumentModel`] / [`FluorophoreModel`] pair, including SPDC
//!   temperature tuning and the uncorrelated accidental floor.
//! * [`analysis`] — the post-processing pipeline: background subtraction,
//!   repeat averaging, IRF alignment, and least-squares fits of the IRF and
//!   the decay, built on a small self-contained Levenberg–Marquardt solver.
//! * [`metrics`] — signal-to-noise ratios, heralding efficiencies, histogram
//!   mass and the photon-economy figure of merit.
//!
//! All times are picoseconds, integration times are seconds, and rates are
//! counts per second unless a name says otherwise.

pub mod analysis;
pub mod config;
pub mod histogram;
pub mod instrument;
pub mod metrics;
pub mod models;
pub mod report;
pub mod sim;
pub mod special;

pub use analysis::{
    align_histograms, average_repeats, fit_decay, fit_irf, run_pipeline, subtract_background,
    DecayFit, GaussianFit, PipelineConfig, PipelineError, PipelineOutput,
};
pub use config::RunConfig;
pub use histogram::{CoincidenceHistogram, HistogramError, HistogramLabel};
pub use instrument::{FluorophoreModel, InstrumentModel, LogisticAbsorption, ModelError};
pub use metrics::{
    figure_of_merit, heralding_efficiency, histogram_mass, snr, MetricReport, MetricsError,
};
pub use report::{SweepAxis, SweepReport, SweepRow};
pub use sim::{
    inject_accidentals, simulate_fluorescence, simulate_irf, spdc_tuning, ChannelRates, SimError,
    SimulatedRepeat, SimulationRun, SpdcSpectrumPoint, SpdcTuning,
};
