//! On-disk run configuration: one TOML file describing the bench, the
//! sample, the run parameters and the analysis settings. Field names mirror
//! the in-memory types one-to-one so a config file reads like the structs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::PipelineConfig;
use crate::instrument::{FluorophoreModel, InstrumentModel};
use crate::sim::{SimError, SimulationRun, SpdcTuning};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config file {path}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("pipeline.{field} = {value} violates {constraint}")]
    BadPipelineKnob {
        field: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error(transparent)]
    Invalid(#[from] SimError),
}

/// Complete description of one run. Every key has a default, so an empty
/// file is a valid config and a partial file overrides only what it names.
/// Unknown keys are rejected rather than silently ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Counting time per repeat, seconds.
    pub integration_time_s: f64,
    /// Histograms recorded per mode; the pipeline averages them.
    pub repeats: u32,
    pub rng_seed: u64,
    pub instrument: InstrumentModel,
    /// The sample. Always present in a config; response-only runs simply
    /// ignore it.
    pub fluorophore: FluorophoreModel,
    pub spdc: SpdcTuning,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let run = SimulationRun::default();
        Self {
            integration_time_s: run.integration_time_s,
            repeats: run.repeats,
            rng_seed: run.rng_seed,
            instrument: run.instrument,
            fluorophore: run.fluorophore.expect("default run carries a sample"),
            spdc: run.spdc,
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source: Box::new(source),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.to_simulation_run().validate()?;
        let p = &self.pipeline;
        if p.background_window_bins == 0 || p.background_window_bins >= self.instrument.n_bins {
            return Err(ConfigError::BadPipelineKnob {
                field: "background_window_bins",
                value: p.background_window_bins as f64,
                constraint: "in [1, n_bins)",
            });
        }
        if p.solver_max_iterations == 0 {
            return Err(ConfigError::BadPipelineKnob {
                field: "solver_max_iterations",
                value: 0.0,
                constraint: ">= 1",
            });
        }
        if !(p.solver_relative_tolerance > 0.0) || !p.solver_relative_tolerance.is_finite() {
            return Err(ConfigError::BadPipelineKnob {
                field: "solver_relative_tolerance",
                value: p.solver_relative_tolerance,
                constraint: "> 0 and finite",
            });
        }
        if !(p.min_snr_irf >= 0.0) {
            return Err(ConfigError::BadPipelineKnob {
                field: "min_snr_irf",
                value: p.min_snr_irf,
                constraint: ">= 0",
            });
        }
        if !(p.snr_f_warning_floor >= 0.0) {
            return Err(ConfigError::BadPipelineKnob {
                field: "snr_f_warning_floor",
                value: p.snr_f_warning_floor,
                constraint: ">= 0",
            });
        }
        Ok(())
    }

    /// The simulation view of this config; the sample rides along and
    /// response-mode runs ignore it.
    pub fn to_simulation_run(&self) -> SimulationRun {
        SimulationRun {
            instrument: self.instrument.clone(),
            fluorophore: Some(self.fluorophore),
            integration_time_s: self.integration_time_s,
            repeats: self.repeats,
            rng_seed: self.rng_seed,
            spdc: self.spdc.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.integration_time_s, cfg.integration_time_s);
        assert_eq!(back.rng_seed, cfg.rng_seed);
        assert_eq!(back.instrument, cfg.instrument);
        assert_eq!(back.fluorophore, cfg.fluorophore);
    }

    #[test]
    fn empty_and_partial_files_fill_in_defaults() {
        let empty: RunConfig = toml::from_str("").unwrap();
        assert_eq!(empty.repeats, 3);
        assert_eq!(empty.integration_time_s, 900.0);

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "integration_time_s = 60.0\n\n[instrument]\nnd_filter_od_ch1 = 1.5\n"
        )
        .unwrap();
        let cfg = RunConfig::load(f.path()).unwrap();
        assert_eq!(cfg.integration_time_s, 60.0);
        assert_eq!(cfg.instrument.nd_filter_od_ch1, 1.5);
        // untouched keys keep their defaults
        assert_eq!(cfg.instrument.bin_width_ps, 2.0);
        assert_eq!(cfg.repeats, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "integration_time = 60.0").unwrap(); // missing the _s
        assert!(matches!(
            RunConfig::load(f.path()),
            Err(ConfigError::Parse { .. })
        ));

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "[instrument]\nnd_filter = 1.0").unwrap();
        assert!(matches!(
            RunConfig::load(g.path()),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(
            RunConfig::load(Path::new("/nonexistent/run.toml")),
            Err(ConfigError::Io { .. })
        ));
    }

    #[test]
    fn out_of_range_values_fail_validation() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "integration_time_s = -5.0").unwrap();
        assert!(matches!(
            RunConfig::load(f.path()),
            Err(ConfigError::Invalid(_))
        ));

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "[pipeline]\nsolver_relative_tolerance = 0.0").unwrap();
        assert!(matches!(
            RunConfig::load(g.path()),
            Err(ConfigError::BadPipelineKnob { field: "solver_relative_tolerance", .. })
        ));

        let mut h = tempfile::NamedTempFile::new().unwrap();
        writeln!(h, "[pipeline]\nbackground_window_bins = 0").unwrap();
        assert!(matches!(
            RunConfig::load(h.path()),
            Err(ConfigError::BadPipelineKnob { field: "background_window_bins", .. })
        ));
    }

    #[test]
    fn simulation_view_carries_the_sample() {
        let cfg = RunConfig::default();
        let run = cfg.to_simulation_run();
        assert!(run.fluorophore.is_some());
        assert_eq!(run.integration_time_s, cfg.integration_time_s);
        assert_eq!(run.rng_seed, cfg.rng_seed);
        run.validate().unwrap();
    }
}
