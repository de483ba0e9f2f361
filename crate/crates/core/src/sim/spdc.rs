//! Temperature tuning of the photon-pair source spectrum.
//!
//! The waveguide emits degenerate pairs at 810 nm at the degeneracy
//! temperature; heating splits the spectrum into a short excitation
//! wavelength and a long herald wavelength. The split is modeled as growing
//! with the square root of the temperature excess, calibrated so that 8 °C
//! above degeneracy gives a separation of about 60 nm, and the pair rate
//! falls off linearly with temperature. The herald wavelength is computed
//! from energy conservation, so `1/herald + 1/excite = 2/degenerate` holds
//! by construction, not within a tolerance.

use serde::{Deserialize, Serialize};

use super::SimError;

/// Calibration constants of the tuning curve. These are acknowledged
/// approximations of a measured spectrum and live in the config so they can
/// be refit without touching code.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdcTuning {
    pub degenerate_wavelength_nm: f64,
    pub degeneracy_temperature_c: f64,
    /// Wavelength split per sqrt(°C above degeneracy), on the excitation side.
    pub split_coefficient_nm_per_sqrt_c: f64,
    /// Fractional pair-rate loss per °C above degeneracy.
    pub rate_slope_per_c: f64,
    /// The linear rate model is floored here instead of reaching zero.
    pub min_relative_rate: f64,
}

impl Default for SpdcTuning {
    fn default() -> Self {
        Self {
            degenerate_wavelength_nm: 810.0,
            degeneracy_temperature_c: 62.0,
            split_coefficient_nm_per_sqrt_c: 10.25,
            rate_slope_per_c: 0.0625,
            min_relative_rate: 0.01,
        }
    }
}

/// The source spectrum at one waveguide temperature.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpdcSpectrumPoint {
    pub temperature_c: f64,
    pub lambda_herald_nm: f64,
    pub lambda_excite_nm: f64,
    pub relative_pair_rate: f64,
}

impl SpdcTuning {
    pub fn validate(&self) -> Result<(), SimError> {
        let all_finite = self.degenerate_wavelength_nm.is_finite()
            && self.degeneracy_temperature_c.is_finite()
            && self.split_coefficient_nm_per_sqrt_c.is_finite()
            && self.rate_slope_per_c.is_finite()
            && self.min_relative_rate.is_finite();
        if !all_finite
            || self.degenerate_wavelength_nm <= 0.0
            || self.split_coefficient_nm_per_sqrt_c < 0.0
            || self.rate_slope_per_c < 0.0
            || self.min_relative_rate <= 0.0
            || self.min_relative_rate > 1.0
        {
            return Err(SimError::BadTuning);
        }
        Ok(())
    }

    /// Spectrum at `temperature_c`, which must not be below the degeneracy
    /// point — the source is not operated there.
    pub fn point(&self, temperature_c: f64) -> Result<SpdcSpectrumPoint, SimError> {
        self.validate()?;
        if !temperature_c.is_finite() || temperature_c < self.degeneracy_temperature_c {
            return Err(SimError::UnsupportedTemperature {
                temperature_c,
                reason: "below the degeneracy point",
            });
        }
        let excess = temperature_c - self.degeneracy_temperature_c;
        let lambda_excite_nm =
            self.degenerate_wavelength_nm - self.split_coefficient_nm_per_sqrt_c * excess.sqrt();
        // energy conservation fixes the herald side; refuse the unphysical
        // regime where the excitation photon would carry more than the
        // whole pair energy
        let inv_herald = 2.0 / self.degenerate_wavelength_nm - 1.0 / lambda_excite_nm;
        if lambda_excite_nm <= 0.0 || inv_herald <= 0.0 {
            return Err(SimError::UnsupportedTemperature {
                temperature_c,
                reason: "tuning curve leaves the physical range",
            });
        }
        let relative_pair_rate =
            (1.0 - self.rate_slope_per_c * excess).max(self.min_relative_rate);
        Ok(SpdcSpectrumPoint {
            temperature_c,
            lambda_herald_nm: 1.0 / inv_herald,
            lambda_excite_nm,
            relative_pair_rate,
        })
    }
}

/// Spectrum at `temperature_c` under the default calibration.
pub fn spdc_tuning(temperature_c: f64) -> Result<SpdcSpectrumPoint, SimError> {
    SpdcTuning::default().point(temperature_c)
}
