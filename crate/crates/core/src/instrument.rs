//! Apparatus and sample descriptions.
//!
//! [`InstrumentModel`] carries every knob of the bench: timing jitters, path
//! efficiencies, the ND filter on the herald arm, dark/stray count rates,
//! histogram geometry and the waveguide temperature. [`FluorophoreModel`]
//! carries the sample: radiative/non-radiative rates plus a wavelength
//! response for how efficiently the tuned excitation photon is absorbed.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{field} = {value} violates {constraint}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error(
        "quantum_yield = {stated} disagrees with radiative/(radiative+nonradiative) = {derived}"
    )]
    QuantumYieldInconsistent { stated: f64, derived: f64 },
}

fn check(
    ok: bool,
    field: &'static str,
    value: f64,
    constraint: &'static str,
) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::OutOfRange { field, value, constraint })
    }
}

/// Full description of the measurement apparatus.
///
/// Defaults reproduce the reference bench: 350 ps jitter on each detector,
/// 3 ps on the timing electronics, 2 ps bins x 5000 bins, and rates that put
/// a 15-minute fluorescence run at a few 1e5 coincidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstrumentModel {
    /// Gaussian timing jitter of the herald detector (ps, one sigma).
    pub detector_jitter_sigma_ch1_ps: f64,
    /// Gaussian timing jitter of the signal detector (ps, one sigma).
    pub detector_jitter_sigma_ch2_ps: f64,
    /// Gaussian jitter of the coincidence electronics (ps, one sigma).
    pub tcspc_jitter_sigma_ps: f64,
    /// Fixed optical/electronic delay between the two arms (ps); sets where
    /// the peak lands in the histogram window.
    pub apparatus_delay_ps: f64,
    /// Photon-pair generation rate of the source (pairs/s) at the
    /// degeneracy temperature.
    pub pair_generation_rate_per_s: f64,
    /// Survival probability of the herald photon through its arm,
    /// detector efficiency included (before the ND filter).
    pub herald_path_efficiency: f64,
    /// Survival probability of the excitation photon up to the sample.
    pub excitation_path_efficiency: f64,
    /// Probability that an emitted fluorescence photon is collected and
    /// detected (mirror mode: that the reflected photon is).
    pub collection_efficiency: f64,
    /// Optical density of the neutral-density filter in the herald arm;
    /// transmission is 10^(-OD).
    pub nd_filter_od_ch1: f64,
    /// Uncorrelated counts/s on the herald detector (dark + stray light).
    pub dark_rate_ch1_per_s: f64,
    /// Uncorrelated counts/s on the signal detector (dark + stray light).
    pub dark_rate_ch2_per_s: f64,
    /// Width of the delay window accepted as a coincidence (ps).
    pub coincidence_window_ps: f64,
    /// Waveguide temperature steering the pair spectrum (deg C).
    pub waveguide_temperature_c: f64,
    /// Histogram bin width (ps).
    pub bin_width_ps: f64,
    /// Number of histogram bins.
    pub n_bins: usize,
    /// Single-channel rate above which a saturation warning is attached.
    pub detector_saturation_rate_per_s: f64,
}

impl Default for InstrumentModel {
    fn default() -> Self {
        Self {
            detector_jitter_sigma_ch1_ps: 350.0,
            detector_jitter_sigma_ch2_ps: 350.0,
            tcspc_jitter_sigma_ps: 3.0,
            apparatus_delay_ps: 3000.0,
            pair_generation_rate_per_s: 2.0e6,
            herald_path_efficiency: 0.30,
            excitation_path_efficiency: 0.50,
            collection_efficiency: 0.10,
            nd_filter_od_ch1: 0.0,
            dark_rate_ch1_per_s: 20_000.0,
            dark_rate_ch2_per_s: 4500.0,
            coincidence_window_ps: 10_000.0,
            waveguide_temperature_c: 64.0,
            bin_width_ps: 2.0,
            n_bins: 5000,
            detector_saturation_rate_per_s: 1.0e7,
        }
    }
}

impl InstrumentModel {
    /// Effective IRF width: the three independent Gaussian jitters add in
    /// quadrature. With the defaults this is sqrt(350^2 + 350^2 + 3^2)
    /// ~ 495 ps.
    pub fn sigma_irf_ps(&self) -> f64 {
        (self.detector_jitter_sigma_ch1_ps.powi(2)
            + self.detector_jitter_sigma_ch2_ps.powi(2)
            + self.tcspc_jitter_sigma_ps.powi(2))
        .sqrt()
    }

    /// Transmission of the herald-arm ND filter.
    pub fn nd_transmission_ch1(&self) -> f64 {
        10f64.powf(-self.nd_filter_od_ch1)
    }

    /// Histogram span, ps.
    pub fn span_ps(&self) -> f64 {
        self.bin_width_ps * self.n_bins as f64
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check(
            self.detector_jitter_sigma_ch1_ps >= 0.0,
            "detector_jitter_sigma_ch1_ps",
            self.detector_jitter_sigma_ch1_ps,
            ">= 0",
        )?;
        check(
            self.detector_jitter_sigma_ch2_ps >= 0.0,
            "detector_jitter_sigma_ch2_ps",
            self.detector_jitter_sigma_ch2_ps,
            ">= 0",
        )?;
        check(
            self.tcspc_jitter_sigma_ps >= 0.0,
            "tcspc_jitter_sigma_ps",
            self.tcspc_jitter_sigma_ps,
            ">= 0",
        )?;
        check(
            self.apparatus_delay_ps.is_finite(),
            "apparatus_delay_ps",
            self.apparatus_delay_ps,
            "finite",
        )?;
        check(
            self.pair_generation_rate_per_s >= 0.0,
            "pair_generation_rate_per_s",
            self.pair_generation_rate_per_s,
            ">= 0",
        )?;
        for (field, v) in [
            ("herald_path_efficiency", self.herald_path_efficiency),
            ("excitation_path_efficiency", self.excitation_path_efficiency),
            ("collection_efficiency", self.collection_efficiency),
        ] {
            check((0.0..=1.0).contains(&v), field, v, "in [0, 1]")?;
        }
        check(self.nd_filter_od_ch1 >= 0.0, "nd_filter_od_ch1", self.nd_filter_od_ch1, ">= 0")?;
        check(self.dark_rate_ch1_per_s >= 0.0, "dark_rate_ch1_per_s", self.dark_rate_ch1_per_s, ">= 0")?;
        check(self.dark_rate_ch2_per_s >= 0.0, "dark_rate_ch2_per_s", self.dark_rate_ch2_per_s, ">= 0")?;
        check(
            self.coincidence_window_ps > 0.0,
            "coincidence_window_ps",
            self.coincidence_window_ps,
            "> 0",
        )?;
        check(
            self.waveguide_temperature_c.is_finite(),
            "waveguide_temperature_c",
            self.waveguide_temperature_c,
            "finite",
        )?;
        check(self.bin_width_ps > 0.0, "bin_width_ps", self.bin_width_ps, "> 0")?;
        check(self.n_bins >= 1, "n_bins", self.n_bins as f64, ">= 1")?;
        check(
            self.detector_saturation_rate_per_s > 0.0,
            "detector_saturation_rate_per_s",
            self.detector_saturation_rate_per_s,
            "> 0",
        )?;
        Ok(())
    }
}

/// Smooth step from full absorption at short wavelengths to none at long
/// ones: `p(lambda) = 1 / (1 + exp((lambda - center)/width))`.
///
/// Defaults put the edge at 790 nm with ~2.5 nm width, i.e. essentially 1
/// below 780 nm and essentially 0 above 800 nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticAbsorption {
    pub center_nm: f64,
    pub width_nm: f64,
}

impl Default for LogisticAbsorption {
    fn default() -> Self {
        Self { center_nm: 790.0, width_nm: 2.5 }
    }
}

impl LogisticAbsorption {
    /// Excitation probability at the given wavelength; monotone decreasing.
    pub fn probability(&self, lambda_nm: f64) -> f64 {
        1.0 / (1.0 + ((lambda_nm - self.center_nm) / self.width_nm).exp())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.width_nm > 0.0, "absorption.width_nm", self.width_nm, "> 0")?;
        check(self.center_nm > 0.0, "absorption.center_nm", self.center_nm, "> 0")
    }
}

/// Two-level emitter: excited state drains through a radiative and a
/// non-radiative channel, so the observed lifetime is `1 / (k_r + k_nr)`
/// and the quantum yield is the radiative share of that total rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluorophoreModel {
    /// Radiative decay rate, 1/ns.
    pub radiative_rate_per_ns: f64,
    /// Non-radiative decay rate, 1/ns.
    pub nonradiative_rate_per_ns: f64,
    /// Probability that an absorbed photon is re-emitted.
    pub quantum_yield: f64,
    /// Absorption response versus excitation wavelength.
    pub absorption: LogisticAbsorption,
}

impl Default for FluorophoreModel {
    fn default() -> Self {
        // 885 ps lifetime at 0.167 quantum yield.
        Self::from_lifetime_and_yield(885.0, 0.167)
    }
}

impl FluorophoreModel {
    /// Build from the quantities usually quoted on a datasheet.
    pub fn from_lifetime_and_yield(lifetime_ps: f64, quantum_yield: f64) -> Self {
        let total_per_ns = 1000.0 / lifetime_ps;
        Self {
            radiative_rate_per_ns: quantum_yield * total_per_ns,
            nonradiative_rate_per_ns: (1.0 - quantum_yield) * total_per_ns,
            quantum_yield,
            absorption: LogisticAbsorption::default(),
        }
    }

    /// Excited-state lifetime: reciprocal of the *summed* decay rates.
    pub fn lifetime_ps(&self) -> f64 {
        1000.0 / (self.radiative_rate_per_ns + self.nonradiative_rate_per_ns)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check(
            self.radiative_rate_per_ns > 0.0,
            "radiative_rate_per_ns",
            self.radiative_rate_per_ns,
            "> 0",
        )?;
        check(
            self.nonradiative_rate_per_ns >= 0.0,
            "nonradiative_rate_per_ns",
            self.nonradiative_rate_per_ns,
            ">= 0",
        )?;
        check(
            self.quantum_yield > 0.0 && self.quantum_yield <= 1.0,
            "quantum_yield",
            self.quantum_yield,
            "in (0, 1]",
        )?;
        self.absorption.validate()?;
        let derived = self.radiative_rate_per_ns
            / (self.radiative_rate_per_ns + self.nonradiative_rate_per_ns);
        if (derived - self.quantum_yield).abs() > 1e-3 {
            return Err(ModelError::QuantumYieldInconsistent {
                stated: self.quantum_yield,
                derived,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn defaults_validate() {
        InstrumentModel::default().validate().unwrap();
        FluorophoreModel::default().validate().unwrap();
    }

    #[test]
    fn sigma_irf_composes_in_quadrature() {
        // sqrt(350^2 + 350^2 + 3^2), mpmath
        assert_relative_eq!(
            InstrumentModel::default().sigma_irf_ps(),
            494.9838381199935703614,
            max_relative = 1e-14
        );
    }

    #[test]
    fn nd_transmission() {
        let mut m = InstrumentModel::default();
        assert_eq!(m.nd_transmission_ch1(), 1.0);
        m.nd_filter_od_ch1 = 2.0;
        assert_relative_eq!(m.nd_transmission_ch1(), 0.01, max_relative = 1e-12);
    }

    #[test]
    fn default_fluorophore_matches_datasheet() {
        let f = FluorophoreModel::default();
        assert_relative_eq!(f.lifetime_ps(), 885.0, max_relative = 1e-12);
        assert_relative_eq!(f.quantum_yield, 0.167);
        assert_relative_eq!(
            f.radiative_rate_per_ns / (f.radiative_rate_per_ns + f.nonradiative_rate_per_ns),
            0.167,
            max_relative = 1e-12
        );
    }

    #[test]
    fn absorption_edges() {
        let a = LogisticAbsorption::default();
        assert!(a.probability(779.0) > 0.98);
        assert!(a.probability(801.0) < 0.02);
        assert_relative_eq!(a.probability(790.0), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn validation_rejects_out_of_range() {
        let mut m = InstrumentModel::default();
        m.herald_path_efficiency = 1.3;
        assert!(matches!(m.validate(), Err(ModelError::OutOfRange { field, .. })
            if field == "herald_path_efficiency"));

        let mut f = FluorophoreModel::default();
        f.quantum_yield = 0.4; // rates still say 0.167
        assert!(matches!(f.validate(), Err(ModelError::QuantumYieldInconsistent { .. })));

        let mut f2 = FluorophoreModel::default();
        f2.radiative_rate_per_ns = 0.0;
        assert!(f2.validate().is_err());
    }

    proptest! {
        #[test]
        fn absorption_is_monotone_decreasing(
            a in 700.0f64..900.0,
            b in 700.0f64..900.0,
        ) {
            let abs = LogisticAbsorption::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(abs.probability(lo) >= abs.probability(hi));
            prop_assert!((0.0..=1.0).contains(&abs.probability(a)));
        }

        #[test]
        fn lifetime_yield_round_trip(tau in 50.0f64..5000.0, qy in 0.01f64..1.0) {
            let f = FluorophoreModel::from_lifetime_and_yield(tau, qy);
            f.validate().unwrap();
            prop_assert!((f.lifetime_ps() - tau).abs() < 1e-9 * tau);
        }
    }
}
