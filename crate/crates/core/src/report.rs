//! Sweep result aggregation: one row per (setting value, seed) and CSV
//! writers for the full table plus the two per-setting summaries (lifetime
//! and figure of merit versus setting) that the plots are drawn from.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// Which knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    IntegrationTime,
    OpticalDensity,
    Temperature,
}

impl SweepAxis {
    /// The standard ladder for this axis: fourteen counting times from 1 s
    /// to 1 h, six filter densities, or waveguide temperatures from 63.0 to
    /// 70.0 degC in half-degree steps.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::IntegrationTime => vec![
                1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 60.0, 120.0, 240.0, 300.0, 600.0, 900.0,
                1800.0, 3600.0,
            ],
            SweepAxis::OpticalDensity => vec![0.3, 0.6, 1.0, 1.5, 2.0, 4.0],
            SweepAxis::Temperature => (0..=14).map(|i| 63.0 + 0.5 * i as f64).collect(),
        }
    }

    /// How many independent runs are taken per value by default.
    pub fn default_repeats(self) -> u32 {
        match self {
            SweepAxis::IntegrationTime => 3,
            SweepAxis::OpticalDensity => 2,
            SweepAxis::Temperature => 4,
        }
    }

    /// Column header for the swept value.
    pub fn column_name(self) -> &'static str {
        match self {
            SweepAxis::IntegrationTime => "integration_time_s",
            SweepAxis::OpticalDensity => "nd_filter_od_ch1",
            SweepAxis::Temperature => "waveguide_temperature_c",
        }
    }
}

/// One simulate-and-analyze cycle at one setting value. Metric fields are
/// absent when the cycle failed; `error` says why.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: f64,
    pub seed: u64,
    pub tau_ps: Option<f64>,
    /// Fit standard error on the lifetime for this single cycle.
    pub sigma_tau_ps: Option<f64>,
    pub snr_irf: Option<f64>,
    pub snr_f: Option<f64>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub n_total: Option<f64>,
    pub figure_of_merit: Option<f64>,
    pub error: Option<String>,
}

/// Per-setting aggregate over the successful rows.
#[derive(Debug, Clone, Serialize)]
pub struct SettingSummary {
    pub setting: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_tau_ps: Option<f64>,
    /// Sample standard deviation of the lifetime across rows; needs at
    /// least two successes.
    pub std_tau_ps: Option<f64>,
    /// `std_tau_ps / mean_tau_ps`, the stability measure.
    pub relative_spread: Option<f64>,
    pub mean_snr_f: Option<f64>,
    pub mean_eta2: Option<f64>,
    pub mean_figure_of_merit: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let mean = mean_of(values)?;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

impl SweepReport {
    pub fn new(axis: SweepAxis) -> Self {
        Self { axis, rows: Vec::new() }
    }

    /// Order rows by setting value, then seed, so output is stable no
    /// matter which worker finished first.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.setting
                .total_cmp(&b.setting)
                .then_with(|| a.seed.cmp(&b.seed))
        });
    }

    /// Full table, one row per cycle.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "{},seed,tau_ps,sigma_tau_ps,snr_irf,snr_f,eta1,eta2,n_total,figure_of_merit,error",
            self.axis.column_name()
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.setting,
                r.seed,
                opt(r.tau_ps),
                opt(r.sigma_tau_ps),
                opt(r.snr_irf),
                opt(r.snr_f),
                opt(r.eta1),
                opt(r.eta2),
                opt(r.n_total),
                opt(r.figure_of_merit),
                csv_field(r.error.as_deref().unwrap_or(""))
            )?;
        }
        Ok(())
    }

    /// Collapse rows into one summary per distinct setting value, ordered
    /// by setting.
    pub fn setting_summaries(&self) -> Vec<SettingSummary> {
        let mut settings: Vec<f64> = self.rows.iter().map(|r| r.setting).collect();
        settings.sort_by(f64::total_cmp);
        settings.dedup();

        settings
            .into_iter()
            .map(|setting| {
                let rows: Vec<&SweepRow> =
                    self.rows.iter().filter(|r| r.setting == setting).collect();
                let taus: Vec<f64> = rows.iter().filter_map(|r| r.tau_ps).collect();
                let snrs: Vec<f64> = rows.iter().filter_map(|r| r.snr_f).collect();
                let etas: Vec<f64> = rows.iter().filter_map(|r| r.eta2).collect();
                let foms: Vec<f64> = rows.iter().filter_map(|r| r.figure_of_merit).collect();
                let mean_tau = mean_of(&taus);
                let std_tau = sample_std(&taus);
                SettingSummary {
                    setting,
                    n_ok: taus.len(),
                    n_failed: rows.len() - taus.len(),
                    mean_tau_ps: mean_tau,
                    std_tau_ps: std_tau,
                    relative_spread: match (std_tau, mean_tau) {
                        (Some(s), Some(m)) if m != 0.0 => Some(s / m),
                        _ => None,
                    },
                    mean_snr_f: mean_of(&snrs),
                    mean_eta2: mean_of(&etas),
                    mean_figure_of_merit: mean_of(&foms),
                }
            })
            .collect()
    }

    /// Lifetime-versus-setting table: the stability plot.
    pub fn write_lifetime_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "{},n_ok,n_failed,mean_tau_ps,std_tau_ps,relative_spread",
            self.axis.column_name()
        )?;
        for s in self.setting_summaries() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.setting,
                s.n_ok,
                s.n_failed,
                opt(s.mean_tau_ps),
                opt(s.std_tau_ps),
                opt(s.relative_spread)
            )?;
        }
        Ok(())
    }

    /// Figure-of-merit-versus-setting table, with the SNR and efficiency
    /// context columns.
    pub fn write_figure_of_merit_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "{},n_ok,mean_figure_of_merit,mean_snr_f,mean_eta2",
            self.axis.column_name()
        )?;
        for s in self.setting_summaries() {
            writeln!(
                w,
                "{},{},{},{},{}",
                s.setting,
                s.n_ok,
                opt(s.mean_figure_of_merit),
                opt(s.mean_snr_f),
                opt(s.mean_eta2)
            )?;
        }
        Ok(())
    }
}
