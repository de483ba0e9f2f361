//! `pairflim sweep`: simulate-and-analyze cycles across a ladder of
//! settings, in parallel, with per-cycle failures recorded in the table
//! instead of aborting the sweep.

use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;

use pairflim_core::metrics::compile_report;
use pairflim_core::sim::{derive_seed, simulate_fluorescence, simulate_irf};
use pairflim_core::{run_pipeline, RunConfig, SweepAxis, SweepReport, SweepRow};

use crate::errors::{Category, CliError};
use crate::manifest;
use crate::simulate::load_config;
use crate::SweepArgs;

fn apply_axis(cfg: &mut RunConfig, axis: SweepAxis, value: f64) {
    match axis {
        SweepAxis::IntegrationTime => cfg.integration_time_s = value,
        SweepAxis::OpticalDensity => cfg.instrument.nd_filter_od_ch1 = value,
        SweepAxis::Temperature => cfg.instrument.waveguide_temperature_c = value,
    }
}

/// One measurement cycle: simulate both modes under the adjusted setting,
/// run the pipeline, compile metrics. Failures land in `row.error`.
fn run_cycle(base: &RunConfig, axis: SweepAxis, setting: f64, seed: u64) -> SweepRow {
    let mut row = SweepRow {
        setting,
        seed,
        tau_ps: None,
        sigma_tau_ps: None,
        snr_irf: None,
        snr_f: None,
        eta1: None,
        eta2: None,
        n_total: None,
        figure_of_merit: None,
        error: None,
    };

    let mut cfg = base.clone();
    apply_axis(&mut cfg, axis, setting);
    cfg.rng_seed = seed;

    let mut attempt = || -> Result<(), CliError> {
        cfg.validate()?;
        let run = cfg.to_simulation_run();
        let irf = simulate_irf(&run)?;
        let fluor = simulate_fluorescence(&run)?;
        let rates = manifest::mean_of(fluor.iter().map(|r| r.rates));

        let irf_hists: Vec<_> = irf.into_iter().map(|r| r.histogram).collect();
        let fluor_hists: Vec<_> = fluor.into_iter().map(|r| r.histogram).collect();
        let out = run_pipeline(&irf_hists, &fluor_hists, &cfg.pipeline)?;
        let metrics = compile_report(
            &out.provenance.corrected_irf,
            &out.provenance.corrected_fluorescence,
            rates.as_ref(),
            &out.decay_fit,
            cfg.pipeline.background_window_bins,
        );

        row.tau_ps = Some(out.decay_fit.tau_ps);
        row.sigma_tau_ps = Some(out.decay_fit.std_error_tau_ps);
        row.snr_irf = metrics.snr_irf;
        row.snr_f = metrics.snr_f;
        row.eta1 = metrics.eta1;
        row.eta2 = metrics.eta2;
        row.n_total = Some(metrics.n_total);
        row.figure_of_merit = metrics.figure_of_merit;
        Ok(())
    };
    if let Err(e) = attempt() {
        row.error = Some(e.to_string());
    }
    row
}

fn save_table(
    path: &Path,
    render: impl FnOnce(&mut Vec<u8>) -> io::Result<()>,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    render(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let base = load_config(args.config.as_ref())?;
    let axis: SweepAxis = args.axis.into();
    let values = args.values.clone().unwrap_or_else(|| axis.default_values());
    if values.is_empty() {
        return Err(CliError::new(Category::Config, "sweep needs at least one value"));
    }
    let repeats = args.repeats.unwrap_or_else(|| axis.default_repeats());
    if repeats == 0 {
        return Err(CliError::new(Category::Config, "sweep needs at least one repeat"));
    }
    let base_seed = args.seed.unwrap_or(base.rng_seed);

    // Seeds key off the setting value, not its position in the list, so a
    // sweep over a subset of values reproduces exactly the rows the full
    // sweep would produce for them.
    let tasks: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| {
            let value_seed = derive_seed(base_seed, v.to_bits());
            (0..repeats).map(move |r| (v, derive_seed(value_seed, r as u64)))
        })
        .collect();

    let rows: Vec<SweepRow> = tasks
        .par_iter()
        .map(|&(value, seed)| run_cycle(&base, axis, value, seed))
        .collect();

    let mut report = SweepReport::new(axis);
    report.rows = rows;
    report.sort();

    fs::create_dir_all(&args.out)?;
    save_table(&args.out.join("sweep_report.csv"), |w| report.write_csv(w))?;
    save_table(&args.out.join("lifetime_vs_setting.csv"), |w| {
        report.write_lifetime_table(w)
    })?;
    save_table(&args.out.join("figure_of_merit_vs_setting.csv"), |w| {
        report.write_figure_of_merit_table(w)
    })?;

    for row in &report.rows {
        if let Some(err) = &row.error {
            eprintln!("warning: {} = {} (seed {}): {err}", axis.column_name(), row.setting, row.seed);
        }
    }
    for s in report.setting_summaries() {
        let tau = match (s.mean_tau_ps, s.std_tau_ps) {
            (Some(m), Some(sd)) => format!("lifetime {m:.1} +- {sd:.1} ps"),
            (Some(m), None) => format!("lifetime {m:.1} ps"),
            _ => "no successful fits".into(),
        };
        println!(
            "{} = {}: {}/{} ok, {}",
            axis.column_name(),
            s.setting,
            s.n_ok,
            s.n_ok + s.n_failed,
            tau
        );
    }
    println!("tables: {}", args.out.display());
    Ok(())
}
