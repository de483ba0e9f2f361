//! `pairflim analyze`: load every histogram CSV in a directory, run the
//! pipeline, and write a JSON report of fits and metrics.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use pairflim_core::metrics::compile_report;
use pairflim_core::{
    run_pipeline, CoincidenceHistogram, HistogramLabel, MetricReport, PipelineOutput,
};

use crate::errors::{Category, CliError};
use crate::manifest;
use crate::simulate::load_config;
use crate::AnalyzeArgs;

#[derive(Serialize)]
struct AnalyzeReport {
    input_files: Vec<String>,
    pipeline: PipelineOutput,
    metrics: MetricReport,
}

/// Histogram CSVs are recognised by extension plus the presence of their
/// metadata sidecar; anything else in the directory is ignored.
fn dataset_paths(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv")
            && CoincidenceHistogram::meta_path_for(&path).exists()
        {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_ref())?;
    let mut pipeline_cfg = cfg.pipeline.clone();
    if args.dump_solver_trace {
        pipeline_cfg.record_solver_trace = true;
    }

    let paths = dataset_paths(&args.in_dir)?;
    if paths.is_empty() {
        return Err(CliError::new(
            Category::Config,
            format!(
                "no datasets found in {} (expected histogram CSVs with .meta.toml sidecars)",
                args.in_dir.display()
            ),
        ));
    }

    let mut irf_reps = Vec::new();
    let mut fluor_reps = Vec::new();
    let mut input_files = Vec::new();
    for path in &paths {
        let h = CoincidenceHistogram::load(path)?;
        input_files.push(path.file_name().unwrap_or_default().to_string_lossy().into_owned());
        match h.label() {
            HistogramLabel::Irf => irf_reps.push(h),
            HistogramLabel::Fluorescence => fluor_reps.push(h),
        }
    }
    for (what, list) in [("response (irf)", &irf_reps), ("fluorescence", &fluor_reps)] {
        if list.is_empty() {
            return Err(CliError::new(
                Category::Config,
                format!("no {what} datasets in {}", args.in_dir.display()),
            ));
        }
    }

    let out = run_pipeline(&irf_reps, &fluor_reps, &pipeline_cfg)?;
    let rates = manifest::rates_from_dir(&args.in_dir);
    let metrics = compile_report(
        &out.provenance.corrected_irf,
        &out.provenance.corrected_fluorescence,
        rates.as_ref(),
        &out.decay_fit,
        pipeline_cfg.background_window_bins,
    );

    println!(
        "lifetime: {:.2} +- {:.2} ps  (response centre {:.1} ps, width {:.2} ps)",
        out.decay_fit.tau_ps,
        out.decay_fit.std_error_tau_ps,
        out.irf_fit.mu_irf_ps,
        out.irf_fit.sigma_irf_ps
    );
    println!(
        "snr: response {} / decay {}   eta1 {}   eta2 {}   counts {:.3e}",
        fmt_opt(metrics.snr_irf),
        fmt_opt(metrics.snr_f),
        fmt_opt(metrics.eta1),
        fmt_opt(metrics.eta2),
        metrics.n_total
    );
    for w in metrics.warnings.iter().chain(&out.decay_fit.warnings) {
        eprintln!("warning: {w}");
    }

    let report = AnalyzeReport { input_files, pipeline: out, metrics };
    let out_path = args
        .out
        .clone()
        .unwrap_or_else(|| args.in_dir.join("report.json"));
    fs::write(&out_path, serde_json::to_string_pretty(&report)?)?;
    println!("report: {}", out_path.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
}
