//! End-to-end tests against the built binary: process exit codes, file
//! layouts, determinism, and the numbers coming out of a full
//! simulate-then-analyze round trip.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pairflim_core::{CoincidenceHistogram, HistogramLabel};

const TRUE_TAU_PS: f64 = 885.0;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pairflim"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn pairflim");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn simulate(dir: &Path, seed: u64, integration_time_s: f64) {
    run_ok(bin()
        .arg("simulate")
        .arg("--out")
        .arg(dir)
        .arg("--seed")
        .arg(seed.to_string())
        .arg("--integration-time")
        .arg(integration_time_s.to_string()));
}

fn total_counts_of(csv: &Path) -> f64 {
    fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum()
}

fn sorted_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn simulate_writes_the_expected_files_and_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, 7, 2.0);
    simulate(&b, 7, 2.0);

    let names = sorted_names(&a);
    let mut expected: Vec<String> = Vec::new();
    for mode in ["fluor", "irf"] {
        for i in 0..3 {
            expected.push(format!("{mode}_rep{i}.csv"));
            expected.push(format!("{mode}_rep{i}.meta.toml"));
        }
    }
    expected.push("manifest.toml".into());
    expected.sort();
    assert_eq!(names, expected);

    for name in &names {
        let (fa, fb) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
        assert_eq!(fa, fb, "{name} differs between identical runs");
    }

    let c = tmp.path().join("c");
    simulate(&c, 8, 2.0);
    assert_ne!(
        fs::read(a.join("fluor_rep0.csv")).unwrap(),
        fs::read(c.join("fluor_rep0.csv")).unwrap(),
        "different seeds produced identical data"
    );
}

#[test]
fn counts_scale_linearly_with_integration_time() {
    let tmp = tempfile::tempdir().unwrap();
    let (short, long) = (tmp.path().join("short"), tmp.path().join("long"));
    simulate(&short, 3, 2.0);
    simulate(&long, 4, 20.0);

    let sum_mode = |dir: &Path, mode: &str| -> f64 {
        (0..3).map(|i| total_counts_of(&dir.join(format!("{mode}_rep{i}.csv")))).sum()
    };
    for mode in ["irf", "fluor"] {
        let (n_short, n_long) = (sum_mode(&short, mode), sum_mode(&long, mode));
        let ratio = n_long / n_short;
        // Poisson: sigma(ratio) ~ ratio * sqrt(1/n_short + 1/n_long); the
        // smallest total here is ~2.6e3, so 4 sigma stays under 1.0.
        let sigma = ratio * (1.0 / n_short + 1.0 / n_long).sqrt();
        assert!(
            (ratio - 10.0).abs() < 4.0 * sigma.max(0.01),
            "{mode}: totals {n_short:.0} -> {n_long:.0}, ratio {ratio:.3} not ~10"
        );
    }
}

#[test]
fn analyze_recovers_the_lifetime_from_a_simulated_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("run");
    simulate(&data, 41, 240.0);
    let out = run_ok(bin().arg("analyze").arg(&data));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("lifetime:"), "missing summary line: {stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data.join("report.json")).unwrap()).unwrap();
    let tau = report["pipeline"]["decay_fit"]["tau_ps"].as_f64().unwrap();
    let sigma_tau = report["pipeline"]["decay_fit"]["std_error_tau_ps"].as_f64().unwrap();
    // across-seed spread at 240 s is ~3 ps, so 2% (17.7 ps) is > 5 sigma
    assert!(
        (tau - TRUE_TAU_PS).abs() < 0.02 * TRUE_TAU_PS,
        "tau {tau} more than 2% from {TRUE_TAU_PS}"
    );
    assert!(sigma_tau > 0.0 && sigma_tau < 0.02 * TRUE_TAU_PS);

    let metrics = &report["metrics"];
    assert!(metrics["snr_irf"].as_f64().unwrap() > 80.0);
    assert!(metrics["snr_f"].as_f64().unwrap() > 9.0);
    assert!(metrics["eta1"].as_f64().unwrap() > 0.0);
    assert!(metrics["eta2"].as_f64().unwrap() > 0.0);
    assert!(metrics["n_total"].as_f64().unwrap() > 1e4);
    assert!(metrics["figure_of_merit"].as_f64().unwrap() > 0.0);

    let files: Vec<&str> =
        report["input_files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(files.len(), 6);
    assert!(files.contains(&"irf_rep0.csv") && files.contains(&"fluor_rep2.csv"));
}

/// Histograms written by some other tool (here: the library API directly,
/// with no manifest) still analyze; the rate-derived metrics are null.
#[test]
fn analyze_works_on_external_data_without_a_manifest() {
    use rand::prelude::*;
    use rand_distr::Poisson;

    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("external");
    fs::create_dir_all(&dir).unwrap();

    let (w, n, mu, sigma, tau) = (2.0, 5000usize, 3000.0, 494.98, 885.0);
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    let mut sample = |shape: &dyn Fn(f64) -> f64, label: HistogramLabel, file: &str| {
        let counts: Vec<f64> = (0..n)
            .map(|i| {
                let lambda: f64 = 4.0 + shape(w * (i as f64 + 0.5));
                rng.sample(Poisson::new(lambda).unwrap())
            })
            .collect();
        let h = CoincidenceHistogram::from_counts(label, w, 0.0, counts, 1.0).unwrap();
        h.save(&dir.join(file)).unwrap();
    };
    sample(
        &|t| 2.0e5 * pairflim_core::models::model_irf(t, mu, sigma),
        HistogramLabel::Irf,
        "response.csv",
    );
    sample(
        &|t| pairflim_core::models::model_convolved_decay(t, tau, sigma, mu, 120.0),
        HistogramLabel::Fluorescence,
        "decay.csv",
    );

    let report_path = tmp.path().join("report.json");
    run_ok(bin().arg("analyze").arg(&dir).arg("--out").arg(&report_path));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    let tau_hat = report["pipeline"]["decay_fit"]["tau_ps"].as_f64().unwrap();
    assert!((tau_hat - tau).abs() < 0.05 * tau, "tau {tau_hat} vs {tau}");
    assert!(report["metrics"]["eta1"].is_null());
    assert!(report["metrics"]["eta2"].is_null());
    assert!(report["metrics"]["snr_f"].as_f64().unwrap() > 9.0);
}

#[test]
fn analyze_refuses_an_empty_directory_with_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().arg("analyze").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error: category=config"), "stderr: {stderr}");
    assert!(stderr.contains("no datasets"), "stderr: {stderr}");
}

#[test]
fn bad_config_file_maps_to_the_config_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "integration_time_s = \"ten\"\n").unwrap();
    let out = bin()
        .arg("simulate")
        .arg("--out")
        .arg(tmp.path().join("out"))
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error: category=config"));
}

fn write_sweep_config(path: &Path) {
    fs::write(path, "integration_time_s = 2.0\nrepeats = 2\n").unwrap();
}

fn sweep_csv(dir: &Path) -> String {
    fs::read_to_string(dir.join("sweep_report.csv")).unwrap()
}

/// Seeds key off the setting value, so sweeping a subset of values must
/// reproduce those rows of the wider sweep exactly.
#[test]
fn sweep_rows_do_not_depend_on_which_other_values_are_swept() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    write_sweep_config(&cfg);

    let run = |values: &str, out: &PathBuf| {
        run_ok(bin()
            .arg("sweep")
            .arg("--axis")
            .arg("optical-density")
            .arg("--values")
            .arg(values)
            .arg("--repeats")
            .arg("2")
            .arg("--config")
            .arg(&cfg)
            .arg("--seed")
            .arg("99")
            .arg("--out")
            .arg(out));
    };
    let (wide, narrow) = (tmp.path().join("wide"), tmp.path().join("narrow"));
    run("0.3,0.6,1.0", &wide);
    run("0.6", &narrow);

    let pick = |text: &str| -> Vec<String> {
        text.lines().filter(|l| l.starts_with("0.6,")).map(str::to_owned).collect()
    };
    let (from_wide, from_narrow) = (pick(&sweep_csv(&wide)), pick(&sweep_csv(&narrow)));
    assert_eq!(from_wide.len(), 2);
    assert_eq!(from_wide, from_narrow);
}

#[test]
fn sweep_writes_all_three_tables_sorted_by_setting() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    write_sweep_config(&cfg);
    let out_dir = tmp.path().join("sweep");

    run_ok(bin()
        .arg("sweep")
        .arg("--axis")
        .arg("integration-time")
        .arg("--values")
        .arg("5,1,2")
        .arg("--repeats")
        .arg("2")
        .arg("--config")
        .arg(&cfg)
        .arg("--seed")
        .arg("11")
        .arg("--out")
        .arg(&out_dir));

    let report = sweep_csv(&out_dir);
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "integration_time_s,seed,tau_ps,sigma_tau_ps,snr_irf,snr_f,eta1,eta2,n_total,figure_of_merit,error"
    );
    let settings: Vec<f64> =
        lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(settings.len(), 6);
    assert!(settings.windows(2).all(|p| p[0] <= p[1]), "rows not sorted: {settings:?}");
    assert_eq!(settings.first(), Some(&1.0));
    assert_eq!(settings.last(), Some(&5.0));

    let lifetime = fs::read_to_string(out_dir.join("lifetime_vs_setting.csv")).unwrap();
    assert!(lifetime.starts_with("integration_time_s,n_ok,n_failed,mean_tau_ps,std_tau_ps,"));
    assert_eq!(lifetime.lines().count(), 4);
    let fom = fs::read_to_string(out_dir.join("figure_of_merit_vs_setting.csv")).unwrap();
    assert!(fom.starts_with("integration_time_s,n_ok,mean_figure_of_merit,"));

    // every cycle succeeded, so no row carries an error message
    assert!(report.lines().skip(1).all(|l| l.ends_with(',')), "unexpected error column");
}

/// A sweep value the simulator rejects lands in the row's error column
/// while the other values still produce numbers.
#[test]
fn sweep_records_per_value_failures_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    write_sweep_config(&cfg);
    let out_dir = tmp.path().join("sweep");

    run_ok(bin()
        .arg("sweep")
        .arg("--axis")
        .arg("integration-time")
        .arg("--values=-1,2")
        .arg("--repeats")
        .arg("1")
        .arg("--config")
        .arg(&cfg)
        .arg("--seed")
        .arg("5")
        .arg("--out")
        .arg(&out_dir));

    let report = sweep_csv(&out_dir);
    let bad: Vec<&str> = report.lines().filter(|l| l.starts_with("-1,")).collect();
    let good: Vec<&str> = report.lines().filter(|l| l.starts_with("2,")).collect();
    assert_eq!(bad.len(), 1);
    assert_eq!(good.len(), 1);
    assert!(!bad[0].ends_with(','), "expected an error message: {}", bad[0]);
    assert!(bad[0].contains("integration"), "error should name the field: {}", bad[0]);
    assert!(good[0].ends_with(','), "good row should have no error: {}", good[0]);
}
