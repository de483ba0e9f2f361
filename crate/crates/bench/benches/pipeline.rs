use criterion::{black_box, criterion_group, criterion_main, Criterion};

use pairflim_bench::simulated_dataset;
use pairflim_core::{
    average_repeats, fit_decay, fit_irf, models, run_pipeline, subtract_background,
    PipelineConfig,
};

fn bench_model_eval(c: &mut Criterion) {
    c.bench_function("convolved decay over 5000 bins", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for i in 0..5000 {
                let t = 2.0 * (i as f64 + 0.5);
                acc += models::model_convolved_decay(
                    black_box(t),
                    black_box(885.0),
                    494.98,
                    3000.0,
                    120.0,
                );
            }
            acc
        })
    });
}

fn bench_fits(c: &mut Criterion) {
    let cfg = PipelineConfig::default();
    let (irf_reps, fluor_reps) = simulated_dataset(60.0);

    let corrected_mean = |reps: &[pairflim_core::CoincidenceHistogram]| {
        average_repeats(
            &reps
                .iter()
                .map(|h| subtract_background(h, cfg.background_window_bins))
                .collect::<Result<Vec<_>, _>>()
                .unwrap(),
        )
        .unwrap()
    };
    let irf = corrected_mean(&irf_reps);
    let fluor = corrected_mean(&fluor_reps);
    let irf_fit = fit_irf(&irf, &cfg).unwrap();

    c.bench_function("gaussian response fit", |b| {
        b.iter(|| fit_irf(black_box(&irf), &cfg).unwrap())
    });
    c.bench_function("lifetime fit", |b| {
        b.iter(|| {
            fit_decay(black_box(&fluor), irf_fit.sigma_irf_ps, irf_fit.mu_irf_ps, &cfg).unwrap()
        })
    });
}

fn bench_pipeline(c: &mut Criterion) {
    let cfg = PipelineConfig::default();
    let (irf_reps, fluor_reps) = simulated_dataset(60.0);
    c.bench_function("full pipeline, 3 repeats each", |b| {
        b.iter(|| run_pipeline(black_box(&irf_reps), black_box(&fluor_reps), &cfg).unwrap())
    });
}

criterion_group!(benches, bench_model_eval, bench_fits, bench_pipeline);
criterion_main!(benches);
