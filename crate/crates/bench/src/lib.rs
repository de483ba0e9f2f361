//! Shared fixtures for the benchmarks: one simulated dataset, reused so the
//! fit and pipeline benches measure analysis cost, not setup.

use pairflim_core::sim::{simulate_fluorescence, simulate_irf, SimulatedRepeat};
use pairflim_core::{CoincidenceHistogram, RunConfig};

pub fn bench_config(integration_time_s: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.integration_time_s = integration_time_s;
    cfg.rng_seed = 424242;
    cfg
}

pub fn histograms(reps: Vec<SimulatedRepeat>) -> Vec<CoincidenceHistogram> {
    reps.into_iter().map(|r| r.histogram).collect()
}

pub fn simulated_dataset(
    integration_time_s: f64,
) -> (Vec<CoincidenceHistogram>, Vec<CoincidenceHistogram>) {
    let run = bench_config(integration_time_s).to_simulation_run();
    (
        histograms(simulate_irf(&run).expect("irf simulation")),
        histograms(simulate_fluorescence(&run).expect("fluorescence simulation")),
    )
}
