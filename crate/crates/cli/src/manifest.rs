//! The run manifest written next to simulated histograms: a full config
//! echo plus the per-repeat rates and warnings, enough to replay or audit
//! the run without the original command line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use pairflim_core::sim::SimulatedRepeat;
use pairflim_core::{ChannelRates, RunConfig};

pub const MANIFEST_NAME: &str = "manifest.toml";

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    /// Seed the histograms were drawn with (after CLI overrides).
    pub seed: u64,
    pub config: RunConfig,
    pub irf: Vec<RepeatRecord>,
    pub fluorescence: Vec<RepeatRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub file: String,
    pub rates: ChannelRates,
    pub warnings: Vec<String>,
}

pub fn record(file: String, rep: &SimulatedRepeat) -> RepeatRecord {
    RepeatRecord { file, rates: rep.rates, warnings: rep.warnings.clone() }
}

/// Field-wise mean of the recorded rates; `None` for an empty list.
pub fn mean_rates(records: &[RepeatRecord]) -> Option<ChannelRates> {
    mean_of(records.iter().map(|r| r.rates))
}

pub fn mean_of(rates: impl Iterator<Item = ChannelRates>) -> Option<ChannelRates> {
    let mut acc = ChannelRates {
        singles_ch1_per_s: 0.0,
        singles_ch2_per_s: 0.0,
        coincidence_per_s: 0.0,
    };
    let mut n = 0.0;
    for r in rates {
        acc.singles_ch1_per_s += r.singles_ch1_per_s;
        acc.singles_ch2_per_s += r.singles_ch2_per_s;
        acc.coincidence_per_s += r.coincidence_per_s;
        n += 1.0;
    }
    if n == 0.0 {
        return None;
    }
    acc.singles_ch1_per_s /= n;
    acc.singles_ch2_per_s /= n;
    acc.coincidence_per_s /= n;
    Some(acc)
}

/// Best-effort read of the fluorescence-run rates from a directory's
/// manifest; analysis of external data proceeds without them.
pub fn rates_from_dir(dir: &Path) -> Option<ChannelRates> {
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).ok()?;
    match toml::from_str::<Manifest>(&text) {
        Ok(m) => mean_rates(&m.fluorescence),
        Err(e) => {
            log::warn!("ignoring unreadable manifest {}: {e}", path.display());
            None
        }
    }
}
