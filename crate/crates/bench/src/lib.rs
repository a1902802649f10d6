//! Shared fixtures for the kernel benchmarks: a synthetic table at a
//! realistic shape (tens of countries, a few weeks of days) so timings
//! reflect the scales the pipeline actually runs at.

use aqicast_core::dataset::{build_supervised, BandMap, SupervisedDataset, Task};
use aqicast_core::ingest::CleanRecord;
use aqicast_core::synth::{self, SynthOptions};

fn options() -> SynthOptions {
    SynthOptions {
        countries: 30,
        days: 40,
        seed: 7,
        // Keep the table fully regular so every run benches identical rows.
        bad_cell_rate: 0.0,
        duplicate_rate: 0.0,
        gap_rate: 0.0,
        zero_index_rate: 0.0,
        ..SynthOptions::default()
    }
}

/// Cleaned records, flattened across countries (about 1200 rows).
pub fn records() -> Vec<CleanRecord> {
    let (series, _) = synth::clean_series(&options());
    series.into_iter().flat_map(|s| s.records).collect()
}

/// A supervised frame over the same table (about 1170 rows, one per
/// consecutive-day pair).
pub fn dataset(task: Task) -> SupervisedDataset {
    let (series, _) = synth::clean_series(&options());
    build_supervised(&series, task, &BandMap::default_daqi(), &[])
        .expect("regular synthetic table always yields pairs")
}
