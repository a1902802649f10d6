//! Core library for next-day air-quality forecasting on the World Weather
//! Repository export format.
//!
//! The crate covers the full tabular workflow: CSV ingestion and cleaning
//! ([`ingest`]), exploratory clustering and correlation ([`eda`]), lag-1
//! supervised dataset construction ([`dataset`]), a small zoo of learners
//! trained from scratch ([`models`]), evaluation metrics ([`metrics`]),
//! post-hoc explainability ([`explain`]), and the two-round evaluation plus
//! next-day projection driver ([`forecast`]).
//!
//! Every randomized routine takes an explicit seed and uses a counter-based
//! generator, so identical inputs and seeds reproduce identical outputs
//! byte for byte, independent of thread count.

pub mod dataset;
pub mod eda;
pub mod explain;
pub mod forecast;
pub mod ingest;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod scale;
pub mod synth;

pub use dataset::{BandMap, FoldPlan, ScenarioSplit, SupervisedDataset, Task};
pub use ingest::{CleanRecord, CountrySeries, RawTable, SchemaReport};
pub use models::{Family, ModelSpec, Predictor, TrainedModel};
