//! CSV ingestion, run configuration, result documents, the end-to-end
//! pipeline and the runtime benchmark.

pub mod bench;
pub mod config;
pub mod document;
pub mod load;
pub mod pipeline;

pub use bench::{bench, synthetic_uniform, trial_seed, write_bench_csv, BenchRow, BenchSource};
pub use config::RunConfig;
pub use document::{ClusterDoc, DatasetInfo, HstInfo, ParamsDoc, ResultDocument, Timings, SCHEMA};
pub use load::{load_csv, ColorMapping, LoadedDataset};
pub use pipeline::{evaluate, precheck, run_on_dataset, run_pipeline, suggest_params, Mode, RunOutcome};
