//! Dataset handling, benchmark execution and reporting.

pub mod dataset;
pub mod eval;
pub mod report;

pub use dataset::{gen_synthetic, load_dataset, Dataset, DatasetManifest, ManifestEntry, Sample};
pub use eval::{run_eval, EvalOptions, EvalRecord, PromptSetting, MAX_FAILURE_RATE};
pub use report::{records_to_csv, report, report_to_json, MeanStd, SettingSummary, SweepReport, CSV_HEADER};
