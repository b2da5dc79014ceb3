//! End-to-end runs: optional proposal crop, multi-view projection, dynamic
//! images (or motion maps), round-robin network training, per-group
//! features, PCA and SVM (or softmax-sum fusion).
//!
//! At test time each view group contributes the mean feature of its views'
//! whole-video images; segment images serve as training variants. Samples
//! are processed in parallel and gathered in manifest order, so reports do
//! not depend on the worker count.

mod ablation;
mod config;
mod report;
mod run;

pub use ablation::{run_ablation, AblationAxis, AblationRow, AblationTable};
pub use config::{parse_kv, Classifier, PipelineConfig, Representation, TestImages};
pub use report::{report_timings, Prediction, RunReport, StageTimings, TimingTable};
pub use run::{
    prepare, run, run_prepared, run_with, train_network, Prepared, PreparedSample, RunOptions,
    THREADS_ENV,
};
