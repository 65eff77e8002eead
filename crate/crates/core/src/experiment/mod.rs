//! End-to-end experiment harness: config, training, grid search, the
//! out-of-time benchmark protocol, and report export.

mod benchmark;
mod config;
mod external;
mod grid;
mod report;
mod training;

pub use benchmark::{load_data, run_benchmark, run_grid, run_single, BenchmarkOutcome, DataSummary};
pub use config::{
    parse_config, parse_config_str, to_toml, CvConfig, DataConfig, ExperimentConfig, GridAxes, ModelConfig,
    OptimizerConfig, SplitConfig, TrainingConfig,
};
pub use external::{read_labels_csv, read_scores_csv, score_external};
pub use grid::{grid_cells, grid_search, GridCell, GridResult, GridRow};
pub use report::{
    export_report, read_report, write_outputs, ReportFormat, RunKind, RunReport, ENERGY_TRACE_FILE, PARAMS_FILE,
    REPORT_FILE, REPORT_SCHEMA_VERSION, SUMMARY_FILE, TIMING_FILE,
};
pub use training::{run_training, EpochStats, Standardizer, TrainOutcome};

use crate::data::Dataset;
use crate::Execution;

/// Where a set of rows is being handed off to inside the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Smote,
    GridSearch,
    /// Rows the model is fitted on.
    TrainingFit,
    /// Rows used for early stopping.
    EarlyStopping,
}

/// Instrumentation hook for pipeline stages. The default does nothing.
pub trait PipelineObserver: Sync {
    fn observe(&self, _stage: Stage, _rows: &Dataset) {}
}

/// Observer that ignores everything.
pub struct NoopObserver;

impl PipelineObserver for NoopObserver {}

/// Execution settings shared by every pipeline stage.
#[derive(Clone, Copy)]
pub struct RunContext<'a> {
    pub exec: Execution,
    pub observer: &'a dyn PipelineObserver,
    /// Keep the optimizer's energy trace (only the final fit needs it).
    pub record_energy: bool,
}

impl Default for RunContext<'_> {
    fn default() -> Self {
        Self {
            exec: Execution::default(),
            observer: &NoopObserver,
            record_energy: false,
        }
    }
}

impl<'a> RunContext<'a> {
    pub fn with_exec(exec: Execution) -> Self {
        Self {
            exec,
            ..Self::default()
        }
    }

    pub fn observed(mut self, observer: &'a dyn PipelineObserver) -> Self {
        self.observer = observer;
        self
    }

    pub(crate) fn recording(mut self, on: bool) -> Self {
        self.record_energy = on;
        self
    }
}

/// RNG stream tags separating the pipeline's random consumers.
pub(crate) mod tags {
    pub const INIT: u64 = 0;
    pub const SHUFFLE: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const SMOTE: u64 = 3;
    pub const GRID: u64 = 10;
    pub const CV: u64 = 11;
    pub const FINAL: u64 = 12;
}
