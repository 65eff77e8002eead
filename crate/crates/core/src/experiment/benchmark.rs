//! The out-of-time benchmark protocol and its single-fit and grid variants.
//!
//! Order of operations: load or generate → temporal split → (grid search or
//! fixed hyperparameters) → time-ordered CV on the training partition with
//! SMOTE inside each fold's training rows → final fit on the oversampled
//! training partition, early-stopped on validation → score validation and OOT.
//! The final model is refit on the training partition only.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::grid::{evaluate_fold, grid_search};
use super::report::{RunKind, RunReport};
use super::training::{run_training, TrainOutcome};
use super::{tags, RunContext, Stage};
use crate::data::{load_csv, smote_with_rng, synthesize_credit_data, temporal_split, time_based_folds, Dataset};
use crate::error::{Error, Result, StageExt};
use crate::metrics::{aggregate_folds, evaluate, MetricsReport};
use crate::mlp::{predict, MlpParams};
use crate::optim::EnergyRecord;
use crate::parallel::try_map_indexed;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_rows: usize,
    pub n_features: usize,
    pub train_rows: usize,
    pub train_rows_after_smote: usize,
    pub validation_rows: usize,
    pub oot_rows: usize,
    pub train_default_rate: f64,
    pub validation_default_rate: f64,
    pub oot_default_rate: f64,
}

/// A report plus the artifacts written next to it.
#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub report: RunReport,
    /// Final model; absent for grid-only runs.
    pub params: Option<MlpParams>,
    pub energy_trace: Vec<EnergyRecord>,
}

/// Reads the configured CSV or runs the generator.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    match (&cfg.data.csv, &cfg.data.synthetic) {
        (Some(path), None) => load_csv(path),
        (None, Some(gen)) => synthesize_credit_data(gen),
        _ => Err(Error::Validation(vec!["data: exactly one source must be configured".into()])),
    }
}

struct Partitions {
    all_rows: usize,
    train: Dataset,
    validation: Dataset,
    oot: Dataset,
}

fn partition(cfg: &ExperimentConfig) -> Result<Partitions> {
    let data = load_data(cfg).stage("load")?;
    let split = temporal_split(&data, cfg.split.val_cut, cfg.split.oot_cut).stage("split")?;
    Ok(Partitions {
        all_rows: data.len(),
        train: data.subset(&split.train),
        validation: data.subset(&split.validation),
        oot: data.subset(&split.oot),
    })
}

struct FinalFit {
    outcome: TrainOutcome,
    oversampled_rows: usize,
    validation: MetricsReport,
    oot: MetricsReport,
}

fn fit_final(cfg: &ExperimentConfig, parts: &Partitions, ctx: RunContext<'_>) -> Result<FinalFit> {
    ctx.observer.observe(Stage::Smote, &parts.train);
    let mut smote_rng = RngStream::new(cfg.smote.seed).derive(tags::FINAL).derive(tags::SMOTE);
    let oversampled = smote_with_rng(&parts.train, &cfg.smote, &mut smote_rng, ctx.exec)
        .stage("smote")?
        .dataset;
    let rng = RngStream::new(cfg.training.seed).derive(tags::FINAL);
    let outcome = run_training(cfg, &oversampled, &parts.validation, &rng, ctx.recording(true)).stage("training")?;
    let score = |ds: &Dataset| -> Result<MetricsReport> {
        let s = predict(&outcome.params, &ds.features)?;
        evaluate(s.data(), &ds.labels, cfg.training.threshold)
    };
    let validation = score(&parts.validation).stage("evaluate_validation")?;
    let oot = score(&parts.oot).stage("evaluate_oot")?;
    Ok(FinalFit {
        oversampled_rows: oversampled.len(),
        outcome,
        validation,
        oot,
    })
}

fn summary(parts: &Partitions, oversampled_rows: usize) -> DataSummary {
    DataSummary {
        n_rows: parts.all_rows,
        n_features: parts.train.n_features(),
        train_rows: parts.train.len(),
        train_rows_after_smote: oversampled_rows,
        validation_rows: parts.validation.len(),
        oot_rows: parts.oot.len(),
        train_default_rate: parts.train.default_rate(),
        validation_default_rate: parts.validation.default_rate(),
        oot_default_rate: parts.oot.default_rate(),
    }
}

fn finish(cfg: &ExperimentConfig, kind: RunKind, parts: &Partitions, fit: FinalFit, start: Instant) -> BenchmarkOutcome {
    let mut report = RunReport::new(kind);
    report.config = Some(cfg.clone());
    report.data = Some(summary(parts, fit.oversampled_rows));
    report.validation = Some(fit.validation);
    report.oot = Some(fit.oot);
    report.curves = fit.outcome.curves;
    report.best_epoch = Some(fit.outcome.best_epoch);
    report.wall_clock_secs = Some(start.elapsed().as_secs_f64());
    BenchmarkOutcome {
        report,
        params: Some(fit.outcome.params),
        energy_trace: fit.outcome.energy_trace,
    }
}

/// One fit with the configured hyperparameters: no CV, no grid.
pub fn run_single(cfg: &ExperimentConfig, ctx: RunContext<'_>) -> Result<BenchmarkOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    let parts = partition(cfg)?;
    let fit = fit_final(cfg, &parts, ctx)?;
    Ok(finish(cfg, RunKind::Train, &parts, fit, start))
}

/// Grid search over the training partition's folds; no final fit.
pub fn run_grid(cfg: &ExperimentConfig, ctx: RunContext<'_>) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    if cfg.grid.is_empty() {
        return Err(Error::Validation(vec!["grid: at least one axis must be listed for a grid run".into()]));
    }
    let parts = partition(cfg)?;
    let folds = time_based_folds(&parts.train, cfg.cv.k).stage("folds")?;
    let grid = grid_search(cfg, &parts.train, &folds, ctx).stage("grid_search")?;
    let best = grid.best_row();
    let mut report = RunReport::new(RunKind::Grid);
    report.config = Some(cfg.clone());
    report.folds = best.folds.clone();
    report.aggregate = Some(aggregate_folds(&best.folds)?);
    report.selected = Some(best.cell.clone());
    report.grid = Some(grid);
    report.wall_clock_secs = Some(start.elapsed().as_secs_f64());
    Ok(report)
}

/// The full protocol. With grid axes configured the best cell's fold reports
/// serve as the CV results and its hyperparameters drive the final fit.
pub fn run_benchmark(cfg: &ExperimentConfig, ctx: RunContext<'_>) -> Result<BenchmarkOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    let parts = partition(cfg)?;
    let folds = time_based_folds(&parts.train, cfg.cv.k).stage("folds")?;
    let (chosen, grid, fold_reports) = if cfg.grid.is_empty() {
        let reports = try_map_indexed(ctx.exec, folds.len(), |f| {
            evaluate_fold(cfg, &parts.train, &folds[f], &[tags::CV, f as u64], ctx)
                .map_err(|e| e.in_stage(format!("fold {f}")))
        })
        .stage("cross_validation")?;
        (cfg.clone(), None, reports)
    } else {
        let grid = grid_search(cfg, &parts.train, &folds, ctx).stage("grid_search")?;
        let best = grid.best_row();
        (best.cell.apply(cfg), Some(grid.clone()), best.folds.clone())
    };
    let aggregate = aggregate_folds(&fold_reports).stage("aggregate")?;
    let fit = fit_final(&chosen, &parts, ctx)?;
    let mut out = finish(cfg, RunKind::Benchmark, &parts, fit, start);
    let report = &mut out.report;
    report.folds = fold_reports;
    report.aggregate = Some(aggregate);
    if let Some(g) = grid {
        report.selected = Some(g.best_row().cell.clone());
        report.grid = Some(g);
    }
    report.wall_clock_secs = Some(start.elapsed().as_secs_f64());
    Ok(out)
}
