//! Grid search scored by mean validation AUC over time-ordered folds.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::training::run_training;
use super::{tags, RunContext, Stage};
use crate::data::{smote_with_rng, Dataset, FoldPair};
use crate::error::{Error, Result, StageExt};
use crate::metrics::{evaluate, MetricsReport};
use crate::mlp::predict;
use crate::parallel::try_map_indexed;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    pub eta: f64,
    pub beta: f64,
    pub lambda: f64,
    pub hidden_dims: Vec<usize>,
}

impl GridCell {
    /// `cfg` with this cell's hyperparameters substituted.
    pub fn apply(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut out = cfg.clone();
        out.optimizer.eta = self.eta;
        out.optimizer.beta = self.beta;
        out.loss.lambda = self.lambda;
        out.model.hidden_dims = self.hidden_dims.clone();
        out
    }

    fn architecture_key(&self) -> (usize, usize, &[usize]) {
        (self.hidden_dims.iter().sum(), self.hidden_dims.len(), &self.hidden_dims)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub cell: GridCell,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub folds: Vec<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    /// Index into `rows` of the selected cell.
    pub best: usize,
}

impl GridResult {
    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }
}

/// Cartesian product of the grid axes in (eta, beta, lambda, hidden_dims)
/// nesting order; empty axes contribute the base config's value.
pub fn grid_cells(cfg: &ExperimentConfig) -> Vec<GridCell> {
    fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
        if values.is_empty() {
            vec![base]
        } else {
            values.to_vec()
        }
    }
    let etas = axis(&cfg.grid.eta, cfg.optimizer.eta);
    let betas = axis(&cfg.grid.beta, cfg.optimizer.beta);
    let lambdas = axis(&cfg.grid.lambda, cfg.loss.lambda);
    let archs = axis(&cfg.grid.hidden_dims, cfg.model.hidden_dims.clone());
    let mut cells = Vec::new();
    for &eta in &etas {
        for &beta in &betas {
            for &lambda in &lambdas {
                for dims in &archs {
                    cells.push(GridCell {
                        index: cells.len(),
                        eta,
                        beta,
                        lambda,
                        hidden_dims: dims.clone(),
                    });
                }
            }
        }
    }
    cells
}

/// Higher mean AUC wins; exact ties go to lower λ, lower η, the smaller
/// architecture, lower β, then the earlier cell.
fn rank(a: &GridRow, b: &GridRow) -> Ordering {
    b.mean_auc
        .total_cmp(&a.mean_auc)
        .then(a.cell.lambda.total_cmp(&b.cell.lambda))
        .then(a.cell.eta.total_cmp(&b.cell.eta))
        .then_with(|| a.cell.architecture_key().cmp(&b.cell.architecture_key()))
        .then(a.cell.beta.total_cmp(&b.cell.beta))
        .then(a.cell.index.cmp(&b.cell.index))
}

/// Fits on one fold's training rows (after SMOTE) and scores its validation rows.
pub(crate) fn evaluate_fold(
    cfg: &ExperimentConfig,
    data: &Dataset,
    fold: &FoldPair,
    job: &[u64],
    ctx: RunContext<'_>,
) -> Result<MetricsReport> {
    let fold_train = data.subset(&fold.train);
    let fold_val = data.subset(&fold.validation);
    ctx.observer.observe(Stage::Smote, &fold_train);
    let mut smote_rng = RngStream::new(cfg.smote.seed).derive_path(job).derive(tags::SMOTE);
    let oversampled = smote_with_rng(&fold_train, &cfg.smote, &mut smote_rng, ctx.exec)
        .stage("smote")?
        .dataset;
    let rng = RngStream::new(cfg.training.seed).derive_path(job);
    let trained = run_training(cfg, &oversampled, &fold_val, &rng, ctx.recording(false)).stage("training")?;
    let scores = predict(&trained.params, &fold_val.features)?;
    evaluate(scores.data(), &fold_val.labels, cfg.training.threshold).stage("evaluation")
}

/// Scores every grid cell on every fold pair of `train`. Jobs are independent
/// and may run in parallel; each draws from the stream keyed by
/// `(cell index, fold index)`.
pub fn grid_search(
    cfg: &ExperimentConfig,
    train: &Dataset,
    folds: &[FoldPair],
    ctx: RunContext<'_>,
) -> Result<GridResult> {
    cfg.validate()?;
    if folds.is_empty() {
        return Err(Error::argument("grid_search: no folds"));
    }
    let cells = grid_cells(cfg);
    if cells.is_empty() {
        return Err(Error::argument("grid_search: empty grid"));
    }
    ctx.observer.observe(Stage::GridSearch, train);
    let n_folds = folds.len();
    let configs: Vec<ExperimentConfig> = cells.iter().map(|c| c.apply(cfg)).collect();
    let reports = try_map_indexed(ctx.exec, cells.len() * n_folds, |job| {
        let (c, f) = (job / n_folds, job % n_folds);
        evaluate_fold(&configs[c], train, &folds[f], &[tags::GRID, c as u64, f as u64], ctx)
            .map_err(|e| e.in_stage(format!("grid cell {c}, fold {f}")))
    })?;
    let rows: Vec<GridRow> = cells
        .into_iter()
        .zip(reports.chunks(n_folds))
        .map(|(cell, fold_reports)| {
            let agg = crate::metrics::aggregate_folds(fold_reports)?;
            Ok(GridRow {
                cell,
                mean_auc: agg.auc,
                std_auc: agg.std.map_or(0.0, |s| s.auc),
                folds: fold_reports.to_vec(),
            })
        })
        .collect::<Result<_>>()?;
    let best = (0..rows.len())
        .min_by(|&a, &b| rank(&rows[a], &rows[b]))
        .expect("non-empty grid");
    Ok(GridResult { rows, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DriftGenConfig;
    use crate::experiment::config::DataConfig;

    fn base() -> ExperimentConfig {
        ExperimentConfig::with_data(DataConfig {
            csv: None,
            synthetic: Some(DriftGenConfig::default()),
        })
    }

    fn row(index: usize, auc: f64, eta: f64, lambda: f64, dims: Vec<usize>) -> GridRow {
        GridRow {
            cell: GridCell {
                index,
                eta,
                beta: 0.9,
                lambda,
                hidden_dims: dims,
            },
            mean_auc: auc,
            std_auc: 0.0,
            folds: Vec::new(),
        }
    }

    #[test]
    fn product_size() {
        let mut cfg = base();
        cfg.grid.eta = vec![0.01, 0.1];
        cfg.grid.lambda = vec![0.0, 0.01];
        let cells = grid_cells(&cfg);
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.beta == 0.9 && c.hidden_dims == [128, 64]));
        assert_eq!(grid_cells(&base()).len(), 1);
    }

    #[test]
    fn tie_breaks_prefer_parsimony() {
        let rows = [
            row(0, 0.8, 0.1, 0.01, vec![8]),
            row(1, 0.8, 0.01, 0.01, vec![8]),
            row(2, 0.8, 0.01, 0.01, vec![4]),
            row(3, 0.8, 0.01, 0.1, vec![2]),
        ];
        let best = (0..4).min_by(|&a, &b| rank(&rows[a], &rows[b])).unwrap();
        assert_eq!(best, 2);
        let better = row(4, 0.81, 1.0, 1.0, vec![64]);
        assert_eq!(rank(&better, &rows[2]), Ordering::Less);
    }
}
