//! Mini-batch training with validation early stopping.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::{tags, RunContext, Stage};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::{add_regularizer_grad, bce_grad, hamiltonian_loss};
use crate::mlp::{backward, forward, init_params, predict, weight_name, bias_name, MlpParams, Mode};
use crate::optim::{EnergyRecord, Optimizer};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Per-feature z-scoring fitted on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant columns get unit scale.
    pub fn fit(x: &Tensor) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n.max(1) as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.mean.len() {
            return Err(Error::shape(format!(
                "standardizer fitted on {} columns, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let d = x.cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % d]) / self.std[i % d])
            .collect();
        Tensor::matrix(x.rows(), d, data)
    }

    /// Rewrites the first layer so the network accepts raw features:
    /// `W' = W / std`, `b' = b − W' · mean`.
    pub fn fold_into(&self, params: &MlpParams) -> Result<MlpParams> {
        let mut out = params.clone();
        let set = out.params_mut();
        let w = set
            .get_mut(&weight_name(0))
            .ok_or_else(|| Error::usage("network has no first layer"))?;
        let (rows, cols) = (w.rows(), w.cols());
        if cols != self.mean.len() {
            return Err(Error::shape(format!(
                "standardizer has {} columns, first layer takes {cols}",
                self.mean.len()
            )));
        }
        let mut shift = vec![0.0; rows];
        let data = w.data_mut();
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] /= self.std[c];
                shift[r] += data[r * cols + c] * self.mean[c];
            }
        }
        let b = set
            .get_mut(&bias_name(0))
            .ok_or_else(|| Error::usage("network has no first bias"))?;
        for (bv, s) in b.data_mut().iter_mut().zip(shift) {
            *bv -= s;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean mini-batch H_loss over the epoch (train mode, with dropout).
    pub train_loss: f64,
    /// H_loss on the validation set in eval mode.
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation parameters, taking raw (unstandardized) features.
    pub params: MlpParams,
    pub curves: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Empty unless the context asked for it.
    pub energy_trace: Vec<EnergyRecord>,
}

fn loss_on(params: &MlpParams, x: &Tensor, labels: &[f64], cfg: &ExperimentConfig) -> Result<f64> {
    let probs = predict(params, x)?;
    Ok(hamiltonian_loss(&probs, labels, params, &cfg.loss)?.total)
}

/// Trains a fresh network on `train`, early-stopping on `val`.
///
/// After every epoch the validation H_loss is computed; training stops once
/// it has failed to improve for more than `patience` consecutive epochs and the
/// best-epoch parameters are returned. The stream `rng` fixes initial weights,
/// batch order and dropout masks; these do not depend on the optimizer kind.
pub fn run_training(
    cfg: &ExperimentConfig,
    train: &Dataset,
    val: &Dataset,
    rng: &RngStream,
    ctx: RunContext<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::argument("run_training: train and validation sets must be non-empty"));
    }
    if train.n_features() != val.n_features() {
        return Err(Error::shape(format!(
            "run_training: train has {} features, validation {}",
            train.n_features(),
            val.n_features()
        )));
    }
    ctx.observer.observe(Stage::TrainingFit, train);
    ctx.observer.observe(Stage::EarlyStopping, val);

    let scaler = cfg.training.standardize.then(|| Standardizer::fit(&train.features));
    let (x_train, x_val) = match &scaler {
        Some(s) => (s.transform(&train.features)?, s.transform(&val.features)?),
        None => (train.features.clone(), val.features.clone()),
    };
    let y_train = train.labels_f64();
    let y_val = val.labels_f64();

    let spec = cfg.model.layer_spec(train.n_features());
    let mut params = init_params(&spec, &mut rng.derive(tags::INIT))?;
    let mut optimizer = Optimizer::new(cfg.optimizer.kind, cfg.optimizer.optim(), params.params());
    let mut shuffle_rng = rng.derive(tags::SHUFFLE);
    let mut dropout_rng = rng.derive(tags::DROPOUT);

    let n = train.len();
    let d = train.n_features();
    let mut order: Vec<usize> = (0..n).collect();
    let mut curves = Vec::new();
    let mut energy_trace = Vec::new();
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut stale = 0usize;
    let mut global_step = 0u64;

    for epoch in 1..=cfg.training.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.training.batch_size) {
            let mut xb = Vec::with_capacity(batch.len() * d);
            for &i in batch {
                xb.extend_from_slice(x_train.row(i));
            }
            let xb = Tensor::matrix(batch.len(), d, xb)?;
            let yb: Vec<f64> = batch.iter().map(|&i| y_train[i]).collect();

            let (probs, cache) = forward(&params, &xb, Mode::Train(&mut dropout_rng))?;
            let loss = hamiltonian_loss(&probs, &yb, &params, &cfg.loss)?;
            if !loss.total.is_finite() {
                return Err(Error::Runtime(format!(
                    "non-finite training loss at epoch {epoch}, step {global_step}: base {}, reg {}",
                    loss.base, loss.reg
                )));
            }
            loss_sum += loss.total * batch.len() as f64;
            let mut grads = backward(&params, &cache, &bce_grad(&probs, &yb)?)?;
            add_regularizer_grad(&mut grads, params.params(), &cfg.loss)?;
            let records = optimizer.step(params.params_mut(), &grads)?;
            if ctx.record_energy {
                energy_trace.extend(records);
            }
            global_step += 1;
        }
        if !params.params().is_finite() {
            return Err(Error::Runtime(format!("parameters became non-finite in epoch {epoch}")));
        }
        let val_loss = loss_on(&params, &x_val, &y_val, cfg)?;
        if !val_loss.is_finite() {
            return Err(Error::Runtime(format!("non-finite validation loss at epoch {epoch}")));
        }
        curves.push(EpochStats {
            epoch,
            train_loss: loss_sum / n as f64,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.training.patience {
                break;
            }
        }
    }

    let (best_val_loss, best_params, best_epoch) = best;
    let params = match &scaler {
        Some(s) => s.fold_into(&best_params)?,
        None => best_params,
    };
    Ok(TrainOutcome {
        params,
        curves,
        best_epoch,
        best_val_loss,
        energy_trace,
    })
}
