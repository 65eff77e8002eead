//! Regularised training loss: mean binary cross-entropy plus `λ·½‖θ‖²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::params::ParamSet;
use crate::tensor::Tensor;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub lambda: f64,
    /// Leave `*.bias` tensors out of the regulariser.
    #[serde(default)]
    pub exclude_biases: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            exclude_biases: false,
        }
    }
}

impl LossConfig {
    pub fn violations(&self) -> Vec<String> {
        if self.lambda >= 0.0 && self.lambda.is_finite() {
            Vec::new()
        } else {
            vec![format!("loss.lambda must be >= 0, got {}", self.lambda)]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub base: f64,
    pub reg: f64,
    pub total: f64,
}

fn check_labels(probs: &Tensor, labels: &[f64]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} probabilities vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::argument(format!("label {bad} is not 0 or 1")));
    }
    Ok(())
}

/// Mean of `−[y ln p + (1−y) ln(1−p)]` over the batch.
pub fn bce_loss(probs: &Tensor, labels: &[f64]) -> Result<f64> {
    check_labels(probs, labels)?;
    if labels.is_empty() {
        return Err(Error::argument("bce_loss: empty batch"));
    }
    let sum: f64 = probs
        .data()
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(sum / labels.len() as f64)
}

/// `∂ bce_loss / ∂p` per row. Zero where the clamp is active.
pub fn bce_grad(probs: &Tensor, labels: &[f64]) -> Result<Tensor> {
    check_labels(probs, labels)?;
    let n = labels.len() as f64;
    Ok(Tensor::vector(
        probs
            .data()
            .iter()
            .zip(labels)
            .map(|(&p, &y)| {
                if p < PROB_EPS || p > 1.0 - PROB_EPS {
                    0.0
                } else {
                    (p - y) / (p * (1.0 - p)) / n
                }
            })
            .collect(),
    ))
}

fn regularised(name: &str, exclude_biases: bool) -> bool {
    !(exclude_biases && name.ends_with(".bias"))
}

/// `½ Σ ‖θ‖²` over the registry.
pub fn l2_regularizer(params: &ParamSet, exclude_biases: bool) -> f64 {
    0.5 * params
        .entries()
        .iter()
        .filter(|e| regularised(&e.name, exclude_biases))
        .map(|e| e.tensor.squared_norm())
        .sum::<f64>()
}

pub fn hamiltonian_loss(
    probs: &Tensor,
    labels: &[f64],
    params: &MlpParams,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let base = bce_loss(probs, labels)?;
    let reg = l2_regularizer(params.params(), cfg.exclude_biases);
    Ok(LossBreakdown {
        base,
        reg,
        total: base + cfg.lambda * reg,
    })
}

/// Adds the regulariser's gradient `λ·θ` to `grads` in place.
pub fn add_regularizer_grad(grads: &mut ParamSet, params: &ParamSet, cfg: &LossConfig) -> Result<()> {
    if cfg.lambda == 0.0 {
        return Ok(());
    }
    for e in params.entries() {
        if !regularised(&e.name, cfg.exclude_biases) {
            continue;
        }
        let g = grads
            .get_mut(&e.name)
            .ok_or_else(|| Error::usage(format!("no gradient for `{}`", e.name)))?;
        g.axpy(cfg.lambda, &e.tensor)?;
    }
    Ok(())
}
