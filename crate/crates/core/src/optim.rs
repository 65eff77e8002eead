//! Hamiltonian-normalised momentum optimizer and a heavy-ball SGD baseline.
//!
//! For every parameter tensor θ with gradient g, one step of the symplectic
//! optimizer does, in this order:
//!
//! ```text
//! v ← β·v + (1−β)·g
//! K ← ½‖v‖²     (new momentum)
//! V ← ½‖θ‖²     (parameters before the update)
//! H ← K + V
//! θ ← θ − η·v / √(H + ε)
//! ```
//!
//! `H` is the sum of kinetic and potential energy. Writing it as `T − V`
//! (the sign used when the decomposition is first introduced) could make the
//! radicand negative, so the sum is the only usable reading.
//!
//! Since `H ≥ K = ½‖v‖²`, every per-tensor step satisfies
//! `‖Δθ‖ ≤ η‖v‖/√(½‖v‖²) = η√2` whatever the gradient magnitude.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyScope {
    /// One `H` per parameter tensor.
    #[default]
    PerTensor,
    /// A single `H` summed over all tensors, shared by every update.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub eta: f64,
    pub beta: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub energy_scope: EnergyScope,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            beta: 0.9,
            epsilon: 1e-8,
            energy_scope: EnergyScope::PerTensor,
        }
    }
}

impl OptimConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            out.push(format!("optimizer.eta must be > 0, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.beta) {
            out.push(format!("optimizer.beta must be in [0, 1), got {}", self.beta));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            out.push(format!("optimizer.epsilon must be > 0, got {}", self.epsilon));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTriple {
    pub kinetic: f64,
    pub potential: f64,
    pub hamiltonian: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorState {
    pub momentum: Tensor,
    pub last_energy: EnergyTriple,
}

/// Optimizer state keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    tensors: BTreeMap<String, TensorState>,
    steps: u64,
}

impl ParamState {
    /// Zero momentum for every tensor in `params`.
    pub fn new(params: &ParamSet) -> Self {
        Self {
            tensors: params
                .entries()
                .iter()
                .map(|e| {
                    (
                        e.name.clone(),
                        TensorState {
                            momentum: Tensor::zeros(e.tensor.shape()),
                            last_energy: EnergyTriple::default(),
                        },
                    )
                })
                .collect(),
            steps: 0,
        }
    }

    pub fn get(&self, name: &str) -> Option<&TensorState> {
        self.tensors.get(name)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Replaces the momentum buffer of `name` (e.g. to resume a run).
    pub fn set_momentum(&mut self, name: &str, momentum: Tensor) -> Result<()> {
        let ts = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::usage(format!("optimizer state has no entry for `{name}`")))?;
        if ts.momentum.shape() != momentum.shape() {
            return Err(Error::shape(format!(
                "momentum for `{name}` has shape {:?}, expected {:?}",
                momentum.shape(),
                ts.momentum.shape()
            )));
        }
        ts.momentum = momentum;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub step: u64,
    pub tensor: String,
    #[serde(flatten)]
    pub energy: EnergyTriple,
}

/// Name used for the shared triple in [`EnergyScope::Global`] traces.
pub const GLOBAL_ENERGY_NAME: &str = "*";

/// `β·v + (1−β)·g`.
pub fn momentum_update(v: &Tensor, g: &Tensor, beta: f64) -> Result<Tensor> {
    v.zip_map(g, |v, g| beta * v + (1.0 - beta) * g)
}

pub fn compute_energy(theta: &Tensor, v: &Tensor) -> Result<EnergyTriple> {
    if theta.shape() != v.shape() {
        return Err(Error::shape(format!(
            "compute_energy: θ {:?} vs v {:?}",
            theta.shape(),
            v.shape()
        )));
    }
    let kinetic = 0.5 * v.squared_norm();
    let potential = 0.5 * theta.squared_norm();
    Ok(EnergyTriple {
        kinetic,
        potential,
        hamiltonian: kinetic + potential,
    })
}

/// `θ − η·v/√(H+ε)`.
pub fn apply_update(theta: &Tensor, v: &Tensor, cfg: &OptimConfig, hamiltonian: f64) -> Result<Tensor> {
    if !(hamiltonian >= 0.0) {
        return Err(Error::argument(format!("apply_update: H = {hamiltonian} is negative")));
    }
    let step = cfg.eta / (hamiltonian + cfg.epsilon).sqrt();
    theta.zip_map(v, |t, v| t - step * v)
}

fn check_grads(params: &ParamSet, grads: &ParamSet, state: &ParamState) -> Result<()> {
    for e in params.entries() {
        let g = grads
            .get(&e.name)
            .ok_or_else(|| Error::usage(format!("missing gradient for `{}`", e.name)))?;
        if g.shape() != e.tensor.shape() {
            return Err(Error::shape(format!(
                "gradient for `{}` has shape {:?}, parameter {:?}",
                e.name,
                g.shape(),
                e.tensor.shape()
            )));
        }
        if !state.tensors.contains_key(&e.name) {
            return Err(Error::usage(format!("optimizer state has no entry for `{}`", e.name)));
        }
    }
    Ok(())
}

/// One symplectic-optimizer step over every tensor; returns the energy trace
/// of this step in registry order.
pub fn step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut ParamState,
    cfg: &OptimConfig,
) -> Result<Vec<EnergyRecord>> {
    step_with_normalizer(params, grads, state, cfg, |e| e.hamiltonian)
}

/// [`step`] with the value under the square root replaced by `normalizer(triple)`
/// (the triple is still recorded). Used to check the algebraic reductions of
/// the update rule.
pub fn step_with_normalizer(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut ParamState,
    cfg: &OptimConfig,
    normalizer: impl Fn(&EnergyTriple) -> f64,
) -> Result<Vec<EnergyRecord>> {
    check_grads(params, grads, state)?;
    state.steps += 1;
    let step_no = state.steps;

    let mut updates = Vec::with_capacity(params.len());
    for e in params.entries() {
        let ts = &state.tensors[&e.name];
        let v = momentum_update(&ts.momentum, grads.get(&e.name).expect("checked"), cfg.beta)?;
        let energy = compute_energy(&e.tensor, &v)?;
        updates.push((v, energy));
    }

    let mut trace: Vec<EnergyRecord> = params
        .names()
        .zip(&updates)
        .map(|(name, (_, energy))| EnergyRecord {
            step: step_no,
            tensor: name.to_string(),
            energy: *energy,
        })
        .collect();
    let global = match cfg.energy_scope {
        EnergyScope::PerTensor => None,
        EnergyScope::Global => {
            let kinetic: f64 = updates.iter().map(|(_, e)| e.kinetic).sum();
            let potential: f64 = updates.iter().map(|(_, e)| e.potential).sum();
            let g = EnergyTriple {
                kinetic,
                potential,
                hamiltonian: kinetic + potential,
            };
            trace.push(EnergyRecord {
                step: step_no,
                tensor: GLOBAL_ENERGY_NAME.to_string(),
                energy: g,
            });
            Some(g)
        }
    };

    for (entry, (v, energy)) in params.entries_mut().iter_mut().zip(updates) {
        let h = normalizer(&global.unwrap_or(energy));
        entry.tensor = apply_update(&entry.tensor, &v, cfg, h)?;
        let ts = state.tensors.get_mut(&entry.name).expect("checked");
        ts.momentum = v;
        ts.last_energy = energy;
    }
    Ok(trace)
}

/// Classical heavy-ball momentum: `v ← β·v + g; θ ← θ − η·v`.
pub fn sgd_momentum_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut ParamState,
    eta: f64,
    beta: f64,
) -> Result<()> {
    check_grads(params, grads, state)?;
    state.steps += 1;
    for entry in params.entries_mut() {
        let ts = state.tensors.get_mut(&entry.name).expect("checked");
        let v = ts.momentum.zip_map(grads.get(&entry.name).expect("checked"), |v, g| beta * v + g)?;
        entry.tensor.axpy(-eta, &v)?;
        ts.momentum = v;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Symplectic,
    SgdMomentum,
}

/// An optimizer bound to one model's state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    cfg: OptimConfig,
    state: ParamState,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, cfg: OptimConfig, params: &ParamSet) -> Self {
        Self {
            kind,
            cfg,
            state: ParamState::new(params),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn state(&self) -> &ParamState {
        &self.state
    }

    /// Returns the energy records of this step (empty for the baseline).
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<Vec<EnergyRecord>> {
        match self.kind {
            OptimizerKind::Symplectic => step(params, grads, &mut self.state, &self.cfg),
            OptimizerKind::SgdMomentum => {
                sgd_momentum_step(params, grads, &mut self.state, self.cfg.eta, self.cfg.beta)
                    .map(|_| Vec::new())
            }
        }
    }
}

/// CSV with header `step,tensor_name,K,V,H`.
pub fn write_energy_trace(records: &[EnergyRecord], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_energy_trace_to(records, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_energy_trace_to(records: &[EnergyRecord], w: &mut impl Write) -> Result<()> {
    writeln!(w, "step,tensor_name,K,V,H")?;
    for r in records {
        writeln!(
            w,
            "{},{},{:?},{:?},{:?}",
            r.step, r.tensor, r.energy.kinetic, r.energy.potential, r.energy.hamiltonian
        )?;
    }
    Ok(())
}

pub fn read_energy_trace(path: &Path) -> Result<Vec<EnergyRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["step", "tensor_name", "K", "V", "H"] {
        return Err(Error::Data {
            path: path.to_path_buf(),
            message: format!("unexpected energy trace header {headers:?}"),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i].parse().map_err(|_| Error::Data {
                path: path.to_path_buf(),
                message: format!("bad number `{}`", &row[i]),
            })
        };
        out.push(EnergyRecord {
            step: row[0].parse().map_err(|_| Error::Data {
                path: path.to_path_buf(),
                message: format!("bad step `{}`", &row[0]),
            })?,
            tensor: row[1].to_string(),
            energy: EnergyTriple {
                kinetic: num(2)?,
                potential: num(3)?,
                hamiltonian: num(4)?,
            },
        });
    }
    Ok(out)
}
