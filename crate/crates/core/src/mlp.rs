//! Feed-forward binary classifier with hand-written forward and backward passes.
//!
//! Layout: `hidden_dims.len()` dense layers with an activation and inverted
//! dropout, followed by a single sigmoid output unit. Parameters live in a
//! [`ParamSet`] ordered `dense0.weight, dense0.bias, dense1.weight, ...`;
//! weights are `[out × in]`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::rng::RngStream;
use crate::tensor::Tensor;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Relu,
    Tanh,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => leaky_relu(x, slope),
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative w.r.t. the pre-activation; the kink at 0 takes the right-hand value.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
        }
    }
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>) -> Self {
        Self {
            input_dim,
            hidden_dims,
            dropout_rate: 0.0,
            activation: Activation::default(),
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.input_dim == 0 {
            out.push("model.input_dim must be at least 1".to_string());
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            out.push(format!(
                "model.hidden_dims must all be at least 1, got {:?}",
                self.hidden_dims
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            out.push(format!(
                "model.dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !slope.is_finite() {
                out.push("model.activation.slope must be finite".to_string());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// `(in, out)` for each dense layer including the output unit.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, 1));
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    spec: LayerSpec,
    params: ParamSet,
}

pub fn weight_name(layer: usize) -> String {
    format!("dense{layer}.weight")
}

pub fn bias_name(layer: usize) -> String {
    format!("dense{layer}.bias")
}

/// He-initialised parameters: weights ~ N(0, √(2/fan_in)), biases zero.
pub fn init_params(spec: &LayerSpec, rng: &mut RngStream) -> Result<MlpParams> {
    spec.validate()?;
    let mut params = ParamSet::new();
    for (l, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
        let std = (2.0 / fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| std * rng.standard_normal())
            .collect();
        params.push(weight_name(l), Tensor::matrix(fan_out, fan_in, w)?)?;
        params.push(bias_name(l), Tensor::zeros(&[fan_out]))?;
    }
    Ok(MlpParams {
        spec: spec.clone(),
        params,
    })
}

impl MlpParams {
    /// Wraps an existing registry after checking it matches `spec`.
    pub fn from_parts(spec: LayerSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if params.len() != 2 * dims.len() {
            return Err(Error::shape(format!(
                "expected {} parameter tensors, got {}",
                2 * dims.len(),
                params.len()
            )));
        }
        for (l, (fan_in, fan_out)) in dims.into_iter().enumerate() {
            let w = &params.entries()[2 * l];
            let b = &params.entries()[2 * l + 1];
            if w.name != weight_name(l) || b.name != bias_name(l) {
                return Err(Error::shape(format!(
                    "layer {l}: unexpected names `{}`, `{}`",
                    w.name, b.name
                )));
            }
            if w.tensor.shape() != [fan_out, fan_in] || b.tensor.shape() != [fan_out] {
                return Err(Error::shape(format!(
                    "layer {l}: weight {:?} / bias {:?} do not match {fan_out}x{fan_in}",
                    w.tensor.shape(),
                    b.tensor.shape()
                )));
            }
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.spec.hidden_dims.len() + 1
    }

    fn weight(&self, l: usize) -> &Tensor {
        self.params.tensor(2 * l)
    }

    fn bias(&self, l: usize) -> &Tensor {
        self.params.tensor(2 * l + 1)
    }

    /// Writes the registry in the snapshot text format (see [`MlpParams::load`]).
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_snapshot()?)?;
        Ok(())
    }

    /// Snapshot format, line oriented:
    ///
    /// ```text
    /// hamcredit-params v1
    /// spec <LayerSpec as JSON>
    /// tensor <name> <dim0> [<dim1> ...]
    /// <row-major values, space separated, shortest round-trip decimal>
    /// ...
    /// ```
    ///
    /// Values are written with Rust's shortest round-trip formatting, so
    /// loading reproduces every bit.
    pub fn to_snapshot(&self) -> Result<String> {
        let mut out = String::from("hamcredit-params v1\n");
        writeln!(out, "spec {}", serde_json::to_string(&self.spec)?).unwrap();
        for e in self.params.entries() {
            let dims: Vec<String> = e.tensor.shape().iter().map(|d| d.to_string()).collect();
            writeln!(out, "tensor {} {}", e.name, dims.join(" ")).unwrap();
            let vals: Vec<String> = e.tensor.data().iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", vals.join(" ")).unwrap();
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_snapshot(&text).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let bad = |m: String| Error::argument(format!("parameter snapshot: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some("hamcredit-params v1") {
            return Err(bad("missing `hamcredit-params v1` header".into()));
        }
        let spec_line = lines.next().ok_or_else(|| bad("missing spec line".into()))?;
        let spec_json = spec_line
            .strip_prefix("spec ")
            .ok_or_else(|| bad("second line must start with `spec `".into()))?;
        let spec: LayerSpec = serde_json::from_str(spec_json)?;
        let mut params = ParamSet::new();
        while let Some(header) = lines.next() {
            if header.is_empty() {
                continue;
            }
            let mut parts = header.split_whitespace();
            if parts.next() != Some("tensor") {
                return Err(bad(format!("expected `tensor`, got `{header}`")));
            }
            let name = parts.next().ok_or_else(|| bad("tensor without name".into()))?;
            let shape = parts
                .map(|d| d.parse::<usize>().map_err(|e| bad(format!("bad dim `{d}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let values = lines.next().ok_or_else(|| bad(format!("no values for `{name}`")))?;
            let data = values
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| bad(format!("bad value `{v}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            params.push(name, Tensor::new(shape, data)?)?;
        }
        MlpParams::from_parts(spec, params)
    }
}

pub enum Mode<'a> {
    Train(&'a mut RngStream),
    Eval,
}

/// Everything [`backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    /// Input to each dense layer: `x`, then the masked activations.
    inputs: Vec<Tensor>,
    /// Pre-activations of the hidden layers.
    pre_activations: Vec<Tensor>,
    /// Inverted-dropout masks (0 or 1/keep) per hidden layer, train mode only.
    masks: Vec<Option<Tensor>>,
    probs: Tensor,
}

impl ForwardCache {
    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn batch_size(&self) -> usize {
        self.probs.len()
    }
}

pub fn forward(params: &MlpParams, x: &Tensor, mode: Mode<'_>) -> Result<(Tensor, ForwardCache)> {
    let spec = &params.spec;
    if x.shape().len() != 2 || x.cols() != spec.input_dim {
        return Err(Error::shape(format!(
            "forward: input shape {:?}, model expects width {}",
            x.shape(),
            spec.input_dim
        )));
    }
    let keep = 1.0 - spec.dropout_rate;
    let mut rng = match mode {
        Mode::Train(rng) if spec.dropout_rate > 0.0 => Some(rng),
        _ => None,
    };
    let n_hidden = spec.hidden_dims.len();
    let mut inputs = Vec::with_capacity(n_hidden + 1);
    let mut pre_activations = Vec::with_capacity(n_hidden);
    let mut masks = Vec::with_capacity(n_hidden);
    let mut current = x.clone();
    for l in 0..n_hidden {
        let mut z = current.matmul_transpose_b(params.weight(l))?;
        z.add_row_vector(params.bias(l))?;
        let mut a = z.map(|v| spec.activation.apply(v));
        let mask = rng.as_deref_mut().map(|rng| {
            let m = Tensor::new(
                a.shape().to_vec(),
                (0..a.len())
                    .map(|_| if rng.next_f64() < keep { 1.0 / keep } else { 0.0 })
                    .collect(),
            )
            .expect("mask shape matches activation");
            for (v, &k) in a.data_mut().iter_mut().zip(m.data()) {
                *v *= k;
            }
            m
        });
        inputs.push(std::mem::replace(&mut current, a));
        pre_activations.push(z);
        masks.push(mask);
    }
    let mut logits = current.matmul_transpose_b(params.weight(n_hidden))?;
    logits.add_row_vector(params.bias(n_hidden))?;
    inputs.push(current);
    let probs = Tensor::vector(logits.data().iter().map(|&z| sigmoid(z)).collect());
    let cache = ForwardCache {
        fingerprint: params.params.fingerprint(),
        inputs,
        pre_activations,
        masks,
        probs: probs.clone(),
    };
    Ok((probs, cache))
}

/// Eval-mode probabilities without keeping a cache.
pub fn predict(params: &MlpParams, x: &Tensor) -> Result<Tensor> {
    forward(params, x, Mode::Eval).map(|(p, _)| p)
}

/// Gradients of a scalar loss w.r.t. every parameter, given `∂loss/∂prob` per row.
///
/// The cache must come from `forward` on these exact parameters.
pub fn backward(params: &MlpParams, cache: &ForwardCache, dloss_dprob: &Tensor) -> Result<ParamSet> {
    let n_layers = params.num_layers();
    if cache.inputs.len() != n_layers || cache.fingerprint != params.params.fingerprint() {
        return Err(Error::usage(
            "backward: forward cache was produced by different parameters",
        ));
    }
    let batch = cache.batch_size();
    if dloss_dprob.len() != batch {
        return Err(Error::shape(format!(
            "backward: {} upstream gradients for a batch of {batch}",
            dloss_dprob.len()
        )));
    }
    let mut grads = params.params.zeros_like();
    // ∂σ/∂z = p(1-p)
    let mut dz = Tensor::matrix(
        batch,
        1,
        dloss_dprob
            .data()
            .iter()
            .zip(cache.probs.data())
            .map(|(&g, &p)| g * p * (1.0 - p))
            .collect(),
    )?;
    for l in (0..n_layers).rev() {
        *grads.tensor_mut(2 * l) = dz.matmul_transpose_a(&cache.inputs[l])?;
        *grads.tensor_mut(2 * l + 1) = dz.sum_rows()?;
        if l == 0 {
            break;
        }
        let mut da = dz.matmul(params.weight(l))?;
        if let Some(mask) = &cache.masks[l - 1] {
            for (v, &m) in da.data_mut().iter_mut().zip(mask.data()) {
                *v *= m;
            }
        }
        let act = params.spec.activation;
        for (v, &z) in da.data_mut().iter_mut().zip(cache.pre_activations[l - 1].data()) {
            *v *= act.derivative(z);
        }
        dz = da;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(hidden: Vec<usize>, input: usize, seed: u64) -> MlpParams {
        init_params(&LayerSpec::new(input, hidden), &mut RngStream::new(seed)).unwrap()
    }

    #[test]
    fn leaky_relu_examples() {
        assert_eq!(leaky_relu(1.0, 0.01), 1.0);
        assert_eq!(leaky_relu(-1.0, 0.01), -0.01);
        assert_eq!(leaky_relu(0.0, 0.3), 0.0);
    }

    #[test]
    fn registry_layout() {
        let p = tiny(vec![128, 64], 20, 0);
        let names: Vec<_> = p.params().names().collect();
        assert_eq!(
            names,
            [
                "dense0.weight",
                "dense0.bias",
                "dense1.weight",
                "dense1.bias",
                "dense2.weight",
                "dense2.bias"
            ]
        );
        assert_eq!(p.params().tensor(0).shape(), &[128, 20]);
        assert_eq!(p.params().tensor(4).shape(), &[1, 64]);
        assert!(p.params().tensor(1).data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn no_hidden_layers_is_logistic() {
        let p = tiny(vec![], 3, 0);
        assert_eq!(p.params().len(), 2);
        assert_eq!(p.params().tensor(0).shape(), &[1, 3]);
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(tiny(vec![4, 3], 5, 9), tiny(vec![4, 3], 5, 9));
        assert_ne!(tiny(vec![4, 3], 5, 9), tiny(vec![4, 3], 5, 10));
    }

    #[test]
    fn he_init_scale() {
        let p = tiny(vec![256], 50, 3);
        let w = p.params().tensor(0);
        let var = w.squared_norm() / w.len() as f64;
        assert!((var - 2.0 / 50.0).abs() < 0.004, "var {var}");
    }

    #[test]
    fn zero_params_give_half() {
        let mut p = tiny(vec![4], 3, 0);
        *p.params_mut() = p.params().zeros_like();
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(predict(&p, &x).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn sigmoid_limits() {
        let mut ps = ParamSet::new();
        ps.push("dense0.weight", Tensor::matrix(1, 1, vec![1.0]).unwrap()).unwrap();
        ps.push("dense0.bias", Tensor::zeros(&[1])).unwrap();
        let p = MlpParams::from_parts(LayerSpec::new(1, vec![]), ps).unwrap();
        let x = Tensor::matrix(3, 1, vec![0.0, 40.0, -40.0]).unwrap();
        let probs = predict(&p, &x).unwrap();
        assert_eq!(probs.data()[0], 0.5);
        assert!(probs.data()[1] > 1.0 - 1e-15);
        assert!(probs.data()[2] < 1e-15);
    }

    #[test]
    fn eval_is_deterministic() {
        let p = tiny(vec![5, 4], 3, 1).clone();
        let p = MlpParams {
            spec: p.spec.clone().with_dropout(0.5),
            params: p.params,
        };
        let x = Tensor::matrix(2, 3, vec![0.3, -1.0, 2.0, 1.0, 1.0, -0.2]).unwrap();
        assert_eq!(predict(&p, &x).unwrap(), predict(&p, &x).unwrap());
    }

    #[test]
    fn input_width_checked() {
        let p = tiny(vec![2], 3, 0);
        let x = Tensor::zeros(&[2, 4]);
        assert!(matches!(forward(&p, &x, Mode::Eval), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let p = tiny(vec![3], 2, 4);
        let x = Tensor::matrix(2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let (_, cache) = forward(&p, &x, Mode::Eval).unwrap();
        let g = backward(&p, &cache, &Tensor::zeros(&[2])).unwrap();
        assert!(g.entries().iter().all(|e| e.tensor.squared_norm() == 0.0));
    }

    #[test]
    fn duplicated_rows_double_the_gradient() {
        let p = tiny(vec![3], 2, 4);
        let one = Tensor::matrix(1, 2, vec![0.7, -1.3]).unwrap();
        let two = Tensor::matrix(2, 2, vec![0.7, -1.3, 0.7, -1.3]).unwrap();
        let (_, c1) = forward(&p, &one, Mode::Eval).unwrap();
        let (_, c2) = forward(&p, &two, Mode::Eval).unwrap();
        let g1 = backward(&p, &c1, &Tensor::vector(vec![0.4])).unwrap();
        let g2 = backward(&p, &c2, &Tensor::vector(vec![0.4, 0.4])).unwrap();
        for (a, b) in g1.entries().iter().zip(g2.entries()) {
            for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
                assert!((2.0 * x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stale_cache_rejected() {
        let mut p = tiny(vec![3], 2, 4);
        let x = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
        let (_, cache) = forward(&p, &x, Mode::Eval).unwrap();
        p.params_mut().tensor_mut(0).data_mut()[0] += 1.0;
        assert!(matches!(
            backward(&p, &cache, &Tensor::vector(vec![1.0])),
            Err(Error::Usage(_))
        ));
        let other = tiny(vec![3, 2], 2, 4);
        assert!(backward(&other, &cache, &Tensor::vector(vec![1.0])).is_err());
    }

    /// Central differences of Σ c_i·p_i against the analytic backward pass,
    /// including the dropout mask drawn in train mode.
    #[test]
    fn finite_difference_check_3_2_1() {
        let spec = LayerSpec::new(3, vec![2]).with_dropout(0.3);
        let p = init_params(&spec, &mut RngStream::new(21)).unwrap();
        let x = Tensor::matrix(4, 3, vec![0.5, -1.0, 2.0, 1.5, 0.2, -0.7, -0.3, 0.9, 1.1, 2.0, -2.0, 0.4])
            .unwrap();
        let c = Tensor::vector(vec![0.3, -1.2, 0.8, 0.5]);
        let seed = RngStream::new(77);
        let objective = |p: &MlpParams| {
            let mut rng = seed.clone();
            let (probs, _) = forward(p, &x, Mode::Train(&mut rng)).unwrap();
            probs.data().iter().zip(c.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut rng = seed.clone();
        let (_, cache) = forward(&p, &x, Mode::Train(&mut rng)).unwrap();
        let grads = backward(&p, &cache, &c).unwrap();
        let h = 1e-6;
        for (ti, entry) in p.params().entries().iter().enumerate() {
            for k in 0..entry.tensor.len() {
                let mut plus = p.clone();
                plus.params_mut().tensor_mut(ti).data_mut()[k] += h;
                let mut minus = p.clone();
                minus.params_mut().tensor_mut(ti).data_mut()[k] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let an = grads.tensor(ti).data()[k];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-5, "{} [{k}]: fd {fd} analytic {an}", entry.name);
            }
        }
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let spec = LayerSpec::new(2, vec![3]).with_dropout(0.2);
        let mut p = init_params(&spec, &mut RngStream::new(2)).unwrap();
        // positive activations so the expectation is easy to read off
        for v in p.params_mut().tensor_mut(0).data_mut() {
            *v = v.abs() + 0.1;
        }
        let x = Tensor::matrix(1, 2, vec![1.0, 0.5]).unwrap();
        let (_, eval) = forward(&p, &x, Mode::Eval).unwrap();
        let reference = eval.inputs[1].clone();
        let mut rng = RngStream::new(5);
        let trials = 10_000;
        let mut sum = vec![0.0; reference.len()];
        for _ in 0..trials {
            let (_, c) = forward(&p, &x, Mode::Train(&mut rng)).unwrap();
            for (s, v) in sum.iter_mut().zip(c.inputs[1].data()) {
                *s += v;
            }
        }
        for (s, r) in sum.iter().zip(reference.data()) {
            let mean = s / trials as f64;
            assert!((mean - r).abs() <= 0.02 * r.abs(), "mean {mean} vs eval {r}");
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let spec = LayerSpec::new(4, vec![3, 2])
            .with_dropout(0.2)
            .with_activation(Activation::Tanh);
        let p = init_params(&spec, &mut RngStream::new(8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.txt");
        p.save(&path).unwrap();
        let q = MlpParams::load(&path).unwrap();
        assert_eq!(q.spec(), p.spec());
        for (a, b) in p.params().entries().iter().zip(q.params().entries()) {
            assert_eq!(a.name, b.name);
            let ab: Vec<u64> = a.tensor.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.tensor.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        assert!(MlpParams::from_snapshot("nope").is_err());
    }
}
