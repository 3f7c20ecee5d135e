//! Dense multilayer perceptrons with hand-written backpropagation.
//!
//! Everything is `f64`. `backward` returns gradients for every parameter and
//! for the network input; the input gradient is what the actor update needs
//! to push `dQ/da` from the critic back into the policy.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// One fully connected layer; `weights` is `n_out x n_in`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    n_in: usize,
    n_out: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.n_in + inp]
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr", into = "MlpRepr")]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    layers: Vec<Dense>,
    hidden_activation: Activation,
    output_activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct MlpRepr {
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
    layers: Vec<Dense>,
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = Error;

    fn try_from(r: MlpRepr) -> Result<Self> {
        check_sizes(&r.layer_sizes)?;
        if r.layers.len() != r.layer_sizes.len() - 1 {
            return Err(Error::Checkpoint("layer count does not match layer_sizes".into()));
        }
        for (l, layer) in r.layers.iter().enumerate() {
            let (n_in, n_out) = (r.layer_sizes[l], r.layer_sizes[l + 1]);
            if layer.n_in != n_in
                || layer.n_out != n_out
                || layer.weights.len() != n_in * n_out
                || layer.biases.len() != n_out
            {
                return Err(Error::Checkpoint(format!("layer {l} has inconsistent shapes")));
            }
            if layer.weights.iter().chain(&layer.biases).any(|x| !x.is_finite()) {
                return Err(Error::Checkpoint(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(Mlp {
            layer_sizes: r.layer_sizes,
            layers: r.layers,
            hidden_activation: r.hidden_activation,
            output_activation: r.output_activation,
        })
    }
}

impl From<Mlp> for MlpRepr {
    fn from(m: Mlp) -> Self {
        MlpRepr {
            layer_sizes: m.layer_sizes,
            hidden_activation: m.hidden_activation,
            output_activation: m.output_activation,
            layers: m.layers,
        }
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "an MLP needs at least 2 layer sizes, got {}",
            sizes.len()
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidParameter(format!("layer widths must be >= 1: {sizes:?}")));
    }
    Ok(())
}

/// Cached activations of one forward pass: `activations[0]` is the input,
/// `activations[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct Tape {
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("tape is never empty")
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Gradients shaped like an [`Mlp`], plus the gradient with respect to the input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
    pub input: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: zero_layers(net),
            input: vec![0.0; net.input_dim()],
        }
    }

    /// Parameter gradients flattened in [`Mlp::params`] order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                return &mut l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.biases.len() {
                return &mut l.biases[idx];
            }
            idx -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|g| *g *= s);
        }
        self.input.iter_mut().for_each(|g| *g *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|g| g.is_finite()))
            && self.input.iter().all(|g| g.is_finite())
    }
}

fn zero_layers(net: &Mlp) -> Vec<LayerGrad> {
    net.layers
        .iter()
        .map(|l| LayerGrad {
            weights: vec![0.0; l.weights.len()],
            biases: vec![0.0; l.biases.len()],
        })
        .collect()
}

impl Mlp {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(layer_sizes: &[usize], hidden: Activation, output: Activation, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(layer_sizes, hidden, output, &mut rng)
    }

    pub fn init_with<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let limit = (6.0 / (n_in + n_out) as f64).sqrt();
                Dense {
                    n_in,
                    n_out,
                    weights: (0..n_in * n_out).map(|_| rng.random_range(-limit..=limit)).collect(),
                    biases: vec![0.0; n_out],
                }
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            hidden_activation: hidden,
            output_activation: output,
        })
    }

    /// Builds a network from explicit `(weights[out][in], biases)` per layer.
    pub fn from_weights(hidden: Activation, output: Activation, layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>) -> Result<Self> {
        let mut sizes = Vec::new();
        let mut dense = Vec::new();
        for (l, (w, b)) in layers.into_iter().enumerate() {
            let n_out = w.len();
            let n_in = w.first().map_or(0, |r| r.len());
            if l == 0 {
                sizes.push(n_in);
            } else if sizes[l] != n_in {
                return Err(Error::DimensionMismatch {
                    context: "layer input width",
                    expected: sizes[l],
                    got: n_in,
                });
            }
            if b.len() != n_out || w.iter().any(|r| r.len() != n_in) {
                return Err(Error::InvalidParameter(format!("layer {l} is ragged")));
            }
            sizes.push(n_out);
            dense.push(Dense {
                n_in,
                n_out,
                weights: w.into_iter().flatten().collect(),
                biases: b,
            });
        }
        MlpRepr {
            layer_sizes: sizes,
            hidden_activation: hidden,
            output_activation: output,
            layers: dense,
        }
        .try_into()
    }

    /// Same architecture, every parameter zero.
    pub fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for l in &mut z.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|x| *x = 0.0);
        }
        z
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layer_sizes == other.layer_sizes
            && self.hidden_activation == other.hidden_activation
            && self.output_activation == other.output_activation
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                return &mut l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.biases.len() {
                return &mut l.biases[idx];
            }
            idx -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let layer = &self.layers[l];
        let act = self.activation_of(l);
        layer
            .weights
            .chunks_exact(layer.n_in)
            .zip(&layer.biases)
            .map(|(row, b)| act.apply(row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi)))
            .collect()
    }

    /// Output only, no tape.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for l in 0..self.layers.len() {
            x = self.layer_forward(l, &x);
        }
        Ok(x)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for l in 0..self.layers.len() {
            let next = self.layer_forward(l, &activations[l]);
            activations.push(next);
        }
        let out = activations.last().unwrap().clone();
        Ok((out, Tape { activations }))
    }

    /// Gradients of `output_grad . output` with respect to every parameter and the input.
    pub fn backward(&self, tape: &Tape, output_grad: &[f64]) -> Result<GradientSet> {
        let mut grads = GradientSet::zeros_like(self);
        let input_grad = self.backward_accumulate(tape, output_grad, &mut grads.layers)?;
        grads.input = input_grad;
        Ok(grads)
    }

    /// Adds this sample's parameter gradients into `acc` and returns the input gradient.
    pub fn backward_accumulate(&self, tape: &Tape, output_grad: &[f64], acc: &mut [LayerGrad]) -> Result<Vec<f64>> {
        if tape.activations.len() != self.layer_sizes.len()
            || tape.activations.iter().zip(&self.layer_sizes).any(|(a, &n)| a.len() != n)
        {
            return Err(Error::DimensionMismatch {
                context: "stale tape",
                expected: self.layer_sizes.len(),
                got: tape.activations.len(),
            });
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "output gradient",
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        if acc.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                context: "gradient accumulator",
                expected: self.layers.len(),
                got: acc.len(),
            });
        }
        let mut upstream = output_grad.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let act = self.activation_of(l);
            let x = &tape.activations[l];
            let a = &tape.activations[l + 1];
            let delta: Vec<f64> = upstream
                .iter()
                .zip(a)
                .map(|(g, &out)| g * act.derivative_from_output(out))
                .collect();
            let g = &mut acc[l];
            let mut down = vec![0.0; layer.n_in];
            for (i, &di) in delta.iter().enumerate() {
                g.biases[i] += di;
                if di == 0.0 {
                    continue;
                }
                let row = &layer.weights[i * layer.n_in..(i + 1) * layer.n_in];
                let grow = &mut g.weights[i * layer.n_in..(i + 1) * layer.n_in];
                for j in 0..layer.n_in {
                    grow[j] += di * x[j];
                    down[j] += row[j] * di;
                }
            }
            upstream = down;
        }
        Ok(upstream)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let doc = NetworkCheckpoint {
            format: NETWORK_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            network: self.clone(),
        };
        let text = serde_json::to_string(&doc).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: NetworkCheckpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if doc.format != NETWORK_FORMAT || doc.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported network checkpoint {} v{}",
                doc.format, doc.version
            )));
        }
        Ok(doc.network)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;
const NETWORK_FORMAT: &str = "mlp";

#[derive(Serialize, Deserialize)]
struct NetworkCheckpoint {
    format: String,
    version: u32,
    network: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first_moment: Vec<LayerGrad>,
    second_moment: Vec<LayerGrad>,
}

impl OptimizerState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first_moment: zero_layers(net),
            second_moment: zero_layers(net),
        }
    }

    pub fn matches(&self, net: &Mlp) -> bool {
        self.first_moment.len() == net.layers.len()
            && self
                .first_moment
                .iter()
                .zip(&self.second_moment)
                .zip(&net.layers)
                .all(|((m, v), l)| {
                    m.weights.len() == l.weights.len()
                        && m.biases.len() == l.biases.len()
                        && v.weights.len() == l.weights.len()
                        && v.biases.len() == l.biases.len()
                })
    }

    /// One bias-corrected Adam descent step on `net` along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &[LayerGrad]) -> Result<()> {
        if !self.matches(net) || grads.len() != net.layers.len() {
            return Err(Error::DimensionMismatch {
                context: "optimizer state",
                expected: net.layers.len(),
                got: grads.len(),
            });
        }
        for (g, l) in grads.iter().zip(&net.layers) {
            if g.weights.len() != l.weights.len() || g.biases.len() != l.biases.len() {
                return Err(Error::DimensionMismatch {
                    context: "gradient shape",
                    expected: l.param_count(),
                    got: g.weights.len() + g.biases.len(),
                });
            }
            if g.weights.iter().chain(&g.biases).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("gradient"));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let gs = g.weights.iter().chain(&g.biases);
            let ms = m.weights.iter_mut().chain(m.biases.iter_mut());
            let vs = v.weights.iter_mut().chain(v.biases.iter_mut());
            for (((p, &gi), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Moves `target` toward `source`: `target <- tau * source + (1 - tau) * target`.
///
/// Evaluated as `source + (1 - tau) * (target - source)`, which is the same
/// map but keeps an equal pair bit-identical and shrinks the gap with a
/// single rounding per step.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !target.same_architecture(source) {
        return Err(Error::InvalidParameter("soft update between different architectures".into()));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must lie in [0, 1], got {tau}")));
    }
    if tau == 0.0 {
        return Ok(());
    }
    let keep = 1.0 - tau;
    for (t, s) in target.layers.iter_mut().zip(&source.layers) {
        for (tp, sp) in t
            .weights
            .iter_mut()
            .chain(t.biases.iter_mut())
            .zip(s.weights.iter().chain(&s.biases))
        {
            *tp = sp + keep * (*tp - sp);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub pass: bool,
}

/// `|a - b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares `backward` against central finite differences of
/// `output_grad . forward(input)` for every parameter and input entry.
pub fn grad_check(net: &Mlp, input: &[f64], output_grad: &[f64], h: f64, tol: f64) -> Result<GradCheckReport> {
    let (_, tape) = net.forward(input)?;
    let analytic = net.backward(&tape, output_grad)?;
    check_against_finite_differences(net, input, output_grad, &analytic, h, tol)
}

/// Finite-difference comparison for an externally supplied gradient set.
pub fn check_against_finite_differences(
    net: &Mlp,
    input: &[f64],
    output_grad: &[f64],
    analytic: &GradientSet,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {h}")));
    }
    let objective = |n: &Mlp, x: &[f64]| -> Result<f64> {
        Ok(n.predict(x)?.iter().zip(output_grad).map(|(o, g)| o * g).sum())
    };
    let mut max_rel_err: f64 = 0.0;
    let mut probe = net.clone();
    let flat = analytic.flat_params();
    for (i, &a) in flat.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let plus = objective(&probe, input)?;
        *probe.param_mut(i) = orig - h;
        let minus = objective(&probe, input)?;
        *probe.param_mut(i) = orig;
        max_rel_err = max_rel_err.max(relative_error(a, (plus - minus) / (2.0 * h)));
    }
    let mut x = input.to_vec();
    for (j, &a) in analytic.input.iter().enumerate() {
        let orig = x[j];
        x[j] = orig + h;
        let plus = objective(net, &x)?;
        x[j] = orig - h;
        let minus = objective(net, &x)?;
        x[j] = orig;
        max_rel_err = max_rel_err.max(relative_error(a, (plus - minus) / (2.0 * h)));
    }
    Ok(GradCheckReport {
        max_rel_err,
        pass: max_rel_err < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, b: f64) -> Mlp {
        Mlp::from_weights(Activation::Relu, Activation::Identity, vec![(vec![vec![w]], vec![b])]).unwrap()
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let a = Mlp::init(&[3, 4, 1], Activation::Relu, Activation::Identity, 9).unwrap();
        let b = Mlp::init(&[3, 4, 1], Activation::Relu, Activation::Identity, 9).unwrap();
        let c = Mlp::init(&[3, 4, 1], Activation::Relu, Activation::Identity, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
        assert_eq!((a.layers()[0].n_out(), a.layers()[0].n_in()), (4, 3));
        assert_eq!((a.layers()[1].n_out(), a.layers()[1].n_in()), (1, 4));
        let limit = (6.0f64 / 7.0).sqrt();
        assert!(a.layers()[0].weights().iter().all(|w| w.abs() <= limit));
        assert!(a.layers().iter().all(|l| l.biases().iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_rejects_bad_widths() {
        assert!(Mlp::init(&[3], Activation::Relu, Activation::Identity, 0).is_err());
        assert!(Mlp::init(&[3, 0, 1], Activation::Relu, Activation::Identity, 0).is_err());
    }

    #[test]
    fn forward_examples() {
        let z = Mlp::init(&[3, 5, 2], Activation::Tanh, Activation::Identity, 1).unwrap().zeroed();
        assert_eq!(z.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);

        assert_eq!(single(2.0, 1.0).predict(&[3.0]).unwrap(), vec![7.0]);

        let t = Mlp::init(&[2, 8, 3], Activation::Relu, Activation::Tanh, 2).unwrap();
        let out = t.predict(&[50.0, -80.0]).unwrap();
        assert!(out.iter().all(|o| o.abs() <= 1.0));
        let (again, _) = t.forward(&[50.0, -80.0]).unwrap();
        assert_eq!(out, again);

        assert!(t.predict(&[1.0]).is_err());
    }

    #[test]
    fn backward_examples() {
        let net = Mlp::init(&[3, 4, 2], Activation::Tanh, Activation::Identity, 5).unwrap();
        let (_, tape) = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let g = net.backward(&tape, &[0.0, 0.0]).unwrap();
        assert!(g.flat_params().iter().all(|&x| x == 0.0));
        assert!(g.input.iter().all(|&x| x == 0.0));

        let lin = single(-1.5, 0.25);
        let (_, tape) = lin.forward(&[4.0]).unwrap();
        let g = lin.backward(&tape, &[1.0]).unwrap();
        assert_eq!(g.layers[0].weights, vec![4.0]);
        assert_eq!(g.layers[0].biases, vec![1.0]);
        assert_eq!(g.input, vec![-1.5]);
    }

    #[test]
    fn stale_tape_is_rejected() {
        let a = Mlp::init(&[3, 4, 2], Activation::Tanh, Activation::Identity, 5).unwrap();
        let b = Mlp::init(&[3, 5, 2], Activation::Tanh, Activation::Identity, 5).unwrap();
        let (_, tape) = a.forward(&[0.1, 0.2, 0.3]).unwrap();
        assert!(b.backward(&tape, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn grad_check_passes_and_detects_sign_flip() {
        let net = Mlp::init(&[4, 6, 5, 3], Activation::Tanh, Activation::Tanh, 11).unwrap();
        let x = [0.3, -0.7, 0.2, 0.9];
        let og = [0.5, -1.0, 2.0];
        let report = grad_check(&net, &x, &og, 1e-5, 1e-4).unwrap();
        assert!(report.pass, "{report:?}");

        let (_, tape) = net.forward(&x).unwrap();
        let mut bad = net.backward(&tape, &og).unwrap();
        let flipped = bad.flat_params().iter().position(|g| g.abs() > 1e-3).unwrap();
        *bad.param_mut(flipped) *= -1.0;
        let report = check_against_finite_differences(&net, &x, &og, &bad, 1e-5, 1e-4).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn grad_check_zero_network() {
        let net = Mlp::init(&[3, 4, 2], Activation::Relu, Activation::Identity, 3).unwrap().zeroed();
        let report = grad_check(&net, &[0.0; 3], &[1.0, -1.0], 1e-5, 1e-4).unwrap();
        assert!(report.max_rel_err < 1e-9, "{report:?}");
        assert!(grad_check(&net, &[0.0; 3], &[1.0, -1.0], 0.0, 1e-4).is_err());
    }

    #[test]
    fn adam_examples() {
        let mut net = single(3.0, 0.0);
        let mut opt = OptimizerState::new(&net, AdamConfig::with_learning_rate(0.1));
        let before = net.clone();
        let zero = GradientSet::zeros_like(&net);
        opt.step(&mut net, &zero.layers).unwrap();
        assert_eq!(net, before);
        assert_eq!(opt.step, 1);

        let mut net = single(3.0, 0.0);
        let mut opt = OptimizerState::new(&net, AdamConfig::with_learning_rate(0.1));
        let mut g = GradientSet::zeros_like(&net);
        g.layers[0].weights[0] = 1.0;
        opt.step(&mut net, &g.layers).unwrap();
        // bias-corrected first step: lr * g / (|g| + eps)
        let expected = 3.0 - 0.1 / (1.0 + 1e-8);
        assert!((net.layers()[0].weights()[0] - expected).abs() < 1e-15);

        g.layers[0].weights[0] = f64::NAN;
        let snapshot = net.clone();
        assert!(matches!(opt.step(&mut net, &g.layers), Err(Error::NonFinite(_))));
        assert_eq!(net, snapshot);
    }

    #[test]
    fn soft_update_examples() {
        let src = Mlp::init(&[2, 3, 1], Activation::Relu, Activation::Identity, 1).unwrap();
        let tgt = Mlp::init(&[2, 3, 1], Activation::Relu, Activation::Identity, 2).unwrap();

        let mut t1 = tgt.clone();
        soft_update(&mut t1, &src, 1.0).unwrap();
        assert_eq!(t1, src);

        let mut t0 = tgt.clone();
        soft_update(&mut t0, &src, 0.0).unwrap();
        assert_eq!(t0, tgt);

        let mut a = single(0.0, 0.0);
        soft_update(&mut a, &single(10.0, 0.0), 0.1).unwrap();
        assert_eq!(a.layers()[0].weights()[0], 1.0);

        let other = Mlp::init(&[2, 4, 1], Activation::Relu, Activation::Identity, 2).unwrap();
        assert!(soft_update(&mut t1, &other, 0.5).is_err());
        assert!(soft_update(&mut t1, &src, 1.5).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = Mlp::init(&[5, 7, 3], Activation::Relu, Activation::Tanh, 77).unwrap();
        net.save(&path).unwrap();
        let back = Mlp::load(&path).unwrap();
        assert_eq!(back, net);
        for (a, b) in back.params().iter().zip(net.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        std::fs::write(&path, "{\"format\":\"mlp\",\"version\":1}").unwrap();
        assert!(matches!(Mlp::load(&path), Err(Error::Checkpoint(_))));
    }
}
