use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::circmath::{normalize2, KAPPA_MAX};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Log-variance outputs are squashed smoothly into `(−LOGVAR_BOUND, LOGVAR_BOUND)`.
pub const LOGVAR_BOUND: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// How the last dense layer's raw outputs become head parameters.
///
/// Mapped layouts, per row:
/// * `Biternion`: `[c, s]`, unit norm;
/// * `BiternionKappa`: `[c, s, κ]`;
/// * `Mixture { components: K }`: `[c₁, s₁, …, c_K, s_K, κ₁…κ_K, π₁…π_K]`;
/// * `GaussianParams { latent_dim: L }`: `[μ₁…μ_L, logvar₁…logvar_L]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutputMap {
    Identity { dim: usize },
    Softmax { dim: usize },
    Biternion,
    BiternionKappa,
    Mixture { components: usize },
    GaussianParams { latent_dim: usize },
}

impl OutputMap {
    /// Number of raw (and mapped) outputs per row.
    pub fn arity(&self) -> usize {
        match *self {
            OutputMap::Identity { dim } | OutputMap::Softmax { dim } => dim,
            OutputMap::Biternion => 2,
            OutputMap::BiternionKappa => 3,
            OutputMap::Mixture { components } => 4 * components,
            OutputMap::GaussianParams { latent_dim } => 2 * latent_dim,
        }
    }

    fn forward_row(&self, raw: &[f64], out: &mut [f64]) -> Result<()> {
        match *self {
            OutputMap::Identity { .. } => out.copy_from_slice(raw),
            OutputMap::Softmax { .. } => softmax(raw, out),
            OutputMap::Biternion => {
                let b = normalize2(raw[0], raw[1])?;
                out[0] = b.cos();
                out[1] = b.sin();
            }
            OutputMap::BiternionKappa => {
                let b = normalize2(raw[0], raw[1])?;
                out[0] = b.cos();
                out[1] = b.sin();
                out[2] = kappa_link(raw[2]);
            }
            OutputMap::Mixture { components: k } => {
                for j in 0..k {
                    let b = normalize2(raw[2 * j], raw[2 * j + 1])?;
                    out[2 * j] = b.cos();
                    out[2 * j + 1] = b.sin();
                    out[2 * k + j] = kappa_link(raw[2 * k + j]);
                }
                softmax(&raw[3 * k..], &mut out[3 * k..]);
            }
            OutputMap::GaussianParams { latent_dim: l } => {
                out[..l].copy_from_slice(&raw[..l]);
                for (o, r) in out[l..].iter_mut().zip(&raw[l..]) {
                    *o = LOGVAR_BOUND * (r / LOGVAR_BOUND).tanh();
                }
            }
        }
        Ok(())
    }

    /// Pulls `grad` (w.r.t. the mapped row) back to the raw row.
    fn backward_row(&self, raw: &[f64], mapped: &[f64], grad: &[f64], out: &mut [f64]) {
        match *self {
            OutputMap::Identity { .. } => out.copy_from_slice(grad),
            OutputMap::Softmax { .. } => softmax_backward(mapped, grad, out),
            OutputMap::Biternion => {
                normalize_backward(raw, mapped, grad, out);
            }
            OutputMap::BiternionKappa => {
                normalize_backward(&raw[..2], &mapped[..2], &grad[..2], &mut out[..2]);
                out[2] = grad[2] * kappa_link_derivative(raw[2]);
            }
            OutputMap::Mixture { components: k } => {
                for j in 0..k {
                    let s = 2 * j..2 * j + 2;
                    normalize_backward(&raw[s.clone()], &mapped[s.clone()], &grad[s.clone()], &mut out[s]);
                    out[2 * k + j] = grad[2 * k + j] * kappa_link_derivative(raw[2 * k + j]);
                }
                softmax_backward(&mapped[3 * k..], &grad[3 * k..], &mut out[3 * k..]);
            }
            OutputMap::GaussianParams { latent_dim: l } => {
                out[..l].copy_from_slice(&grad[..l]);
                for i in l..2 * l {
                    let t = (raw[i] / LOGVAR_BOUND).tanh();
                    out[i] = grad[i] * (1.0 - t * t);
                }
            }
        }
    }
}

fn softmax(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

fn softmax_backward(p: &[f64], grad: &[f64], out: &mut [f64]) {
    let dot: f64 = p.iter().zip(grad).map(|(a, b)| a * b).sum();
    for ((o, pi), gi) in out.iter_mut().zip(p).zip(grad) {
        *o = pi * (gi - dot);
    }
}

fn normalize_backward(raw: &[f64], unit: &[f64], grad: &[f64], out: &mut [f64]) {
    let norm = raw[0].hypot(raw[1]);
    let proj = grad[0] * unit[0] + grad[1] * unit[1];
    out[0] = (grad[0] - proj * unit[0]) / norm;
    out[1] = (grad[1] - proj * unit[1]) / norm;
}

#[inline]
pub(crate) fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Positivity link for concentrations: softplus followed by a smooth cap,
/// `κ_max · (1 − exp(−softplus(u)/κ_max))`. Monotone, `≈ softplus(u)` well
/// below the cap, never above `κ_max`.
#[inline]
pub fn kappa_link(u: f64) -> f64 {
    -KAPPA_MAX * (-softplus(u) / KAPPA_MAX).exp_m1()
}

#[inline]
pub fn kappa_link_derivative(u: f64) -> f64 {
    (-softplus(u) / KAPPA_MAX).exp() * sigmoid(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub units: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(units: usize, activation: Activation) -> Self {
        LayerSpec { units, activation }
    }
}

/// Hidden dense layers followed by one linear layer feeding `output`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<LayerSpec>,
    pub output: OutputMap,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden: Vec<LayerSpec>, output: OutputMap) -> Self {
        NetworkSpec {
            input_dim,
            hidden,
            output,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidParameter("input dimension must be positive".into()));
        }
        if self.hidden.iter().any(|l| l.units == 0) {
            return Err(Error::InvalidParameter("hidden layers need at least one unit".into()));
        }
        if self.output.arity() == 0 {
            return Err(Error::InvalidParameter("output map has no outputs".into()));
        }
        Ok(())
    }

    /// `(inputs, outputs, activation)` for every dense layer, in order.
    pub fn layer_dims(&self) -> Vec<(usize, usize, Activation)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for l in &self.hidden {
            dims.push((prev, l.units, l.activation));
            prev = l.units;
        }
        dims.push((prev, self.output.arity(), Activation::Identity));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o, _)| o * (i + 1)).sum()
    }
}

/// Borrowed view of one dense layer: `y = act(W x + b)`, `W` is `out × in`.
#[derive(Debug, Clone, Copy)]
pub struct DenseLayer<'a> {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: &'a [f64],
    pub bias: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    inputs: usize,
    outputs: usize,
    activation: Activation,
    offset: usize,
}

/// A network spec together with its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<f64>,
}

/// Activations recorded by [`Network::forward_taped`] for one batch.
#[derive(Debug, Clone)]
pub struct Tape {
    // layer inputs and outputs: activations[0] is the batch input,
    // activations[L] the raw output of the final linear layer
    activations: Vec<Tensor>,
    mapped: Tensor,
}

impl Tape {
    pub fn output(&self) -> &Tensor {
        &self.mapped
    }
}

impl Network {
    /// Fan-in-scaled uniform weights, zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut params = Vec::with_capacity(spec.param_count());
        for (inputs, outputs, act) in spec.layer_dims() {
            let gain = if act == Activation::Relu { 6.0 } else { 3.0 };
            let limit = (gain / inputs as f64).sqrt();
            for _ in 0..inputs * outputs {
                params.push(rng.random_range(-limit..limit));
            }
            params.extend(std::iter::repeat_n(0.0, outputs));
        }
        Ok(Network { spec, params })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::ShapeMismatch {
                expected: vec![spec.param_count()],
                actual: vec![params.len()],
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("non-finite network parameter".into()));
        }
        Ok(Network { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output.arity()
    }

    pub fn num_layers(&self) -> usize {
        self.spec.hidden.len() + 1
    }

    fn layouts(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.spec
            .layer_dims()
            .into_iter()
            .map(|(inputs, outputs, activation)| {
                let l = LayerLayout {
                    inputs,
                    outputs,
                    activation,
                    offset,
                };
                offset += outputs * (inputs + 1);
                l
            })
            .collect()
    }

    pub fn layer(&self, index: usize) -> DenseLayer<'_> {
        let l = self.layouts()[index];
        let w_end = l.offset + l.inputs * l.outputs;
        DenseLayer {
            inputs: l.inputs,
            outputs: l.outputs,
            activation: l.activation,
            weights: &self.params[l.offset..w_end],
            bias: &self.params[w_end..w_end + l.outputs],
        }
    }

    /// Mutable `(weights, bias)` of one layer.
    pub fn layer_params_mut(&mut self, index: usize) -> (&mut [f64], &mut [f64]) {
        let l = self.layouts()[index];
        let w_end = l.offset + l.inputs * l.outputs;
        let (w, rest) = self.params[l.offset..].split_at_mut(w_end - l.offset);
        (w, &mut rest[..l.outputs])
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                expected: vec![x.rows(), self.spec.input_dim],
                actual: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn dense_forward(&self, l: &LayerLayout, input: &Tensor) -> Tensor {
        let n = input.rows();
        let w = &self.params[l.offset..l.offset + l.inputs * l.outputs];
        let b = &self.params[l.offset + l.inputs * l.outputs..l.offset + l.outputs * (l.inputs + 1)];
        let mut out = vec![0.0; n * l.outputs];
        for r in 0..n {
            let a = input.row(r);
            let o_row = &mut out[r * l.outputs..(r + 1) * l.outputs];
            for (o, y) in o_row.iter_mut().enumerate() {
                let w_row = &w[o * l.inputs..(o + 1) * l.inputs];
                let mut s = b[o];
                for (wk, ak) in w_row.iter().zip(a) {
                    s += wk * ak;
                }
                *y = l.activation.apply(s);
            }
        }
        Tensor::from_raw(n, l.outputs, out)
    }

    fn map_output(&self, raw: &Tensor) -> Result<Tensor> {
        let mut mapped = Tensor::zeros(raw.rows(), raw.cols());
        for r in 0..raw.rows() {
            self.spec.output.forward_row(raw.row(r), mapped.row_mut(r))?;
        }
        Ok(mapped)
    }

    /// Head parameters for every row of `x` (shape `n × input_dim`).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let layouts = self.layouts();
        let mut a = self.dense_forward(&layouts[0], x);
        for l in &layouts[1..] {
            a = self.dense_forward(l, &a);
        }
        self.map_output(&a)
    }

    /// Like [`forward`](Self::forward) but keeps the activations needed by
    /// [`backward`](Self::backward).
    pub fn forward_taped(&self, x: &Tensor) -> Result<Tape> {
        self.check_input(x)?;
        let layouts = self.layouts();
        let mut activations = Vec::with_capacity(layouts.len() + 1);
        activations.push(x.clone());
        for l in &layouts {
            let next = self.dense_forward(l, activations.last().unwrap());
            activations.push(next);
        }
        let mapped = self.map_output(activations.last().unwrap())?;
        Ok(Tape {
            activations,
            mapped,
        })
    }

    /// Reverse sweep over a tape. `grad_output` is the gradient of the
    /// objective w.r.t. the mapped outputs; parameter gradients are
    /// accumulated into `grads` and the gradient w.r.t. the input is returned.
    pub fn backward(&self, tape: &Tape, grad_output: &Tensor, grads: &mut [f64]) -> Tensor {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        let layouts = self.layouts();
        let raw = tape.activations.last().unwrap();
        let n = raw.rows();
        let mut delta = Tensor::zeros(n, raw.cols());
        for r in 0..n {
            self.spec
                .output
                .backward_row(raw.row(r), tape.mapped.row(r), grad_output.row(r), delta.row_mut(r));
        }
        for (li, l) in layouts.iter().enumerate().rev() {
            let input = &tape.activations[li];
            let output = &tape.activations[li + 1];
            // gradient w.r.t. the pre-activation
            for (d, y) in delta.values_mut().iter_mut().zip(output.values()) {
                *d *= l.activation.derivative_from_output(*y);
            }
            let w_len = l.inputs * l.outputs;
            let (gw, gb) = grads[l.offset..l.offset + w_len + l.outputs].split_at_mut(w_len);
            let w = &self.params[l.offset..l.offset + w_len];
            let mut grad_in = Tensor::zeros(n, l.inputs);
            for r in 0..n {
                let d_row = delta.row(r);
                let a = input.row(r);
                let gi = grad_in.row_mut(r);
                for (o, &d) in d_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let gw_row = &mut gw[o * l.inputs..(o + 1) * l.inputs];
                    let w_row = &w[o * l.inputs..(o + 1) * l.inputs];
                    for k in 0..l.inputs {
                        gw_row[k] += d * a[k];
                        gi[k] += d * w_row[k];
                    }
                }
            }
            delta = grad_in;
        }
        delta
    }
}
