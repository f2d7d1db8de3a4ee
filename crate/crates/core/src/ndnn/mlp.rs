use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::rng::Rng;
use crate::{Error, Result};

/// Affine layer `x ↦ x·W + b` with `W` stored as `in × out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: DenseMatrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weight: DenseMatrix::from_vec(fan_in, fan_out, data).expect("sized above"),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.fan_in(), self.fan_out())
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }

    fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut z = x.matmul(&self.weight)?;
        z.add_row_vector(&self.bias)?;
        Ok(z)
    }

    fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weight.data());
        out.extend_from_slice(&self.bias);
    }

    fn load_from(&mut self, flat: &[f64]) -> usize {
        let nw = self.weight.data().len();
        self.weight.data_mut().copy_from_slice(&flat[..nw]);
        let nb = self.bias.len();
        self.bias.copy_from_slice(&flat[nw..nw + nb]);
        nw + nb
    }

    fn add_scaled(&mut self, s: f64, other: &Layer) {
        for (a, b) in self.weight.data_mut().iter_mut().zip(other.weight.data()) {
            *a += s * b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += s * b;
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

/// Which parameter block an update or gradient request refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamBlock {
    Theta,
    Phi,
    Both,
}

impl ParamBlock {
    pub fn includes_theta(self) -> bool {
        matches!(self, ParamBlock::Theta | ParamBlock::Both)
    }

    pub fn includes_phi(self) -> bool {
        matches!(self, ParamBlock::Phi | ParamBlock::Both)
    }
}

/// Feed-forward classifier split into a ReLU feature extractor (`theta`) and a
/// linear classification head (`phi`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub theta_layers: Vec<Layer>,
    pub phi_layer: Layer,
    pub activation: Activation,
}

/// Activations kept from a forward pass. `inputs[l]` feeds layer `l`; the
/// last entry feeds the head.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub inputs: Vec<DenseMatrix>,
    pub logits: DenseMatrix,
}

impl ForwardCache {
    pub fn features(&self) -> &DenseMatrix {
        self.inputs.last().expect("cache always holds the input")
    }
}

impl MlpModel {
    /// Builds a model from layer sizes `[d, h1, …, hL, k]`; the final pair is
    /// the head. Weights are Glorot-uniform, biases zero.
    pub fn init(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let n = sizes.len();
        let theta_layers = sizes[..n - 1]
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], rng))
            .collect();
        let phi_layer = Layer::glorot(sizes[n - 2], sizes[n - 1], rng);
        Ok(Self {
            theta_layers,
            phi_layer,
            activation: Activation::Relu,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let n = sizes.len();
        Ok(Self {
            theta_layers: sizes[..n - 1]
                .windows(2)
                .map(|w| Layer::zeros(w[0], w[1]))
                .collect(),
            phi_layer: Layer::zeros(sizes[n - 2], sizes[n - 1]),
            activation: Activation::Relu,
        })
    }

    /// Assembles a model from explicit layers, validating the dimension chain.
    pub fn from_layers(theta_layers: Vec<Layer>, phi_layer: Layer) -> Result<Self> {
        let model = Self {
            theta_layers,
            phi_layer,
            activation: Activation::Relu,
        };
        model.validate()?;
        Ok(model)
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 {
            return Err(Error::arg("an MLP needs at least input and output sizes"));
        }
        if sizes.contains(&0) {
            return Err(Error::arg(format!("zero-width layer in {sizes:?}")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev: Option<usize> = None;
        for layer in self.theta_layers.iter().chain(std::iter::once(&self.phi_layer)) {
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::shape("MlpModel bias", layer.fan_out(), layer.bias.len()));
            }
            if let Some(p) = prev {
                if p != layer.fan_in() {
                    return Err(Error::shape("MlpModel layer chain", p, layer.fan_in()));
                }
            }
            prev = Some(layer.fan_out());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.theta_layers
            .first()
            .unwrap_or(&self.phi_layer)
            .fan_in()
    }

    pub fn num_classes(&self) -> usize {
        self.phi_layer.fan_out()
    }

    /// Layer sizes `[d, h1, …, k]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.theta_layers.iter().map(Layer::fan_out));
        s.push(self.num_classes());
        s
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward_cached(x)?.logits)
    }

    pub fn forward_cached(&self, x: &DenseMatrix) -> Result<ForwardCache> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("forward input", self.input_dim(), x.cols()));
        }
        let mut inputs = Vec::with_capacity(self.theta_layers.len() + 1);
        inputs.push(x.clone());
        for layer in &self.theta_layers {
            let z = layer.apply(inputs.last().expect("non-empty"))?;
            inputs.push(z.map(relu));
        }
        let logits = self.phi_layer.apply(inputs.last().expect("non-empty"))?;
        Ok(ForwardCache { inputs, logits })
    }

    /// Smallest `|pre-activation|` of any hidden unit on any row of `x`: how
    /// far the ReLU pattern is from flipping. Infinite without hidden layers.
    pub fn kink_distance(&self, x: &DenseMatrix) -> Result<f64> {
        let mut h = x.clone();
        let mut dist = f64::INFINITY;
        for layer in &self.theta_layers {
            let z = layer.apply(&h)?;
            dist = z.data().iter().fold(dist, |m, v| m.min(v.abs()));
            h = z.map(relu);
        }
        Ok(dist)
    }

    /// Backpropagates `d_logits` (∂L/∂logits) through a cached pass.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &DenseMatrix) -> Result<Gradients> {
        Ok(self.backward_full(cache, d_logits, false)?.0)
    }

    /// Like [`MlpModel::backward`], optionally also returning ∂L/∂x.
    pub(crate) fn backward_full(
        &self,
        cache: &ForwardCache,
        d_logits: &DenseMatrix,
        want_input_grad: bool,
    ) -> Result<(Gradients, Option<DenseMatrix>)> {
        if d_logits.shape() != cache.logits.shape() {
            return Err(Error::shape(
                "backward d_logits",
                format!("{:?}", cache.logits.shape()),
                format!("{:?}", d_logits.shape()),
            ));
        }
        let phi = Layer {
            weight: cache.features().t_matmul(d_logits)?,
            bias: d_logits.column_sums(),
        };
        let mut delta = d_logits.matmul_t(&self.phi_layer.weight)?;
        let mut theta = vec![Layer::zeros(0, 0); self.theta_layers.len()];
        for l in (0..self.theta_layers.len()).rev() {
            // ReLU gate from the layer's own output.
            let out = &cache.inputs[l + 1];
            for (d, &a) in delta.data_mut().iter_mut().zip(out.data()) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            theta[l] = Layer {
                weight: cache.inputs[l].t_matmul(&delta)?,
                bias: delta.column_sums(),
            };
            if l > 0 || want_input_grad {
                delta = delta.matmul_t(&self.theta_layers[l].weight)?;
            }
        }
        let input_grad = want_input_grad.then_some(delta);
        Ok((Gradients { theta, phi }, input_grad))
    }

    pub fn theta_param_count(&self) -> usize {
        self.theta_layers.iter().map(Layer::param_count).sum()
    }

    pub fn phi_param_count(&self) -> usize {
        self.phi_layer.param_count()
    }

    pub fn flatten_theta(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.theta_param_count());
        for l in &self.theta_layers {
            l.flatten_into(&mut out);
        }
        out
    }

    pub fn flatten_phi(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.phi_param_count());
        self.phi_layer.flatten_into(&mut out);
        out
    }

    /// `theta` parameters followed by `phi` parameters.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.flatten_theta();
        out.extend(self.flatten_phi());
        out
    }

    /// Inverse of [`MlpModel::flatten`] using `self` as the shape template.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Self> {
        let total = self.theta_param_count() + self.phi_param_count();
        if flat.len() != total {
            return Err(Error::shape("MlpModel::unflatten", total, flat.len()));
        }
        let mut out = self.clone();
        let mut at = 0;
        for l in &mut out.theta_layers {
            at += l.load_from(&flat[at..]);
        }
        out.phi_layer.load_from(&flat[at..]);
        Ok(out)
    }

    /// Replaces the `theta` block from a flat vector.
    pub fn with_theta(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.theta_param_count() {
            return Err(Error::shape(
                "MlpModel::with_theta",
                self.theta_param_count(),
                flat.len(),
            ));
        }
        let mut out = self.clone();
        let mut at = 0;
        for l in &mut out.theta_layers {
            at += l.load_from(&flat[at..]);
        }
        Ok(out)
    }

    pub fn with_phi(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.phi_param_count() {
            return Err(Error::shape("MlpModel::with_phi", self.phi_param_count(), flat.len()));
        }
        let mut out = self.clone();
        out.phi_layer.load_from(flat);
        Ok(out)
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Parameter-shaped gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub theta: Vec<Layer>,
    pub phi: Layer,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            theta: model.theta_layers.iter().map(Layer::zeros_like).collect(),
            phi: model.phi_layer.zeros_like(),
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &Gradients) {
        for (a, b) in self.theta.iter_mut().zip(&other.theta) {
            a.add_scaled(s, b);
        }
        self.phi.add_scaled(s, &other.phi);
    }

    pub fn flatten_theta(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.theta {
            l.flatten_into(&mut out);
        }
        out
    }

    pub fn flatten_phi(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.phi.flatten_into(&mut out);
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.flatten_theta();
        out.extend(self.flatten_phi());
        out
    }

    /// Zeroes the block not named by `keep`.
    pub fn restrict(mut self, keep: ParamBlock) -> Self {
        if !keep.includes_theta() {
            for l in &mut self.theta {
                *l = l.zeros_like();
            }
        }
        if !keep.includes_phi() {
            self.phi = self.phi.zeros_like();
        }
        self
    }
}
