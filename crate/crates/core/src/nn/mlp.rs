use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::agr::ParamRole;
use crate::optim::ParamRef;
use crate::tensor::{rand_fill_with, seeded_rng, DenseTensor, Distribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Tanh, Activation::Identity];

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `x` and output `y`. ReLU uses 0
    /// at the kink.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| NnError::UnknownActivation(s.to_string()))
    }
}

/// Fully connected layer computing `act(x W^T + b)` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: DenseTensor,
    pub bias: DenseTensor,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: DenseTensor, bias: DenseTensor, activation: Activation) -> Result<Self, NnError> {
        let (out, _) = weight.dims2()?;
        if bias.shape() != [out] {
            return Err(NnError::DimensionMismatch {
                what: "bias",
                expected: out,
                got: bias.len(),
            });
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: DenseTensor,
    pub bias: DenseTensor,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerCache {
    input: DenseTensor,
    pre: DenseTensor,
    post: DenseTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    cache: Option<Vec<LayerCache>>,
}

impl MlpModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::EmptyModel);
        }
        for pair in layers.windows(2) {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(NnError::DimensionMismatch {
                    what: "layer chain",
                    expected: pair[0].out_dim(),
                    got: pair[1].in_dim(),
                });
            }
        }
        Ok(Self {
            layers,
            cache: None,
        })
    }

    /// Random initialization for `widths = [in, h1, ..., out]`. Hidden layers
    /// use `hidden`, the output layer is linear. Weights are uniform in
    /// `±sqrt(6 / fan_in)` for ReLU and `±sqrt(6 / (fan_in + fan_out))`
    /// otherwise; biases start at zero.
    pub fn init(widths: &[usize], hidden: Activation, seed: u64) -> Result<Self, NnError> {
        if widths.len() < 2 {
            return Err(NnError::EmptyModel);
        }
        let mut rng = seeded_rng(seed);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (k, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let last = k == widths.len() - 2;
            let activation = if last { Activation::Identity } else { hidden };
            let limit = if activation == Activation::Relu {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            let weight = rand_fill_with(
                &[fan_out, fan_in],
                Distribution::Uniform {
                    lo: -limit,
                    hi: limit,
                },
                &mut rng,
            )?;
            let bias = DenseTensor::zeros(&[fan_out])?;
            layers.push(Layer::new(weight, bias, activation)?);
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.cache = None;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &DenseTensor) -> Result<usize, NnError> {
        let (batch, dim) = x.dims2()?;
        if dim != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                what: "input features",
                expected: self.input_dim(),
                got: dim,
            });
        }
        Ok(batch)
    }

    /// Forward pass that also caches activations for [`MlpModel::backward`].
    pub fn forward(&mut self, x: &DenseTensor) -> Result<DenseTensor, NnError> {
        let batch = self.check_input(x)?;
        let mut cache = Vec::with_capacity(self.layers.len());
        let mut input = x.clone();
        for layer in &self.layers {
            let (pre, post) = layer_forward(layer, &input, batch)?;
            let next = post.clone();
            cache.push(LayerCache { input, pre, post });
            input = next;
        }
        self.cache = Some(cache);
        Ok(input)
    }

    /// Forward pass without touching the cache.
    pub fn predict(&self, x: &DenseTensor) -> Result<DenseTensor, NnError> {
        let batch = self.check_input(x)?;
        let mut input = x.clone();
        for layer in &self.layers {
            input = layer_forward(layer, &input, batch)?.1;
        }
        Ok(input)
    }

    /// Backpropagates `d loss / d logits` through the cached forward pass.
    /// Consumes the cache; a second call without a new forward fails.
    pub fn backward(&mut self, grad_logits: &DenseTensor) -> Result<Vec<LayerGrads>, NnError> {
        let cache = self.cache.take().ok_or(NnError::StaleCache)?;
        let last = &cache[cache.len() - 1];
        if grad_logits.shape() != last.post.shape() {
            self.cache = Some(cache);
            return Err(NnError::DimensionMismatch {
                what: "logit gradient",
                expected: self.output_dim(),
                got: grad_logits.shape().last().copied().unwrap_or(0),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_logits.data().to_vec();
        for (layer, lc) in self.layers.iter().zip(&cache).rev() {
            let (batch, out) = lc.pre.dims2()?;
            let inp = layer.in_dim();
            // dz = upstream * act'(pre)
            let mut dz = upstream;
            for ((d, &x), &y) in dz.iter_mut().zip(lc.pre.data()).zip(lc.post.data()) {
                *d *= layer.activation.derivative(x, y);
            }
            let mut dw = vec![0.0; out * inp];
            let mut db = vec![0.0; out];
            let xs = lc.input.data();
            for b in 0..batch {
                let x_row = &xs[b * inp..(b + 1) * inp];
                for o in 0..out {
                    let g = dz[b * out + o];
                    db[o] += g;
                    if g != 0.0 {
                        let row = &mut dw[o * inp..(o + 1) * inp];
                        for (w, &x) in row.iter_mut().zip(x_row) {
                            *w += g * x;
                        }
                    }
                }
            }
            let mut dx = vec![0.0; batch * inp];
            let wd = layer.weight.data();
            for b in 0..batch {
                let dx_row = &mut dx[b * inp..(b + 1) * inp];
                for o in 0..out {
                    let g = dz[b * out + o];
                    if g != 0.0 {
                        for (d, &w) in dx_row.iter_mut().zip(&wd[o * inp..(o + 1) * inp]) {
                            *d += g * w;
                        }
                    }
                }
            }
            grads.push(LayerGrads {
                weight: DenseTensor::from_vec(&[out, inp], dw)?,
                bias: DenseTensor::from_vec(&[out], db)?,
            });
            upstream = dx;
        }
        grads.reverse();
        Ok(grads)
    }

    /// Pairs every parameter with its gradient in `[w0, b0, w1, b1, ...]`
    /// order, ready for [`crate::optim::Optimizer::step`].
    pub fn param_refs<'a>(&'a mut self, grads: &'a [LayerGrads]) -> Vec<ParamRef<'a>> {
        self.cache = None;
        let mut refs = Vec::with_capacity(2 * self.layers.len());
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            refs.push(ParamRef::new(&mut layer.weight, &g.weight, ParamRole::DenseWeight));
            refs.push(ParamRef::new(&mut layer.bias, &g.bias, ParamRole::Bias));
        }
        refs
    }

    /// Flat copy of all parameters in `[w0, b0, w1, b1, ...]` order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<(), NnError> {
        if values.len() != self.param_count() {
            return Err(NnError::DimensionMismatch {
                what: "flat parameters",
                expected: self.param_count(),
                got: values.len(),
            });
        }
        self.cache = None;
        let mut at = 0;
        for l in &mut self.layers {
            for t in [&mut l.weight, &mut l.bias] {
                let n = t.len();
                t.data_mut().copy_from_slice(&values[at..at + n]);
                at += n;
            }
        }
        Ok(())
    }
}

fn layer_forward(
    layer: &Layer,
    input: &DenseTensor,
    batch: usize,
) -> Result<(DenseTensor, DenseTensor), NnError> {
    let (out, inp) = (layer.out_dim(), layer.in_dim());
    let xs = input.data();
    let ws = layer.weight.data();
    let bs = layer.bias.data();
    let mut pre = vec![0.0; batch * out];
    for b in 0..batch {
        let x_row = &xs[b * inp..(b + 1) * inp];
        for o in 0..out {
            let w_row = &ws[o * inp..(o + 1) * inp];
            let dot: f64 = x_row.iter().zip(w_row).map(|(x, w)| x * w).sum();
            pre[b * out + o] = dot + bs[o];
        }
    }
    let post: Vec<f64> = pre.iter().map(|&z| layer.activation.apply(z)).collect();
    Ok((
        DenseTensor::from_vec(&[batch, out], pre)?,
        DenseTensor::from_vec(&[batch, out], post)?,
    ))
}
