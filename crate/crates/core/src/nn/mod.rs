//! A small feed-forward network toolkit with explicit backpropagation.
//!
//! Tensors are dense `[batch, channels, height, width]` arrays of `f64`.
//! Networks are a flat list of named layers; parameters are addressed by
//! layer name for checkpointing.

pub(crate) mod layers;
pub mod loss;
pub mod optim;

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::contract("tensor data does not match its shape"));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor {
            shape,
            data: alloc::vec![0.0; shape.iter().product()],
        }
    }

    /// Stacks equally sized samples into a batch of shape `[n, c, h, w]`.
    pub fn stack(samples: &[&[f64]], c: usize, h: usize, w: usize) -> Result<Self> {
        let per = c * h * w;
        let mut data = Vec::with_capacity(per * samples.len());
        for s in samples {
            if s.len() != per {
                return Err(Error::contract("sample size does not match the tensor shape"));
            }
            data.extend_from_slice(s);
        }
        Ok(Tensor {
            shape: [samples.len(), c, h, w],
            data,
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.sample_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn reshaped(mut self, shape: [usize; 4]) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape;
        self
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Reshape {
        channels: usize,
        height: usize,
        width: usize,
    },
    /// Fixed (non-trainable) per-feature scaling.
    Scale(Vec<f64>),
    LeakyRelu(f64),
    Sigmoid,
}

impl LayerKind {
    fn weight_len(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, outputs } => inputs * outputs,
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            }
            | LayerKind::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => in_channels * out_channels * kernel * kernel,
            _ => 0,
        }
    }

    fn bias_len(&self) -> usize {
        match *self {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv2d { out_channels, .. } | LayerKind::ConvTranspose2d { out_channels, .. } => out_channels,
            _ => 0,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv2d { in_channels, kernel, .. } => in_channels * kernel * kernel,
            LayerKind::ConvTranspose2d {
                in_channels,
                kernel,
                stride,
                ..
            } => (in_channels * kernel * kernel / (stride * stride)).max(1),
            _ => 1,
        }
    }

    pub fn output_shape(&self, input: [usize; 4]) -> Result<[usize; 4]> {
        let [n, c, h, w] = input;
        match *self {
            LayerKind::Dense { inputs, outputs } => {
                if c * h * w != inputs {
                    return Err(Error::contract("dense layer input size mismatch"));
                }
                Ok([n, outputs, 1, 1])
            }
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if c != in_channels || h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(Error::contract("convolution input shape mismatch"));
                }
                Ok([
                    n,
                    out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerKind::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if c != in_channels || (h - 1) * stride + kernel < 2 * padding {
                    return Err(Error::contract("transposed convolution input shape mismatch"));
                }
                Ok([
                    n,
                    out_channels,
                    (h - 1) * stride + kernel - 2 * padding,
                    (w - 1) * stride + kernel - 2 * padding,
                ])
            }
            LayerKind::Reshape { channels, height, width } => {
                if c * h * w != channels * height * width {
                    return Err(Error::contract("reshape size mismatch"));
                }
                Ok([n, channels, height, width])
            }
            LayerKind::Scale(ref s) => {
                if c * h * w != s.len() {
                    return Err(Error::contract("scale layer size mismatch"));
                }
                Ok(input)
            }
            LayerKind::LeakyRelu(_) | LayerKind::Sigmoid => Ok(input),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Layer {
            name: name.into(),
            weight: alloc::vec![0.0; kind.weight_len()],
            bias: alloc::vec![0.0; kind.bias_len()],
            kind,
        }
    }

    pub fn has_params(&self) -> bool {
        !self.weight.is_empty()
    }

    /// He-normal weights scaled by `gain`, zero biases.
    pub fn init_he<R: Rng>(&mut self, rng: &mut R, gain: f64) {
        let std = gain * libm::sqrt(2.0 / self.kind.fan_in() as f64);
        for w in &mut self.weight {
            let z: f64 = rng.sample(StandardNormal);
            *w = z * std;
        }
        self.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn zero_params(&mut self) {
        self.weight.iter_mut().for_each(|w| *w = 0.0);
        self.bias.iter_mut().for_each(|b| *b = 0.0);
    }
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (alloc::vec![0.0; l.weight.len()], alloc::vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, x)| *a += x);
            b.iter_mut().zip(ob).for_each(|(a, x)| *a += x);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|a| *a *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|(w, b)| w.iter().chain(b).all(|v| v.is_finite()))
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gradient entry at a flat parameter index (see [`Network::param`]).
    pub fn get(&self, mut index: usize) -> f64 {
        for (w, b) in &self.layers {
            if index < w.len() {
                return w[index];
            }
            index -= w.len();
            if index < b.len() {
                return b[index];
            }
            index -= b.len();
        }
        panic!("gradient index out of range");
    }
}

/// Activations recorded by a forward pass, consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    activations: Vec<Tensor>,
}

impl Tape {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("tape holds the input at least")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Network { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut Layer> {
        self.layers.iter_mut().find(|l| l.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Checks that an input of `shape` flows through every layer.
    pub fn output_shape(&self, shape: [usize; 4]) -> Result<[usize; 4]> {
        self.layers.iter().try_fold(shape, |s, l| l.kind.output_shape(s))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.output_shape(x.shape())?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layers::forward(layer, &cur);
        }
        Ok(cur)
    }

    pub fn forward_tape(&self, x: &Tensor) -> Result<Tape> {
        self.output_shape(x.shape())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let next = layers::forward(layer, activations.last().unwrap());
            activations.push(next);
        }
        Ok(Tape { activations })
    }

    /// Returns the gradient with respect to the network input and the
    /// parameter gradients, given the gradient of the output.
    pub fn backward(&self, tape: &Tape, grad_out: Tensor) -> (Tensor, Gradients) {
        let mut grads = Gradients::zeros_like(self);
        let mut g = grad_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (gw, gb) = &mut grads.layers[i];
            g = layers::backward(layer, &tape.activations[i], &tape.activations[i + 1], &g, gw, gb);
        }
        (g, grads)
    }

    /// Parameter at a flat index running over layers in order, weights then
    /// biases.
    pub fn param(&self, index: usize) -> f64 {
        *self.locate(index).0
    }

    pub fn param_mut(&mut self, index: usize) -> &mut f64 {
        let mut index = index;
        for l in &mut self.layers {
            if index < l.weight.len() {
                return &mut l.weight[index];
            }
            index -= l.weight.len();
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn locate(&self, mut index: usize) -> (&f64, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if index < l.weight.len() {
                return (&l.weight[index], li);
            }
            index -= l.weight.len();
            if index < l.bias.len() {
                return (&l.bias[index], li);
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}
