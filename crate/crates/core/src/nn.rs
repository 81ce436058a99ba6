//! Parameter-holding layers shared by the backbone and the projectors.

use vtcc_tensor::{NormMode, Real, RunningStats, Tensor};

use crate::error::Result;
use crate::rng::SeededRng;

pub const INIT_STD: f64 = 0.02;

/// A named piece of model state.
pub enum Slot<'a, T: Real> {
    Param(&'a mut Tensor<T>),
    /// Non-trainable state such as batch-norm running statistics.
    Buffer(&'a mut Vec<T>),
}

/// Anything that owns parameters or buffers.
pub trait Module<T: Real> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>);
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn named_slots<T: Real>(m: &mut impl Module<T>) -> Vec<(String, Slot<'_, T>)> {
    let mut out = Vec::new();
    m.slots("", &mut out);
    out
}

pub fn named_params<T: Real>(m: &mut impl Module<T>) -> Vec<(String, &mut Tensor<T>)> {
    named_slots(m)
        .into_iter()
        .filter_map(|(n, s)| match s {
            Slot::Param(p) => Some((n, p)),
            Slot::Buffer(_) => None,
        })
        .collect()
}

pub fn param_count<T: Real>(m: &mut impl Module<T>) -> usize {
    named_params(m).iter().map(|(_, p)| p.numel()).sum()
}

pub(crate) fn trunc_normal<T: Real>(shape: &[usize], rng: &mut SeededRng) -> Result<Tensor<T>> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.truncated_normal(INIT_STD))).collect();
    Ok(Tensor::parameter(data, shape)?)
}

pub(crate) fn constant_param<T: Real>(shape: &[usize], value: f64) -> Tensor<T> {
    Tensor::full(shape, T::lit(value)).into_parameter()
}

/// `y = x W + b` over the last axis; `W` is stored `[in, out]`.
pub struct Linear<T: Real> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(input: usize, output: usize, bias: bool, rng: &mut SeededRng) -> Result<Self> {
        Ok(Linear {
            weight: trunc_normal(&[input, output], rng)?,
            bias: bias.then(|| constant_param(&[output], 0.0)),
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = x.shape();
        let input = *shape.last().unwrap_or(&0);
        let output = self.weight.shape()[1];
        let rows = x.numel() / input.max(1);
        let mut y = x.reshape(&[rows, input])?.matmul(&self.weight)?;
        if let Some(b) = &self.bias {
            y = y.add(b)?;
        }
        let mut out_shape = shape.to_vec();
        *out_shape.last_mut().unwrap() = output;
        Ok(y.reshape(&out_shape)?)
    }
}

impl<T: Real> Module<T> for Linear<T> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>) {
        out.push((join(prefix, "weight"), Slot::Param(&mut self.weight)));
        if let Some(b) = &mut self.bias {
            out.push((join(prefix, "bias"), Slot::Param(b)));
        }
    }
}

pub struct LayerNorm<T: Real> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Real> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: constant_param(&[dim], 1.0),
            beta: constant_param(&[dim], 0.0),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.layer_norm(&self.gamma, &self.beta)?)
    }
}

impl<T: Real> Module<T> for LayerNorm<T> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>) {
        out.push((join(prefix, "gamma"), Slot::Param(&mut self.gamma)));
        out.push((join(prefix, "beta"), Slot::Param(&mut self.beta)));
    }
}

pub struct BatchNorm<T: Real> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub stats: RunningStats<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: constant_param(&[channels], 1.0),
            beta: constant_param(&[channels], 0.0),
            stats: RunningStats::new(channels),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        Ok(x.batch_norm(&self.gamma, &self.beta, &mut self.stats, mode)?)
    }
}

impl<T: Real> Module<T> for BatchNorm<T> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>) {
        out.push((join(prefix, "gamma"), Slot::Param(&mut self.gamma)));
        out.push((join(prefix, "beta"), Slot::Param(&mut self.beta)));
        out.push((join(prefix, "running_mean"), Slot::Buffer(&mut self.stats.mean)));
        out.push((join(prefix, "running_var"), Slot::Buffer(&mut self.stats.var)));
    }
}

pub struct Conv2d<T: Real> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> Conv2d<T> {
    pub fn new(
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(Conv2d {
            weight: trunc_normal(&[output, input, kernel, kernel], rng)?,
            bias: bias.then(|| constant_param(&[output], 0.0)),
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.conv2d(&self.weight, self.bias.as_ref(), self.stride, self.padding)?)
    }
}

impl<T: Real> Module<T> for Conv2d<T> {
    fn slots<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, Slot<'a, T>)>) {
        out.push((join(prefix, "weight"), Slot::Param(&mut self.weight)));
        if let Some(b) = &mut self.bias {
            out.push((join(prefix, "bias"), Slot::Param(b)));
        }
    }
}
