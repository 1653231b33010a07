//! Parameter binding and small layer helpers shared by the mixer and codec.

use std::collections::HashMap;

use ndauto::init::{trunc_normal, xavier_uniform};
use ndauto::{Graph, ParamId, Params, Real, Tensor, Var};
use rand::Rng;

use crate::error::{Error, Result};

/// Binds named parameters into one graph, reusing the leaf for repeated use
/// (weights shared across unrolled iterations accumulate into one gradient).
pub struct Binder<'p, T: Real> {
    params: &'p Params<T>,
    bound: HashMap<ParamId, Var>,
}

impl<'p, T: Real> Binder<'p, T> {
    pub fn new(params: &'p Params<T>) -> Self {
        Self { params, bound: HashMap::new() }
    }

    pub fn params(&self) -> &'p Params<T> {
        self.params
    }

    pub fn get(&mut self, g: &mut Graph<T>, name: &str) -> Result<Var> {
        let id = self
            .params
            .id(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))?;
        Ok(*self.bound.entry(id).or_insert_with(|| g.param(self.params, id)))
    }

    pub fn conv(&mut self, g: &mut Graph<T>, x: Var, prefix: &str, stride: usize, pad: usize) -> Result<Var> {
        let w = self.get(g, &format!("{prefix}.weight"))?;
        let b = self.get(g, &format!("{prefix}.bias"))?;
        Ok(g.conv2d(x, w, Some(b), stride, pad)?)
    }

    pub fn conv_t(&mut self, g: &mut Graph<T>, x: Var, prefix: &str, stride: usize) -> Result<Var> {
        let w = self.get(g, &format!("{prefix}.weight"))?;
        let b = self.get(g, &format!("{prefix}.bias"))?;
        Ok(g.conv_transpose2d(x, w, Some(b), stride)?)
    }

    pub fn linear(&mut self, g: &mut Graph<T>, x: Var, prefix: &str, bias: bool) -> Result<Var> {
        let w = self.get(g, &format!("{prefix}.weight"))?;
        let b = if bias { Some(self.get(g, &format!("{prefix}.bias"))?) } else { None };
        Ok(g.linear(x, w, b)?)
    }

    /// `fc2(gelu(fc1(x)))` over the last axis.
    pub fn mlp(&mut self, g: &mut Graph<T>, x: Var, prefix: &str) -> Result<Var> {
        let h = self.linear(g, x, &format!("{prefix}.fc1"), true)?;
        let h = g.gelu(h)?;
        self.linear(g, h, &format!("{prefix}.fc2"), true)
    }

    pub fn layer_norm(&mut self, g: &mut Graph<T>, x: Var, prefix: &str) -> Result<Var> {
        let gamma = self.get(g, &format!("{prefix}.gamma"))?;
        let beta = self.get(g, &format!("{prefix}.beta"))?;
        Ok(g.layer_norm(x, gamma, beta)?)
    }

    pub fn instance_norm(&mut self, g: &mut Graph<T>, x: Var, prefix: &str) -> Result<Var> {
        let gamma = self.get(g, &format!("{prefix}.gamma"))?;
        let beta = self.get(g, &format!("{prefix}.beta"))?;
        Ok(g.instance_norm(x, gamma, beta)?)
    }

    pub fn prelu(&mut self, g: &mut Graph<T>, x: Var, name: &str) -> Result<Var> {
        let a = self.get(g, name)?;
        Ok(g.prelu(x, a)?)
    }
}

/// Initial slope of every PReLU.
pub const PRELU_INIT: f64 = 0.25;
/// Standard deviation of truncated-normal MLP weights.
pub const MLP_STD: f64 = 0.02;

pub(crate) fn add_conv<T: Real, R: Rng>(
    p: &mut Params<T>,
    prefix: &str,
    shape: [usize; 4],
    rng: &mut R,
) -> Result<()> {
    p.insert(format!("{prefix}.weight"), xavier_uniform(&shape, rng))?;
    p.insert(format!("{prefix}.bias"), Tensor::zeros(&[shape[0]]))?;
    Ok(())
}

/// Transposed convolution weights are stored `[in, out, k, k]`.
pub(crate) fn add_conv_t<T: Real, R: Rng>(
    p: &mut Params<T>,
    prefix: &str,
    shape: [usize; 4],
    rng: &mut R,
) -> Result<()> {
    p.insert(format!("{prefix}.weight"), xavier_uniform(&shape, rng))?;
    p.insert(format!("{prefix}.bias"), Tensor::zeros(&[shape[1]]))?;
    Ok(())
}

pub(crate) fn add_linear<T: Real, R: Rng>(
    p: &mut Params<T>,
    prefix: &str,
    out: usize,
    inp: usize,
    bias: bool,
    rng: &mut R,
) -> Result<()> {
    p.insert(format!("{prefix}.weight"), trunc_normal(&[out, inp], MLP_STD, rng))?;
    if bias {
        p.insert(format!("{prefix}.bias"), Tensor::zeros(&[out]))?;
    }
    Ok(())
}

pub(crate) fn add_mlp<T: Real, R: Rng>(p: &mut Params<T>, prefix: &str, width: usize, hidden: usize, rng: &mut R) -> Result<()> {
    add_linear(p, &format!("{prefix}.fc1"), hidden, width, true, rng)?;
    add_linear(p, &format!("{prefix}.fc2"), width, hidden, true, rng)
}

pub(crate) fn add_norm<T: Real>(p: &mut Params<T>, prefix: &str, c: usize) -> Result<()> {
    p.insert(format!("{prefix}.gamma"), Tensor::full(&[c], T::one()))?;
    p.insert(format!("{prefix}.beta"), Tensor::zeros(&[c]))?;
    Ok(())
}

pub(crate) fn add_prelu<T: Real>(p: &mut Params<T>, name: &str, c: usize) -> Result<()> {
    p.insert(name, Tensor::full(&[c], T::lit(PRELU_INIT)))?;
    Ok(())
}

/// Zeroes a parameter in place (used for cold-start heads).
pub(crate) fn zero<T: Real>(p: &mut Params<T>, name: &str) {
    if let Some(id) = p.id(name) {
        p.get_mut(id).data_mut().iter_mut().for_each(|v| *v = T::zero());
    }
}
