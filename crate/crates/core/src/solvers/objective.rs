use tomo::Geometry;

use crate::error::{arg, Error, Result};

/// Real linear map with an exact adjoint, on flat `f64` buffers.
pub trait LinearOperator {
    fn domain_len(&self) -> usize;
    fn range_len(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, y: &[f64]) -> Vec<f64>;
}

impl LinearOperator for Geometry {
    fn domain_len(&self) -> usize {
        self.image_len()
    }

    fn range_len(&self) -> usize {
        self.sinogram_len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.project_slice(x)
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.backproject_slice(y)
    }
}

/// Identity on `R^n`; handy as a stand-in forward model.
#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn domain_len(&self) -> usize {
        self.0
    }

    fn range_len(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regularizer {
    None,
    /// `(mu / 2) ||x||^2`
    Tikhonov { mu: f64 },
    /// `mu * sum sqrt(|grad x|^2 + delta^2)` with forward differences.
    SmoothedTv { mu: f64, delta: f64 },
}

/// `J(x) = (lambda / 2) ||A x - y||^2 + R(x)` on an `h x w` image.
pub struct Objective<'a> {
    pub op: &'a dyn LinearOperator,
    pub y: &'a [f64],
    pub lambda: f64,
    pub reg: Regularizer,
    pub h: usize,
    pub w: usize,
}

impl<'a> Objective<'a> {
    pub fn new(op: &'a dyn LinearOperator, y: &'a [f64], lambda: f64, reg: Regularizer, h: usize, w: usize) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(arg(format!("lambda must be >= 0, got {lambda}")));
        }
        match reg {
            Regularizer::Tikhonov { mu } if !(mu >= 0.0) => return Err(arg("tikhonov mu must be >= 0")),
            Regularizer::SmoothedTv { mu, delta } if !(mu >= 0.0 && delta > 0.0) => {
                return Err(arg("smoothed TV needs mu >= 0 and delta > 0"))
            }
            _ => {}
        }
        if op.domain_len() != h * w || op.range_len() != y.len() {
            return Err(Error::Shape(format!(
                "operator {}->{} vs image {h}x{w} and data {}",
                op.domain_len(),
                op.range_len(),
                y.len()
            )));
        }
        Ok(Self { op, y, lambda, reg, h, w })
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.h * self.w {
            return Err(Error::Shape(format!("image of {} values, expected {}x{}", x.len(), self.h, self.w)));
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value_and_gradient(x)?.0)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(x)?.1)
    }

    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(x)?;
        let mut value = 0.0;
        let mut grad = vec![0.0; x.len()];
        if self.lambda != 0.0 {
            let mut r = self.op.apply(x);
            r.iter_mut().zip(self.y).for_each(|(a, b)| *a -= b);
            value += 0.5 * self.lambda * r.iter().map(|v| v * v).sum::<f64>();
            let back = self.op.adjoint(&r);
            grad.iter_mut().zip(back).for_each(|(g, b)| *g += self.lambda * b);
        }
        match self.reg {
            Regularizer::None => {}
            Regularizer::Tikhonov { mu } => {
                value += 0.5 * mu * x.iter().map(|v| v * v).sum::<f64>();
                grad.iter_mut().zip(x).for_each(|(g, v)| *g += mu * v);
            }
            Regularizer::SmoothedTv { mu, delta } => {
                value += tv_value_and_grad(x, self.h, self.w, mu, delta, &mut grad);
            }
        }
        Ok((value, grad))
    }

    /// Upper bound on the gradient's Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        let data = if self.lambda != 0.0 { self.lambda * operator_norm_sq(self.op, 50) } else { 0.0 };
        let reg = match self.reg {
            Regularizer::None => 0.0,
            Regularizer::Tikhonov { mu } => mu,
            // ||D||^2 <= 8 for 2-D forward differences; curvature of sqrt(. + d^2) <= 1/d
            Regularizer::SmoothedTv { mu, delta } => 8.0 * mu / delta,
        };
        data + reg
    }
}

fn tv_value_and_grad(x: &[f64], h: usize, w: usize, mu: f64, delta: f64, grad: &mut [f64]) -> f64 {
    let mut value = 0.0;
    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            let gx = if c + 1 < w { x[p + 1] - x[p] } else { 0.0 };
            let gy = if r + 1 < h { x[p + w] - x[p] } else { 0.0 };
            let n = (gx * gx + gy * gy + delta * delta).sqrt();
            value += n;
            let (ax, ay) = (mu * gx / n, mu * gy / n);
            if c + 1 < w {
                grad[p + 1] += ax;
                grad[p] -= ax;
            }
            if r + 1 < h {
                grad[p + w] += ay;
                grad[p] -= ay;
            }
        }
    }
    mu * value
}

/// Power-iteration estimate of `||A||_2^2`, padded by 1%.
pub fn operator_norm_sq(op: &dyn LinearOperator, iters: usize) -> f64 {
    let n = op.domain_len();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut est = 0.0;
    for _ in 0..iters {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        let w = op.adjoint(&op.apply(&v));
        est = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        v = w;
    }
    1.01 * est
}
