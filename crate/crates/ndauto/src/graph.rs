//! Tape of recorded primitive operations and the reverse sweep over it.

use crate::error::{invalid, mismatch, Result, TensorError};
use crate::kernels;
use crate::real::gemm;
use crate::tensor::{ParamId, Params, Tensor};
use crate::Real;

/// Epsilon inside layer and instance normalisation.
pub const NORM_EPS: f64 = 1e-5;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

type Adjoint<T> = Box<dyn Fn(&[T]) -> Vec<T>>;

enum Op<T> {
    Input,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    ScaleBy { x: Var, s: Var },
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    Conv2d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    ConvTranspose2d { x: Var, w: Var, b: Option<Var> },
    MaxPool2d { x: Var, argmax: Vec<usize> },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    InstanceNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Gelu(Var),
    Prelu { x: Var, slope: Var },
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    Concat { inputs: Vec<Var>, axis: usize },
    Mean(Var),
    SumSquares(Var),
    LinearMap { x: Var, adjoint: Adjoint<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a forward computation so it can be differentiated in reverse.
///
/// A graph is single-use per forward pass and confined to one thread.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            check_finite: cfg!(debug_assertions),
        }
    }

    /// Turns the per-op NaN/Inf check on or off (on by default in debug builds).
    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if self.check_finite && !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Leaf holding `t`; differentiable iff `t.requires_grad()`.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        let needs_grad = t.requires_grad();
        self.nodes.push(Node {
            value: t.with_requires_grad(needs_grad),
            op: Op::Input,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.input(t.with_requires_grad(false))
    }

    /// Leaf bound to a parameter; its gradient is accumulated into `params`
    /// by [`Graph::backward`].
    pub fn param(&mut self, params: &Params<T>, id: ParamId) -> Var {
        let t = params.get(id);
        let needs_grad = t.requires_grad();
        let value = Tensor::new(t.shape(), t.data().to_vec())
            .expect("parameter shape is consistent")
            .with_requires_grad(needs_grad);
        self.nodes.push(Node {
            value,
            op: Op::Param(id),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, &[self.shape(a), self.shape(b)]));
        }
        Ok(())
    }

    fn zip_with(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        self.same_shape(op_name, a, b)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.shape(a), data)?;
        self.push(op_name, value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let value = self.value(x).map(|v| v * c);
        self.push("scale", value, Op::Scale(x, c), &[x])
    }

    /// Multiplication by a differentiable one-element tensor.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(mismatch("scale_by", &[self.shape(x), self.shape(s)]));
        }
        let c = self.data(s)[0];
        let value = self.value(x).map(|v| v * c);
        self.push("scale_by", value, Op::ScaleBy { x, s }, &[x, s])
    }

    /// 2-D matrix product `[m, k] x [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", &[sa, sb]));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, self.data(a), false, self.data(b), false, &mut out, false);
        let value = Tensor::new(&[m, n], out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// Affine map over the last axis: `x [.., in]`, `w [out, in]`, `b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let fan_in = *sx.last().unwrap_or(&0);
        if sw.len() != 2 || sw[1] != fan_in || fan_in == 0 {
            return Err(mismatch("linear", &[&sx, &sw]));
        }
        let out_f = sw[0];
        if let Some(b) = b {
            if self.shape(b) != [out_f] {
                return Err(mismatch("linear", &[&sx, &sw, self.shape(b)]));
            }
        }
        let rows = self.value(x).len() / fan_in;
        let mut out = vec![T::zero(); rows * out_f];
        gemm(rows, fan_in, out_f, self.data(x), false, self.data(w), true, &mut out, false);
        if let Some(b) = b {
            let bias = self.data(b);
            for row in out.chunks_mut(out_f) {
                for (o, &bb) in row.iter_mut().zip(bias) {
                    *o += bb;
                }
            }
        }
        let mut shape = sx.clone();
        *shape.last_mut().unwrap() = out_f;
        let value = Tensor::new(&shape, out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("linear", value, Op::Linear { x, w, b }, &inputs)
    }

    /// NCHW convolution with a square or rectangular kernel `w [O, C, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] {
            return Err(mismatch("conv2d", &[&sx, &sw]));
        }
        if let Some(b) = b {
            if self.shape(b) != [sw[0]] {
                return Err(mismatch("conv2d", &[&sx, &sw, self.shape(b)]));
            }
        }
        let geo = kernels::ConvGeom::new("conv2d", &sx, sw[0], sw[2], sw[3], stride, pad)?;
        let out = kernels::conv2d_forward(&geo, self.data(x), self.data(w), b.map(|b| self.data(b)));
        let value = Tensor::new(&geo.out_shape(), out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("conv2d", value, Op::Conv2d { x, w, b, stride, pad }, &inputs)
    }

    /// Transposed convolution with `kernel == stride`, `w [C, O, k, k]`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[0] {
            return Err(mismatch("conv_transpose2d", &[&sx, &sw]));
        }
        if sw[2] != stride || sw[3] != stride || stride == 0 {
            return Err(invalid(
                "conv_transpose2d",
                format!("kernel {}x{} must equal stride {stride}", sw[2], sw[3]),
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [sw[1]] {
                return Err(mismatch("conv_transpose2d", &[&sx, &sw, self.shape(b)]));
            }
        }
        let (out, shape) =
            kernels::conv_t_forward(&sx, &sw, self.data(x), self.data(w), b.map(|b| self.data(b)));
        let value = Tensor::new(&shape, out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("conv_transpose2d", value, Op::ConvTranspose2d { x, w, b }, &inputs)
    }

    pub fn maxpool2d(&mut self, x: Var, kernel: usize, stride: usize, pad: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 4 {
            return Err(mismatch("maxpool2d", &[&sx]));
        }
        if pad >= kernel {
            return Err(invalid("maxpool2d", "padding must be smaller than the kernel"));
        }
        let geo = kernels::ConvGeom::new("maxpool2d", &sx, sx[1], kernel, kernel, stride, pad)?;
        let (out, argmax) = kernels::maxpool_forward(&geo, self.data(x));
        let value = Tensor::new(&geo.out_shape(), out)?;
        self.push("maxpool2d", value, Op::MaxPool2d { x, argmax }, &[x])
    }

    /// Normalises over the last axis, then applies `gamma * xhat + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let d = *sx.last().unwrap_or(&0);
        if d == 0 || self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(mismatch("layer_norm", &[&sx, self.shape(gamma), self.shape(beta)]));
        }
        let (out, xhat, inv_std) =
            kernels::norm_forward(self.data(x), 1, d, 1, self.data(gamma), self.data(beta));
        let value = Tensor::new(&sx, out)?;
        self.push(
            "layer_norm",
            value,
            Op::LayerNorm { x, gamma, beta, xhat, inv_std },
            &[x, gamma, beta],
        )
    }

    /// Per-(sample, channel) normalisation over the spatial axes of NCHW.
    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 4 || self.shape(gamma) != [sx[1]] || self.shape(beta) != [sx[1]] {
            return Err(mismatch("instance_norm", &[&sx, self.shape(gamma), self.shape(beta)]));
        }
        let hw = sx[2] * sx[3];
        let (out, xhat, inv_std) =
            kernels::norm_forward(self.data(x), sx[0], sx[1], hw, self.data(gamma), self.data(beta));
        let value = Tensor::new(&sx, out)?;
        self.push(
            "instance_norm",
            value,
            Op::InstanceNorm { x, gamma, beta, xhat, inv_std },
            &[x, gamma, beta],
        )
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(kernels::gelu);
        self.push("gelu", value, Op::Gelu(x), &[x])
    }

    /// PReLU with one slope per channel (axis 1).
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() < 2 || self.shape(slope) != [sx[1]] {
            return Err(mismatch("prelu", &[&sx, self.shape(slope)]));
        }
        let inner: usize = sx[2..].iter().product();
        let a = self.data(slope);
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| if v > T::zero() { v } else { a[(i / inner) % sx[1]] * v })
            .collect();
        let value = Tensor::new(&sx, data)?;
        self.push("prelu", value, Op::Prelu { x, slope }, &[x, slope])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().with_requires_grad(false).reshape(shape)?;
        self.push("reshape", value, Op::Reshape(x), &[x])
    }

    /// Axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let mut seen = vec![false; sx.len()];
        if perm.len() != sx.len() || perm.iter().any(|&p| p >= sx.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("permute", format!("bad permutation {perm:?} for shape {sx:?}")));
        }
        let (data, shape) = kernels::permute(self.data(x), &sx, perm);
        let value = Tensor::new(&shape, data)?;
        self.push("permute", value, Op::Permute { x, perm: perm.to_vec() }, &[x])
    }

    /// Concatenation along `axis` (the channel axis for NCHW images).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = match inputs.first() {
            Some(&v) => self.shape(v).to_vec(),
            None => return Err(invalid("concat", "no inputs")),
        };
        if axis >= first.len() {
            return Err(invalid("concat", format!("axis {axis} out of range")));
        }
        for &v in inputs {
            let s = self.shape(v);
            let ok = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                let shapes: Vec<&[usize]> = inputs.iter().map(|&v| self.shape(v)).collect();
                return Err(mismatch("concat", &shapes));
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total_axis: usize = inputs.iter().map(|&v| self.shape(v)[axis]).sum();
        let mut data = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for &v in inputs {
                let block = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.data(v)[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first;
        shape[axis] = total_axis;
        let value = Tensor::new(&shape, data)?;
        self.push("concat", value, Op::Concat { inputs: inputs.to_vec(), axis }, inputs)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(invalid("mean", "empty tensor"));
        }
        let s: T = self.data(x).iter().copied().sum();
        let value = Tensor::scalar(s / T::from_usize(n).unwrap());
        self.push("mean", value, Op::Mean(x), &[x])
    }

    pub fn sum_of_squares(&mut self, x: Var) -> Result<Var> {
        let s: T = self.data(x).iter().map(|&v| v * v).sum();
        self.push("sum_of_squares", Tensor::scalar(s), Op::SumSquares(x), &[x])
    }

    /// Mean squared error against a non-differentiable target.
    pub fn mse(&mut self, x: Var, target: &Tensor<T>) -> Result<Var> {
        let t = self.constant(target.clone());
        let d = self.sub(x, t)?;
        let ss = self.sum_of_squares(d)?;
        let n = T::from_usize(target.len().max(1)).unwrap();
        self.scale(ss, T::one() / n)
    }

    /// Applies an externally defined linear operator.
    ///
    /// `forward` computes the value now; `adjoint` is kept for the reverse
    /// sweep and must be the exact transpose of `forward`.
    pub fn linear_map(
        &mut self,
        x: Var,
        out_shape: &[usize],
        forward: impl FnOnce(&[T]) -> Vec<T>,
        adjoint: impl Fn(&[T]) -> Vec<T> + 'static,
    ) -> Result<Var> {
        let out = forward(self.data(x));
        let value = Tensor::new(out_shape, out)?;
        self.push(
            "linear_map",
            value,
            Op::LinearMap {
                x,
                adjoint: Box::new(adjoint),
            },
            &[x],
        )
    }

    /// Reverse sweep from the scalar `loss`.
    ///
    /// Parameter gradients are added (`+=`) into `params`; every other
    /// differentiable node's gradient is available from the returned value.
    pub fn backward(&self, loss: Var, params: &mut Params<T>) -> Result<Gradients<T>> {
        let grads = self.gradients(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                params.get_mut(*id).accumulate_grad(g);
            }
        }
        Ok(grads)
    }

    /// Reverse sweep without touching any parameter store.
    pub fn gradients(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].needs_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let Some(gy) = grads[id].take() else { continue };
            if self.nodes[id].needs_grad {
                self.backprop_node(id, &gy, &mut grads);
            }
            grads[id] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn acc(&self, grads: &mut [Option<Vec<T>>], v: Var, delta: Vec<T>) {
        if !self.wants(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, id: usize, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, gy.to_vec());
                self.acc(grads, *b, gy.to_vec());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, gy.to_vec());
                self.acc(grads, *b, gy.iter().map(|&g| -g).collect());
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let d = gy.iter().zip(self.data(*b)).map(|(&g, &v)| g * v).collect();
                    self.acc(grads, *a, d);
                }
                if self.wants(*b) {
                    let d = gy.iter().zip(self.data(*a)).map(|(&g, &v)| g * v).collect();
                    self.acc(grads, *b, d);
                }
            }
            Op::Scale(x, c) => self.acc(grads, *x, gy.iter().map(|&g| g * *c).collect()),
            Op::ScaleBy { x, s } => {
                let c = self.data(*s)[0];
                if self.wants(*x) {
                    self.acc(grads, *x, gy.iter().map(|&g| g * c).collect());
                }
                if self.wants(*s) {
                    let d: T = gy.iter().zip(self.data(*x)).map(|(&g, &v)| g * v).sum();
                    self.acc(grads, *s, vec![d]);
                }
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.wants(*a) {
                    let mut da = vec![T::zero(); m * k];
                    gemm(m, n, k, gy, false, self.data(*b), true, &mut da, false);
                    self.acc(grads, *a, da);
                }
                if self.wants(*b) {
                    let mut db = vec![T::zero(); k * n];
                    gemm(k, m, n, self.data(*a), true, gy, false, &mut db, false);
                    self.acc(grads, *b, db);
                }
            }
            Op::Linear { x, w, b } => {
                let sw = self.shape(*w);
                let (out_f, in_f) = (sw[0], sw[1]);
                let rows = self.value(*x).len() / in_f;
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); rows * in_f];
                    gemm(rows, out_f, in_f, gy, false, self.data(*w), false, &mut dx, false);
                    self.acc(grads, *x, dx);
                }
                if self.wants(*w) {
                    let mut dw = vec![T::zero(); out_f * in_f];
                    gemm(out_f, rows, in_f, gy, true, self.data(*x), false, &mut dw, false);
                    self.acc(grads, *w, dw);
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let mut db = vec![T::zero(); out_f];
                        for row in gy.chunks(out_f) {
                            db.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
                        }
                        self.acc(grads, *b, db);
                    }
                }
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let sw = self.shape(*w);
                let geo = kernels::ConvGeom::new("conv2d", self.shape(*x), sw[0], sw[2], sw[3], *stride, *pad)
                    .expect("validated in forward");
                let (dx, dw, db) = kernels::conv2d_backward(
                    &geo,
                    self.data(*x),
                    self.data(*w),
                    gy,
                    self.wants(*x),
                    self.wants(*w),
                    b.map(|b| self.wants(b)).unwrap_or(false),
                );
                if let Some(dx) = dx {
                    self.acc(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.acc(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    self.acc(grads, *b, db);
                }
            }
            Op::ConvTranspose2d { x, w, b } => {
                let (dx, dw, db) = kernels::conv_t_backward(
                    self.shape(*x),
                    self.shape(*w),
                    self.data(*x),
                    self.data(*w),
                    gy,
                    self.wants(*x),
                    self.wants(*w),
                    b.map(|b| self.wants(b)).unwrap_or(false),
                );
                if let Some(dx) = dx {
                    self.acc(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.acc(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, db) {
                    self.acc(grads, *b, db);
                }
            }
            Op::MaxPool2d { x, argmax } => {
                let mut dx = vec![T::zero(); self.value(*x).len()];
                for (&src, &g) in argmax.iter().zip(gy) {
                    dx[src] += g;
                }
                self.acc(grads, *x, dx);
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let d = self.shape(*gamma)[0];
                let (dx, dg, db) = kernels::norm_backward(gy, xhat, inv_std, 1, d, 1, self.data(*gamma));
                self.acc(grads, *x, dx);
                self.acc(grads, *gamma, dg);
                self.acc(grads, *beta, db);
            }
            Op::InstanceNorm { x, gamma, beta, xhat, inv_std } => {
                let s = self.shape(*x);
                let (dx, dg, db) =
                    kernels::norm_backward(gy, xhat, inv_std, s[0], s[1], s[2] * s[3], self.data(*gamma));
                self.acc(grads, *x, dx);
                self.acc(grads, *gamma, dg);
                self.acc(grads, *beta, db);
            }
            Op::Gelu(x) => {
                let d = gy
                    .iter()
                    .zip(self.data(*x))
                    .map(|(&g, &v)| g * kernels::gelu_grad(v))
                    .collect();
                self.acc(grads, *x, d);
            }
            Op::Prelu { x, slope } => {
                let s = self.shape(*x);
                let c = s[1];
                let inner: usize = s[2..].iter().product();
                let a = self.data(*slope);
                let xv = self.data(*x);
                if self.wants(*x) {
                    let d = gy
                        .iter()
                        .zip(xv)
                        .enumerate()
                        .map(|(i, (&g, &v))| if v > T::zero() { g } else { g * a[(i / inner) % c] })
                        .collect();
                    self.acc(grads, *x, d);
                }
                if self.wants(*slope) {
                    let mut da = vec![T::zero(); c];
                    for (i, (&g, &v)) in gy.iter().zip(xv).enumerate() {
                        if v <= T::zero() {
                            da[(i / inner) % c] += g * v;
                        }
                    }
                    self.acc(grads, *slope, da);
                }
            }
            Op::Reshape(x) => self.acc(grads, *x, gy.to_vec()),
            Op::Permute { x, perm } => {
                let mut inv = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                let (d, _) = kernels::permute(gy, node.value.shape(), &inv);
                self.acc(grads, *x, d);
            }
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for &v in inputs {
                    let block = self.shape(v)[*axis] * inner;
                    if self.wants(v) {
                        let mut d = Vec::with_capacity(outer * block);
                        for o in 0..outer {
                            d.extend_from_slice(&gy[o * total + offset..o * total + offset + block]);
                        }
                        self.acc(grads, v, d);
                    }
                    offset += block;
                }
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                let g = gy[0] / T::from_usize(n).unwrap();
                self.acc(grads, *x, vec![g; n]);
            }
            Op::SumSquares(x) => {
                let two = T::lit(2.0);
                let d = self.data(*x).iter().map(|&v| two * v * gy[0]).collect();
                self.acc(grads, *x, d);
            }
            Op::LinearMap { x, adjoint } => {
                let d = adjoint(gy);
                assert_eq!(d.len(), self.value(*x).len(), "linear_map adjoint length");
                self.acc(grads, *x, d);
            }
        }
    }
}
