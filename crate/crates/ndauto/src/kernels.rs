//! Forward and backward numerical kernels behind the graph ops.

use crate::error::{invalid, Result};
use crate::graph::NORM_EPS;
use crate::real::gemm;
use crate::Real;

#[derive(Clone, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(
        op: &'static str,
        sx: &[usize],
        o: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        if stride == 0 || kh == 0 || kw == 0 {
            return Err(invalid(op, "kernel and stride must be positive"));
        }
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        if ph < kh || pw < kw {
            return Err(invalid(op, format!("kernel {kh}x{kw} larger than padded input {ph}x{pw}")));
        }
        if (ph - kh) % stride != 0 || (pw - kw) % stride != 0 {
            return Err(invalid(
                op,
                format!("kernel {kh}x{kw} stride {stride} padding {pad} does not tile input {h}x{w}"),
            ));
        }
        Ok(Self {
            n,
            c,
            h,
            w,
            o,
            kh,
            kw,
            stride,
            pad,
            ho: (ph - kh) / stride + 1,
            wo: (pw - kw) / stride + 1,
        })
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.o, self.ho, self.wo]
    }

    /// Input coordinate for output position `out` and kernel offset `k`, if inside.
    #[inline]
    fn src(&self, out: usize, k: usize, limit: usize) -> Option<usize> {
        let p = out * self.stride + k;
        if p < self.pad || p - self.pad >= limit {
            None
        } else {
            Some(p - self.pad)
        }
    }
}

fn im2col<T: Real>(g: &ConvGeom, x: &[T], cols: &mut [T]) {
    let hw = g.ho * g.wo;
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * hw;
                for oi in 0..g.ho {
                    let dst = &mut cols[row + oi * g.wo..row + (oi + 1) * g.wo];
                    match g.src(oi, ki, g.h) {
                        None => dst.iter_mut().for_each(|v| *v = T::zero()),
                        Some(ii) => {
                            for (oj, d) in dst.iter_mut().enumerate() {
                                *d = match g.src(oj, kj, g.w) {
                                    Some(jj) => plane[ii * g.w + jj],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(g: &ConvGeom, cols: &[T], dx: &mut [T]) {
    let hw = g.ho * g.wo;
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * hw;
                for oi in 0..g.ho {
                    let Some(ii) = g.src(oi, ki, g.h) else { continue };
                    for oj in 0..g.wo {
                        if let Some(jj) = g.src(oj, kj, g.w) {
                            plane[ii * g.w + jj] += cols[row + oi * g.wo + oj];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(g: &ConvGeom, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    let ckk = g.c * g.kh * g.kw;
    let hw = g.ho * g.wo;
    let mut out = vec![T::zero(); g.n * g.o * hw];
    let mut cols = vec![T::zero(); ckk * hw];
    for n in 0..g.n {
        let xn = &x[n * g.c * g.h * g.w..(n + 1) * g.c * g.h * g.w];
        let on = &mut out[n * g.o * hw..(n + 1) * g.o * hw];
        im2col(g, xn, &mut cols);
        gemm(g.o, ckk, hw, w, false, &cols, false, on, false);
        if let Some(b) = b {
            for (row, &bb) in on.chunks_mut(hw).zip(b) {
                row.iter_mut().for_each(|v| *v += bb);
            }
        }
    }
    out
}

type Grads3<T> = (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>);

pub(crate) fn conv2d_backward<T: Real>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    gy: &[T],
    want_x: bool,
    want_w: bool,
    want_b: bool,
) -> Grads3<T> {
    let ckk = g.c * g.kh * g.kw;
    let hw = g.ho * g.wo;
    let mut dx = want_x.then(|| vec![T::zero(); x.len()]);
    let mut dw = want_w.then(|| vec![T::zero(); w.len()]);
    let mut db = want_b.then(|| vec![T::zero(); g.o]);
    let mut cols = vec![T::zero(); ckk * hw];
    for n in 0..g.n {
        let xs = n * g.c * g.h * g.w..(n + 1) * g.c * g.h * g.w;
        let gyn = &gy[n * g.o * hw..(n + 1) * g.o * hw];
        if let Some(dw) = dw.as_mut() {
            im2col(g, &x[xs.clone()], &mut cols);
            gemm(g.o, hw, ckk, gyn, false, &cols, true, dw, true);
        }
        if let Some(db) = db.as_mut() {
            for (acc, row) in db.iter_mut().zip(gyn.chunks(hw)) {
                *acc += row.iter().copied().sum::<T>();
            }
        }
        if let Some(dx) = dx.as_mut() {
            gemm(ckk, g.o, hw, w, true, gyn, false, &mut cols, false);
            col2im(g, &cols, &mut dx[xs]);
        }
    }
    (dx, dw, db)
}

/// Transposed convolution with kernel == stride (non-overlapping blocks).
pub(crate) fn conv_t_forward<T: Real>(
    sx: &[usize],
    sw: &[usize],
    x: &[T],
    w: &[T],
    b: Option<&[T]>,
) -> (Vec<T>, Vec<usize>) {
    let (n, c, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
    let (o, k) = (sw[1], sw[2]);
    let (hw, okk) = (h * wd, o * k * k);
    let (ho, wo) = (h * k, wd * k);
    let mut out = vec![T::zero(); n * o * ho * wo];
    let mut blocks = vec![T::zero(); okk * hw];
    for ni in 0..n {
        let xn = &x[ni * c * hw..(ni + 1) * c * hw];
        gemm(okk, c, hw, w, true, xn, false, &mut blocks, false);
        let on = &mut out[ni * o * ho * wo..(ni + 1) * o * ho * wo];
        for oc in 0..o {
            let bias = b.map(|b| b[oc]).unwrap_or_else(T::zero);
            for a in 0..k {
                for bb in 0..k {
                    let row = &blocks[((oc * k + a) * k + bb) * hw..][..hw];
                    for i in 0..h {
                        for j in 0..wd {
                            on[(oc * ho + i * k + a) * wo + j * k + bb] = row[i * wd + j] + bias;
                        }
                    }
                }
            }
        }
    }
    (out, vec![n, o, ho, wo])
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_t_backward<T: Real>(
    sx: &[usize],
    sw: &[usize],
    x: &[T],
    w: &[T],
    gy: &[T],
    want_x: bool,
    want_w: bool,
    want_b: bool,
) -> Grads3<T> {
    let (n, c, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
    let (o, k) = (sw[1], sw[2]);
    let (hw, okk) = (h * wd, o * k * k);
    let (ho, wo) = (h * k, wd * k);
    let mut dx = want_x.then(|| vec![T::zero(); x.len()]);
    let mut dw = want_w.then(|| vec![T::zero(); w.len()]);
    let mut db = want_b.then(|| vec![T::zero(); o]);
    let mut blocks = vec![T::zero(); okk * hw];
    for ni in 0..n {
        let gn = &gy[ni * o * ho * wo..(ni + 1) * o * ho * wo];
        for oc in 0..o {
            for a in 0..k {
                for bb in 0..k {
                    let row = &mut blocks[((oc * k + a) * k + bb) * hw..][..hw];
                    for i in 0..h {
                        for j in 0..wd {
                            row[i * wd + j] = gn[(oc * ho + i * k + a) * wo + j * k + bb];
                        }
                    }
                }
            }
        }
        if let Some(db) = db.as_mut() {
            for (oc, acc) in db.iter_mut().enumerate() {
                *acc += gn[oc * ho * wo..(oc + 1) * ho * wo].iter().copied().sum::<T>();
            }
        }
        let xs = ni * c * hw..(ni + 1) * c * hw;
        if let Some(dw) = dw.as_mut() {
            gemm(c, hw, okk, &x[xs.clone()], false, &blocks, true, dw, true);
        }
        if let Some(dx) = dx.as_mut() {
            gemm(c, okk, hw, w, false, &blocks, false, &mut dx[xs], false);
        }
    }
    (dx, dw, db)
}

pub(crate) fn maxpool_forward<T: Real>(g: &ConvGeom, x: &[T]) -> (Vec<T>, Vec<usize>) {
    let plane_out = g.ho * g.wo;
    let mut out = Vec::with_capacity(g.n * g.c * plane_out);
    let mut argmax = Vec::with_capacity(out.capacity());
    for nc in 0..g.n * g.c {
        let base = nc * g.h * g.w;
        for oi in 0..g.ho {
            for oj in 0..g.wo {
                let mut best = T::neg_infinity();
                let mut best_idx = usize::MAX;
                for ki in 0..g.kh {
                    let Some(ii) = g.src(oi, ki, g.h) else { continue };
                    for kj in 0..g.kw {
                        let Some(jj) = g.src(oj, kj, g.w) else { continue };
                        let idx = base + ii * g.w + jj;
                        if best_idx == usize::MAX || x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (out, argmax)
}

/// Normalisation over `inner`-strided groups.
///
/// Data is laid out as `[outer, channels, inner]` when `inner > 1` (instance
/// norm: statistics per (outer, channel) over `inner`), or as `[rows, channels]`
/// with `inner == 1` (layer norm: statistics per row over `channels`).
pub(crate) fn norm_forward<T: Real>(
    x: &[T],
    outer: usize,
    channels: usize,
    inner: usize,
    gamma: &[T],
    beta: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let eps = T::lit(NORM_EPS);
    let mut out = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = Vec::new();
    let layer = inner == 1;
    let (group_len, groups) = if layer {
        (channels, x.len() / channels)
    } else {
        (inner, outer * channels)
    };
    let nf = T::from_usize(group_len).unwrap();
    for gi in 0..groups {
        let r = gi * group_len..(gi + 1) * group_len;
        let seg = &x[r.clone()];
        let mean = seg.iter().copied().sum::<T>() / nf;
        let var = seg.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        for (k, idx) in r.enumerate() {
            let xh = (x[idx] - mean) * is;
            xhat[idx] = xh;
            let ch = if layer { k } else { gi % channels };
            out[idx] = gamma[ch] * xh + beta[ch];
        }
    }
    (out, xhat, inv_std)
}

pub(crate) fn norm_backward<T: Real>(
    gy: &[T],
    xhat: &[T],
    inv_std: &[T],
    outer: usize,
    channels: usize,
    inner: usize,
    gamma: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let layer = inner == 1;
    let (group_len, groups) = if layer {
        (channels, gy.len() / channels)
    } else {
        (inner, outer * channels)
    };
    let nf = T::from_usize(group_len).unwrap();
    let mut dx = vec![T::zero(); gy.len()];
    let mut dg = vec![T::zero(); channels];
    let mut db = vec![T::zero(); channels];
    let mut dxh = vec![T::zero(); group_len];
    for gi in 0..groups {
        let base = gi * group_len;
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for k in 0..group_len {
            let idx = base + k;
            let ch = if layer { k } else { gi % channels };
            dg[ch] += gy[idx] * xhat[idx];
            db[ch] += gy[idx];
            let d = gy[idx] * gamma[ch];
            dxh[k] = d;
            sum_d += d;
            sum_dx += d * xhat[idx];
        }
        let (md, mdx) = (sum_d / nf, sum_dx / nf);
        for k in 0..group_len {
            let idx = base + k;
            dx[idx] = inv_std[gi] * (dxh[k] - md - xhat[idx] * mdx);
        }
    }
    (dx, dg, db)
}

pub(crate) fn gelu<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    half * x * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    let cdf = half * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-half * x * x).exp() * T::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    cdf + x * pdf
}

/// Returns the permuted data and shape (`out axis i = in axis perm[i]`).
pub(crate) fn permute<T: Real>(x: &[T], shape: &[usize], perm: &[usize]) -> (Vec<T>, Vec<usize>) {
    let nd = shape.len();
    let mut in_strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(x.len());
    if x.is_empty() {
        return (out, out_shape);
    }
    // innermost axis handled as a strided run
    let last = nd - 1;
    let (run, run_stride) = (out_shape[last], strides[last]);
    let mut idx = vec![0usize; nd];
    let mut offset = 0usize;
    loop {
        for r in 0..run {
            out.push(x[offset + r * run_stride]);
        }
        let mut ax = last;
        loop {
            if ax == 0 {
                return (out, out_shape);
            }
            ax -= 1;
            idx[ax] += 1;
            offset += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            offset -= strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
}
