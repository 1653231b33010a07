//! Joseph ray-driven projector and its exact transpose.
//!
//! Both directions enumerate the same `(pixel, weight)` pairs for every ray,
//! so `<A x, y> == <x, A^T y>` holds to rounding.

use rayon::prelude::*;

use crate::geometry::{check_image, check_sinogram, Beam, Geometry, Image, Sinogram};
use crate::{cast, Result, Scalar};

/// Number of fixed view chunks used by the adjoint; partial images are summed
/// in chunk order so results do not depend on the thread count.
const ADJOINT_CHUNKS: usize = 8;

impl Geometry {
    /// Ray for measured view `v`, detector `d`: a point on it and its unit direction.
    fn ray(&self, v: usize, d: usize) -> ([f64; 2], [f64; 2]) {
        let beta = self.view_angle(v);
        let (s, c) = beta.sin_cos();
        let e_u = [c, s];
        let e_d = [-s, c];
        let u = self.det_coord(d);
        match self.beam {
            Beam::Parallel => ([u * e_u[0], u * e_u[1]], e_d),
            Beam::Fan { sad_mm, add_mm } => {
                let src = [-sad_mm * e_d[0], -sad_mm * e_d[1]];
                let det = [add_mm * e_d[0] + u * e_u[0], add_mm * e_d[1] + u * e_u[1]];
                let (dx, dy) = (det[0] - src[0], det[1] - src[1]);
                let n = (dx * dx + dy * dy).sqrt();
                (src, [dx / n, dy / n])
            }
        }
    }

    /// Calls `f(pixel_index, weight)` for every interpolation tap of one ray.
    pub(crate) fn ray_taps(&self, v: usize, d: usize, mut f: impl FnMut(usize, f64)) {
        let (p0, dir) = self.ray(v, d);
        let (h, w, px) = (self.image_h, self.image_w, self.pixel_mm);
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        // Step along whichever pixel axis the ray is more aligned with.
        let x_major = dir[0].abs() >= dir[1].abs();
        let (n_steps, n_cross, c_step, c_cross) = if x_major { (w, h, cx, cy) } else { (h, w, cy, cx) };
        let (a_step, a_cross) = if x_major { (0, 1) } else { (1, 0) };
        let weight = px / dir[a_step].abs();
        for i in 0..n_steps {
            let coord = (i as f64 - c_step) * px;
            let t = (coord - p0[a_step]) / dir[a_step];
            let cross = (p0[a_cross] + t * dir[a_cross]) / px + c_cross;
            let j0 = cross.floor();
            let frac = cross - j0;
            let j0 = j0 as isize;
            for (j, wj) in [(j0, 1.0 - frac), (j0 + 1, frac)] {
                if j >= 0 && (j as usize) < n_cross && wj > 0.0 {
                    let (row, col) = if x_major { (j as usize, i) } else { (i, j as usize) };
                    f(row * w + col, weight * wj);
                }
            }
        }
    }

    /// Raw forward projection of a row-major image into a view-major sinogram.
    pub fn project_slice<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.image_len(), "image length");
        let mut out = vec![T::zero(); self.sinogram_len()];
        out.par_chunks_mut(self.n_det).enumerate().for_each(|(v, row)| {
            for (d, o) in row.iter_mut().enumerate() {
                let mut acc = T::zero();
                self.ray_taps(v, d, |p, wt| acc += cast::<T>(wt) * x[p]);
                *o = acc;
            }
        });
        out
    }

    /// Raw exact transpose of [`Geometry::project_slice`].
    pub fn backproject_slice<T: Scalar>(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.sinogram_len(), "sinogram length");
        let n_v = self.n_views();
        let chunk = n_v.div_ceil(ADJOINT_CHUNKS).max(1);
        let partials: Vec<Vec<T>> = (0..n_v)
            .step_by(chunk)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|start| {
                let mut img = vec![T::zero(); self.image_len()];
                for v in start..(start + chunk).min(n_v) {
                    for d in 0..self.n_det {
                        let val = y[v * self.n_det + d];
                        if val != T::zero() {
                            self.ray_taps(v, d, |p, wt| img[p] += cast::<T>(wt) * val);
                        }
                    }
                }
                img
            })
            .collect();
        let mut out = vec![T::zero(); self.image_len()];
        for part in partials {
            out.iter_mut().zip(part).for_each(|(o, p)| *o += p);
        }
        out
    }
}

/// Discretised line integrals of `x` along every measured ray.
pub fn forward_project<T: Scalar>(x: &Image<T>, g: &Geometry) -> Result<Sinogram<T>> {
    check_image(x, g)?;
    Sinogram::new(g.n_views(), g.n_det, g.project_slice(&x.data))
}

/// Exact adjoint of [`forward_project`].
pub fn back_project<T: Scalar>(y: &Sinogram<T>, g: &Geometry) -> Result<Image<T>> {
    check_sinogram(y, g)?;
    let mut img = Image::new(g.image_h, g.image_w, g.backproject_slice(&y.data))?;
    img.pixel_mm = g.pixel_mm;
    Ok(img)
}
