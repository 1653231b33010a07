use std::f64::consts::PI;

use crate::error::{Result, TomoError};
use crate::Scalar;

/// Beam shape. Fan beams use an equispaced flat detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Beam {
    Parallel,
    Fan {
        /// Source-to-rotation-axis distance.
        sad_mm: f64,
        /// Rotation-axis-to-detector distance.
        add_mm: f64,
    },
}

/// Scan description defining the forward operator.
///
/// View `k` of the full set sits at angle
/// `angle_start + k * (angle_end - angle_start) / n_views_full`; only the
/// views listed in `view_subset` are measured.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub beam: Beam,
    pub n_views_full: usize,
    pub n_det: usize,
    pub angle_start: f64,
    pub angle_end: f64,
    pub det_spacing_mm: f64,
    pub image_h: usize,
    pub image_w: usize,
    pub pixel_mm: f64,
    pub view_subset: Vec<usize>,
}

impl Geometry {
    /// Parallel beam over `[0, pi)` with all views measured and 1 mm pixels.
    pub fn parallel(image_size: usize, n_views_full: usize, n_det: usize) -> Self {
        let diag = image_size as f64 * std::f64::consts::SQRT_2;
        Self {
            beam: Beam::Parallel,
            n_views_full,
            n_det,
            angle_start: 0.0,
            angle_end: PI,
            det_spacing_mm: (diag / n_det as f64).max(1.0),
            image_h: image_size,
            image_w: image_size,
            pixel_mm: 1.0,
            view_subset: (0..n_views_full).collect(),
        }
    }

    /// Fan beam over `[0, 2 pi)`; the detector spacing is chosen so the
    /// magnified image diagonal fits on the detector.
    pub fn fan(image_size: usize, n_views_full: usize, n_det: usize, sad_mm: f64, add_mm: f64) -> Self {
        let mag = (sad_mm + add_mm) / sad_mm;
        let diag = image_size as f64 * std::f64::consts::SQRT_2;
        Self {
            beam: Beam::Fan { sad_mm, add_mm },
            n_views_full,
            n_det,
            angle_start: 0.0,
            angle_end: 2.0 * PI,
            det_spacing_mm: 1.02 * diag * mag / n_det as f64,
            image_h: image_size,
            image_w: image_size,
            pixel_mm: 1.0,
            view_subset: (0..n_views_full).collect(),
        }
    }

    /// Desk-scale default: 64x64 image, 96 detectors, 180 parallel views.
    pub fn desk() -> Self {
        let mut g = Self::parallel(64, 180, 96);
        g.det_spacing_mm = 1.0;
        g
    }

    /// Full-scale fan geometry: 256x256, 512 views over a full turn, 512
    /// detectors, 600 mm source-to-axis and 290 mm axis-to-detector.
    pub fn full_size_fan() -> Self {
        Self::fan(256, 512, 512, 600.0, 290.0)
    }

    /// Restricts the angular range (e.g. `[0, pi/2)` for limited-angle scans).
    pub fn with_angular_range(mut self, start: f64, end: f64) -> Self {
        self.angle_start = start;
        self.angle_end = end;
        self
    }

    pub fn with_view_subset(mut self, subset: Vec<usize>) -> Self {
        self.view_subset = subset;
        self
    }

    pub fn n_views(&self) -> usize {
        self.view_subset.len()
    }

    pub fn image_len(&self) -> usize {
        self.image_h * self.image_w
    }

    pub fn sinogram_len(&self) -> usize {
        self.n_views() * self.n_det
    }

    pub fn image_extent_mm(&self) -> (f64, f64) {
        (self.image_h as f64 * self.pixel_mm, self.image_w as f64 * self.pixel_mm)
    }

    pub fn angular_range(&self) -> f64 {
        self.angle_end - self.angle_start
    }

    /// Angle of full-set view index `k`.
    pub fn full_angle(&self, k: usize) -> f64 {
        self.angle_start + k as f64 * self.angular_range() / self.n_views_full as f64
    }

    /// Angle of the `i`-th measured view.
    pub fn view_angle(&self, i: usize) -> f64 {
        self.full_angle(self.view_subset[i])
    }

    /// Detector cell centre coordinate in the detector plane.
    pub fn det_coord(&self, d: usize) -> f64 {
        (d as f64 - (self.n_det as f64 - 1.0) / 2.0) * self.det_spacing_mm
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TomoError::Geometry(m));
        if self.n_views_full == 0 || self.n_det == 0 || self.image_h == 0 || self.image_w == 0 {
            return bad("counts must be positive".into());
        }
        if !(self.det_spacing_mm > 0.0 && self.pixel_mm > 0.0) {
            return bad("spacings must be positive".into());
        }
        if !(self.angular_range() > 0.0) {
            return bad(format!("empty angular range [{}, {})", self.angle_start, self.angle_end));
        }
        if self.view_subset.windows(2).any(|w| w[0] >= w[1]) {
            return bad("view subset must be strictly increasing".into());
        }
        if self.view_subset.iter().any(|&v| v >= self.n_views_full) {
            return bad(format!("view index outside [0, {})", self.n_views_full));
        }
        if let Beam::Fan { sad_mm, add_mm } = self.beam {
            if !(sad_mm > 0.0 && add_mm >= 0.0) {
                return bad("fan beam needs sad > 0 and add >= 0".into());
            }
            let (eh, ew) = self.image_extent_mm();
            if sad_mm <= 0.5 * (eh * eh + ew * ew).sqrt() {
                return bad("source orbit intersects the image".into());
            }
        }
        let (eh, ew) = self.image_extent_mm();
        let diag = (eh * eh + ew * ew).sqrt();
        let cover = match self.beam {
            Beam::Parallel => self.n_det as f64 * self.det_spacing_mm,
            Beam::Fan { sad_mm, add_mm } => self.n_det as f64 * self.det_spacing_mm * sad_mm / (sad_mm + add_mm),
        };
        if cover < diag * (1.0 - 1e-9) {
            log::warn!("detector covers {cover:.1} mm, less than the image diagonal {diag:.1} mm");
        }
        Ok(())
    }
}

/// Dense `h x w` image of attenuation values, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub h: usize,
    pub w: usize,
    pub pixel_mm: f64,
    pub data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != h * w {
            return Err(TomoError::Dimension(format!("{h}x{w} image with {} values", data.len())));
        }
        Ok(Self { h, w, pixel_mm: 1.0, data })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self { h, w, pixel_mm: 1.0, data: vec![T::zero(); h * w] }
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.w + col]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image { h: self.h, w: self.w, pixel_mm: self.pixel_mm, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        self.map(|v| crate::cast(crate::f64_of(v)))
    }

    /// Rectangular sub-image `[r0, r1) x [c0, c1)`.
    pub fn crop(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Self {
        let mut data = Vec::with_capacity((r1 - r0) * (c1 - c0));
        for r in r0..r1 {
            data.extend_from_slice(&self.data[r * self.w + c0..r * self.w + c1]);
        }
        Self { h: r1 - r0, w: c1 - c0, pixel_mm: self.pixel_mm, data }
    }
}

/// Dense `n_v x n_d` grid of line integrals, row-major by view.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram<T> {
    pub n_v: usize,
    pub n_d: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Sinogram<T> {
    pub fn new(n_v: usize, n_d: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n_v * n_d {
            return Err(TomoError::Dimension(format!("{n_v}x{n_d} sinogram with {} values", data.len())));
        }
        Ok(Self { n_v, n_d, data })
    }

    pub fn zeros(n_v: usize, n_d: usize) -> Self {
        Self { n_v, n_d, data: vec![T::zero(); n_v * n_d] }
    }

    pub fn row(&self, v: usize) -> &[T] {
        &self.data[v * self.n_d..(v + 1) * self.n_d]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Sinogram<U> {
        Sinogram { n_v: self.n_v, n_d: self.n_d, data: self.data.iter().map(|&v| crate::cast(crate::f64_of(v))).collect() }
    }
}

pub(crate) fn check_image<T: Scalar>(x: &Image<T>, g: &Geometry) -> Result<()> {
    g.validate()?;
    if x.h != g.image_h || x.w != g.image_w || x.data.len() != x.h * x.w {
        return Err(TomoError::Dimension(format!(
            "image {}x{} vs geometry {}x{}",
            x.h, x.w, g.image_h, g.image_w
        )));
    }
    Ok(())
}

pub(crate) fn check_sinogram<T: Scalar>(y: &Sinogram<T>, g: &Geometry) -> Result<()> {
    g.validate()?;
    if y.n_v != g.n_views() || y.n_d != g.n_det || y.data.len() != y.n_v * y.n_d {
        return Err(TomoError::Dimension(format!(
            "sinogram {}x{} vs geometry {}x{}",
            y.n_v,
            y.n_d,
            g.n_views(),
            g.n_det
        )));
    }
    Ok(())
}

/// Keeps `n_v` uniformly spaced views, full-set indices `round(i * n_full / n_v)`.
///
/// `y` must be measured on `g`'s current view subset, which has to contain
/// every selected index.
pub fn subsample_views<T: Scalar>(y: &Sinogram<T>, g: &Geometry, n_v: usize) -> Result<(Sinogram<T>, Geometry)> {
    check_sinogram(y, g)?;
    if n_v < 1 || n_v > g.n_views_full {
        return Err(TomoError::Argument(format!("n_v = {n_v} outside [1, {}]", g.n_views_full)));
    }
    let picks: Vec<usize> = (0..n_v)
        .map(|i| ((i * g.n_views_full) as f64 / n_v as f64).round() as usize)
        .collect();
    let mut data = Vec::with_capacity(n_v * y.n_d);
    for &k in &picks {
        let row = g
            .view_subset
            .binary_search(&k)
            .map_err(|_| TomoError::Argument(format!("view {k} was not measured")))?;
        data.extend_from_slice(y.row(row));
    }
    let geom = g.clone().with_view_subset(picks);
    Ok((Sinogram::new(n_v, y.n_d, data)?, geom))
}
