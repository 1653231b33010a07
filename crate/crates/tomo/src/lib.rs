//! Two-dimensional tomography for sparse-view CT experiments.
//!
//! * [`Geometry`]: parallel- or fan-beam scan description with a view subset.
//! * Joseph-style ray-driven forward projection and its exact transpose
//!   ([`forward_project`], [`back_project`]).
//! * Filtered backprojection ([`fbp`]) with Ram-Lak or Hann-windowed ramp,
//!   plus the exact adjoint of the FBP map for use inside autodiff graphs.
//! * Photon-count noise simulation, view subsampling, procedural phantoms and
//!   the `TOMO1` / PGM file formats.

mod error;
mod fbp;
mod geometry;
pub mod io;
mod noise;
pub mod phantom;
mod project;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use error::{Result, TomoError};
pub use fbp::{fbp, Filter};
pub use geometry::{subsample_views, Beam, Geometry, Image, Sinogram};
pub use noise::{simulate_measurement, NoiseConfig, DEFAULT_ATTENUATION_CAP};
pub use project::{back_project, forward_project};

/// Sample type of images and sinograms.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + AddAssign + Sum + Default + Debug + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + AddAssign + Sum + Default + Debug + Send + Sync + 'static
{
}

pub(crate) fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).unwrap_or_else(T::nan)
}

pub(crate) fn f64_of<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}
