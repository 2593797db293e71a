//! Scalar abstraction shared by the numerical modules.
//!
//! Everything that does linear algebra (relationship matrices, treelets,
//! thresholding, REML) is written against [`Real`], which both `f32` and
//! `f64` implement. Genotype counts stay integral and are never generic.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use std::iter::Sum;

/// Floating point scalar usable by every numeric routine in the crate.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Sum + Send + Sync + 'static {
    /// Converts an `f64` literal. Infallible for IEEE types.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
