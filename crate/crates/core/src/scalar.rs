//! Floating-point scalar abstraction: f32 or f64.

use num_traits::{Float, FloatConst, NumAssign};
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar type the DSP and decoding kernels are generic over.
///
/// Implemented for `f32` and `f64`. Design constants are specified in `f64`
/// and narrowed through [`Real::from_f64_lossy`] at the kernel boundary.
pub trait Real:
    Float + FloatConst + NumAssign + Sum + Debug + Display + Send + Sync + rustfft::FftNum
{
    /// Draw one standard-normal variate.
    fn standard_normal<G: Rng + ?Sized>(rng: &mut G) -> Self;

    fn from_f64_lossy(v: f64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    fn standard_normal<G: Rng + ?Sized>(rng: &mut G) -> Self {
        rng.sample(StandardNormal)
    }

    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }

    fn to_f64_lossy(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn standard_normal<G: Rng + ?Sized>(rng: &mut G) -> Self {
        rng.sample(StandardNormal)
    }

    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }
}
