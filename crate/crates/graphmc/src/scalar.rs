//! Scalar abstraction: the whole engine is generic over the floating-point
//! type through this trait, with `f32` and `f64` as the provided instances.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every module in this crate.
///
/// `nalgebra::RealField` supplies the linear-algebra operations (Cholesky,
/// SVD, elementary functions); the num-traits bounds supply lossless-enough
/// conversion to and from `f64`, which is also how the special functions
/// (`ln_gamma`, `digamma`) are evaluated.
pub trait Real:
    nalgebra::RealField + Copy + FromPrimitive + ToPrimitive + Default + std::fmt::Display + std::fmt::LowerExp
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant not representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar not representable as f64")
}

/// Natural log of the Gamma function, evaluated in f64 precision.
#[inline]
pub fn ln_gamma<T: Real>(x: T) -> T {
    real(statrs::function::gamma::ln_gamma(to_f64(x)))
}

/// Digamma function ψ, evaluated in f64 precision.
#[inline]
pub fn digamma<T: Real>(x: T) -> T {
    real(statrs::function::gamma::digamma(to_f64(x)))
}
