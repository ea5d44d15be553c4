//! Floating-point abstraction shared by the model code.
//!
//! Model evaluation (kernels, densities, compensators, gradients) is written
//! against [`Scalar`] so it runs in `f32` or `f64`. Special functions are
//! evaluated in `f64` and narrowed.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or measurement.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    fn erf(self) -> Self {
        Self::of(libm::erf(self.as_f64()))
    }

    fn erfc(self) -> Self {
        Self::of(libm::erfc(self.as_f64()))
    }

    fn ln_gamma(self) -> Self {
        Self::of(libm::lgamma(self.as_f64()))
    }

    fn digamma(self) -> Self {
        Self::of(statrs::function::gamma::digamma(self.as_f64()))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `ln(1 + e^x)`, stable for large `|x|`.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::of(30.0) {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`], the logistic function.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`softplus`] on `(0, ∞)`.
#[inline]
pub fn inv_softplus<T: Scalar>(y: T) -> T {
    if y > T::of(30.0) {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf<T: Scalar>(z: T) -> T {
    if z == T::infinity() {
        return T::one();
    }
    if z == T::neg_infinity() {
        return T::zero();
    }
    T::of(0.5) * (-z / T::SQRT_2()).erfc()
}

/// Standard normal density.
#[inline]
pub fn norm_pdf<T: Scalar>(z: T) -> T {
    if z.is_infinite() {
        return T::zero();
    }
    (-(z * z) / T::of(2.0)).exp() / (T::of(2.0) * T::PI()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_roundtrip() {
        for &x in &[-20.0f64, -3.0, 0.0, 0.5413, 2.0, 45.0] {
            let y = softplus(x);
            assert!((inv_softplus(y) - x).abs() < 1e-9 * (1.0 + x.abs()), "{x}");
        }
        assert!((softplus(inv_softplus(1.0f64)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normal_helpers() {
        assert!((norm_cdf(0.0f64) - 0.5).abs() < 1e-15);
        assert!((norm_cdf(1.959963984540054f64) - 0.975).abs() < 1e-12);
        assert!((norm_pdf(0.0f64) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(norm_cdf(f64::INFINITY), 1.0);
        assert_eq!(norm_pdf(f32::NEG_INFINITY), 0.0);
    }
}
