//! Scalar abstraction shared by every numerical module.
//!
//! All matrix-valued code is written against [`Real`], which is implemented
//! for `f32` and `f64`. Tolerances that the invariants talk about in absolute
//! terms (for example unitarity to `1e-10`) are expressed through
//! [`Real::tolerance`], which widens them to the precision actually available
//! in single precision.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Real floating-point scalar usable by the Hamiltonian, spectral and
/// Monte Carlo machinery.
pub trait Real:
    RealField + Copy + Default + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// One draw from the standard normal distribution.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from the uniform distribution on `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Widens a double-precision tolerance to what this type can resolve.
    fn tolerance(base: f64) -> Self;
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }

    #[inline]
    fn tolerance(base: f64) -> Self {
        base
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }

    #[inline]
    fn tolerance(base: f64) -> Self {
        // single precision cannot resolve much below 1e-4 on D ~ 100 products
        (base as f32).max(1e-4)
    }
}

/// `exp(i * angle)` for a real angle.
#[inline]
pub fn cis<T: Real>(angle: T) -> Complex<T> {
    let (s, c) = angle.sin_cos();
    Complex::new(c, s)
}

/// `|z|`.
#[inline]
pub fn modulus<T: Real>(z: Complex<T>) -> T {
    norm_sqr(z).sqrt()
}

/// Squared modulus without the square root.
#[inline]
pub fn norm_sqr<T: Real>(z: Complex<T>) -> T {
    z.re * z.re + z.im * z.im
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cis_is_on_the_unit_circle() {
        for k in 0..16 {
            let z = cis(k as f64 * 0.7);
            assert!((norm_sqr(z) - 1.0).abs() < 1e-15);
        }
        let z32 = cis(1.0f32);
        assert!((norm_sqr(z32) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_precision_tolerance_is_floored() {
        assert_eq!(f64::tolerance(1e-10), 1e-10);
        assert_eq!(f32::tolerance(1e-10), 1e-4);
        assert_eq!(f32::tolerance(0.5), 0.5);
    }
}
