//! Scalar abstraction shared by the floating-point parts of the crate.
//!
//! Continuous numerics (the logistic map, the PDE solver, dense helpers) are
//! written against [`Real`], implemented for `f32` and `f64`. Anything that has
//! to be decided exactly goes through [`crate::Rational`] instead.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; used for constants and coefficient tables.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Logistic function `e^a / (e^a + 1)`, evaluated without overflow on either tail.
pub fn theta<T: Real>(alpha: T) -> T {
    if alpha >= T::zero() {
        T::one() / (T::one() + (-alpha).exp())
    } else {
        let e = alpha.exp();
        e / (T::one() + e)
    }
}

/// Derivative of [`theta`]: `θ(α)(1 − θ(α))`.
pub fn theta_prime<T: Real>(alpha: T) -> T {
    let t = theta(alpha);
    t * (T::one() - t)
}

/// Compressibility `χ(ϑ) = ϑ(1 − ϑ)` of a Bernoulli(ϑ) occupancy.
pub fn compressibility<T: Real>(density: T) -> T {
    density * (T::one() - density)
}

/// `ln(1 + e^a)`, stable for large |a|.
pub fn log1p_exp<T: Real>(alpha: T) -> T {
    if alpha > T::zero() {
        alpha + (-alpha).exp().ln_1p()
    } else {
        alpha.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn theta_at_zero_is_one_half() {
        assert_eq!(theta(0.0_f64), 0.5);
        assert_eq!(theta(0.0_f32), 0.5);
    }

    #[test]
    fn theta_symmetry_and_derivative() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let a: f64 = rng.random_range(-10.0..10.0);
            assert!((theta(a) + theta(-a) - 1.0).abs() <= 1e-14);
            let h = 1e-5;
            let fd = (theta(a + h) - theta(a - h)) / (2.0 * h);
            assert!((fd - theta_prime(a)).abs() <= 1e-8, "a = {a}");
            // χ(θ(α)) = θ'(α)
            assert!((compressibility(theta(a)) - theta_prime(a)).abs() <= 1e-15);
        }
    }

    #[test]
    fn theta_saturates() {
        assert!(1.0 - theta(50.0_f64) <= 1e-20);
        assert!(theta(-50.0_f64) <= 1e-20);
        assert!(theta(-800.0_f64) >= 0.0);
        assert_eq!(theta(800.0_f64), 1.0);
    }

    #[test]
    fn log1p_exp_matches_naive_in_range() {
        for a in [-30.0, -1.0, 0.0, 0.5, 3.0, 30.0_f64] {
            assert!((log1p_exp(a) - (1.0 + a.exp()).ln()).abs() < 1e-12);
        }
        assert!((log1p_exp(1000.0_f64) - 1000.0).abs() < 1e-12);
    }
}
