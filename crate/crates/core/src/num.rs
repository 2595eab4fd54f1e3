//! Scalar abstraction shared by the generic kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar accepted by the generic kernels (`f32`, `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    /// Lossy conversion to `f64` for reporting.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `(a + b)^p - a^p` for `a > 0`, accurate when `|b| ≪ a`.
#[inline]
pub fn pow_increment<T: Real>(a: T, b: T, p: T) -> T {
    if a <= T::zero() {
        let s = a + b;
        return if s > T::zero() { s.powf(p) } else { T::zero() } - a.max(T::zero()).powf(p);
    }
    let q = b / a;
    if q <= -T::one() {
        return -a.powf(p);
    }
    a.powf(p) * (p * q.ln_1p()).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pow_increment_matches_naive_for_moderate_steps() {
        let got = pow_increment(2.0_f64, 0.5, 3.0);
        assert!((got - (2.5_f64.powi(3) - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn pow_increment_resolves_tiny_steps() {
        let got = pow_increment(1.0_f64, 1e-20, 3.0);
        assert!((got - 3e-20).abs() < 1e-33);
    }

    #[test]
    fn pow_increment_clips_negative_sum() {
        assert_eq!(pow_increment(1.0_f64, -3.0, 3.0), -1.0);
        assert_eq!(pow_increment(0.0_f64, -1.0, 3.0), 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let got = pow_increment(1.0_f32, 0.25, 2.0);
        assert!((got - 0.5625).abs() < 1e-6);
    }
}
