//! Adaptive Dormand–Prince 5(4) integrator for small autonomous-or-not systems.

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Clone, Copy, Debug)]
pub struct DormandPrince<T> {
    pub rtol: T,
    pub atol: T,
    pub max_steps: usize,
}

impl<T: Real> DormandPrince<T> {
    pub fn new(rtol: T, atol: T) -> Self {
        Self {
            rtol,
            atol,
            max_steps: 1_000_000,
        }
    }

    /// Integrates `y' = f(t, y)` from `t0` to `t1`, starting with step `h`.
    ///
    /// Returns the state at `t1` and the last accepted step size.
    pub fn advance<const D: usize>(
        &self,
        f: impl Fn(T, &[T; D]) -> [T; D],
        t0: T,
        y0: [T; D],
        t1: T,
        h: T,
    ) -> Result<([T; D], T)> {
        let c = |x: f64| T::lit(x);
        let (a21, a31, a32) = (c(1.0 / 5.0), c(3.0 / 40.0), c(9.0 / 40.0));
        let (a41, a42, a43) = (c(44.0 / 45.0), c(-56.0 / 15.0), c(32.0 / 9.0));
        let (a51, a52, a53, a54) = (
            c(19372.0 / 6561.0),
            c(-25360.0 / 2187.0),
            c(64448.0 / 6561.0),
            c(-212.0 / 729.0),
        );
        let (a61, a62, a63, a64, a65) = (
            c(9017.0 / 3168.0),
            c(-355.0 / 33.0),
            c(46732.0 / 5247.0),
            c(49.0 / 176.0),
            c(-5103.0 / 18656.0),
        );
        let (b1, b3, b4, b5, b6) = (
            c(35.0 / 384.0),
            c(500.0 / 1113.0),
            c(125.0 / 192.0),
            c(-2187.0 / 6784.0),
            c(11.0 / 84.0),
        );
        let (e1, e3, e4, e5, e6, e7) = (
            c(71.0 / 57600.0),
            c(-71.0 / 16695.0),
            c(71.0 / 1920.0),
            c(-17253.0 / 339200.0),
            c(22.0 / 525.0),
            c(-1.0 / 40.0),
        );
        let (c2, c3, c4, c5) = (c(0.2), c(0.3), c(0.8), c(8.0 / 9.0));

        let comb = |y: &[T; D], terms: &[(T, &[T; D])], h: T| -> [T; D] {
            let mut out = *y;
            for (i, o) in out.iter_mut().enumerate() {
                let mut s = T::zero();
                for (w, k) in terms {
                    s += *w * k[i];
                }
                *o += h * s;
            }
            out
        };

        let span = t1 - t0;
        if span == T::zero() {
            return Ok((y0, h));
        }
        let dir = span.signum();
        let mut t = t0;
        let mut y = y0;
        let mut h = h.abs().min(span.abs()) * dir;
        let mut k1 = f(t, &y);
        for _ in 0..self.max_steps {
            let remaining = t1 - t;
            if remaining * dir <= T::zero() {
                return Ok((y, h.abs()));
            }
            let last = (h.abs() >= remaining.abs()) || remaining.abs() <= T::epsilon() * t1.abs();
            let step = if last { remaining } else { h };
            let k2 = f(t + c2 * step, &comb(&y, &[(a21, &k1)], step));
            let k3 = f(t + c3 * step, &comb(&y, &[(a31, &k1), (a32, &k2)], step));
            let k4 = f(t + c4 * step, &comb(&y, &[(a41, &k1), (a42, &k2), (a43, &k3)], step));
            let k5 = f(
                t + c5 * step,
                &comb(&y, &[(a51, &k1), (a52, &k2), (a53, &k3), (a54, &k4)], step),
            );
            let k6 = f(
                t + step,
                &comb(&y, &[(a61, &k1), (a62, &k2), (a63, &k3), (a64, &k4), (a65, &k5)], step),
            );
            let y5 = comb(&y, &[(b1, &k1), (b3, &k3), (b4, &k4), (b5, &k5), (b6, &k6)], step);
            let k7 = f(t + step, &y5);
            let mut err = T::zero();
            for i in 0..D {
                let e = step
                    * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
                let sc = self.atol + self.rtol * y[i].abs().max(y5[i].abs());
                let q = e / sc;
                err += q * q;
            }
            err = (err / T::lit(D as f64)).sqrt();
            if !err.is_finite() {
                h *= T::lit(0.25);
                continue;
            }
            if err <= T::one() {
                t = if last { t1 } else { t + step };
                y = y5;
                k1 = k7;
                let fac = if err == T::zero() {
                    T::lit(5.0)
                } else {
                    (T::lit(0.9) * err.powf(T::lit(-0.2))).min(T::lit(5.0))
                };
                if !last {
                    h = step * fac.max(T::lit(0.2));
                }
            } else {
                let fac = (T::lit(0.9) * err.powf(T::lit(-0.2))).max(T::lit(0.1));
                h = step * fac;
            }
        }
        Err(Error::NotConverged {
            what: "Dormand-Prince integration",
            iterations: self.max_steps,
            residual: (t1 - t).to_f64_lossy(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_full_period() {
        let dp = DormandPrince::new(1e-12, 1e-14);
        let two_pi = std::f64::consts::TAU;
        let (y, _) = dp
            .advance(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [1.0, 0.0], two_pi, 0.1)
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10 && y[1].abs() < 1e-10);
    }

    #[test]
    fn exponential_in_f32() {
        let dp = DormandPrince::new(1e-6f32, 1e-8);
        let (y, _) = dp.advance(|_, y: &[f32; 1]| [y[0]], 0.0, [1.0], 1.0, 0.1).unwrap();
        assert!((y[0] - std::f32::consts::E).abs() < 1e-4);
    }

    #[test]
    fn backward_integration() {
        let dp = DormandPrince::new(1e-12, 1e-14);
        let (y, _) = dp
            .advance(|_, y: &[f64; 1]| [-y[0]], 1.0, [(-1.0f64).exp()], 0.0, 0.1)
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-11);
    }
}
