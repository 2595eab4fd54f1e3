//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::num::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral<T> {
    pub value: T,
    pub error: T,
    pub evaluations: usize,
}

fn gk15<T: Real>(f: &impl Fn(T) -> T, a: T, b: T) -> (T, T) {
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let fc = f(mid);
    let mut k = fc * T::lit(WGK[7]);
    let mut g = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let s = f(mid - dx) + f(mid + dx);
        k += s * T::lit(WGK[j]);
        if j % 2 == 1 {
            g += s * T::lit(WG[j / 2]);
        }
    }
    (k * half, ((k - g) * half).abs())
}

struct Piece<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Piece<T> {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl<T: Real> Eq for Piece<T> {}
impl<T: Real> PartialOrd for Piece<T> {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl<T: Real> Ord for Piece<T> {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.partial_cmp(&o.error).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// Integrates `f` over `[points[0], points[last]]`, splitting first at every
/// interior point, then bisecting the piece with the largest error estimate.
pub fn integrate<T: Real>(
    f: impl Fn(T) -> T,
    points: &[T],
    abs_tol: T,
    rel_tol: T,
    max_pieces: usize,
) -> Result<Integral<T>> {
    assert!(points.len() >= 2, "need at least one interval");
    let mut heap = BinaryHeap::new();
    let mut value = T::zero();
    let mut error = T::zero();
    let mut evals = 0;
    for w in points.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let (v, e) = gk15(&f, w[0], w[1]);
        evals += 15;
        value += v;
        error += e;
        heap.push(Piece { a: w[0], b: w[1], value: v, error: e });
    }
    while error > abs_tol.max(rel_tol * value.abs()) {
        if heap.len() >= max_pieces {
            return Err(Error::Quadrature {
                estimate: error.to_f64_lossy(),
                tolerance: abs_tol.max(rel_tol * value.abs()).to_f64_lossy(),
            });
        }
        let Some(p) = heap.pop() else { break };
        let m = (p.a + p.b) * T::lit(0.5);
        if m <= p.a || m >= p.b {
            // interval exhausted at machine resolution
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        evals += 30;
        value += v1 + v2 - p.value;
        error += e1 + e2 - p.error;
        heap.push(Piece { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, error: e2 });
    }
    // re-sum to shed accumulated update roundoff
    let (mut v, mut e) = (T::zero(), T::zero());
    for p in heap.iter() {
        v += p.value;
        e += p.error;
    }
    Ok(Integral {
        value: v,
        error: e,
        evaluations: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x: f64| x.powi(5) - 2.0 * x, &[0.0, 2.0], 1e-14, 1e-14, 10).unwrap();
        assert!((r.value - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn kink_with_breakpoint() {
        let r = integrate(|x: f64| (-x.abs()).exp(), &[-30.0, 0.0, 30.0], 1e-13, 1e-13, 200).unwrap();
        assert!((r.value - 2.0 * (1.0 - (-30.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn adaptive_without_breakpoint() {
        let r = integrate(|x: f64| x.abs().sqrt(), &[-1.0, 1.0], 1e-10, 1e-10, 500).unwrap();
        assert!((r.value - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn single_precision() {
        let r = integrate(|x: f32| x.sin(), &[0.0, std::f32::consts::PI], 1e-6, 1e-6, 50).unwrap();
        assert!((r.value - 2.0).abs() < 1e-5);
    }

    #[test]
    fn piece_cap_reported() {
        let err = integrate(|x: f64| (1.0 / x).sin(), &[1e-6, 1.0], 1e-14, 1e-14, 4).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }
}
