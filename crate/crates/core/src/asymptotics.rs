//! Interaction integrals between separated bumps, and the `(·)₊^p` Taylor bound.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::GroundStateProfile;

/// Radial shapes entering the interaction integrals.
#[derive(Clone, Debug)]
pub enum Shape {
    /// `U(|x|)`.
    Profile(Arc<GroundStateProfile>),
    /// `|∂U/∂x₁|`.
    ProfileSlope(Arc<GroundStateProfile>),
    /// `e^{−|x|}`.
    Exponential,
    /// `√2 sech |x|`.
    Sech,
}

impl Shape {
    fn eval(&self, x1: f64, x2: f64) -> f64 {
        let r = x1.hypot(x2);
        match self {
            Shape::Profile(p) => p.value(r),
            Shape::ProfileSlope(p) => {
                if r == 0.0 {
                    0.0
                } else {
                    (p.derivative(r) * x1 / r).abs()
                }
            }
            Shape::Exponential => (-r).exp(),
            Shape::Sech => std::f64::consts::SQRT_2 / r.cosh(),
        }
    }

    /// `lim g(x) e^{|x|} |x|^{(N−1)/2}` when known.
    pub fn tail_limit(&self, dimension: usize) -> Option<f64> {
        match (self, dimension) {
            (Shape::Profile(p), n) if p.dimension == n => Some(p.tail_l0),
            (Shape::Exponential, 1) => Some(1.0),
            (Shape::Sech, 1) => Some(2.0 * std::f64::consts::SQRT_2),
            _ => None,
        }
    }

    fn dimension(&self) -> Option<usize> {
        match self {
            Shape::Profile(p) | Shape::ProfileSlope(p) => Some(p.dimension),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Cell {
    /// All of `ℝ^N`.
    Whole,
    /// `|x₁| ≤ |y₀|/2` (two peaks at distance `|y₀|` on either side).
    Full,
    /// `0 ≤ x₁ ≤ |y₀|/2`.
    Half,
}

#[derive(Clone, Debug)]
pub struct InteractionSpec {
    pub dimension: usize,
    pub f: Shape,
    pub g: Shape,
    pub a: f64,
    pub b: f64,
    pub y0: f64,
    pub cell: Cell,
}

impl InteractionSpec {
    fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.a > self.b) {
            return Err(Error::param("a, b", "a > b > 0"));
        }
        if !(1..=2).contains(&self.dimension) {
            return Err(Error::param("dimension", "N ∈ {1, 2}"));
        }
        for s in [&self.f, &self.g] {
            if s.dimension().is_some_and(|n| n != self.dimension) {
                return Err(Error::param("dimension", "profile dimension must match N"));
            }
        }
        if !(self.y0.abs() >= 2.0 && self.y0.is_finite()) {
            return Err(Error::param("y0", "|y₀| ≥ 2"));
        }
        Ok(())
    }

    /// `e^{−b|y₀|} |y₀|^{b(1−N)/2}`.
    pub fn scale(&self) -> f64 {
        let y = self.y0.abs();
        (-self.b * y).exp() * y.powf(self.b * (1.0 - self.dimension as f64) / 2.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InteractionValue {
    pub y0: f64,
    pub value: f64,
    pub error: f64,
    /// `value / scale`.
    pub rescaled: f64,
}

const FAR: f64 = 40.0;

/// `∫ f^a(x) w(x) dx` over `x₁ ∈ [lo, hi]` (whole transverse space), with
/// `w` given per point.
fn integrate_nd(
    dimension: usize,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    h: &(dyn Fn(f64, f64) -> f64 + Sync),
    rel: f64,
) -> Result<(f64, f64)> {
    let mut pts = vec![lo];
    pts.extend(breaks.iter().copied().filter(|&x| x > lo && x < hi));
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if dimension == 1 {
        let r = integrate(|x| h(x, 0.0), &pts, 0.0, rel, 4000)?;
        return Ok((r.value, r.error));
    }
    let inner_err = std::cell::Cell::new(0.0f64);
    let failure = std::cell::Cell::new(None);
    let inner_pts = [0.0, 0.5, 2.0, 6.0, 15.0, FAR];
    let outer = integrate(
        |x1| match integrate(|x2| h(x1, x2), &inner_pts, 0.0, rel * 0.1, 2000) {
            Ok(r) => {
                inner_err.set(inner_err.get().max(r.error / r.value.abs().max(f64::MIN_POSITIVE)));
                2.0 * r.value
            }
            Err(e) => {
                failure.set(Some(e.to_string()));
                0.0
            }
        },
        &pts,
        0.0,
        rel,
        4000,
    )?;
    if let Some(msg) = failure.take() {
        return Err(Error::Assertion(msg));
    }
    Ok((outer.value, outer.error + inner_err.get() * outer.value.abs()))
}

/// `∫_cell f^a(x) g^b(x − y₀e₁) dx` with the second peak placed at `+|y₀|`.
pub fn interaction_quadrature(spec: &InteractionSpec) -> Result<InteractionValue> {
    spec.validate()?;
    let y = spec.y0.abs();
    let (lo, hi) = match spec.cell {
        Cell::Whole => (-FAR, y + FAR),
        Cell::Full => (-y / 2.0, y / 2.0),
        Cell::Half => (0.0, y / 2.0),
    };
    let (f, g, a, b) = (&spec.f, &spec.g, spec.a, spec.b);
    let h = move |x1: f64, x2: f64| f.eval(x1, x2).powf(a) * g.eval(x1 - y, x2).powf(b);
    let breaks = [-4.0, -1.0, 0.0, 1.0, 4.0, y - 1.0, y, y + 1.0];
    let (value, error) = integrate_nd(spec.dimension, lo, hi, &breaks, &h, 1e-9)?;
    if !(error <= 1e-2 * value.abs()) {
        return Err(Error::Quadrature {
            estimate: error,
            tolerance: 1e-2 * value.abs(),
        });
    }
    Ok(InteractionValue {
        y0: y,
        value,
        error,
        rescaled: value / spec.scale(),
    })
}

/// `C₀ = ∫ f^a` over `ℝ^N`, or over `x₁ > 0` for the half cell.
pub fn mass_constant(spec: &InteractionSpec) -> Result<f64> {
    spec.validate()?;
    let lo = if spec.cell == Cell::Half { 0.0 } else { -FAR };
    let (f, a) = (&spec.f, spec.a);
    let h = move |x1: f64, x2: f64| f.eval(x1, x2).powf(a);
    Ok(integrate_nd(spec.dimension, lo, FAR, &[-1.0, 0.0, 1.0], &h, 1e-11)?.0)
}

/// `∫ f^a(x) e^{b x₁}` over the same region as [`mass_constant`].
pub fn weighted_mass_constant(spec: &InteractionSpec) -> Result<f64> {
    spec.validate()?;
    let lo = if spec.cell == Cell::Half { 0.0 } else { -FAR };
    let (f, a, b) = (&spec.f, spec.a, spec.b);
    let h = move |x1: f64, x2: f64| f.eval(x1, x2).powf(a) * (b * x1).exp();
    Ok(integrate_nd(spec.dimension, lo, FAR, &[-1.0, 0.0, 1.0], &h, 1e-11)?.0)
}

/// Closed form of `∫_ℝ e^{−a|x|} e^{−b|x−y|} dx`, `a > b > 0`, `y > 0`.
pub fn exponential_interaction(a: f64, b: f64, y: f64) -> f64 {
    let left = (-b * y).exp() / (a + b);
    let middle = (-b * y).exp() * -(-(a - b) * y).exp_m1() / (a - b);
    let right = (-a * y).exp() / (a + b);
    left + middle + right
}

#[derive(Clone, Debug, Serialize)]
pub struct InteractionLimit {
    pub points: Vec<InteractionValue>,
    /// Richardson fit `R(y) = R∞ + c/y` on the two largest separations.
    pub extrapolated: f64,
    pub tail_limit: f64,
    pub mass: f64,
    /// `L·C₀`.
    pub stated_limit: f64,
    /// `L^b ∫ f^a e^{b x₁}`.
    pub weighted_limit: f64,
    pub monotone: bool,
    /// Increments fail to shrink along the sweep.
    pub flagged: bool,
}

/// Rescaled interaction along a sweep of separations.
pub fn interaction_limit(spec: &InteractionSpec, sweep: &[f64]) -> Result<InteractionLimit> {
    spec.validate()?;
    if sweep.len() < 2 {
        return Err(Error::param("sweep", "at least two separations"));
    }
    let l = spec
        .g
        .tail_limit(spec.dimension)
        .ok_or_else(|| Error::param("g", "needs a known tail limit"))?;
    let mut ys: Vec<f64> = sweep.iter().map(|y| y.abs()).collect();
    ys.sort_by(f64::total_cmp);
    let points = ys
        .par_iter()
        .map(|&y| interaction_quadrature(&InteractionSpec { y0: y, ..spec.clone() }))
        .collect::<Result<Vec<_>>>()?;
    let n = points.len();
    let (p1, p2) = (&points[n - 2], &points[n - 1]);
    let extrapolated = (p2.y0 * p2.rescaled - p1.y0 * p1.rescaled) / (p2.y0 - p1.y0);
    let r: Vec<f64> = points.iter().map(|q| q.rescaled).collect();
    let incr: Vec<f64> = r.windows(2).map(|w| w[1] - w[0]).collect();
    let monotone = incr.iter().all(|d| *d >= 0.0) || incr.iter().all(|d| *d <= 0.0);
    let per_unit: Vec<f64> = incr
        .iter()
        .zip(ys.windows(2))
        .map(|(d, w)| d.abs() / (w[1] - w[0]))
        .collect();
    let flagged = !per_unit.windows(2).all(|w| w[1] <= w[0]);
    let mass = mass_constant(spec)?;
    let weighted = weighted_mass_constant(spec)?;
    Ok(InteractionLimit {
        points,
        extrapolated,
        tail_limit: l,
        mass,
        stated_limit: l * mass,
        weighted_limit: l.powf(spec.b) * weighted,
        monotone,
        flagged,
    })
}

/// `|(a+b)₊^p − Σ_{m≤⌊p⌋} C(p,m) a^{p−m} b^m|`.
pub fn taylor_remainder(a: f64, b: f64, p: f64) -> f64 {
    let k = p.floor() as usize;
    let t = b / a;
    if a + b > 0.0 && t.abs() < 0.5 {
        // tail of the binomial series; avoids cancelling against a^p
        let mut coef = 1.0;
        for m in 0..=k {
            coef *= (p - m as f64) / (m as f64 + 1.0);
        }
        let mut term = coef * t.powi(k as i32 + 1);
        let mut sum = 0.0f64;
        let mut m = k + 1;
        while term != 0.0 && term.abs() > 1e-18 * sum.abs() {
            sum += term;
            term *= (p - m as f64) / (m as f64 + 1.0) * t;
            m += 1;
        }
        return (a.powf(p) * sum).abs();
    }
    let mut poly = 0.0;
    let mut coef = 1.0;
    for m in 0..=k {
        poly += coef * a.powf(p - m as f64) * b.powi(m as i32);
        coef *= (p - m as f64) / (m as f64 + 1.0);
    }
    ((a + b).max(0.0).powf(p) - poly).abs()
}

#[derive(Clone, Debug, Serialize)]
pub struct TaylorReport {
    pub p: f64,
    pub seed: u64,
    pub samples: usize,
    pub rejected: usize,
    pub max_ratio: f64,
    pub argmax: (f64, f64),
}

/// Max of `taylor_remainder(a, b, p)/|b|^p` over seeded random `(a, b)`.
///
/// `a` is log-uniform on `[10⁻³, 10³]`; `b` has a random sign and log-uniform
/// magnitude on the same range.
pub fn taylor_remainder_check(samples: usize, p: f64, seed: u64) -> Result<TaylorReport> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::param("p", "p ≥ 2"));
    }
    if samples == 0 {
        return Err(Error::param("samples", "at least one"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = 1e3f64.ln();
    let draws: Vec<(f64, f64)> = (0..samples)
        .map(|_| {
            let a = rng.gen_range(-span..span).exp();
            let mag = rng.gen_range(-span..span).exp();
            let b = if rng.gen_bool(0.5) { mag } else { -mag };
            (a, b)
        })
        .collect();
    let kept: Vec<(f64, f64)> = draws
        .iter()
        .copied()
        .filter(|(a, b)| a.abs() <= 1e3 && b.abs() <= 1e3)
        .collect();
    let best = kept
        .par_iter()
        .map(|&(a, b)| {
            let ratio = if b == 0.0 { 0.0 } else { taylor_remainder(a, b, p) / b.abs().powf(p) };
            (ratio, (a, b))
        })
        .reduce(|| (0.0, (0.0, 0.0)), |x, y| if y.0 > x.0 { y } else { x });
    if !best.0.is_finite() {
        return Err(Error::Assertion("non-finite remainder ratio".into()));
    }
    Ok(TaylorReport {
        p,
        seed,
        samples,
        rejected: samples - kept.len(),
        max_ratio: best.0,
        argmax: best.1,
    })
}
