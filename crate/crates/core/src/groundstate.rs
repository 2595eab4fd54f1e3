//! Radial ground state of `−ΔU + U − U^p = 0` in ℝ^N by shooting.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::Real;
use crate::ode::DormandPrince;

/// Tunables for [`solve_ground_state_with`].
#[derive(Clone, Copy, Debug)]
pub struct ShootingOptions {
    /// Outer radius of the stored grid.
    pub r_max: f64,
    /// Uniform radial grid spacing.
    pub dr: f64,
    /// Upper bound for the radius where evaluation switches to the tail formula.
    pub match_radius: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            r_max: 25.0,
            dr: 0.01,
            match_radius: 15.0,
        }
    }
}

/// Sampled radial profile with its exponential tail constants.
#[derive(Clone, Debug, Serialize)]
pub struct Profile<T> {
    pub dimension: usize,
    pub exponent: T,
    pub radial_grid: Vec<T>,
    pub values: Vec<T>,
    pub derivatives: Vec<T>,
    #[serde(skip)]
    second: Vec<T>,
    pub center_value: T,
    pub tail_l0: T,
    pub tail_l1: T,
    pub tail_match_radius: T,
    /// Final width of the shooting bracket on `U(0)`.
    pub bracket_width: T,
    /// Max ODE residual over interior grid nodes.
    pub ode_residual: T,
    #[serde(skip)]
    dr: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shot {
    Under,
    Over,
    Decay,
}

struct Trajectory<T> {
    u: Vec<T>,
    du: Vec<T>,
}

fn check_params<T: Real>(n: usize, p: T, tol: T) -> Result<()> {
    if n < 1 {
        return Err(Error::param("dimension", "N ≥ 1"));
    }
    if !(p >= T::lit(2.0)) || !p.is_finite() {
        return Err(Error::param("p", format!("p ≥ 2 (got {p})")));
    }
    if n >= 3 {
        let crit = T::lit((n as f64 + 2.0) / (n as f64 - 2.0));
        if p >= crit {
            return Err(Error::param(
                "p",
                format!("subcritical p < (N+2)/(N−2) = {crit} for N = {n}"),
            ));
        }
    }
    if !(tol > T::zero()) {
        return Err(Error::param("tol", "tol > 0"));
    }
    Ok(())
}

/// Coefficients of the large-r series `Σ a_k r^{−k}` of `√(2r/π) e^r K_ν(r)`.
fn bessel_tail_series<T: Real>(nu: T, r: T) -> (T, T) {
    let four_nu2 = T::lit(4.0) * nu * nu;
    let mut a = T::one();
    let mut s = T::one();
    let mut ds = T::zero();
    let mut last = T::infinity();
    for k in 1..64 {
        let kk = T::lit(k as f64);
        let odd = T::lit((2 * k - 1) as f64);
        a = a * (four_nu2 - odd * odd) / (T::lit(8.0) * kk);
        if a == T::zero() {
            break;
        }
        let term = a / r.powi(k);
        if term.abs() >= last || term.abs() < T::epsilon() * s.abs() {
            break;
        }
        last = term.abs();
        s += term;
        ds -= kk * term / r;
    }
    (s, ds)
}

impl<T: Real> Profile<T> {
    fn half_nm1(&self) -> T {
        T::lit((self.dimension as f64 - 1.0) * 0.5)
    }

    fn tail(&self, r: T) -> (T, T) {
        tail_eval(self.dimension, self.tail_l0, r)
    }

    fn hermite(&self, r: T, f: &[T], df: &[T]) -> T {
        let x = r / self.dr;
        let j = x.floor().to_usize().unwrap_or(0).min(f.len() - 2);
        let t = x - T::lit(j as f64);
        let t2 = t * t;
        let t3 = t2 * t;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = -two * t3 + three * t2;
        let h11 = t3 - t2;
        h00 * f[j] + h10 * self.dr * df[j] + h01 * f[j + 1] + h11 * self.dr * df[j + 1]
    }

    /// `U(r)`; zero (not a denormal fault) far out.
    pub fn value(&self, r: T) -> T {
        let r = r.abs();
        if r <= self.tail_match_radius {
            self.hermite(r, &self.values, &self.derivatives)
        } else {
            self.tail(r).0
        }
    }

    /// `U′(r)`.
    pub fn derivative(&self, r: T) -> T {
        let r = r.abs();
        if r <= self.tail_match_radius {
            self.hermite(r, &self.derivatives, &self.second)
        } else {
            self.tail(r).1
        }
    }

    /// `U″(r)` through the radial equation.
    pub fn second_derivative(&self, r: T) -> T {
        let r = r.abs();
        let u = self.value(r);
        let up = self.derivative(r);
        rhs_second(self.dimension, self.exponent, r, u, up, self.center_value)
    }

    /// Evaluates `U(|x|)` at a point of ℝ^N.
    pub fn eval(&self, point: &[T]) -> T {
        let r = point.iter().fold(T::zero(), |s, x| s + *x * *x).sqrt();
        self.value(r)
    }

    pub fn grid_step(&self) -> T {
        self.dr
    }

    /// `½U′² − ½U² + U^{p+1}/(p+1)` at grid node `j`.
    pub fn energy(&self, j: usize) -> T {
        let u = self.values[j];
        let du = self.derivatives[j];
        let p1 = self.exponent + T::one();
        T::lit(0.5) * (du * du - u * u) + u.max(T::zero()).powf(p1) / p1
    }
}

/// `U` and `U′` from `L₀ r^{(1−N)/2} e^{−r} S_ν(r)`.
fn tail_eval<T: Real>(n: usize, l0: T, r: T) -> (T, T) {
    if r > T::lit(700.0) {
        return (T::zero(), T::zero());
    }
    let half = T::lit((n as f64 - 1.0) * 0.5);
    let (s, ds) = bessel_tail_series(T::lit((n as f64 - 2.0) * 0.5), r);
    let env = (l0.ln() - r - half * r.ln()).exp();
    let q = s * (T::one() + half / r) - ds;
    (env * s, -env * q)
}

fn rhs_second<T: Real>(n: usize, p: T, r: T, u: T, up: T, center: T) -> T {
    let nl = u.max(T::zero()).powf(p);
    if r == T::zero() {
        return (center - center.powf(p)) / T::lit(n as f64);
    }
    -T::lit(n as f64 - 1.0) / r * up + u - nl
}

/// Solves for the ground state with default grid options.
pub fn solve_ground_state<T: Real>(n: usize, p: T, tol: T) -> Result<Profile<T>> {
    solve_ground_state_with(n, p, tol, &ShootingOptions::default())
}

pub fn solve_ground_state_with<T: Real>(
    n: usize,
    p: T,
    tol: T,
    opts: &ShootingOptions,
) -> Result<Profile<T>> {
    check_params(n, p, tol)?;
    let dr = T::lit(opts.dr);
    let nodes = (opts.r_max / opts.dr).round() as usize;
    let nf = T::lit(n as f64);
    let rtol = T::lit(1e-13).max(T::epsilon() * T::lit(100.0));
    let dp = DormandPrince::new(rtol, rtol * T::lit(1e-3));
    let floor = T::lit(1e-12);

    let shoot = |s: T, keep: bool| -> Result<(Shot, Trajectory<T>)> {
        let c2 = (s - s.powf(p)) / (T::lit(2.0) * nf);
        let c4 = (T::one() - p * s.powf(p - T::one())) * c2 / (T::lit(4.0) * (nf + T::lit(2.0)));
        let r0 = T::lit(1e-3);
        let mut y = [
            s + c2 * r0 * r0 + c4 * r0.powi(4),
            T::lit(2.0) * c2 * r0 + T::lit(4.0) * c4 * r0.powi(3),
        ];
        let f = |r: T, y: &[T; 2]| [y[1], rhs_second(n, p, r, y[0], y[1], s)];
        let mut traj = Trajectory {
            u: vec![s],
            du: vec![T::zero()],
        };
        let mut r = r0;
        let mut h = T::lit(1e-3);
        for j in 1..=nodes {
            let rj = T::lit(j as f64) * dr;
            let (y1, h1) = dp.advance(f, r, y, rj, h)?;
            y = y1;
            h = h1;
            r = rj;
            if keep {
                traj.u.push(y[0]);
                traj.du.push(y[1]);
            }
            if y[0] < T::zero() {
                return Ok((Shot::Over, traj));
            }
            if y[1] > T::zero() {
                return Ok((Shot::Under, traj));
            }
            if y[0] < floor {
                return Ok((Shot::Decay, traj));
            }
        }
        Ok((Shot::Decay, traj))
    };

    let mut lo = T::one() + T::lit(1e-6);
    if shoot(lo, false)?.0 != Shot::Under {
        return Err(Error::Bracket {
            lo: lo.to_f64_lossy(),
            hi: lo.to_f64_lossy(),
        });
    }
    let mut hi = T::lit(2.0);
    let mut found = None;
    for _ in 0..64 {
        match shoot(hi, false)?.0 {
            Shot::Under => {
                lo = hi;
                hi *= T::lit(2.0);
            }
            Shot::Over => break,
            Shot::Decay => {
                found = Some(hi);
                break;
            }
        }
        if !hi.is_finite() {
            return Err(Error::Bracket {
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
            });
        }
    }
    if found.is_none() && shoot(hi, false)?.0 == Shot::Under {
        return Err(Error::Bracket {
            lo: lo.to_f64_lossy(),
            hi: hi.to_f64_lossy(),
        });
    }
    // Bisect to machine resolution: the tail accuracy, not `tol`, is the binding constraint.
    while found.is_none() {
        let mid = lo + (hi - lo) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(mid, false)?.0 {
            Shot::Under => lo = mid,
            Shot::Over => hi = mid,
            Shot::Decay => found = Some(mid),
        }
    }
    if let Some(s) = found {
        lo = s;
        hi = s;
    }
    let width = hi - lo;
    if width > tol {
        return Err(Error::Bracket {
            lo: lo.to_f64_lossy(),
            hi: hi.to_f64_lossy(),
        });
    }
    let (_, t_lo) = shoot(lo, true)?;
    let (_, t_hi) = shoot(hi, true)?;
    let common = t_lo.u.len().min(t_hi.u.len());
    let mut u = Vec::with_capacity(common);
    let mut du = Vec::with_capacity(common);
    let mut reliable = 0;
    for j in 0..common {
        let a = (t_lo.u[j] + t_hi.u[j]) * T::lit(0.5);
        let b = (t_lo.du[j] + t_hi.du[j]) * T::lit(0.5);
        let agree = (t_lo.u[j] - t_hi.u[j]).abs() <= T::lit(1e-7).max(T::epsilon() * T::lit(1e3)) * a.abs();
        if !agree || a <= T::zero() || (j > 0 && b >= T::zero()) {
            break;
        }
        u.push(a);
        du.push(b);
        reliable = j;
    }
    let agree_tol = T::lit(1e-10).max(T::epsilon() * T::lit(1e3));
    let jr = (0..=reliable)
        .take_while(|&j| (t_lo.u[j] - t_hi.u[j]).abs() <= agree_tol * u[j])
        .last()
        .unwrap_or(0)
        .min(nodes - 1);
    let min_glue = (2.0 / opts.dr) as usize;
    if jr < min_glue {
        return Err(Error::NotConverged {
            what: "ground-state shooting (trajectory unreliable before r = 2)",
            iterations: 0,
            residual: width.to_f64_lossy(),
        });
    }
    let rmax = T::lit(nodes as f64) * dr;
    let f = |r: T, y: &[T; 2]| [y[1], rhs_second(n, p, r, y[0], y[1], T::zero())];
    // Inward integration from r_max is stable for the decaying branch.
    let inward = |l0: T, jg: usize, keep: bool| -> Result<(Vec<T>, Vec<T>)> {
        let (a, b) = tail_eval(n, l0, rmax);
        let mut y = [a, b];
        let mut us = vec![a];
        let mut dus = vec![b];
        let mut h = T::lit(1e-3);
        for j in (jg..nodes).rev() {
            let rj = T::lit(j as f64) * dr;
            let (y1, h1) = dp.advance(f, rj + dr, y, rj, h)?;
            y = y1;
            h = h1;
            if keep || j == jg {
                us.push(y[0]);
                dus.push(y[1]);
            }
        }
        us.reverse();
        dus.reverse();
        Ok((us, dus))
    };
    let half = T::lit((n as f64 - 1.0) * 0.5);
    let nu = T::lit((n as f64 - 2.0) * 0.5);
    // L₀ such that the inward branch meets the shot at node jg.
    let match_l0 = |jg: usize| -> Result<(T, T)> {
        let rg = T::lit(jg as f64) * dr;
        let (sg, _) = bessel_tail_series(nu, rg);
        let mut la = u[jg] * (rg + half * rg.ln()).exp() / sg;
        let mut ga = inward(la, jg, false)?.0[0] - u[jg];
        let mut lb = la * (T::one() + T::lit(1e-4));
        for _ in 0..40 {
            let gb = inward(lb, jg, false)?.0[0] - u[jg];
            if gb == T::zero() || gb == ga || (lb - la).abs() <= T::epsilon() * lb.abs() * T::lit(4.0) {
                break;
            }
            let next = lb - gb * (lb - la) / (gb - ga);
            la = lb;
            ga = gb;
            lb = next;
        }
        let du_in = inward(lb, jg, false)?.1[0];
        Ok((lb, ((du_in - du[jg]) / du[jg]).abs()))
    };
    // Glue where the derivative mismatch is smallest.
    let step = (0.5 / opts.dr) as usize;
    let top = jr.min((10.0 / opts.dr) as usize);
    let mut best: Option<(usize, T, T)> = None;
    let mut jg = min_glue;
    while jg <= top {
        let (l, mis) = match_l0(jg)?;
        if best.is_none_or(|b| mis < b.2) {
            best = Some((jg, l, mis));
        }
        jg += step;
    }
    let (jg, l0, _) = best.expect("at least one glue candidate");
    let (u_in, du_in) = inward(l0, jg, true)?;
    let rm = T::lit(opts.match_radius).min(rmax);
    let center = u[0];

    let mut prof = Profile {
        dimension: n,
        exponent: p,
        radial_grid: (0..=nodes).map(|j| T::lit(j as f64) * dr).collect(),
        values: Vec::with_capacity(nodes + 1),
        derivatives: Vec::with_capacity(nodes + 1),
        second: Vec::new(),
        center_value: center,
        tail_l0: l0,
        tail_l1: l0,
        tail_match_radius: rm,
        bracket_width: width,
        ode_residual: T::zero(),
        dr,
    };
    prof.values.extend_from_slice(&u[..jg]);
    prof.derivatives.extend_from_slice(&du[..jg]);
    prof.values.extend_from_slice(&u_in);
    prof.derivatives.extend_from_slice(&du_in);
    let jm = (rm / dr).round().to_usize().unwrap_or(nodes).min(nodes);
    let (sm, dsm) = bessel_tail_series(nu, rm);
    let qm = sm * (T::one() + half / rm) - dsm;
    prof.tail_l1 = -prof.derivatives[jm] * (rm + half * rm.ln()).exp() / qm;
    prof.second = (0..=nodes)
        .map(|j| rhs_second(n, p, prof.radial_grid[j], prof.values[j], prof.derivatives[j], center))
        .collect();
    prof.ode_residual = ode_residual(&prof);
    if prof.ode_residual > tol {
        return Err(Error::NotConverged {
            what: "ground-state ODE residual",
            iterations: 0,
            residual: prof.ode_residual.to_f64_lossy(),
        });
    }
    Ok(prof)
}

/// Max over interior nodes of the radial-equation residual, with `U″`
/// from an eighth-order central difference of the stored `U′` (odd
/// reflection across the origin).
pub fn ode_residual<T: Real>(prof: &Profile<T>) -> T {
    let c = [
        T::lit(4.0 / 5.0),
        T::lit(-1.0 / 5.0),
        T::lit(4.0 / 105.0),
        T::lit(-1.0 / 280.0),
    ];
    let d = &prof.derivatives;
    let at = |j: isize| if j < 0 { -d[(-j) as usize] } else { d[j as usize] };
    let mut worst = T::zero();
    for j in 1..d.len().saturating_sub(4) {
        let ji = j as isize;
        let mut fd = T::zero();
        for (k, ck) in c.iter().enumerate() {
            let k = k as isize + 1;
            fd += *ck * (at(ji + k) - at(ji - k));
        }
        fd /= prof.dr;
        let r = prof.radial_grid[j];
        let res = fd - rhs_second(prof.dimension, prof.exponent, r, prof.values[j], d[j], prof.center_value);
        worst = worst.max(res.abs());
    }
    worst
}

/// Tail constants averaged over a radial window.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailFit<T> {
    pub l0: T,
    pub l1: T,
    pub l0_spread: T,
    pub l1_spread: T,
}

/// Averages `r^{(N−1)/2} e^r U` and `r^{(N−1)/2} e^r |U′|` over grid nodes in the window.
pub fn fit_tail_constants<T: Real>(prof: &Profile<T>, window: [T; 2]) -> Result<TailFit<T>> {
    let [lo, hi] = window;
    let rmax = *prof.radial_grid.last().expect("nonempty grid");
    if !(lo < hi) || lo < T::zero() || hi > rmax {
        return Err(Error::param("window", format!("0 ≤ r_lo < r_hi ≤ {rmax}")));
    }
    if prof.value(lo) >= T::lit(1e-2) {
        return Err(Error::param("window", "U(r_lo) < 1e-2"));
    }
    let half = prof.half_nm1();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (j, &r) in prof.radial_grid.iter().enumerate() {
        if r < lo || r > hi {
            continue;
        }
        let w = (r + half * r.ln()).exp();
        a.push(w * prof.values[j]);
        b.push(w * prof.derivatives[j].abs());
    }
    let stats = |v: &[T]| {
        let mean = v.iter().fold(T::zero(), |s, x| s + *x) / T::lit(v.len() as f64);
        let (mn, mx) = v
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(a, b), x| (a.min(*x), b.max(*x)));
        (mean, (mx - mn) / mean)
    };
    if a.is_empty() {
        return Err(Error::param("window", "window contains no grid nodes"));
    }
    let (l0, s0) = stats(&a);
    let (l1, s1) = stats(&b);
    let spread = s0.max(s1);
    if spread > T::lit(0.05) {
        return Err(Error::TailSpread {
            spread: spread.to_f64_lossy(),
        });
    }
    Ok(TailFit {
        l0,
        l1,
        l0_spread: s0,
        l1_spread: s1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_series_terminates_for_half_integer_order() {
        let (s, ds) = bessel_tail_series(0.5f64, 3.0);
        assert_eq!((s, ds), (1.0, 0.0));
        let (s, _) = bessel_tail_series(1.5f64, 2.0);
        assert!((s - 1.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            solve_ground_state(2, 1.5f64, 1e-10),
            Err(Error::InvalidParameter { name: "p", .. })
        ));
        assert!(matches!(
            solve_ground_state(3, 5.0f64, 1e-10),
            Err(Error::InvalidParameter { name: "p", .. })
        ));
        assert!(solve_ground_state(0, 3.0f64, 1e-10).is_err());
        assert!(solve_ground_state(1, 3.0f64, 0.0).is_err());
    }
}
