//! Newton solve of `−Δu + u − u₊^p = 0` from a multi-peak start, plus
//! a posteriori checks on the converged periodic solution.
//!
//! Unknowns are `u = ū(c) + w` with the peak positions `c` (one pinned),
//! the constraints `⟨w, t_i⟩_{H¹} = 0`, and a multiplier `μ` on the pinned
//! translation direction.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::ansatz::{build_ansatz, position_derivatives, residual, AnsatzBundle, PeakConfiguration};
use crate::domain::{apply_helmholtz, h1_product, GridField, StripGrid};
use crate::error::{Error, Result};
use crate::linalg::Bordered;
use crate::num::pow_increment;
use crate::spectrum::LinearizedOperator;
use crate::weighted::{distance_to_peaks, weighted_sup};
use crate::GroundStateProfile;

#[derive(Clone, Debug, Serialize)]
pub struct DancerOptions {
    /// Target for the L² norm of the PDE residual.
    pub tol: f64,
    /// Required reduction of the merit relative to the start.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for DancerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            rel_tol: 1e-6,
            max_iter: 30,
            max_halvings: 12,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NewtonStep {
    pub iteration: usize,
    pub residual: f64,
    pub constraint: f64,
    pub multiplier: f64,
    pub damping: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DancerSolution {
    #[serde(skip)]
    pub field: GridField,
    #[serde(skip)]
    pub psi: GridField,
    pub epsilon: f64,
    pub k: usize,
    pub exponent: f64,
    pub pin: usize,
    pub pinned_location: f64,
    pub config: PeakConfiguration,
    pub residual: f64,
    pub min_value: f64,
    pub correction_sup: f64,
    pub newton_history: Vec<NewtonStep>,
    /// `max r_{n+1}/r_n²` over the steps where `r_n < 1e-3`.
    pub quadratic_ratio: Option<f64>,
}

impl DancerSolution {
    pub fn iterations(&self) -> usize {
        self.newton_history.len().saturating_sub(1)
    }
}

struct State {
    bundle: AnsatzBundle,
    /// Internal peak index → bundle index.
    perm: Vec<usize>,
    r: GridField,
    g: Vec<f64>,
    merit: f64,
}

fn config_at(eps: f64, pos: &[f64]) -> Result<PeakConfiguration> {
    PeakConfiguration::from_positions(eps, pos)
}

fn evaluate(
    eps: f64,
    pos: &[f64],
    w: &GridField,
    mu: f64,
    pin: usize,
    profile: &Arc<GroundStateProfile>,
    grid: &StripGrid,
) -> Result<State> {
    let config = config_at(eps, pos)?;
    let bundle = build_ansatz(&config, profile.clone(), grid)?;
    let bp = config.positions();
    let perm: Vec<usize> = pos
        .iter()
        .map(|&x| {
            (0..bp.len())
                .min_by(|&a, &b| grid.wrap(bp[a] - x).abs().total_cmp(&grid.wrap(bp[b] - x).abs()))
                .unwrap_or(0)
        })
        .collect();
    let p = bundle.exponent();
    let m = residual(&bundle);
    let aw = apply_helmholtz(w);
    let mut r = GridField::zeros(*grid);
    for (n, out) in r.data_mut().iter_mut().enumerate() {
        let a = bundle.ubar.data()[n];
        let b = w.data()[n];
        let inc = if a > 0.0 { pow_increment(a, b, p) } else { b.max(0.0).powf(p) };
        *out = aw.data()[n] + m.data()[n] - inc;
    }
    let g: Vec<f64> = perm
        .iter()
        .map(|&b| h1_product(w, &bundle.translation_modes[b]))
        .collect();
    let mut full = r.clone();
    full.axpy(mu, &apply_helmholtz(&bundle.translation_modes[perm[pin]]));
    let merit = (full.l2_norm().powi(2) + g.iter().map(|x| x * x).sum::<f64>()).sqrt();
    Ok(State { bundle, perm, r, g, merit })
}

/// Damped Newton from the ansatz of `config` (plus `initial − ū` if given).
pub fn newton_solve(
    config: &PeakConfiguration,
    profile: Arc<GroundStateProfile>,
    grid: &StripGrid,
    initial: Option<&GridField>,
    pin: usize,
    opts: &DancerOptions,
) -> Result<DancerSolution> {
    let k = config.k;
    if pin >= k {
        return Err(Error::param("pin", format!("peak index < {k}")));
    }
    let eps = config.epsilon;
    let p = profile.exponent;
    let mut pos = config.positions();
    let mut w = match initial {
        Some(u) => {
            let b = build_ansatz(config, profile.clone(), grid)?;
            u.check_same_grid(&b.ubar)?;
            u.sub(&b.ubar)
        }
        None => GridField::zeros(*grid),
    };
    let mut mu = 0.0;
    let mut st = evaluate(eps, &pos, &w, mu, pin, &profile, grid)?;
    let mut history = vec![NewtonStep {
        iteration: 0,
        residual: st.r.l2_norm(),
        constraint: st.g.iter().fold(0.0f64, |a, x| a.max(x.abs())),
        multiplier: mu,
        damping: 0.0,
    }];
    let free: Vec<usize> = (0..k).filter(|&i| i != pin).collect();
    let mut iter = 0;
    let start = st.merit;
    while !(st.merit <= opts.tol && (st.merit <= opts.rel_tol * start || start == 0.0)) {
        if iter >= opts.max_iter {
            return Err(Error::NotConverged {
                what: "newton",
                iterations: iter,
                residual: st.merit,
            });
        }
        iter += 1;
        let u = st.bundle.ubar.add(&w);
        let op = LinearizedOperator::from_field(&u, p);
        let factor = op.factor_shifted(0.0, false)?;
        let deriv = position_derivatives(&st.bundle);
        let ubar = &st.bundle.ubar;
        let mut cols: Vec<Vec<f64>> = free
            .iter()
            .map(|&j| {
                let b = st.perm[j];
                let t = st.bundle.translation_modes[b].data();
                deriv.d_residual[b]
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(n, dm)| {
                        let du = p * (u.data()[n].max(0.0).powf(p - 1.0) - ubar.data()[n].max(0.0).powf(p - 1.0));
                        dm + du * t[n]
                    })
                    .collect()
            })
            .collect();
        let at_pin = apply_helmholtz(&st.bundle.translation_modes[st.perm[pin]]);
        cols.push(at_pin.data().to_vec());
        let rows: Vec<Vec<f64>> = st
            .perm
            .iter()
            .map(|&b| {
                let at = apply_helmholtz(&st.bundle.translation_modes[b]);
                at.data()
                    .iter()
                    .enumerate()
                    .map(|(n, v)| v * grid.weight(n % grid.nodes_xp))
                    .collect()
            })
            .collect();
        let mut corner = DMatrix::zeros(k, k);
        for (col, &j) in free.iter().enumerate() {
            corner[(j, col)] = h1_product(&w, &deriv.d_mode[st.perm[j]]);
        }
        let mut f = st.r.clone();
        f.axpy(mu, &at_pin);
        let f: Vec<f64> = f.data().iter().map(|x| -x).collect();
        let g: Vec<f64> = st.g.iter().map(|x| -x).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            let r = op.apply(&GridField::from_vec(*grid, x.to_vec()).expect("len"));
            y.copy_from_slice(r.data());
        };
        let solve = |b: &mut [f64]| {
            let x = factor.solve(b);
            b.copy_from_slice(&x);
        };
        let sys = Bordered {
            apply: &apply,
            solve: &solve,
            cols: &cols,
            rows: &rows,
            corner,
        };
        let (dw, dz, _) = sys.solve(&f, &g, 4)?;
        let dw = GridField::from_vec(*grid, dw)?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut tp = pos.clone();
            for (col, &j) in free.iter().enumerate() {
                tp[j] += lambda * dz[col];
            }
            let mut tw = w.clone();
            tw.axpy(lambda, &dw);
            let tmu = mu + lambda * dz[free.len()];
            if let Ok(ts) = evaluate(eps, &tp, &tw, tmu, pin, &profile, grid) {
                if ts.merit < (1.0 - 1e-4 * lambda) * st.merit {
                    accepted = Some((tp, tw, tmu, ts));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((tp, tw, tmu, ts)) = accepted else {
            if st.merit <= opts.tol {
                // roundoff floor reached before the relative target
                break;
            }
            return Err(Error::Divergence {
                what: "newton",
                detail: format!("left the basin at iteration {iter}: no decrease after damping"),
            });
        };
        pos = tp;
        w = tw;
        mu = tmu;
        st = ts;
        history.push(NewtonStep {
            iteration: iter,
            residual: st.r.l2_norm(),
            constraint: st.g.iter().fold(0.0f64, |a, x| a.max(x.abs())),
            multiplier: mu,
            damping: lambda,
        });
    }
    let res = st.r.l2_norm();
    if res > opts.tol {
        return Err(Error::NotConverged {
            what: "newton (pin multiplier nonzero)",
            iterations: iter,
            residual: res,
        });
    }
    let field = st.bundle.ubar.add(&w);
    let pinned_location = st.bundle.config.positions()[st.perm[pin]];
    let psi = psi_field(&field, &profile, eps, k, pinned_location)?;
    let quadratic_ratio = history
        .windows(2)
        .filter(|h| h[0].residual < 1e-3 && h[1].residual > 0.0)
        .map(|h| h[1].residual / (h[0].residual * h[0].residual))
        .reduce(f64::max);
    Ok(DancerSolution {
        min_value: field.min(),
        correction_sup: w.sup_norm(),
        psi,
        field,
        epsilon: eps,
        k,
        exponent: p,
        pin,
        pinned_location,
        config: st.bundle.config,
        residual: res,
        newton_history: history,
        quadratic_ratio,
    })
}

/// Uniform lattice `{c + lP/k}` through the pinned peak.
pub fn lattice_through(epsilon: f64, k: usize, c: f64) -> Result<PeakConfiguration> {
    PeakConfiguration::uniform_from(epsilon, k, c * epsilon)
}

/// `ψ = u − Σ_l U(x₁ − c − 2πl/(kε), x′)`.
pub fn psi_field(
    field: &GridField,
    profile: &Arc<GroundStateProfile>,
    epsilon: f64,
    k: usize,
    c: f64,
) -> Result<GridField> {
    let lattice = lattice_through(epsilon, k, c)?;
    let b = build_ansatz(&lattice, profile.clone(), field.grid())?;
    Ok(field.sub(&b.ubar))
}

/// `sup |u − u(2c − x₁, x′)|`.
pub fn reflection_defect(field: &GridField, axis: f64) -> f64 {
    field.reflect_x1(axis).sub(field).sup_norm()
}

#[derive(Clone, Debug, Serialize)]
pub struct EvennessReport {
    pub axis: f64,
    pub sup_difference: f64,
    pub threshold: f64,
    pub passes: bool,
}

/// Reflection about the pinned peak; passes below `10·tol`.
pub fn verify_evenness(sol: &DancerSolution, tol: f64) -> EvennessReport {
    let d = reflection_defect(&sol.field, sol.pinned_location);
    EvennessReport {
        axis: sol.pinned_location,
        sup_difference: d,
        threshold: 10.0 * tol,
        passes: d < 10.0 * tol,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimalPeriodReport {
    pub period_defect: f64,
    pub half_period_defect: f64,
    pub amplitude: f64,
    pub passes: bool,
}

/// Compares `u` with its shifts by `2π/(kε)` and `π/(kε)`.
pub fn minimal_period(sol: &DancerSolution, tol: f64) -> Result<MinimalPeriodReport> {
    let g = sol.field.grid();
    let k = sol.k;
    if !g.nodes_x1.is_multiple_of(2 * k) {
        return Err(Error::param("nodes_x1", format!("multiple of 2k = {}", 2 * k)));
    }
    let step = (g.nodes_x1 / k) as isize;
    let period_defect = sol.field.shift_x1(step).sub(&sol.field).sup_norm();
    let half_period_defect = sol.field.shift_x1(step / 2).sub(&sol.field).sup_norm();
    let amplitude = sol.field.sup_norm();
    Ok(MinimalPeriodReport {
        period_defect,
        half_period_defect,
        amplitude,
        passes: period_defect < 10.0 * tol && half_period_defect > 0.5 * amplitude,
    })
}

/// Best node shift `s` minimizing `sup |a(· − s) − b|`; returns `(s, sup difference)`.
pub fn align_x1(a: &GridField, b: &GridField) -> Result<(isize, f64)> {
    a.check_same_grid(b)?;
    let n1 = a.grid().nodes_x1 as isize;
    Ok((0..n1)
        .map(|s| (s, a.shift_x1(s).sub(b).sup_norm()))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("nonempty grid"))
}

#[derive(Clone, Debug, Serialize)]
pub struct PsiPoint {
    pub epsilon: f64,
    pub half_spacing: f64,
    pub weighted_sup: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PsiDecayFit {
    pub eta: f64,
    pub eta_prime: f64,
    pub points: Vec<PsiPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub predicted_slope: f64,
    pub monotone: bool,
}

/// Least-squares fit of `log W(ε)` against `π/(kε)`, `W = sup |ψ| e^{η d_x}`.
pub fn psi_decay_fit(solutions: &[DancerSolution], eta: f64, eta_prime: f64) -> Result<PsiDecayFit> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::param("eta", "0 < η < 1"));
    }
    if solutions.len() < 2 {
        return Err(Error::param("solutions", "at least two runs"));
    }
    let p = solutions[0].exponent;
    if !(eta_prime < 1.0 && eta_prime < p - 1.0 - eta) {
        return Err(Error::param("eta_prime", "η′ < min(1, p − 1 − η)"));
    }
    let mut points = Vec::with_capacity(solutions.len());
    for s in solutions {
        let lattice = lattice_through(s.epsilon, s.k, s.pinned_location)?;
        let dist = distance_to_peaks(s.psi.grid(), &lattice);
        points.push(PsiPoint {
            epsilon: s.epsilon,
            half_spacing: std::f64::consts::PI / (s.k as f64 * s.epsilon),
            weighted_sup: weighted_sup(&s.psi, &dist, eta),
        });
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|q| q.half_spacing).collect();
    let ys: Vec<f64> = points.iter().map(|q| q.weighted_sup.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let monotone = order.windows(2).all(|w| ys[w[1]] < ys[w[0]]);
    Ok(PsiDecayFit {
        eta,
        eta_prime,
        slope,
        intercept: my - slope * mx,
        predicted_slope: -2.0 * eta_prime,
        monotone,
        points,
    })
}
