//! Lyapunov–Schmidt step: orthogonal correction, projection coefficients,
//! and the root-find on peak positions.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::ansatz::{build_ansatz, interaction_scale, residual, AnsatzBundle, PeakConfiguration};
use crate::domain::{apply_helmholtz, h1_product, l2_product, GridFactor, GridField, StripGrid};
use crate::error::{Error, Result};
use crate::linalg::Bordered;
use crate::num::pow_increment;
use crate::spectrum::{assemble_linearized, near_kernel, LinearizedOperator, NearKernelBasis};
use crate::GroundStateProfile;

/// `(h⊥, d)` with `d_i = ⟨h, φ_i⟩_{L²}/‖φ_i‖²_{H¹}` and `h⊥ = h − Σ d_i (−Δ+1)φ_i`.
pub fn split_projection(h: &GridField, basis: &NearKernelBasis) -> (GridField, Vec<f64>) {
    let mut perp = h.clone();
    let mut d = Vec::with_capacity(basis.len());
    for phi in &basis.phis {
        let di = l2_product(h, phi) / h1_product(phi, phi);
        perp.axpy(-di, &apply_helmholtz(phi));
        d.push(di);
    }
    (perp, d)
}

/// Solves `𝕃ξ + Σ μ_i (−Δ+1)φ_i = f`, `⟨ξ, φ_i⟩_{H¹} = 0`.
pub struct ConstrainedSolver {
    op: LinearizedOperator,
    factor: GridFactor,
    cols: Vec<Vec<f64>>,
    rows: Vec<Vec<f64>>,
}

impl ConstrainedSolver {
    pub fn new(op: LinearizedOperator, basis: &NearKernelBasis) -> Result<Self> {
        let factor = op.factor_shifted(0.0, false)?;
        let g = *op.grid();
        let cols: Vec<Vec<f64>> = basis.phis.iter().map(|p| apply_helmholtz(p).into_vec()).collect();
        let rows = cols
            .iter()
            .map(|c| c.iter().enumerate().map(|(n, v)| v * g.weight(n % g.nodes_xp)).collect())
            .collect();
        Ok(Self { op, factor, cols, rows })
    }

    pub fn operator(&self) -> &LinearizedOperator {
        &self.op
    }

    /// Returns `(ξ, μ, relative residual of the bordered system)`.
    pub fn solve(&self, f: &GridField) -> Result<(GridField, Vec<f64>, f64)> {
        let g = *self.op.grid();
        let apply = |x: &[f64], y: &mut [f64]| {
            let r = self.op.apply(&GridField::from_vec(g, x.to_vec()).expect("len"));
            y.copy_from_slice(r.data());
        };
        let solve = |b: &mut [f64]| {
            let x = self.factor.solve(b);
            b.copy_from_slice(&x);
        };
        let m = self.cols.len();
        let sys = Bordered {
            apply: &apply,
            solve: &solve,
            cols: &self.cols,
            rows: &self.rows,
            corner: DMatrix::zeros(m, m),
        };
        let (x, mu, rel) = sys.solve(f.data(), &vec![0.0; m], 4)?;
        Ok((GridField::from_vec(g, x)?, mu, rel))
    }
}

/// `N(v) = (ū+v)₊^p − ū^p − p ū^{p−1} v`.
pub fn nonlinear_remainder(ubar: &GridField, v: &GridField, p: f64) -> GridField {
    ubar.zip_map(v, |u, w| {
        if u > 0.0 {
            pow_increment(u, w, p) - p * u.powf(p - 1.0) * w
        } else {
            (u + w).max(0.0).powf(p)
        }
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionState {
    #[serde(skip)]
    pub bundle: AnsatzBundle,
    #[serde(skip)]
    pub basis: NearKernelBasis,
    #[serde(skip)]
    pub correction: GridField,
    pub delta: Vec<f64>,
    pub d_coeffs: Vec<f64>,
    pub sup_norm: f64,
    pub h1_norm: f64,
    pub iterations: usize,
    pub increments: Vec<f64>,
    pub linear_residual: f64,
    pub max_orthogonality: f64,
}

/// Fixed point `𝕃v_{n+1} = h(v_n)⊥`, `⟨v_{n+1}, φ_i⟩_{H¹} = 0`, with
/// `h(v) = −M(ū) + N(v)`. Stops when `‖v_{n+1} − v_n‖_∞ ≤ tol·‖v_{n+1}‖_∞`.
pub fn solve_correction(bundle: &AnsatzBundle, basis: &NearKernelBasis, tol: f64) -> Result<ReductionState> {
    if basis.len() != bundle.config.k {
        return Err(Error::NearKernel {
            expected: bundle.config.k,
            found: basis.len(),
            eigenvalues: basis.eigenvalues.clone(),
        });
    }
    let p = bundle.exponent();
    let solver = ConstrainedSolver::new(assemble_linearized(bundle)?, basis)?;
    let minus_m = residual(bundle).scaled(-1.0);
    let h_of = |v: &GridField| {
        let mut h = minus_m.clone();
        h.axpy(1.0, &nonlinear_remainder(&bundle.ubar, v, p));
        h
    };
    let max_iter = 100;
    let mut v = GridField::zeros(*bundle.grid());
    let mut increments = Vec::new();
    let mut growing = 0;
    let mut linear_residual = 0.0;
    let mut converged = false;
    for _ in 0..max_iter {
        let (perp, _) = split_projection(&h_of(&v), basis);
        let (next, _, rel) = solver.solve(&perp)?;
        linear_residual = rel;
        let inc = next.sub(&v).sup_norm();
        let scale = next.sup_norm();
        if increments.last().is_some_and(|&last| inc > last) {
            growing += 1;
            if growing >= 3 {
                return Err(Error::Divergence {
                    what: "correction fixed point",
                    detail: format!(
                        "increment grew three times in a row (σ̲ = {:.3} too small for contraction)",
                        bundle.config.sigma_min
                    ),
                });
            }
        } else {
            growing = 0;
        }
        increments.push(inc);
        v = next;
        if inc <= tol * scale || scale == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            what: "correction fixed point",
            iterations: max_iter,
            residual: *increments.last().unwrap_or(&f64::NAN),
        });
    }
    let (_, d) = split_projection(&h_of(&v), basis);
    let vh1 = v.h1_norm();
    let max_orthogonality = basis
        .phis
        .iter()
        .map(|phi| h1_product(&v, phi).abs())
        .fold(0.0, f64::max);
    Ok(ReductionState {
        bundle: bundle.clone(),
        basis: basis.clone(),
        delta: vec![0.0; basis.len()],
        d_coeffs: d,
        sup_norm: v.sup_norm(),
        h1_norm: vh1,
        iterations: increments.len(),
        increments,
        linear_residual,
        max_orthogonality,
        correction: v,
    })
}

/// Leading-order interaction: `α_i (p/‖φ_i‖²) ∫_{Ω_i} U_i^{p−1} Σ_{j≠i} v_j ∂₁U_i`.
///
/// `U_i` is the image of peak `i` nearest to each node of its cell.
pub fn interaction_d(bundle: &AnsatzBundle, basis: &NearKernelBasis, i: usize) -> Result<f64> {
    let k = bundle.config.k;
    if k < 2 {
        return Err(Error::param("k", "interaction formula needs k ≥ 2"));
    }
    if i >= k {
        return Err(Error::param("i", format!("peak index < {k}")));
    }
    let g = bundle.grid();
    let p = bundle.exponent();
    let c = bundle.config.positions()[i];
    let prof = &bundle.profile;
    let mut sum = 0.0;
    for n in 0..g.len() {
        if bundle.cell_labels[n] != i {
            continue;
        }
        let (i1, j) = g.coords(n);
        let dx = g.wrap(g.x1(i1) - c);
        let x2 = g.x2(j);
        let r = dx.hypot(x2);
        if r == 0.0 {
            continue;
        }
        let u = prof.value(r);
        let d1 = prof.derivative(r) * dx / r;
        let others = bundle.ubar.data()[n] - bundle.peak_fields[i].data()[n];
        sum += g.weight(j) * u.powf(p - 1.0) * others * d1;
    }
    let phi = &basis.phis[i];
    Ok(basis.alphas[i] * p * sum / h1_product(phi, phi))
}

/// Numerical settings shared by the reduction pipeline.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReductionOptions {
    pub transverse_extent: f64,
    pub mesh: f64,
    pub eigen_tol: f64,
    pub fixed_point_tol: f64,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        Self {
            transverse_extent: 14.0,
            mesh: 0.25,
            eigen_tol: 1e-9,
            fixed_point_tol: 1e-10,
        }
    }
}

impl ReductionOptions {
    pub fn grid(&self, epsilon: f64, k: usize) -> Result<StripGrid> {
        StripGrid::with_spacing(epsilon, self.transverse_extent, self.mesh, k)
    }
}

/// Ansatz, near-kernel basis and correction for one configuration.
pub fn reduce(
    config: &PeakConfiguration,
    profile: Arc<GroundStateProfile>,
    grid: &StripGrid,
    opts: &ReductionOptions,
) -> Result<ReductionState> {
    let bundle = build_ansatz(config, profile, grid)?;
    let (_, basis) = near_kernel(&bundle, opts.eigen_tol)?;
    solve_correction(&bundle, &basis, opts.fixed_point_tol)
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibrateOptions {
    /// Convergence when `max|d_i| ≤ tol · e^{−2σ̲}σ̲^{(1−N)/2}`.
    pub tol: f64,
    pub max_steps: usize,
    /// Forward-difference step (x₁ units) for the Jacobian.
    pub fd_step: f64,
    pub reduction: ReductionOptions,
}

impl Default for EquilibrateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_steps: 30,
            fd_step: 1e-2,
            reduction: ReductionOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibrateTrace {
    pub step: usize,
    pub positions: Vec<f64>,
    pub d: Vec<f64>,
    pub damping: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Equilibration {
    pub config: PeakConfiguration,
    pub steps: usize,
    pub final_d: Vec<f64>,
    pub threshold: f64,
    pub trace: Vec<EquilibrateTrace>,
}

/// Damped Gauss–Newton on `positions ↦ d`, first peak pinned.
///
/// Work is done in the frame where the pinned peak sits at `x₁ = −π/ε`
/// (a grid node); the result is translated back.
pub fn equilibrate(
    initial: &PeakConfiguration,
    profile: Arc<GroundStateProfile>,
    opts: &EquilibrateOptions,
) -> Result<Equilibration> {
    let k = initial.k;
    if k < 2 {
        return Err(Error::param("k", "equilibrate needs k ≥ 2"));
    }
    let eps = initial.epsilon;
    let period = initial.period();
    let grid = opts.reduction.grid(eps, k)?;
    let c0 = initial.positions();
    let origin = -period / 2.0;
    let offsets: Vec<f64> = c0.iter().map(|c| c - c0[0]).collect();
    let config_of = |u: &[f64]| -> Result<PeakConfiguration> {
        let pos: Vec<f64> = u.iter().map(|x| origin + x).collect();
        PeakConfiguration::new(eps, pos.iter().map(|x| x * eps).collect())
    };
    let eval = |u: &[f64]| -> Result<(Vec<f64>, f64)> {
        let cfg = config_of(u)?;
        let st = reduce(&cfg, profile.clone(), &grid, &opts.reduction)?;
        Ok((st.d_coeffs, interaction_scale(cfg.sigma_min, 2)))
    };
    let admissible = |u: &[f64]| -> bool {
        u.windows(2).all(|w| w[1] - w[0] > 2.0) && period - u[k - 1] > 2.0 && u[0] == 0.0
    };
    let norm = |d: &[f64]| d.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut u = offsets;
    let (mut d, mut scale) = eval(&u)?;
    let mut trace = vec![EquilibrateTrace {
        step: 0,
        positions: u.clone(),
        d: d.clone(),
        damping: 0.0,
    }];
    let mut steps = 0;
    loop {
        let worst = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if worst <= opts.tol * scale {
            break;
        }
        if steps >= opts.max_steps {
            return Err(Error::NotConverged {
                what: "equilibrate",
                iterations: steps,
                residual: worst / scale,
            });
        }
        let mut jac = DMatrix::<f64>::zeros(k, k - 1);
        for m in 1..k {
            let mut up = u.clone();
            up[m] += opts.fd_step;
            let (dp, _) = eval(&up)?;
            for i in 0..k {
                jac[(i, m - 1)] = (dp[i] - d[i]) / opts.fd_step;
            }
        }
        let svd = jac.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-12 * smax {
            return Err(Error::Singular(k));
        }
        let rhs = DVector::from_vec(d.iter().map(|x| -x).collect());
        let step = svd.solve(&rhs, 0.0).map_err(|e| Error::Assertion(e.to_string()))?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let mut trial = u.clone();
            for m in 1..k {
                trial[m] += lambda * step[m - 1];
            }
            if admissible(&trial) {
                let (dt, st) = eval(&trial)?;
                if norm(&dt) < norm(&d) {
                    accepted = Some((trial, dt, st));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((nu, nd, ns)) = accepted else {
            return Err(Error::Divergence {
                what: "equilibrate line search",
                detail: format!("no decrease of |d| along the Newton direction after step {steps}"),
            });
        };
        steps += 1;
        u = nu;
        d = nd;
        scale = ns;
        trace.push(EquilibrateTrace {
            step: steps,
            positions: u.clone(),
            d: d.clone(),
            damping: lambda,
        });
    }
    let final_positions: Vec<f64> = u.iter().map(|x| c0[0] + x).collect();
    let config = PeakConfiguration::from_positions(eps, &final_positions)?;
    for t in trace.iter_mut() {
        t.positions.iter_mut().for_each(|x| *x += c0[0]);
    }
    Ok(Equilibration {
        config,
        steps,
        final_d: d,
        threshold: opts.tol * scale,
        trace,
    })
}
