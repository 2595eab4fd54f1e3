//! Exponentially weighted sup norms and the orthogonal linear solve.

use rayon::prelude::*;
use serde::Serialize;

use crate::ansatz::{AnsatzBundle, PeakConfiguration};
use crate::domain::{h1_product, GridField, StripGrid};
use crate::error::{Error, Result};
use crate::reduction::{split_projection, ConstrainedSolver};
use crate::spectrum::{assemble_linearized, NearKernelBasis};

pub const DEFAULT_ETAS: [f64; 3] = [0.3, 0.5, 0.7];

/// Distance from every node to the peak set `{a⁰/ε, …, a^{k+1}/ε} × {0}`.
pub fn distance_to_peaks(grid: &StripGrid, config: &PeakConfiguration) -> Vec<f64> {
    let (g0, g1) = config.ghost_angles();
    let mut centers = config.positions();
    centers.push(g0 / config.epsilon);
    centers.push(g1 / config.epsilon);
    (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let (i, j) = grid.coords(n);
            let (x1, x2) = (grid.x1(i), grid.x2(j));
            centers
                .iter()
                .map(|c| (x1 - c).hypot(x2))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedReport {
    pub eta: f64,
    pub input_weighted_norm: f64,
    pub output_weighted_norm: f64,
    pub ratio: f64,
}

/// `sup |f| e^{η d_x}`.
pub fn weighted_sup(field: &GridField, dist: &[f64], eta: f64) -> f64 {
    field
        .data()
        .par_iter()
        .zip(dist.par_iter())
        .map(|(v, d)| v.abs() * (eta * d).exp())
        .reduce(|| 0.0, f64::max)
}

/// `sup (|f| + |∇f|) e^{η d_x}`.
pub fn weighted_sup_with_gradient(field: &GridField, dist: &[f64], eta: f64) -> f64 {
    let grad = field.gradient_norm();
    field
        .data()
        .par_iter()
        .zip(grad.data().par_iter())
        .zip(dist.par_iter())
        .map(|((v, g), d)| (v.abs() + g) * (eta * d).exp())
        .reduce(|| 0.0, f64::max)
}

/// Weighted norms of an input `h` and a response `ξ` on the same grid.
pub fn weighted_norms(
    input: &GridField,
    output: &GridField,
    config: &PeakConfiguration,
    eta: f64,
) -> Result<WeightedReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::param("eta", "0 < η < 1"));
    }
    input.check_same_grid(output)?;
    let dist = distance_to_peaks(input.grid(), config);
    let a = weighted_sup(input, &dist, eta);
    let b = weighted_sup_with_gradient(output, &dist, eta);
    let ratio = if a > 0.0 { b / a } else { 0.0 };
    Ok(WeightedReport {
        eta,
        input_weighted_norm: a,
        output_weighted_norm: b,
        ratio,
    })
}

/// Solves `𝕃ξ = h⊥`, `⟨ξ, φ_i⟩_{H¹} = 0`, after removing the near-kernel part of `h`.
pub fn solve_orthogonal(bundle: &AnsatzBundle, h: &GridField, basis: &NearKernelBasis, tol: f64) -> Result<GridField> {
    let solver = ConstrainedSolver::new(assemble_linearized(bundle)?, basis)?;
    solve_orthogonal_with(&solver, h, basis, tol)
}

/// As [`solve_orthogonal`] with a prebuilt solver.
pub fn solve_orthogonal_with(
    solver: &ConstrainedSolver,
    h: &GridField,
    basis: &NearKernelBasis,
    tol: f64,
) -> Result<GridField> {
    let (perp, _) = split_projection(h, basis);
    let (xi, _, rel) = solver.solve(&perp)?;
    let xh = xi.h1_norm();
    let worst = basis
        .phis
        .iter()
        .map(|phi| h1_product(&xi, phi).abs() / (xh * phi.h1_norm()).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    if rel > tol || worst > 1e-10 {
        return Err(Error::NotConverged {
            what: "orthogonal solve",
            iterations: 4,
            residual: rel.max(worst),
        });
    }
    Ok(xi)
}
