//! Weighted eigenproblem `𝕃ξ = λ(−Δ+1)ξ` for `𝕃 = −Δ + 1 − p ū^{p−1}`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ansatz::AnsatzBundle;
use crate::domain::{apply_helmholtz, apply_with_potential, h1_product, GridFactor, GridField, StripGrid};
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Eigenvalues with `|λ| <` this belong to the near-kernel.
pub const GAP_THRESHOLD: f64 = 0.1;

/// `𝕃 = A + diag(q)` with `q = −p u₊^{p−1}`.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    grid: StripGrid,
    potential: Vec<f64>,
}

impl LinearizedOperator {
    pub fn from_field(u: &GridField, p: f64) -> Self {
        Self {
            grid: *u.grid(),
            potential: u.data().iter().map(|v| -p * v.max(0.0).powf(p - 1.0)).collect(),
        }
    }

    pub fn apply(&self, f: &GridField) -> GridField {
        apply_with_potential(f, Some(&self.potential))
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    /// Factorization of `𝕃 − s(−Δ+1)`; Cholesky when `s` is below the spectrum.
    pub fn factor_shifted(&self, s: f64, definite: bool) -> Result<GridFactor> {
        if definite {
            GridFactor::cholesky(&self.grid, 1.0 - s, &self.potential)
        } else {
            GridFactor::lu(&self.grid, 1.0 - s, &self.potential)
        }
    }
}

pub fn assemble_linearized(bundle: &AnsatzBundle) -> Result<LinearizedOperator> {
    if bundle.ubar.min() < -1e-14 {
        return Err(Error::Assertion("ansatz has negative entries".into()));
    }
    Ok(LinearizedOperator::from_field(&bundle.ubar, bundle.exponent()))
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: Vec<GridField>,
    pub residuals: Vec<f64>,
    pub near_kernel_count: usize,
    pub overlap_matrix: Vec<Vec<f64>>,
    pub shift: f64,
    pub restarts: usize,
}

#[derive(Clone, Copy)]
enum Target {
    Lowest,
    Nearest(f64),
}

/// The `count` smallest eigenpairs; the shift starts at `−(p−1) − 0.5` and
/// moves down until the shifted operator is positive definite.
pub fn lowest_eigenpairs(op: &LinearizedOperator, p: f64, count: usize, tol: f64) -> Result<SpectralResult> {
    let mut s = -(p - 1.0) - 0.5;
    let factor = loop {
        match op.factor_shifted(s, true) {
            Ok(f) => break f,
            Err(Error::NotPositiveDefinite(_)) if s > -1e3 => s -= 0.5 + s.abs(),
            Err(e) => return Err(e),
        }
    };
    krylov(op, &factor, s, Target::Lowest, count, tol)
}

/// The `count` eigenpairs nearest `shift`, returned in ascending order.
pub fn eigenpairs_near(op: &LinearizedOperator, shift: f64, count: usize, tol: f64) -> Result<SpectralResult> {
    let factor = op.factor_shifted(shift, false)?;
    krylov(op, &factor, shift, Target::Nearest(shift), count, tol)
}

fn krylov(
    op: &LinearizedOperator,
    factor: &GridFactor,
    shift: f64,
    target: Target,
    count: usize,
    tol: f64,
) -> Result<SpectralResult> {
    let g = op.grid;
    let n = g.len();
    if count == 0 || count > n / 2 {
        return Err(Error::param("count", "1 ≤ count ≤ n/2"));
    }
    let block = count + 2;
    let depth = 8;
    let max_restarts = 40;
    let wts: Vec<f64> = (0..n).map(|m| g.weight(m % g.nodes_xp)).collect();
    let field = |v: &[f64]| GridField::from_vec(g, v.to_vec()).expect("grid length");
    let weighted = |f: GridField| -> Vec<f64> { f.into_vec().into_iter().zip(&wts).map(|(a, w)| a * w).collect() };
    let apply_b = |v: &[f64]| weighted(apply_helmholtz(&field(v)));
    let apply_k = |v: &[f64]| weighted(op.apply(&field(v)));

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_ba5e);
    let mut starts: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect())
        .collect();
    let mut worst = f64::INFINITY;
    for restart in 0..max_restarts {
        let mut vs: Vec<Vec<f64>> = Vec::new();
        let mut bvs: Vec<Vec<f64>> = Vec::new();
        let push = |x: Vec<f64>, vs: &mut Vec<Vec<f64>>, bvs: &mut Vec<Vec<f64>>| -> bool {
            let mut x = x;
            let n0 = dot(&x, &apply_b(&x)).max(0.0).sqrt();
            if n0 == 0.0 {
                return false;
            }
            for _ in 0..2 {
                for (v, bv) in vs.iter().zip(bvs.iter()) {
                    let c = dot(&x, bv);
                    x.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
                }
            }
            let bx = apply_b(&x);
            let nrm = dot(&x, &bx).max(0.0).sqrt();
            if nrm <= 1e-10 * n0 {
                return false;
            }
            vs.push(x.into_iter().map(|a| a / nrm).collect());
            bvs.push(bx.into_iter().map(|a| a / nrm).collect());
            true
        };
        let mut last: Vec<usize> = Vec::new();
        for x in starts.drain(..) {
            if push(x, &mut vs, &mut bvs) {
                last.push(vs.len() - 1);
            }
        }
        for _ in 1..depth {
            let mut next = Vec::new();
            for &i in &last {
                let y = factor.solve(&apply_helmholtz(&field(&vs[i])).into_vec());
                if push(y, &mut vs, &mut bvs) {
                    next.push(vs.len() - 1);
                }
            }
            if next.is_empty() {
                break;
            }
            last = next;
        }
        let m = vs.len();
        let kvs: Vec<Vec<f64>> = vs.iter().map(|v| apply_k(v)).collect();
        let mut h = DMatrix::<f64>::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let x = 0.5 * (dot(&vs[a], &kvs[b]) + dot(&vs[b], &kvs[a]));
                h[(a, b)] = x;
                h[(b, a)] = x;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        match target {
            Target::Lowest => order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])),
            Target::Nearest(s) => order.sort_by(|&a, &b| {
                (eig.eigenvalues[a] - s).abs().total_cmp(&(eig.eigenvalues[b] - s).abs())
            }),
        }
        let take = block.min(m);
        let combine = |basis: &[Vec<f64>], col: usize| -> Vec<f64> {
            let mut y = vec![0.0; n];
            for (a, v) in basis.iter().enumerate() {
                let c = eig.eigenvectors[(a, col)];
                y.iter_mut().zip(v).for_each(|(t, s)| *t += c * s);
            }
            y
        };
        let mut pairs = Vec::with_capacity(take);
        for &col in order.iter().take(take) {
            let lam = eig.eigenvalues[col];
            let y = combine(&vs, col);
            let ky = combine(&kvs, col);
            let by = combine(&bvs, col);
            // unweighted residual 𝕃y − λAy in the quadrature L² norm
            let res = ky
                .iter()
                .zip(&by)
                .zip(&wts)
                .map(|((a, b), w)| (a - lam * b).powi(2) / w)
                .sum::<f64>()
                .sqrt();
            pairs.push((lam, y, res));
        }
        worst = pairs.iter().take(count).map(|p| p.2).fold(0.0, f64::max);
        if worst < tol || m < block {
            let mut sel: Vec<(f64, Vec<f64>, f64)> = pairs.into_iter().take(count).collect();
            sel.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut eigenvalues = Vec::with_capacity(count);
            let mut eigenvectors = Vec::with_capacity(count);
            let mut residuals = Vec::with_capacity(count);
            for (lam, mut y, res) in sel {
                let imax = (0..n).max_by(|&a, &b| y[a].abs().total_cmp(&y[b].abs())).unwrap_or(0);
                if y[imax] < 0.0 {
                    y.iter_mut().for_each(|v| *v = -*v);
                }
                eigenvalues.push(lam);
                eigenvectors.push(field(&y));
                residuals.push(res);
            }
            if worst >= tol {
                break;
            }
            let near_kernel_count = eigenvalues.iter().filter(|l| l.abs() < GAP_THRESHOLD).count();
            return Ok(SpectralResult {
                eigenvalues,
                eigenvectors,
                residuals,
                near_kernel_count,
                overlap_matrix: Vec::new(),
                shift,
                restarts: restart,
            });
        }
        starts = pairs.into_iter().map(|p| p.1).collect();
    }
    Err(Error::NotConverged {
        what: "shift-invert block Krylov eigensolver",
        iterations: max_restarts,
        residual: worst,
    })
}

impl SpectralResult {
    /// Fills `overlap_matrix[a][i] = ⟨ξ_a, t_i/‖t_i‖⟩_{H¹}`.
    pub fn attach_overlaps(&mut self, modes: &[GridField]) {
        self.overlap_matrix = self
            .eigenvectors
            .iter()
            .map(|x| {
                modes
                    .iter()
                    .map(|t| h1_product(x, t) / h1_product(t, t).sqrt())
                    .collect()
            })
            .collect();
    }

    /// Eigenvectors with `|λ| < GAP_THRESHOLD`.
    pub fn near_kernel(&self) -> (Vec<f64>, Vec<GridField>) {
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .filter(|(l, _)| l.abs() < GAP_THRESHOLD)
            .map(|(l, v)| (*l, v.clone()))
            .unzip()
    }
}

/// H¹-orthonormal basis of the span of `fields` (modified Gram–Schmidt, twice).
pub fn h1_orthonormalize(fields: &[GridField]) -> Vec<GridField> {
    let mut out: Vec<GridField> = Vec::new();
    for f in fields {
        let mut x = f.clone();
        for _ in 0..2 {
            for q in &out {
                let c = h1_product(&x, q);
                x.axpy(-c, q);
            }
        }
        let nrm = h1_product(&x, &x).sqrt();
        if nrm > 0.0 {
            out.push(x.scaled(1.0 / nrm));
        }
    }
    out
}

/// Principal angles (radians, ascending) between two spans in the H¹ geometry.
pub fn principal_angles(a: &[GridField], b: &[GridField]) -> Vec<f64> {
    let qa = h1_orthonormalize(a);
    let qb = h1_orthonormalize(b);
    let m = DMatrix::from_fn(qa.len(), qb.len(), |i, j| h1_product(&qa[i], &qb[j]));
    let mut ang: Vec<f64> = m
        .svd(false, false)
        .singular_values
        .iter()
        .map(|s| s.clamp(-1.0, 1.0).acos())
        .collect();
    ang.sort_by(f64::total_cmp);
    ang
}

/// Near-kernel vectors rotated onto the translation modes.
#[derive(Clone, Debug)]
pub struct NearKernelBasis {
    pub phis: Vec<GridField>,
    pub alphas: Vec<f64>,
    pub alignment_residuals: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// `⟨𝕃φ_i, φ_i⟩_{L²}` of the rotated vectors.
    pub rayleigh: Vec<f64>,
}

impl NearKernelBasis {
    pub fn len(&self) -> usize {
        self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phis.is_empty()
    }
}

/// Orthogonal Procrustes rotation of the near-kernel onto `{∂v_i/∂x₁}`.
pub fn near_kernel_basis(result: &SpectralResult, bundle: &AnsatzBundle) -> Result<NearKernelBasis> {
    let k = bundle.config.k;
    let (lams, vecs) = result.near_kernel();
    if vecs.len() != k {
        return Err(Error::NearKernel {
            expected: k,
            found: vecs.len(),
            eigenvalues: result.eigenvalues.clone(),
        });
    }
    let modes = &bundle.translation_modes;
    let norms: Vec<f64> = modes.iter().map(|t| h1_product(t, t).sqrt()).collect();
    let o = DMatrix::from_fn(k, k, |a, i| h1_product(&vecs[a], &modes[i]) / norms[i]);
    let svd = o.svd(true, true);
    let q = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    let op = assemble_linearized(bundle)?;
    let mut phis = Vec::with_capacity(k);
    let mut alphas = Vec::with_capacity(k);
    let mut resid = Vec::with_capacity(k);
    let mut rayleigh = Vec::with_capacity(k);
    for i in 0..k {
        let mut phi = GridField::zeros(*bundle.grid());
        for (a, v) in vecs.iter().enumerate() {
            phi.axpy(q[(a, i)], v);
        }
        let alpha = h1_product(&phi, &modes[i]) / (norms[i] * norms[i]);
        let mut d = phi.clone();
        d.axpy(-alpha, &modes[i]);
        resid.push(h1_product(&d, &d).max(0.0).sqrt());
        rayleigh.push(crate::domain::l2_product(&op.apply(&phi), &phi));
        alphas.push(alpha);
        phis.push(phi);
    }
    Ok(NearKernelBasis {
        phis,
        alphas,
        alignment_residuals: resid,
        eigenvalues: lams,
        rayleigh,
    })
}

/// Near-kernel eigenpairs (shift −0.02) and their aligned basis.
pub fn near_kernel(bundle: &AnsatzBundle, tol: f64) -> Result<(SpectralResult, NearKernelBasis)> {
    let op = assemble_linearized(bundle)?;
    let mut res = eigenpairs_near(&op, -0.02, bundle.config.k + 2, tol)?;
    res.attach_overlaps(&bundle.translation_modes);
    let basis = near_kernel_basis(&res, bundle)?;
    Ok((res, basis))
}
