//! Linear algebra kernels: banded factorizations, bordered systems, PCG.

mod banded;

pub use banded::{BandCholesky, BandFactor, BandLu, BandMatrix, SymBandMatrix};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::num::Real;

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y)
}

/// Bordered system
///
/// ```text
/// [ J  B ] [x]   [f]
/// [ C  D ] [z] = [g]
/// ```
///
/// with `J` n×n (given by `apply` and an approximate inverse `solve`),
/// `B` n×m columns, `C` m×n rows and `D` m×m.
pub struct Bordered<'a> {
    pub apply: &'a dyn Fn(&[f64], &mut [f64]),
    pub solve: &'a dyn Fn(&mut [f64]),
    pub cols: &'a [Vec<f64>],
    pub rows: &'a [Vec<f64>],
    pub corner: DMatrix<f64>,
}

impl Bordered<'_> {
    fn residual(&self, x: &[f64], z: &[f64], f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let mut r = vec![0.0; n];
        (self.apply)(x, &mut r);
        for (i, ri) in r.iter_mut().enumerate() {
            let bz: f64 = self.cols.iter().zip(z).map(|(c, zk)| c[i] * zk).sum();
            *ri = f[i] - *ri - bz;
        }
        let s: Vec<f64> = (0..g.len())
            .map(|k| {
                let cz: f64 = (0..z.len()).map(|l| self.corner[(k, l)] * z[l]).sum();
                g[k] - dot(&self.rows[k], x) - cz
            })
            .collect();
        (r, s)
    }

    /// Block elimination followed by iterative refinement on the full system.
    ///
    /// Returns `(x, z, relative residual)`.
    pub fn solve(&self, f: &[f64], g: &[f64], rounds: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let m = self.cols.len();
        assert_eq!(self.rows.len(), m);
        let jinv_b: Vec<Vec<f64>> = self
            .cols
            .iter()
            .map(|c| {
                let mut v = c.clone();
                (self.solve)(&mut v);
                v
            })
            .collect();
        let mut schur = self.corner.clone();
        for k in 0..m {
            for l in 0..m {
                schur[(k, l)] -= dot(&self.rows[k], &jinv_b[l]);
            }
        }
        let schur_lu = schur.lu();
        if m > 0 && !schur_lu.is_invertible() {
            return Err(Error::Singular(f.len()));
        }
        let elim = |f: &[f64], g: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut y = f.to_vec();
            (self.solve)(&mut y);
            if m == 0 {
                return Ok((y, Vec::new()));
            }
            let rhs = DVector::from_iterator(m, (0..m).map(|k| g[k] - dot(&self.rows[k], &y)));
            let z = schur_lu.solve(&rhs).ok_or(Error::Singular(f.len()))?;
            for (l, col) in jinv_b.iter().enumerate() {
                for (yi, ci) in y.iter_mut().zip(col) {
                    *yi -= z[l] * ci;
                }
            }
            Ok((y, z.iter().copied().collect()))
        };
        let (mut x, mut z) = elim(f, g)?;
        let scale = (dot(f, f) + dot(g, g)).sqrt().max(f64::MIN_POSITIVE);
        let mut rel = f64::INFINITY;
        for round in 0..=rounds {
            let (r, s) = self.residual(&x, &z, f, g);
            rel = (dot(&r, &r) + dot(&s, &s)).sqrt() / scale;
            if round == rounds || rel < 1e-15 {
                break;
            }
            let (dx, dz) = elim(&r, &s)?;
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            z.iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
        }
        Ok((x, z, rel))
    }
}

/// Outcome of a preconditioned conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub relative_residual: T,
}

/// Jacobi-preconditioned CG for a symmetric positive definite operator.
///
/// Stops when `‖b − A x‖ / ‖b‖ < tol` in the Euclidean norm.
pub fn pcg<T: Real>(
    apply: impl Fn(&[T], &mut [T]),
    diag: &[T],
    b: &[T],
    tol: T,
    max_iter: usize,
) -> Result<CgOutcome<T>> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relative_residual: T::zero(),
        });
    }
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(diag).map(|(a, d)| *a / *d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    let mut rel = T::one();
    for it in 0..max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel < tol {
            return Ok(CgOutcome {
                x,
                iterations: it + 1,
                relative_residual: rel,
            });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        what: "conjugate gradient",
        iterations: max_iter,
        residual: rel.to_f64_lossy(),
    })
}
