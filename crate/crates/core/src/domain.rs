//! The periodic strip `(S¹/ε) × ℝ` discretized on functions even in `x₂`.
//!
//! Nodes are `x₁ = −π/ε + i·h₁` (`i < n₁`, periodic) and `x₂ = j·h₂`
//! (`j < n₂`), with a mirror ghost at `x₂ = −h₂` and a homogeneous Dirichlet
//! node at `x₂ = R`. Quadrature weights integrate over the full strip
//! `|x₂| < R`, so norms and inner products are those of the even extension.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pcg, BandFactor, BandMatrix, SymBandMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripGrid {
    pub epsilon: f64,
    pub transverse_extent: f64,
    pub nodes_x1: usize,
    pub nodes_xp: usize,
}

impl StripGrid {
    pub fn new(epsilon: f64, transverse_extent: f64, nodes_x1: usize, nodes_xp: usize) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::param("epsilon", "ε > 0"));
        }
        if !(transverse_extent > 0.0) || !transverse_extent.is_finite() {
            return Err(Error::param("transverse_extent", "R > 0"));
        }
        if nodes_x1 < 4 || !nodes_x1.is_multiple_of(2) {
            return Err(Error::param("nodes_x1", "even and ≥ 4"));
        }
        if nodes_xp < 2 {
            return Err(Error::param("nodes_xp", "≥ 2"));
        }
        Ok(Self {
            epsilon,
            transverse_extent,
            nodes_x1,
            nodes_xp,
        })
    }

    /// Coarsest grid with both spacings strictly below `h_max` and `n₁` a
    /// multiple of `2·multiple` (so shifts by `period/multiple` and half of
    /// it land on nodes).
    pub fn with_spacing(epsilon: f64, transverse_extent: f64, h_max: f64, multiple: usize) -> Result<Self> {
        if !(h_max > 0.0) {
            return Err(Error::param("h_max", "h > 0"));
        }
        let m = 2 * multiple.max(1);
        let period = 2.0 * PI / epsilon;
        let mut n1 = ((period / h_max).floor() as usize / m + 1) * m;
        while n1 < 4 {
            n1 += m;
        }
        let n2 = (transverse_extent / h_max).floor() as usize + 1;
        Self::new(epsilon, transverse_extent, n1, n2)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.epsilon
    }

    pub fn h1(&self) -> f64 {
        self.period() / self.nodes_x1 as f64
    }

    pub fn h2(&self) -> f64 {
        self.transverse_extent / self.nodes_xp as f64
    }

    pub fn len(&self) -> usize {
        self.nodes_x1 * self.nodes_xp
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x1(&self, i: usize) -> f64 {
        -PI / self.epsilon + i as f64 * self.h1()
    }

    pub fn x2(&self, j: usize) -> f64 {
        j as f64 * self.h2()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.nodes_xp + j
    }

    /// `(i, j)` of a node index.
    #[inline]
    pub fn coords(&self, n: usize) -> (usize, usize) {
        (n / self.nodes_xp, n % self.nodes_xp)
    }

    /// Trapezoidal weight of the even extension.
    #[inline]
    pub fn weight(&self, j: usize) -> f64 {
        let w = self.h1() * self.h2();
        if j == 0 {
            w
        } else {
            2.0 * w
        }
    }

    /// Both mesh widths halved.
    pub fn refined(&self) -> Self {
        Self {
            nodes_x1: 2 * self.nodes_x1,
            nodes_xp: 2 * self.nodes_xp,
            ..*self
        }
    }

    /// Signed periodic offset `x − c` reduced to `[−P/2, P/2)`.
    pub fn wrap(&self, d: f64) -> f64 {
        let p = self.period();
        d - p * (d / p + 0.5).floor()
    }

    /// x₁ node nearest to `x`.
    pub fn nearest_x1(&self, x: f64) -> usize {
        let t = (x + PI / self.epsilon) / self.h1();
        (t.round() as i64).rem_euclid(self.nodes_x1 as i64) as usize
    }

    // Folded x₁ ordering 0, n−1, 1, n−2, … keeps periodic neighbours within
    // two slabs, so the matrix bandwidth is 2·n₂.
    #[inline]
    fn position(&self, n: usize) -> usize {
        let (i, j) = self.coords(n);
        let q = if 2 * i < self.nodes_x1 {
            2 * i
        } else {
            2 * (self.nodes_x1 - 1 - i) + 1
        };
        q * self.nodes_xp + j
    }

    fn bandwidth(&self) -> usize {
        2 * self.nodes_xp
    }

    /// Off-diagonal stencil entries `(neighbour, coefficient)` of `−Δ` at node `n`.
    fn stencil(&self, n: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let (i, j) = self.coords(n);
        let n1 = self.nodes_x1;
        let c1 = -1.0 / (self.h1() * self.h1());
        let c2 = -1.0 / (self.h2() * self.h2());
        out.push((self.index((i + 1) % n1, j), c1));
        out.push((self.index((i + n1 - 1) % n1, j), c1));
        if j == 0 {
            out.push((self.index(i, 1), 2.0 * c2));
        } else {
            out.push((self.index(i, j - 1), c2));
            if j + 1 < self.nodes_xp {
                out.push((self.index(i, j + 1), c2));
            }
        }
    }

    fn diag_coef(&self) -> f64 {
        2.0 / (self.h1() * self.h1()) + 2.0 / (self.h2() * self.h2())
    }
}

/// Scalar field sampled at the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: StripGrid,
    data: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: StripGrid) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_vec(grid: StripGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Assertion("field contains non-finite entries".into()));
        }
        Ok(Self { grid, data })
    }

    pub fn from_fn(grid: StripGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for i in 0..grid.nodes_x1 {
            let x1 = grid.x1(i);
            for j in 0..grid.nodes_xp {
                data.push(f(x1, grid.x2(j)));
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.index(i, j)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn l2_norm(&self) -> f64 {
        self.weighted_sq().sqrt()
    }

    fn weighted_sq(&self) -> f64 {
        let g = &self.grid;
        self.data
            .iter()
            .enumerate()
            .map(|(n, v)| g.weight(n % g.nodes_xp) * v * v)
            .sum()
    }

    pub fn h1_norm(&self) -> f64 {
        inner_products(self, self).map(|(_, h)| h.max(0.0).sqrt()).unwrap_or(0.0)
    }

    pub fn check_same_grid(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `self += a·x`.
    pub fn axpy(&mut self, a: f64, x: &GridField) {
        assert_eq!(self.grid, x.grid, "grid mismatch");
        self.data.iter_mut().zip(&x.data).for_each(|(s, v)| *s += a * v);
    }

    pub fn scaled(&self, a: f64) -> GridField {
        self.map(|v| v * a)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            grid: self.grid,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> GridField {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        GridField {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn sub(&self, other: &GridField) -> GridField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &GridField) -> GridField {
        self.zip_map(other, |a, b| a + b)
    }

    /// Periodic roll: `out(i) = self(i − s)`, i.e. the field translated by `s·h₁`.
    pub fn shift_x1(&self, s: isize) -> GridField {
        let g = self.grid;
        let n1 = g.nodes_x1 as isize;
        let mut out = GridField::zeros(g);
        for i in 0..g.nodes_x1 {
            let src = (i as isize - s).rem_euclid(n1) as usize;
            let a = g.index(i, 0);
            let b = g.index(src, 0);
            out.data[a..a + g.nodes_xp].copy_from_slice(&self.data[b..b + g.nodes_xp]);
        }
        out
    }

    /// Value at an arbitrary `x₁` on row `j` by periodic four-point Lagrange interpolation.
    pub fn interp_x1(&self, j: usize, x: f64) -> f64 {
        let g = &self.grid;
        let n1 = g.nodes_x1 as i64;
        let t = (x + PI / g.epsilon) / g.h1();
        let i0 = t.floor();
        let s = t - i0;
        let i0 = i0 as i64;
        let v = |d: i64| self.data[g.index((i0 + d).rem_euclid(n1) as usize, j)];
        let w = [
            -s * (s - 1.0) * (s - 2.0) / 6.0,
            (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
            -(s + 1.0) * s * (s - 2.0) / 2.0,
            (s + 1.0) * s * (s - 1.0) / 6.0,
        ];
        w[0] * v(-1) + w[1] * v(0) + w[2] * v(1) + w[3] * v(2)
    }

    /// Reflection `x₁ ↦ 2c − x₁`, exact when `c` sits on a node or half-node.
    pub fn reflect_x1(&self, c: f64) -> GridField {
        let g = self.grid;
        let t = 2.0 * (c + PI / g.epsilon) / g.h1();
        let exact = (t - t.round()).abs() < 1e-9;
        let mut out = GridField::zeros(g);
        for i in 0..g.nodes_x1 {
            for j in 0..g.nodes_xp {
                out.data[g.index(i, j)] = if exact {
                    let src = (t.round() as i64 - i as i64).rem_euclid(g.nodes_x1 as i64) as usize;
                    self.at(src, j)
                } else {
                    self.interp_x1(j, 2.0 * c - g.x1(i))
                };
            }
        }
        out
    }

    /// Centered-difference gradient magnitude at every node.
    pub fn gradient_norm(&self) -> GridField {
        let g = self.grid;
        let (h1, h2) = (g.h1(), g.h2());
        let n1 = g.nodes_x1;
        let mut out = GridField::zeros(g);
        for i in 0..n1 {
            for j in 0..g.nodes_xp {
                let d1 = (self.at((i + 1) % n1, j) - self.at((i + n1 - 1) % n1, j)) / (2.0 * h1);
                let up = if j + 1 < g.nodes_xp { self.at(i, j + 1) } else { 0.0 };
                let down = if j == 0 { self.at(i, 1) } else { self.at(i, j - 1) };
                let d2 = (up - down) / (2.0 * h2);
                out.data[g.index(i, j)] = d1.hypot(d2);
            }
        }
        out
    }

    /// Writes a one-line JSON header followed by little-endian `f64` node values.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = serde_json::json!({
            "format": "gridfield-v1",
            "grid": self.grid,
            "layout": "x1-major, x2-fastest",
            "dtype": "f64le",
        });
        writeln!(f, "{header}")?;
        for v in &self.data {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: serde_json::Value = serde_json::from_str(&line)?;
        let grid: StripGrid = serde_json::from_value(header["grid"].clone())?;
        let mut bytes = Vec::new();
        std::io::Read::read_to_end(&mut r, &mut bytes)?;
        if bytes.len() != 8 * grid.len() {
            return Err(Error::GridMismatch);
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        GridField::from_vec(grid, data)
    }

    /// CSV with columns `x1,x2,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x1,x2,value")?;
        let g = &self.grid;
        for i in 0..g.nodes_x1 {
            for j in 0..g.nodes_xp {
                writeln!(f, "{:.16e},{:.16e},{:.16e}", g.x1(i), g.x2(j), self.at(i, j))?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

/// `(A + diag(potential)) u` with `A` the discrete `−Δ + 1`.
pub fn apply_with_potential(field: &GridField, potential: Option<&[f64]>) -> GridField {
    let g = field.grid;
    let d0 = 1.0 + g.diag_coef();
    let mut out = GridField::zeros(g);
    let mut st = Vec::with_capacity(4);
    for n in 0..g.len() {
        g.stencil(n, &mut st);
        let mut s = d0 * field.data[n];
        for &(m, c) in &st {
            s += c * field.data[m];
        }
        if let Some(q) = potential {
            s += q[n] * field.data[n];
        }
        out.data[n] = s;
    }
    out
}

/// Discrete `−Δ + 1`.
pub fn apply_helmholtz(field: &GridField) -> GridField {
    apply_with_potential(field, None)
}

/// `(⟨u,w⟩_{L²}, ⟨u,w⟩_{H¹})` by quadrature; the H¹ form is `Σ W·u·(A w)`,
/// which equals the edge-difference Dirichlet form.
pub fn inner_products(u: &GridField, w: &GridField) -> Result<(f64, f64)> {
    u.check_same_grid(w)?;
    let g = &u.grid;
    let aw = apply_helmholtz(w);
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for n in 0..g.len() {
        let wt = g.weight(n % g.nodes_xp);
        l2 += wt * u.data[n] * w.data[n];
        h1 += wt * u.data[n] * aw.data[n];
    }
    Ok((l2, h1))
}

pub fn l2_product(u: &GridField, w: &GridField) -> f64 {
    assert_eq!(u.grid, w.grid, "grid mismatch");
    let g = &u.grid;
    u.data
        .iter()
        .zip(&w.data)
        .enumerate()
        .map(|(n, (a, b))| g.weight(n % g.nodes_xp) * a * b)
        .sum()
}

pub fn h1_product(u: &GridField, w: &GridField) -> f64 {
    inner_products(u, w).expect("same grid").1
}

/// Outcome of [`solve_helmholtz`].
#[derive(Clone, Debug)]
pub struct HelmholtzSolve {
    pub field: GridField,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A u = rhs` by Jacobi-preconditioned CG on the symmetrized system `W A u = W rhs`.
pub fn solve_helmholtz(rhs: &GridField, tol: f64) -> Result<HelmholtzSolve> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", "tol > 0"));
    }
    let g = rhs.grid;
    let wts: Vec<f64> = (0..g.len()).map(|n| g.weight(n % g.nodes_xp)).collect();
    let b: Vec<f64> = rhs.data.iter().zip(&wts).map(|(v, w)| v * w).collect();
    let diag: Vec<f64> = wts.iter().map(|w| w * (1.0 + g.diag_coef())).collect();
    let apply = |x: &[f64], y: &mut [f64]| {
        let f = GridField { grid: g, data: x.to_vec() };
        let af = apply_helmholtz(&f);
        for n in 0..y.len() {
            y[n] = wts[n] * af.data[n];
        }
    };
    let rnorm = rhs.l2_norm();
    if rnorm == 0.0 {
        return Ok(HelmholtzSolve {
            field: GridField::zeros(g),
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut inner = tol * 0.25;
    let max_iter = 20 * g.len().max(100);
    loop {
        let out = pcg(apply, &diag, &b, inner, max_iter)?;
        let field = GridField { grid: g, data: out.x };
        let rel = apply_helmholtz(&field).sub(rhs).l2_norm() / rnorm;
        if rel < tol || inner < 1e-15 {
            if rel >= tol {
                return Err(Error::NotConverged {
                    what: "Helmholtz solve",
                    iterations: out.iterations,
                    residual: rel,
                });
            }
            return Ok(HelmholtzSolve {
                field,
                iterations: out.iterations,
                relative_residual: rel,
            });
        }
        inner *= 0.1;
    }
}

/// Factorization of `W (a·A + diag(d))` in the folded band ordering.
pub struct GridFactor {
    grid: StripGrid,
    factor: BandFactor<f64>,
}

impl GridFactor {
    fn entries(grid: &StripGrid, a: f64, d: &[f64], mut put: impl FnMut(usize, usize, f64)) {
        let d0 = a * (1.0 + grid.diag_coef());
        let mut st = Vec::with_capacity(4);
        for n in 0..grid.len() {
            let w = grid.weight(n % grid.nodes_xp);
            let pn = grid.position(n);
            put(pn, pn, w * (d0 + d[n]));
            grid.stencil(n, &mut st);
            for &(m, c) in &st {
                put(pn, grid.position(m), w * a * c);
            }
        }
    }

    /// Cholesky; fails iff the matrix is not positive definite.
    pub fn cholesky(grid: &StripGrid, a: f64, d: &[f64]) -> Result<Self> {
        let mut m = SymBandMatrix::zeros(grid.len(), grid.bandwidth());
        Self::entries(grid, a, d, |r, c, v| {
            if r >= c {
                m.add(r, c, v)
            }
        });
        Ok(Self {
            grid: *grid,
            factor: BandFactor::Cholesky(m.cholesky()?),
        })
    }

    pub fn lu(grid: &StripGrid, a: f64, d: &[f64]) -> Result<Self> {
        let bw = grid.bandwidth();
        let mut m = BandMatrix::zeros(grid.len(), bw, bw);
        Self::entries(grid, a, d, |r, c, v| m.add(r, c, v));
        Ok(Self {
            grid: *grid,
            factor: BandFactor::Lu(m.lu()?),
        })
    }

    /// Solves `(a·A + diag(d)) x = f` for `f` in natural node order.
    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let mut b = vec![0.0; g.len()];
        for (n, v) in f.iter().enumerate() {
            b[g.position(n)] = v * g.weight(n % g.nodes_xp);
        }
        self.factor.solve_in_place(&mut b);
        (0..g.len()).map(|n| b[g.position(n)]).collect()
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }
}
