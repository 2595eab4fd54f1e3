//! Banded LU (partial pivoting) and banded Cholesky.

use crate::error::{Error, Result};
use crate::num::Real;

/// General band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Column-major band storage with `kl` extra superdiagonals reserved for
/// the fill produced by row interchanges during factorization.
#[derive(Clone, Debug)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    data: Vec<T>,
}

impl<T: Real> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ld,
            data: vec![T::zero(); ld * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn kut(&self) -> usize {
        self.kl + self.ku
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        c * self.ld + self.kut() + r - c
    }

    pub fn in_band(&self, r: usize, c: usize) -> bool {
        r < self.n && c < self.n && r <= c + self.kl && c <= r + self.ku
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        if self.in_band(r, c) {
            self.data[self.idx(r, c)]
        } else {
            T::zero()
        }
    }

    /// Adds `v` to entry `(r, c)`; panics outside the band.
    pub fn add(&mut self, r: usize, c: usize, v: T) {
        assert!(self.in_band(r, c), "entry ({r},{c}) outside band");
        let i = self.idx(r, c);
        self.data[i] += v;
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.iter_mut().for_each(|v| *v = T::zero());
        for c in 0..self.n {
            let xc = x[c];
            if xc == T::zero() {
                continue;
            }
            let r0 = c.saturating_sub(self.ku);
            let r1 = (c + self.kl).min(self.n - 1);
            let base = self.idx(r0, c);
            for (k, r) in (r0..=r1).enumerate() {
                y[r] += self.data[base + k] * xc;
            }
        }
    }

    /// LU factorization with partial pivoting.
    pub fn lu(mut self) -> Result<BandLu<T>> {
        let n = self.n;
        let kl = self.kl;
        let kut = self.kut();
        let ld = self.ld;
        let mut piv = vec![0usize; n];
        for j in 0..n {
            let last = (j + kl).min(n - 1);
            let cj = j * ld + kut; // offset of (j, j)
            let mut p = j;
            let mut best = self.data[cj].abs();
            for i in j + 1..=last {
                let v = self.data[cj + i - j].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(Error::Singular(j));
            }
            piv[j] = p;
            let clast = (j + kut).min(n - 1);
            if p != j {
                for c in j..=clast {
                    let a = c * ld + kut + j - c;
                    let b = c * ld + kut + p - c;
                    self.data.swap(a, b);
                }
            }
            let inv = T::one() / self.data[cj];
            for i in j + 1..=last {
                self.data[cj + i - j] *= inv;
            }
            if last == j {
                continue;
            }
            for c in j + 1..=clast {
                let (left, right) = self.data.split_at_mut(c * ld);
                let lcol = &left[cj + 1..cj + 1 + (last - j)];
                let top = kut + j - c; // offset of (j, c) within column c
                let ajc = right[top];
                if ajc == T::zero() {
                    continue;
                }
                let tgt = &mut right[top + 1..top + 1 + (last - j)];
                for (t, l) in tgt.iter_mut().zip(lcol) {
                    *t -= *l * ajc;
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

/// Factored band matrix.
#[derive(Clone, Debug)]
pub struct BandLu<T> {
    m: BandMatrix<T>,
    piv: Vec<usize>,
}

impl<T: Real> BandLu<T> {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let m = &self.m;
        let n = m.n;
        assert_eq!(b.len(), n);
        let kut = m.kut();
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj == T::zero() {
                continue;
            }
            let last = (j + m.kl).min(n - 1);
            let base = j * m.ld + kut;
            for i in j + 1..=last {
                b[i] -= m.data[base + i - j] * bj;
            }
        }
        for j in (0..n).rev() {
            let base = j * m.ld + kut;
            b[j] /= m.data[base];
            let bj = b[j];
            if bj == T::zero() {
                continue;
            }
            let first = j.saturating_sub(kut);
            for i in first..j {
                b[i] -= m.data[base + i - j] * bj;
            }
        }
    }
}

/// Symmetric band matrix; only the lower triangle (`kd` subdiagonals) is stored.
#[derive(Clone, Debug)]
pub struct SymBandMatrix<T> {
    n: usize,
    kd: usize,
    data: Vec<T>,
}

impl<T: Real> SymBandMatrix<T> {
    pub fn zeros(n: usize, kd: usize) -> Self {
        Self {
            n,
            kd,
            data: vec![T::zero(); (kd + 1) * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        c * (self.kd + 1) + r - c
    }

    /// Adds `v` to the symmetric pair `(r, c)`/`(c, r)`; pass each pair once.
    pub fn add(&mut self, r: usize, c: usize, v: T) {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        assert!(r - c <= self.kd && r < self.n, "entry ({r},{c}) outside band");
        let i = self.idx(r, c);
        self.data[i] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        if r - c > self.kd || r >= self.n {
            T::zero()
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// Cholesky factorization; fails at the first nonpositive pivot.
    pub fn cholesky(mut self) -> Result<BandCholesky<T>> {
        let n = self.n;
        let kd = self.kd;
        let ld = kd + 1;
        for j in 0..n {
            let cj = j * ld;
            let d = self.data[cj];
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite(j));
            }
            let l = d.sqrt();
            self.data[cj] = l;
            let last = (j + kd).min(n - 1);
            let inv = T::one() / l;
            for i in j + 1..=last {
                self.data[cj + i - j] *= inv;
            }
            for c in j + 1..=last {
                let (left, right) = self.data.split_at_mut(c * ld);
                let lcj = left[cj + c - j];
                if lcj == T::zero() {
                    continue;
                }
                let src = &left[cj + c - j..cj + last - j + 1];
                let tgt = &mut right[..last - c + 1];
                for (t, s) in tgt.iter_mut().zip(src) {
                    *t -= *s * lcj;
                }
            }
        }
        Ok(BandCholesky { m: self })
    }
}

#[derive(Clone, Debug)]
pub struct BandCholesky<T> {
    m: SymBandMatrix<T>,
}

impl<T: Real> BandCholesky<T> {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let m = &self.m;
        let n = m.n;
        let ld = m.kd + 1;
        assert_eq!(b.len(), n);
        for j in 0..n {
            let cj = j * ld;
            b[j] /= m.data[cj];
            let bj = b[j];
            let last = (j + m.kd).min(n - 1);
            for i in j + 1..=last {
                b[i] -= m.data[cj + i - j] * bj;
            }
        }
        for j in (0..n).rev() {
            let cj = j * ld;
            let last = (j + m.kd).min(n - 1);
            let mut s = b[j];
            for i in j + 1..=last {
                s -= m.data[cj + i - j] * b[i];
            }
            b[j] = s / m.data[cj];
        }
    }
}

/// Either factorization behind one solve interface.
#[derive(Clone, Debug)]
pub enum BandFactor<T> {
    Lu(BandLu<T>),
    Cholesky(BandCholesky<T>),
}

impl<T: Real> BandFactor<T> {
    pub fn solve_in_place(&self, b: &mut [T]) {
        match self {
            BandFactor::Lu(f) => f.solve_in_place(b),
            BandFactor::Cholesky(f) => f.solve_in_place(b),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BandFactor::Lu(f) => f.dim(),
            BandFactor::Cholesky(f) => f.dim(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &BandMatrix<f64>, x: &[f64]) -> Vec<f64> {
        let n = a.dim();
        (0..n)
            .map(|r| (0..n).map(|c| a.get(r, c) * x[c]).sum())
            .collect()
    }

    fn sample(n: usize, kl: usize, ku: usize) -> BandMatrix<f64> {
        let mut a = BandMatrix::zeros(n, kl, ku);
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                let v = ((r * 7 + c * 13) % 11) as f64 / 11.0 - 0.5;
                // small diagonal forces pivoting
                let v = if r == c { 0.01 * v } else { v };
                a.add(r, c, v);
            }
        }
        a
    }

    #[test]
    fn lu_solves_with_pivoting() {
        let a = sample(40, 3, 2);
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; 40];
        a.matvec(&x, &mut b);
        assert_eq!(b, dense_mul(&a, &x));
        let lu = a.lu().unwrap();
        lu.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-9, "{u} vs {v}");
        }
    }

    #[test]
    fn lu_reports_singular() {
        let a = BandMatrix::<f64>::zeros(5, 1, 1);
        assert!(matches!(a.lu(), Err(Error::Singular(0))));
    }

    #[test]
    fn cholesky_solves_spd_and_rejects_indefinite() {
        let n = 30;
        let mut s = SymBandMatrix::<f64>::zeros(n, 2);
        for i in 0..n {
            s.add(i, i, 4.0);
            if i + 1 < n {
                s.add(i + 1, i, -1.0);
            }
            if i + 2 < n {
                s.add(i + 2, i, -0.5);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|r| (0..n).map(|c| s.get(r, c) * x[c]).sum())
            .collect();
        s.clone().cholesky().unwrap().solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-10);
        }
        let mut t = s;
        t.add(3, 3, -10.0);
        assert!(matches!(t.cholesky(), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn single_precision_lu() {
        let mut a = BandMatrix::<f32>::zeros(3, 1, 1);
        for i in 0..3 {
            a.add(i, i, 2.0);
        }
        a.add(1, 0, 1.0);
        a.add(0, 1, 1.0);
        let mut b = [3.0f32, 3.0, 2.0];
        a.lu().unwrap().solve_in_place(&mut b);
        assert!((b[0] - 1.0).abs() < 1e-6 && (b[2] - 1.0).abs() < 1e-6);
    }
}
