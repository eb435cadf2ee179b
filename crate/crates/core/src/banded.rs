//! Complex band matrices and a pivoted band LU.
//!
//! Storage is row-wise: entry (i, j) of a matrix with `kl` sub- and `ku`
//! super-diagonals lives at `i*width + (j + kl - i)`. The factorisation keeps
//! partial pivoting, so U grows to `kl + ku` super-diagonals, and the row
//! multipliers are stored on the side (gbfa/gbsl layout, row-oriented).

use std::collections::VecDeque;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<Complex64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        BandMatrix { n, kl, ku, data: vec![ZERO; n * (kl + ku + 1)] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0, 0);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    /// Smallest band that holds every nonzero of `m`.
    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "square matrices only");
        let (mut kl, mut ku) = (0, 0);
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)] != ZERO {
                    if i > j {
                        kl = kl.max(i - j);
                    } else {
                        ku = ku.max(j - i);
                    }
                }
            }
        }
        let mut b = Self::zeros(n, kl, ku);
        for i in 0..n {
            for j in b.row_range(i) {
                b.set(i, j, m[(i, j)]);
            }
        }
        b
    }

    pub fn from_real_dense(m: &DMatrix<f64>) -> Self {
        Self::from_dense(&m.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    /// Columns that row i may occupy.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.kl - i]
        } else {
            ZERO
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside the band ({}, {})", self.kl, self.ku);
        let w = self.width();
        self.data[i * w + j + self.kl - i] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n).map(|i| self.row_range(i).map(|j| self.get(i, j) * x[j]).sum()).collect()
    }

    /// λI − self.
    pub fn shifted(&self, lambda: Complex64) -> BandMatrix {
        let mut m = self.map(|v| -v);
        for i in 0..self.n {
            m.add(i, i, lambda);
        }
        m
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> BandMatrix {
        BandMatrix { n: self.n, kl: self.kl, ku: self.ku, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> BandMatrix {
        let mut m = BandMatrix::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            for j in self.row_range(i) {
                m.set(j, i, self.get(i, j).conj());
            }
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// max_i Σ_j |a_ij|.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.row_range(i).map(|j| self.get(i, j).norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// max_j Σ_i |a_ij|.
    pub fn norm_one(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for i in 0..self.n {
            for j in self.row_range(i) {
                col[j] += self.get(i, j).norm();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|v| v.im == 0.0)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.kl != self.ku {
            return self.to_dense_symmetry_defect() <= rel_tol * self.frobenius();
        }
        self.to_dense_symmetry_defect() <= rel_tol * self.frobenius()
    }

    fn to_dense_symmetry_defect(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in self.row_range(i) {
                s += (self.get(i, j) - self.get(j, i)).norm_sqr();
            }
        }
        s.sqrt()
    }

    /// Pivoted LU of the matrix itself.
    pub fn lu(&self) -> BandLu {
        BandLu::new(self)
    }
}

/// LU factors of a band matrix with row partial pivoting.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    /// Super-diagonals of U (ku of A plus kl of fill-in).
    uw: usize,
    /// Row k of U: columns k..k+uw, stored at k*(uw+1).
    u: Vec<Complex64>,
    /// Multipliers for rows k+1..k+kl, stored at k*kl.
    l: Vec<Complex64>,
    piv: Vec<usize>,
    /// 1/u_kk.
    dinv: Vec<Complex64>,
    cond: f64,
}

impl BandLu {
    pub fn new(a: &BandMatrix) -> Self {
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        let uw = (kl + ku).min(n.saturating_sub(1));
        let ww = uw + 1;
        // Sliding window over the active rows k..=k+kl, each holding columns
        // k..=k+uw (so entry j sits at j−k). Rows below k+kl are untouched
        // until they enter the window.
        let load = |i: usize| -> (Vec<Complex64>, f64, usize) {
            let mut r = vec![ZERO; ww];
            let mut s: f64 = 0.0;
            let lo = i.saturating_sub(kl);
            for j in a.row_range(i) {
                r[j - lo] = a.get(i, j);
                s = s.max(a.get(i, j).norm());
            }
            (r, s, lo)
        };
        let mut win: VecDeque<(Vec<Complex64>, f64)> = VecDeque::with_capacity(kl + 1);
        let mut next = 0usize;

        let mut u = vec![ZERO; n * ww];
        let mut l = vec![ZERO; n * kl];
        let mut piv = vec![0; n];
        let mut cond: f64 = 1.0;

        for k in 0..n {
            let last = (k + kl).min(n - 1);
            while next <= last {
                let (mut r, s, lo) = load(next);
                // Re-base at column k (only matters for the first kl rows).
                if lo < k {
                    r.drain(..k - lo);
                    r.resize(ww, ZERO);
                } else if lo > k {
                    r.splice(0..0, std::iter::repeat(ZERO).take(lo - k));
                    r.truncate(ww);
                }
                win.push_back((r, s));
                next += 1;
            }
            let mut p = 0;
            let mut best = win[0].0[0].norm();
            for (i, row) in win.iter().enumerate().skip(1) {
                let v = row.0[0].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = k + p;
            win.swap(0, p);
            let (pivot_row, scale) = win.pop_front().expect("window holds row k");
            let pivot = pivot_row[0];
            u[k * ww..(k + 1) * ww].copy_from_slice(&pivot_row);
            if pivot == ZERO {
                cond = f64::INFINITY;
            } else if scale > 0.0 {
                cond = cond.max(scale / pivot.norm());
            }
            for (i, (row, _)) in win.iter_mut().enumerate() {
                let ark = row[0];
                if ark != ZERO && pivot != ZERO {
                    let m = ark / pivot;
                    l[k * kl + i] = m;
                    for j in 1..ww {
                        let ukj = pivot_row[j];
                        if ukj != ZERO {
                            row[j] -= m * ukj;
                        }
                    }
                }
                // Column k is done: slide the row one column to the right.
                row.rotate_left(1);
                row[ww - 1] = ZERO;
            }
        }
        let dinv = (0..n).map(|k| Complex64::new(1.0, 0.0) / u[k * ww]).collect();
        BandLu { n, kl, uw, u, l, piv, dinv, cond }
    }

    /// max_k (original row size)/|u_kk|: a cheap, row-scaling invariant
    /// singularity indicator (∞ for an exactly singular matrix).
    pub fn cond_estimate(&self) -> f64 {
        self.cond
    }

    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let (n, kl, ww) = (self.n, self.kl, self.uw + 1);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(p, k);
            }
            let bk = b[k];
            if bk != ZERO {
                let last = (k + kl).min(n - 1);
                for r in k + 1..=last {
                    b[r] -= self.l[k * kl + (r - k - 1)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let hi = (k + self.uw).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=hi {
                s -= self.u[k * ww + j - k] * b[j];
            }
            b[k] = s * self.dinv[k];
        }
    }

    /// Entries `start..n` of the solution for a right-hand side that vanishes
    /// above `start`; entries above `start` are left unspecified.
    pub fn solve_lower_part(&self, b: &mut [Complex64], start: usize) {
        let (n, kl, ww) = (self.n, self.kl, self.uw + 1);
        for k in start.saturating_sub(kl)..n {
            let p = self.piv[k];
            if p != k {
                b.swap(p, k);
            }
            let bk = b[k];
            if bk != ZERO {
                let last = (k + kl).min(n - 1);
                for r in k + 1..=last {
                    b[r] -= self.l[k * kl + (r - k - 1)] * bk;
                }
            }
        }
        for k in (start..n).rev() {
            let hi = (k + self.uw).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=hi {
                s -= self.u[k * ww + j - k] * b[j];
            }
            b[k] = s * self.dinv[k];
        }
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Full inverse, column by column (column-major n×n).
    pub fn inverse(&self) -> DMatrix<Complex64> {
        let n = self.n;
        let mut out = DMatrix::<Complex64>::zeros(n, n);
        let mut col = vec![ZERO; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = ZERO);
            col[j] = Complex64::new(1.0, 0.0);
            self.solve_in_place(&mut col);
            out.column_mut(j).iter_mut().zip(&col).for_each(|(o, v)| *o = *v);
        }
        out
    }
}

/// Factor λI − M, refusing numerically singular systems.
pub fn factor_shifted(m: &BandMatrix, lambda: Complex64, mode: usize, max_cond: f64) -> Result<BandLu> {
    let lu = m.shifted(lambda).lu();
    let cond = lu.cond_estimate();
    if !(cond <= max_cond) {
        return Err(Error::Singular { lambda, mode, cond });
    }
    Ok(lu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in m.row_range(i) {
                m.set(i, j, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
        }
        m
    }

    #[test]
    fn band_solve_matches_dense() {
        for (n, kl, ku, seed) in [(10, 1, 1, 1), (17, 2, 3, 2), (8, 7, 7, 3), (12, 0, 2, 4), (5, 3, 0, 5)] {
            let a = random_band(n, kl, ku, seed);
            let b: Vec<_> = (0..n).map(|i| c(i as f64, 1.0)).collect();
            let x = a.lu().solve(&b);
            let r = a.matvec(&x);
            let err: f64 = r.iter().zip(&b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "n={n} kl={kl} ku={ku}: residual {err}");
        }
    }

    #[test]
    fn pivoting_is_needed_and_used() {
        // Zero leading entry forces a swap.
        let mut a = BandMatrix::zeros(3, 1, 1);
        a.set(0, 0, c(0.0, 0.0));
        a.set(0, 1, c(1.0, 0.0));
        a.set(1, 0, c(2.0, 0.0));
        a.set(1, 1, c(1.0, 0.0));
        a.set(1, 2, c(1.0, 0.0));
        a.set(2, 1, c(3.0, 0.0));
        a.set(2, 2, c(4.0, 0.0));
        let lu = a.lu();
        assert!(lu.cond_estimate().is_finite());
        let x = lu.solve(&[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
        let r = a.matvec(&x);
        assert!((r[0] - 1.0).norm() + (r[1] - 2.0).norm() + (r[2] - 3.0).norm() < 1e-14);
    }

    #[test]
    fn singular_is_flagged() {
        let mut a = BandMatrix::zeros(2, 1, 1);
        a.set(0, 0, c(1.0, 0.0));
        a.set(0, 1, c(2.0, 0.0));
        a.set(1, 0, c(2.0, 0.0));
        a.set(1, 1, c(4.0, 0.0));
        assert!(a.lu().cond_estimate() > 1e14);
        assert!(factor_shifted(&a, c(5.0, 0.0), 0, 1e14).is_err());
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = random_band(9, 2, 1, 9).shifted(c(4.0, 0.0));
        let inv = a.lu().inverse();
        let prod = a.to_dense() * inv;
        let err = (prod - DMatrix::<Complex64>::identity(9, 9)).norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn graded_rows_keep_a_small_condition_proxy() {
        let n = 40;
        let mut a = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            let s = (i as f64 - 20.0).exp();
            a.set(i, i, c(2.0 * s, 0.0));
            if i > 0 {
                a.set(i, i - 1, c(-s, 0.0));
            }
            if i + 1 < n {
                a.set(i, i + 1, c(-s, 0.0));
            }
        }
        assert!(a.lu().cond_estimate() < 1e3);
    }

    #[test]
    fn adjoint_and_dense_round_trip() {
        let a = random_band(7, 1, 2, 11);
        assert_eq!(BandMatrix::from_dense(&a.to_dense()).to_dense(), a.to_dense());
        assert_eq!(a.adjoint().to_dense(), a.to_dense().adjoint());
    }
}
