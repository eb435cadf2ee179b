//! Dense helpers: eigendecompositions for the oracle path, matrix norms and a
//! p-norm estimator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::banded::BandMatrix;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Real and symmetric up to a relative entrywise tolerance.
pub fn is_real_symmetric(m: &BandMatrix, rel_tol: f64) -> bool {
    if !m.is_real() {
        return false;
    }
    for i in 0..m.n() {
        for j in m.row_range(i) {
            if j <= i {
                continue;
            }
            let (a, b) = (m.get(i, j).re, m.get(j, i).re);
            if (a - b).abs() > rel_tol * a.abs().max(b.abs()) {
                return false;
            }
        }
    }
    true
}

/// Symmetrised real part as a dense matrix.
pub fn real_symmetric_dense(m: &BandMatrix) -> DMatrix<f64> {
    let n = m.n();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j).re + m.get(j, i).re))
}

pub fn sort_eigenvalues(v: &mut [Complex64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Eigenvalues sorted by real part, then imaginary part.
pub fn eigenvalues(m: &BandMatrix, mode: usize) -> Result<Vec<Complex64>> {
    let mut out: Vec<Complex64> = if is_real_symmetric(m, 1e-13) {
        let a = real_symmetric_dense(m);
        let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0).ok_or(Error::NoConvergence { mode })?;
        eig.eigenvalues.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    } else {
        let schur = nalgebra::Schur::try_new(m.to_dense(), f64::EPSILON, 0).ok_or(Error::NoConvergence { mode })?;
        let t = schur.unpack().1;
        (0..m.n()).map(|i| t[(i, i)]).collect()
    };
    sort_eigenvalues(&mut out);
    Ok(out)
}

/// Q·S·Qᵀ for real Q, as four real products (much faster than complex GEMM).
pub fn real_congruence(q: &DMatrix<f64>, s: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let re = q * s.map(|x| x.re) * q.transpose();
    let im = q * s.map(|x| x.im) * q.transpose();
    re.zip_map(&im, Complex64::new)
}

/// M = V diag(λ) V⁻¹.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: DMatrix<Complex64>,
    pub inverse: DMatrix<Complex64>,
    /// ‖V‖₂‖V⁻¹‖₂ (1 for the orthogonal case).
    pub cond: f64,
    /// Real orthogonal V, when M is real symmetric.
    pub orthogonal: Option<DMatrix<f64>>,
}

impl Eigen {
    /// V diag(f(λ)) V⁻¹.
    pub fn apply(&self, f: impl Fn(Complex64) -> Complex64) -> DMatrix<Complex64> {
        if let Some(q) = &self.orthogonal {
            let d = DMatrix::from_diagonal(&DVector::from_iterator(self.values.len(), self.values.iter().map(|&l| f(l))));
            return real_congruence(q, &d);
        }
        let mut vf = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let s = f(l);
            vf.column_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        vf * &self.inverse
    }
}

pub fn eigendecomposition(m: &BandMatrix, mode: usize) -> Result<Eigen> {
    let n = m.n();
    if is_real_symmetric(m, 1e-13) {
        let eig = SymmetricEigen::try_new(real_symmetric_dense(m), f64::EPSILON, 0).ok_or(Error::NoConvergence { mode })?;
        let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
        return Ok(Eigen {
            orthogonal: Some(eig.eigenvectors),
            values: eig.eigenvalues.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            inverse: v.adjoint(),
            vectors: v,
            cond: 1.0,
        });
    }
    let schur = nalgebra::Schur::try_new(m.to_dense(), f64::EPSILON, 0).ok_or(Error::NoConvergence { mode })?;
    let (q, t) = schur.unpack();
    // Eigenvectors of the triangular factor by back substitution.
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    let scale = t.iter().map(|x| x.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for k in 0..n {
        let lk = t[(k, k)];
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = ZERO;
            for j in i + 1..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut d = t[(i, i)] - lk;
            if d.norm() < f64::EPSILON * scale {
                d = Complex64::new(f64::EPSILON * scale, 0.0);
            }
            y[(i, k)] = -s / d;
        }
        let nrm = y.column(k).norm();
        y.column_mut(k).iter_mut().for_each(|x| *x /= nrm);
    }
    let v = q * y;
    let sv = v.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let inverse = v.clone().try_inverse().ok_or(Error::IllConditioned { mode, cond })?;
    Ok(Eigen { values: (0..n).map(|i| t[(i, i)]).collect(), vectors: v, inverse, cond, orthogonal: None })
}

/// Largest singular value.
pub fn norm2(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn norm_one(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|x| x.norm()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn norm_inf(m: &DMatrix<Complex64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Riesz–Thorin: ‖A‖_p ≤ ‖A‖₁^{1/p}‖A‖_∞^{1−1/p}.
pub fn pnorm_upper(m: &DMatrix<Complex64>, p: f64) -> f64 {
    norm_one(m).powf(1.0 / p) * norm_inf(m).powf(1.0 - 1.0 / p)
}

pub fn vec_pnorm(x: &[Complex64], p: f64) -> f64 {
    // Scaled by the largest entry so large p neither overflows nor underflows.
    let m = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * x.iter().map(|z| (z.norm() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// |x|^{p−1} sgn(x) / ‖x‖_p^{p−1}: the norming functional of x in ℓ_p.
fn dual(x: &[Complex64], p: f64) -> Vec<Complex64> {
    let n = vec_pnorm(x, p);
    if n == 0.0 {
        return vec![ZERO; x.len()];
    }
    x.iter()
        .map(|z| {
            let a = z.norm();
            if a == 0.0 {
                ZERO
            } else {
                z / a * (a / n).powf(p - 1.0)
            }
        })
        .collect()
}

/// Lower bound for ‖B‖_{p→p} by the dual power method (Boyd/Higham).
///
/// `apply` computes Bx, `apply_adj` computes B*y. Each start runs at most
/// `iters` steps and stops once the estimate no longer grows; starts are the
/// all-ones vector plus `restarts − 1` seeded random vectors.
pub fn pnorm_estimate(
    n: usize,
    p: f64,
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
    apply_adj: impl Fn(&[Complex64]) -> Vec<Complex64>,
    iters: usize,
    restarts: usize,
    seed: u64,
) -> f64 {
    let q = p / (p - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for start in 0..restarts.max(1) {
        let mut x: Vec<Complex64> = if start == 0 {
            vec![Complex64::new(1.0, 0.0); n]
        } else {
            (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
        };
        let nx = vec_pnorm(&x, p);
        x.iter_mut().for_each(|v| *v /= nx);
        let mut est: f64 = 0.0;
        for _ in 0..iters {
            let y = apply(&x);
            let ny = vec_pnorm(&y, p);
            if ny <= est * (1.0 + 1e-12) {
                est = est.max(ny);
                break;
            }
            est = ny;
            let z = apply_adj(&dual(&y, p));
            let zx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if vec_pnorm(&z, q) <= zx * (1.0 + 1e-12) {
                break;
            }
            x = dual(&z, q);
        }
        best = best.max(est);
    }
    best
}

pub fn matvec(m: &DMatrix<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
    (m * DVector::from_column_slice(x)).iter().cloned().collect()
}

pub fn adj_matvec(m: &DMatrix<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
    (m.adjoint() * DVector::from_column_slice(x)).iter().cloned().collect()
}

/// Estimate of ‖M‖_{p→p} for an explicit matrix: (certified lower, upper).
pub fn pnorm_bounds(m: &DMatrix<Complex64>, p: f64, seed: u64) -> (f64, f64) {
    if (p - 2.0).abs() < 1e-15 {
        let v = norm2(m);
        return (v, v);
    }
    let adj = m.adjoint();
    let lower = pnorm_estimate(
        m.nrows(),
        p,
        |x| matvec(m, x),
        |y| (&adj * DVector::from_column_slice(y)).iter().cloned().collect(),
        50,
        5,
        seed,
    );
    (lower, pnorm_upper(m, p).max(lower))
}
