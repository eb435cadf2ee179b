//! Log-radial grids and per-mode matrices in the weight-isometry picture.
//!
//! With r = −log t and β = (n+1)/2 − γ, the map u ↦ v = e^{−βr}u(e^{−r})
//! takes K^{0,γ}_p isometrically onto L_p(ℝ, dr) (per mode). Under it
//! −t∂_t becomes ∂_r + β and t^{−μ} becomes e^{μr}, so the ν-block of
//! A = t^{−μ}Σ a_j(t)(−t∂_t)^j is
//!
//! ```text
//! e^{μr} Σ_j α_j(e^{−r}; ν) (∂_r + β)^j.
//! ```
//!
//! We assemble the same operator in the form W·[Σ_j α_j (∂_r + c)^j]·W with
//! W = e^{μr/2} and c = β − μ/2, expanding (∂ + c)^j binomially and using
//! ∂ ↦ D (central), ∂² ↦ L (three-point), ∂³ ↦ DL, ∂⁴ ↦ L². The point of
//! the rearrangement: for the cone Laplacian at γ = 0 the odd terms cancel
//! and the block is W(−L + c² − ν)W, exactly symmetric.
//!
//! Dirichlet truncation: all N nodes are unknowns and the values one spacing
//! beyond either end are zero.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::error::{invalid, Result};
use crate::symbols::{FuchsOperator, WeightData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// The infinite cone ℝ₊ × X, cut to r_min < 0 < r_max; coefficients frozen at t = 0.
    ModelCone,
    /// 0 < t ≤ 1 (r_min = 0); coefficients evaluated at t = e^{−r}.
    TruncatedCone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub n: usize,
    pub h: f64,
    pub kind: GridKind,
}

impl LogGrid {
    pub fn new(r_min: f64, r_max: f64, n: usize, kind: GridKind) -> Result<Self> {
        if n < 8 {
            return Err(invalid("grid.points", format!("need at least 8 nodes, got {n}")));
        }
        if !(r_min.is_finite() && r_max.is_finite() && r_max > r_min) {
            return Err(invalid("grid.rmax", format!("need r_min < r_max, got [{r_min}, {r_max}]")));
        }
        match kind {
            GridKind::ModelCone if !(r_min < 0.0 && r_max > 0.0) => {
                return Err(invalid("grid.rmin", "a model-cone grid must straddle r = 0"));
            }
            GridKind::TruncatedCone if r_min != 0.0 => {
                return Err(invalid("grid.rmin", "a truncated-cone grid starts at r = 0 (t = 1)"));
            }
            _ => {}
        }
        Ok(LogGrid { r_min, r_max, n, h: (r_max - r_min) / (n - 1) as f64, kind })
    }

    pub fn model_cone(r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        Self::new(r_min, r_max, n, GridKind::ModelCone)
    }

    pub fn truncated_cone(r_max: f64, n: usize) -> Result<Self> {
        Self::new(0.0, r_max, n, GridKind::TruncatedCone)
    }

    pub fn r(&self, i: usize) -> f64 {
        self.r_min + i as f64 * self.h
    }

    pub fn t(&self, i: usize) -> f64 {
        (-self.r(i)).exp()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.r(i)).collect()
    }
}

/// One ν-group of modes with its matrix (shared by all `mult` copies).
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBlock {
    pub index: usize,
    pub nu: f64,
    pub mult: usize,
    pub matrix: BandMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteOperator {
    /// `None` for synthetic targets built directly from matrices.
    pub grid: Option<LogGrid>,
    pub weight: Option<WeightData>,
    pub beta: f64,
    pub mu: usize,
    pub n: usize,
    pub blocks: Vec<ModeBlock>,
    pub label: String,
}

impl DiscreteOperator {
    /// A single-mode synthetic target.
    pub fn from_matrix(m: &DMatrix<Complex64>) -> Self {
        Self::from_matrices(std::slice::from_ref(m))
    }

    pub fn from_real(m: &DMatrix<f64>) -> Self {
        Self::from_matrix(&m.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn from_matrices(ms: &[DMatrix<Complex64>]) -> Self {
        DiscreteOperator {
            grid: None,
            weight: None,
            beta: 0.0,
            mu: 0,
            n: 0,
            blocks: ms
                .iter()
                .enumerate()
                .map(|(index, m)| ModeBlock { index, nu: 0.0, mult: 1, matrix: BandMatrix::from_dense(m) })
                .collect(),
            label: "synthetic".into(),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_real(&DMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 }))
    }

    pub fn size(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.matrix.n())
    }

    pub fn map_blocks(&self, f: impl Fn(&BandMatrix) -> BandMatrix) -> Self {
        DiscreteOperator {
            blocks: self.blocks.iter().map(|b| ModeBlock { matrix: f(&b.matrix), ..b.clone() }).collect(),
            ..self.clone()
        }
    }

    /// ‖M − Mᵀ‖_F / ‖M‖_F, worst block.
    pub fn symmetry_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let d = b.matrix.to_dense();
                let f = d.norm();
                if f == 0.0 {
                    0.0
                } else {
                    (&d - d.transpose()).norm() / f
                }
            })
            .fold(0.0, f64::max)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// ∂^k on the grid as a band matrix: L^{k/2} or D·L^{(k−1)/2}.
fn derivative_power(n: usize, h: f64, k: usize) -> DMatrix<f64> {
    let mut d = DMatrix::<f64>::zeros(n, n);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        l[(i, i)] = -2.0 / (h * h);
        if i + 1 < n {
            d[(i, i + 1)] = 0.5 / h;
            d[(i + 1, i)] = -0.5 / h;
            l[(i, i + 1)] = 1.0 / (h * h);
            l[(i + 1, i)] = 1.0 / (h * h);
        }
    }
    let mut out = DMatrix::<f64>::identity(n, n);
    for _ in 0..k / 2 {
        out = &out * &l;
    }
    if k % 2 == 1 {
        out = &d * &out;
    }
    out
}

/// Stencil of ∂^k restricted to the band (computed once on a small grid and
/// read off an interior row, then truncated at the ends).
fn stencil(h: f64, k: usize) -> Vec<f64> {
    let m = 4 * k + 3;
    let full = derivative_power(m, h, k);
    let mid = m / 2;
    (0..=2 * k).map(|o| full[(mid, mid - k + o)]).collect()
}

/// Per-mode matrices of `op` on `grid`.
pub fn assemble(op: &FuchsOperator, grid: &LogGrid) -> Result<DiscreteOperator> {
    let mu = op.mu;
    if grid.n < 2 * mu + 2 {
        return Err(invalid("grid.points", format!("N = {} cannot carry differences of order {mu}", grid.n)));
    }
    if op.cross_section.mode_cutoff < 1 {
        return Err(invalid("cross_section.modes", "need at least one mode"));
    }
    let beta = op.beta();
    let c = beta - mu as f64 / 2.0;
    let n = grid.n;
    let stencils: Vec<Vec<f64>> = (0..=mu).map(|k| stencil(grid.h, k)).collect();
    let w: Vec<f64> = (0..n).map(|i| (0.5 * mu as f64 * grid.r(i)).exp()).collect();

    let blocks: Vec<ModeBlock> = op
        .cross_section
        .groups()
        .par_iter()
        .enumerate()
        .map(|(index, &(nu, mult))| {
            let mut m = BandMatrix::zeros(n, mu, mu);
            for i in 0..n {
                let t = match grid.kind {
                    GridKind::ModelCone => 0.0,
                    GridKind::TruncatedCone => grid.t(i),
                };
                // Row i of Σ_j α_j(t_i) Σ_k C(j,k) c^{j−k} ∂^k.
                let mut row = vec![0.0; 2 * mu + 1];
                for j in 0..=mu {
                    let a = op.alpha(j, t, nu);
                    if a == 0.0 {
                        continue;
                    }
                    for k in 0..=j {
                        let coef = a * binomial(j, k) * c.powi((j - k) as i32);
                        if coef == 0.0 {
                            continue;
                        }
                        let s = &stencils[k];
                        for (o, &v) in s.iter().enumerate() {
                            row[mu - k + o] += coef * v;
                        }
                    }
                }
                for (o, &v) in row.iter().enumerate() {
                    let col = i as isize + o as isize - mu as isize;
                    if col < 0 || col >= n as isize || v == 0.0 {
                        continue;
                    }
                    let col = col as usize;
                    m.add(i, col, Complex64::new(w[i] * v * w[col], 0.0));
                }
                if op.shift != 0.0 {
                    m.add(i, i, Complex64::new(op.shift, 0.0));
                }
            }
            ModeBlock { index, nu, mult, matrix: m }
        })
        .collect();

    Ok(DiscreteOperator {
        grid: Some(*grid),
        weight: Some(op.weight),
        beta,
        mu,
        n: op.n(),
        blocks,
        label: op.label.clone(),
    })
}

/// Which Sobolev norm: order s, weight γ, exponent p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormSpec {
    pub s: u8,
    pub gamma: f64,
    pub p: f64,
}

/// v = e^{−βr}u on the grid.
pub fn to_isometry_picture(u: &[Complex64], grid: &LogGrid, beta: f64) -> Vec<Complex64> {
    u.iter().enumerate().map(|(i, &x)| x * (-beta * grid.r(i)).exp()).collect()
}

pub fn from_isometry_picture(v: &[Complex64], grid: &LogGrid, beta: f64) -> Vec<Complex64> {
    v.iter().enumerate().map(|(i, &x)| x * (beta * grid.r(i)).exp()).collect()
}

/// Discrete H^{s,γ}_p norm of a field given by its ν-modes `(ν, u_ν)`.
///
/// u is sampled in the original picture. Derivatives: −t∂_t ↦ ∂_r + β
/// (central differences, zero beyond the ends), the cross-section gradient
/// contributes √|ν| per order. For p ≠ 2 the mode sum is ℓ_p over modes, a
/// stand-in for the L_p(X) norm (exact for p = 2 by Parseval).
pub fn weighted_norm(modes: &[(f64, &[Complex64])], spec: WeightedNormSpec, grid: &LogGrid, n: usize) -> Result<f64> {
    if !(spec.p > 1.0 && spec.p.is_finite()) {
        return Err(invalid("p", format!("p must lie in (1, ∞), got {}", spec.p)));
    }
    if spec.s > 2 {
        return Err(invalid("s", format!("s must be 0, 1 or 2, got {}", spec.s)));
    }
    let beta = (n as f64 + 1.0) / 2.0 - spec.gamma;
    let h = grid.h;
    let p = spec.p;
    let sum_p = |x: &[Complex64]| x.iter().map(|z| z.norm().powf(p)).sum::<f64>() * h;
    let mut total = 0.0;
    for &(nu, u) in modes {
        if u.len() != grid.n {
            return Err(invalid("u", format!("expected {} samples, got {}", grid.n, u.len())));
        }
        let v = to_isometry_picture(u, grid, beta);
        total += sum_p(&v);
        if spec.s >= 1 {
            let dv = shifted_derivative(&v, h, beta);
            let g = nu.abs().sqrt();
            total += sum_p(&dv);
            total += g.powf(p) * sum_p(&v);
            if spec.s == 2 {
                let ddv = shifted_derivative(&dv, h, beta);
                total += sum_p(&ddv);
                total += g.powf(p) * sum_p(&dv);
                total += g.powf(2.0 * p) * sum_p(&v);
            }
        }
    }
    Ok(total.powf(1.0 / p))
}

/// (D + β)v with zero values beyond the ends.
fn shifted_derivative(v: &[Complex64], h: f64, beta: f64) -> Vec<Complex64> {
    let n = v.len();
    let zero = Complex64::new(0.0, 0.0);
    (0..n)
        .map(|i| {
            let right = if i + 1 < n { v[i + 1] } else { zero };
            let left = if i > 0 { v[i - 1] } else { zero };
            (right - left) / (2.0 * h) + beta * v[i]
        })
        .collect()
}

/// Number of grid steps equal to log ρ, or an error if ρ is off-grid.
pub fn kappa_shift(rho: f64, grid: &LogGrid) -> Result<isize> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("rho", format!("need ρ > 0, got {rho}")));
    }
    let steps = rho.ln() / grid.h;
    let j = steps.round();
    if (steps - j).abs() > 1e-9 {
        return Err(invalid("rho", format!("log ρ = {} is not a multiple of h = {}", rho.ln(), grid.h)));
    }
    Ok(j as isize)
}

/// (κ_ρ u)(t) = ρ^{(n+1)/2} u(ρt), acting on isometry-picture samples v.
///
/// In r = −log t the dilation is a shift by log ρ, and conjugating with
/// e^{−βr} leaves the factor ρ^{(n+1)/2−β} = ρ^γ. Vacated entries are zero.
pub fn kappa_apply(v: &[Complex64], rho: f64, grid: &LogGrid, weight: &WeightData) -> Result<Vec<Complex64>> {
    let j = kappa_shift(rho, grid)?;
    let factor = rho.powf(weight.gamma);
    let n = v.len() as isize;
    Ok((0..n)
        .map(|i| {
            let src = i - j;
            if src >= 0 && src < n {
                v[src as usize] * factor
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect())
}

/// Worst relative defect of â(ρ^μλ) = ρ^μ κ_ρ â(λ) κ_ρ⁻¹ (â(λ) = λ − Â),
/// applied to seeded vectors supported clear of both grid ends, compared on
/// interior nodes. Needs a model-cone operator without shift.
pub fn twisted_homogeneity_defect(target: &DiscreteOperator, rho: f64, lambda: Complex64, seed: u64) -> Result<f64> {
    let grid = target.grid.as_ref().ok_or_else(|| invalid("target", "twisted homogeneity needs a grid"))?;
    let weight = target.weight.as_ref().ok_or_else(|| invalid("target", "twisted homogeneity needs weight data"))?;
    if grid.kind != GridKind::ModelCone {
        return Err(invalid("target", "twisted homogeneity is a model-cone identity"));
    }
    let j = kappa_shift(rho, grid)?.unsigned_abs();
    let margin = j + 2 * target.mu.max(1);
    if grid.n <= 2 * margin + 1 {
        return Err(invalid("rho", format!("shift of {j} nodes leaves no interior on {} nodes", grid.n)));
    }
    let scale = rho.powi(target.mu as i32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for b in &target.blocks {
        let n = grid.n;
        let v: Vec<Complex64> = (0..n)
            .map(|i| {
                if i >= margin && i < n - margin {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let apply = |lam: Complex64, x: &[Complex64]| -> Vec<Complex64> {
            let ax = b.matrix.matvec(x);
            x.iter().zip(&ax).map(|(xi, ai)| lam * xi - ai).collect()
        };
        let lhs = apply(lambda * scale, &v);
        let inner = kappa_apply(&v, 1.0 / rho, grid, weight)?;
        let rhs: Vec<Complex64> = kappa_apply(&apply(lambda, &inner), rho, grid, weight)?.iter().map(|x| x * scale).collect();
        let size = lhs.iter().map(|x| x.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let diff = (margin..n - margin).map(|i| (lhs[i] - rhs[i]).norm()).fold(0.0, f64::max);
        worst = worst.max(diff / size);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::{make_cone_laplacian, CrossSectionSpectrum};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn stencils_are_the_expected_ones() {
        let h = 0.5;
        assert_eq!(stencil(h, 0), vec![1.0]);
        assert_eq!(stencil(h, 1), vec![-1.0, 0.0, 1.0]);
        assert_eq!(stencil(h, 2), vec![0.0, 4.0, -8.0, 4.0, 0.0]);
        let s4 = stencil(h, 4);
        let mut want = vec![0.0; 9];
        for (o, x) in [1.0, -4.0, 6.0, -4.0, 1.0].iter().enumerate() {
            want[2 + o] = x * 16.0;
        }
        assert_eq!(s4, want);
    }

    #[test]
    fn grid_validation() {
        assert!(LogGrid::model_cone(-1.0, 1.0, 7).is_err());
        assert!(LogGrid::model_cone(0.0, 1.0, 16).is_err());
        assert!(LogGrid::new(1.0, 2.0, 16, GridKind::TruncatedCone).is_err());
        let g = LogGrid::truncated_cone(10.0, 11).unwrap();
        assert_eq!(g.h, 1.0);
        assert_eq!(g.r(10), 10.0);
    }

    #[test]
    fn laplacian_is_symmetric_at_gamma_zero() {
        let op = make_cone_laplacian(CrossSectionSpectrum::circle(3), 1.0, WeightData::new(0.0, 2.0, 1).unwrap()).unwrap();
        let d = assemble(&op, &LogGrid::model_cone(-6.0, 6.0, 64).unwrap()).unwrap();
        assert!(d.symmetry_defect() <= 1e-12);
        assert_eq!(d.blocks.len(), 4);
    }

    #[test]
    fn weighted_norm_of_one() {
        let grid = LogGrid::truncated_cone(10.0, 4096).unwrap();
        let u = vec![c(1.0); grid.n];
        let spec = WeightedNormSpec { s: 0, gamma: 0.0, p: 2.0 };
        let norm = weighted_norm(&[(0.0, &u)], spec, &grid, 1).unwrap();
        assert!((norm - 0.5f64.sqrt()).abs() < 1e-3, "{norm}");
        let three: Vec<_> = u.iter().map(|x| x * 3.0).collect();
        let n3 = weighted_norm(&[(0.0, &three)], spec, &grid, 1).unwrap();
        assert!((n3 - 3.0 * norm).abs() < 1e-12);
        let zero = vec![c(0.0); grid.n];
        assert_eq!(weighted_norm(&[(0.0, &zero)], spec, &grid, 1).unwrap(), 0.0);
        assert!(weighted_norm(&[(0.0, &u)], WeightedNormSpec { p: 1.0, ..spec }, &grid, 1).is_err());
    }

    #[test]
    fn kappa_rejects_off_grid_rho() {
        let grid = LogGrid::model_cone(-4.0, 4.0, 81).unwrap();
        let w = WeightData::new(0.0, 2.0, 1).unwrap();
        let v = vec![c(1.0); 81];
        assert!(kappa_apply(&v, 1.05, &grid, &w).is_err());
        assert_eq!(kappa_apply(&v, 1.0, &grid, &w).unwrap(), v);
        let shifted = kappa_apply(&v, grid.h.exp(), &grid, &w).unwrap();
        assert_eq!(shifted[0], c(0.0));
        assert_eq!(shifted[1], c(1.0));
    }

    #[test]
    fn twisted_homogeneity_needs_an_unshifted_model_cone() {
        let g = LogGrid::model_cone(-6.0, 6.0, 121).unwrap();
        let lam = Complex64::new(-1.0, 2.0);
        let plain = make_cone_laplacian(CrossSectionSpectrum::circle(2), 0.0, WeightData::new(0.0, 2.0, 1).unwrap()).unwrap();
        let d = assemble(&plain, &g).unwrap();
        assert!(twisted_homogeneity_defect(&d, (4.0 * g.h).exp(), lam, 1).unwrap() < 1e-13);
        // The +c0 shift is not homogeneous (small relative to the e^{2r}-sized
        // rows, but far above round-off).
        let shifted = assemble(&plain.with_shift(1.0), &g).unwrap();
        assert!(twisted_homogeneity_defect(&shifted, (4.0 * g.h).exp(), lam, 1).unwrap() > 1e-8);
        let t = assemble(&plain, &LogGrid::truncated_cone(6.0, 64).unwrap()).unwrap();
        assert!(twisted_homogeneity_defect(&t, 1.0, lam, 1).is_err());
    }
}
