//! Resolvents, spectra, complex powers and the checks built on them.
//!
//! Complex powers are Dunford integrals over the keyhole contour,
//!
//! ```text
//! A^z = (2πi)⁻¹ ∫_C λ^z (λ − A)⁻¹ dλ,   Re z < 0,
//! ```
//!
//! evaluated per mode block. Two things keep this affordable: a real block
//! only needs the nodes in the upper half-plane (the mirror half is the
//! complex conjugate, see [`ContourQuadrature::upper_half`]), and a dense real
//! symmetric block is first reduced to tridiagonal form so every node costs a
//! band solve.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricTridiagonal};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::{factor_shifted, BandLu, BandMatrix};
use crate::discretize::DiscreteOperator;
use crate::error::{invalid, Error, Result};
use crate::geometry::{
    arg, contour_nodes_with, in_sector, powc, tail_bound, ContourQuadrature, KeyholeRegion, QuadratureRule, Sector,
};
use crate::linalg::{self, eigendecomposition, is_real_symmetric, norm2, real_symmetric_dense};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Systems whose condition proxy exceeds this are treated as singular.
pub const MAX_COND: f64 = 1e14;

/// Eigenvalues below this fraction of the largest are treated as zero.
const ZERO_EIG_REL: f64 = 1e-12;

pub type ModeMatrices = Vec<DMatrix<Complex64>>;

/// Solve (λ − M_j)u_j = f_j for every block.
pub fn resolvent_apply(target: &DiscreteOperator, lambda: Complex64, f: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
    if f.len() != target.blocks.len() {
        return Err(invalid("f", format!("expected {} mode vectors, got {}", target.blocks.len(), f.len())));
    }
    target
        .blocks
        .iter()
        .zip(f)
        .enumerate()
        .map(|(mode, (b, fj))| {
            if fj.len() != b.matrix.n() {
                return Err(invalid("f", format!("mode {mode}: expected {} entries", b.matrix.n())));
            }
            Ok(factor_shifted(&b.matrix, lambda, mode, MAX_COND)?.solve(fj))
        })
        .collect()
}

/// Eigenvalues of one block, or of all blocks concatenated; sorted.
pub fn spectrum(target: &DiscreteOperator, mode: Option<usize>) -> Result<Vec<Complex64>> {
    match mode {
        Some(j) => {
            let b = target.blocks.get(j).ok_or_else(|| invalid("mode", format!("no block {j}")))?;
            linalg::eigenvalues(&b.matrix, j)
        }
        None => {
            let per: Vec<Vec<Complex64>> = target
                .blocks
                .par_iter()
                .enumerate()
                .map(|(j, b)| linalg::eigenvalues(&b.matrix, j))
                .collect::<Result<_>>()?;
            let mut all: Vec<Complex64> = per.into_iter().flatten().collect();
            linalg::sort_eigenvalues(&mut all);
            Ok(all)
        }
    }
}

/// Per-block spectra, unsorted across blocks.
pub fn block_spectra(target: &DiscreteOperator) -> Result<Vec<Vec<Complex64>>> {
    target.blocks.par_iter().enumerate().map(|(j, b)| linalg::eigenvalues(&b.matrix, j)).collect()
}

// ---------------------------------------------------------------------------
// Complex powers

#[derive(Debug, Clone)]
pub struct PowerRequest<'a> {
    pub z: Complex64,
    pub contour: &'a ContourQuadrature,
    pub target: &'a DiscreteOperator,
}

impl PowerRequest<'_> {
    pub fn validate(&self) -> Result<()> {
        if !(self.z.re < 0.0) {
            return Err(invalid("z", format!("Dunford powers need Re z < 0, got {}", self.z)));
        }
        validate_contour(self.target, self.contour, &block_spectra(self.target)?)
    }
}

/// The contour must separate the nonzero spectrum from Λ(δ,θ); zero
/// eigenvalues are allowed inside the disk.
pub fn validate_contour(target: &DiscreteOperator, contour: &ContourQuadrature, spectra: &[Vec<Complex64>]) -> Result<()> {
    let region = KeyholeRegion::new(contour.delta, contour.theta)?;
    let sector = region.sector();
    let big = spectra.iter().flatten().map(|l| l.norm()).fold(0.0, f64::max);
    for (mode, eigs) in spectra.iter().enumerate() {
        for &l in eigs {
            let a = l.norm();
            if a <= ZERO_EIG_REL * big || a == 0.0 {
                continue;
            }
            if a <= contour.delta {
                return Err(Error::ContourCollision {
                    eigenvalue: l,
                    mode,
                    detail: format!("nonzero eigenvalue inside the δ-disk (δ = {})", contour.delta),
                });
            }
            if in_sector(l, &sector) {
                return Err(Error::ContourCollision {
                    eigenvalue: l,
                    mode,
                    detail: format!("eigenvalue in the sector |arg λ| ≥ θ = {}", contour.theta),
                });
            }
            if contour.distance_to(l) <= 10.0 * f64::EPSILON * a.max(1.0) {
                return Err(Error::ContourCollision { eigenvalue: l, mode, detail: "eigenvalue on a node".into() });
            }
        }
    }
    let _ = target;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PowerResult {
    pub z: Complex64,
    pub matrices: ModeMatrices,
    /// Bound on the truncated tail: tail_bound · e^{θ|Im z|} · max_j |λ_T|‖R_j(λ_T)‖ / 2π.
    pub tail_estimate: f64,
}

/// A block as Q·T·Qᵀ with T banded (Q = I when no reduction was done).
struct Reduced {
    q: Option<DMatrix<f64>>,
    band: BandMatrix,
}

fn reduce(m: &BandMatrix) -> Reduced {
    if m.kl() > 1 && is_real_symmetric(m, 1e-13) {
        let (q, d, e) = SymmetricTridiagonal::new(real_symmetric_dense(m)).unpack();
        let n = m.n();
        let mut t = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            t.set(i, i, Complex64::new(d[i], 0.0));
            if i + 1 < n {
                t.set(i, i + 1, Complex64::new(e[i], 0.0));
                t.set(i + 1, i, Complex64::new(e[i], 0.0));
            }
        }
        Reduced { q: Some(q), band: t }
    } else {
        Reduced { q: None, band: m.clone() }
    }
}

fn expand(r: &Reduced, s: DMatrix<Complex64>) -> DMatrix<Complex64> {
    match &r.q {
        None => s,
        Some(q) => linalg::real_congruence(q, &s),
    }
}

/// Σ_nodes c_k(λ, w)·(λ − M)⁻¹ for each of the `count` coefficients c_k.
///
/// Column j of every resolvent is stacked into X_j (n × nodes), so each
/// column of all sums is one product X_j·C. Columns are independent, which
/// makes the parallel split deterministic.
fn weighted_resolvent_sums(
    band: &BandMatrix,
    nodes: &[(Complex64, Complex64)],
    coeffs: &(dyn Fn(Complex64, Complex64) -> Vec<Complex64> + Sync),
    count: usize,
    mode: usize,
) -> Result<Vec<DMatrix<Complex64>>> {
    let n = band.n();
    let m = nodes.len();
    // (λ − M)⁻¹ is complex symmetric when M is: fill the lower triangle only.
    let symmetric = is_real_symmetric(band, 0.0);
    let lus: Vec<BandLu> = nodes.par_iter().map(|&(l, _)| factor_shifted(band, l, mode, MAX_COND)).collect::<Result<_>>()?;
    let c: Vec<Vec<Complex64>> = nodes.iter().map(|&(l, w)| coeffs(l, w)).collect();
    let cr = DMatrix::from_fn(m, count, |i, k| c[i][k].re);
    let ci = DMatrix::from_fn(m, count, |i, k| c[i][k].im);
    let columns: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let first = if symmetric { j } else { 0 };
            let rows = n - first;
            let mut xr = DMatrix::<f64>::zeros(rows, m);
            let mut xi = DMatrix::<f64>::zeros(rows, m);
            let mut col = vec![ZERO; n];
            for (node, lu) in lus.iter().enumerate() {
                col.iter_mut().for_each(|x| *x = ZERO);
                col[j] = Complex64::new(1.0, 0.0);
                if symmetric {
                    lu.solve_lower_part(&mut col, j);
                } else {
                    lu.solve_in_place(&mut col);
                }
                for (i, x) in col[first..].iter().enumerate() {
                    xr[(i, node)] = x.re;
                    xi[(i, node)] = x.im;
                }
            }
            (&xr * &cr - &xi * &ci, &xr * &ci + &xi * &cr)
        })
        .collect();
    let mut out = vec![DMatrix::<Complex64>::zeros(n, n); count];
    for (j, (re, im)) in columns.iter().enumerate() {
        let first = if symmetric { j } else { 0 };
        for (k, o) in out.iter_mut().enumerate() {
            for i in first..n {
                let v = Complex64::new(re[(i - first, k)], im[(i - first, k)]);
                o[(i, j)] = v;
                if symmetric {
                    o[(j, i)] = v;
                }
            }
        }
    }
    Ok(out)
}

/// A^z for several z sharing one contour (and one set of resolvents).
pub fn dunford_powers(target: &DiscreteOperator, contour: &ContourQuadrature, zs: &[Complex64]) -> Result<Vec<PowerResult>> {
    for z in zs {
        if !(z.re < 0.0) {
            return Err(invalid("z", format!("Dunford powers need Re z < 0, got {z}")));
        }
    }
    validate_contour(target, contour, &block_spectra(target)?)?;
    dunford_powers_unchecked(target, contour, zs)
}

/// As [`dunford_powers`] without the eigenvalue-based contour validation.
pub fn dunford_powers_unchecked(
    target: &DiscreteOperator,
    contour: &ContourQuadrature,
    zs: &[Complex64],
) -> Result<Vec<PowerResult>> {
    dunford_powers_with(target, contour, zs, TailTreatment::Series)
}

/// What happens to the rays beyond the truncation radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailTreatment {
    /// Sum the Neumann series of the tail in closed form when ‖A‖/R ≤ e^{−1}
    /// (falls back to truncation otherwise).
    #[default]
    Series,
    /// Drop it; the estimate is tail_bound·e^{θ|Im z|}·|λ_T|‖R(λ_T)‖/2π.
    Truncate,
}

/// As [`dunford_powers_unchecked`], with the tail treatment chosen explicitly.
pub fn dunford_powers_with(
    target: &DiscreteOperator,
    contour: &ContourQuadrature,
    zs: &[Complex64],
    tail_mode: TailTreatment,
) -> Result<Vec<PowerResult>> {
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    let radius = contour.delta * contour.s_max.exp();
    let lambda_t = Complex64::from_polar(radius, contour.theta);
    let mut per_block: Vec<Vec<DMatrix<Complex64>>> = Vec::with_capacity(target.blocks.len());
    let mut estimates = vec![0.0f64; zs.len()];
    for (mode, block) in target.blocks.iter().enumerate() {
        let red = reduce(&block.matrix);
        let tail = match tail_mode {
            TailTreatment::Series => NeumannTail::new(&red.band, block.matrix.norm_inf(), radius, contour.theta, zs),
            TailTreatment::Truncate => None,
        };
        match &tail {
            Some(t) => {
                for (e, r) in estimates.iter_mut().zip(&t.remainder) {
                    *e = e.max(*r);
                }
            }
            None => {
                // |λ_T|·‖R(λ_T)‖_F at the truncation radius (Frobenius ≥ spectral norm).
                let lu = factor_shifted(&red.band, lambda_t, mode, MAX_COND)?;
                let bound = lambda_t.norm() * lu.inverse().norm();
                for (e, z) in estimates.iter_mut().zip(zs) {
                    let est = tail_bound(contour.delta, contour.s_max, z.re) * (contour.theta * z.im.abs()).exp() * bound
                        / (2.0 * PI);
                    *e = e.max(est);
                }
            }
        }

        let real = red.band.is_real();
        let mut results: Vec<DMatrix<Complex64>> = if real {
            // S(z) over the upper half; A^z = (S(z) − conj S(z̄)) / 2πi.
            let nodes = contour.upper_half();
            let mut evals: Vec<Complex64> = Vec::new();
            for z in zs {
                for cand in [*z, z.conj()] {
                    if !evals.contains(&cand) {
                        evals.push(cand);
                    }
                }
            }
            let ev = evals.clone();
            let sums = weighted_resolvent_sums(
                &red.band,
                &nodes,
                &move |l, w| ev.iter().map(|&z| w * powc(l, z)).collect(),
                evals.len(),
                mode,
            )?;
            zs.iter()
                .map(|z| {
                    let a = evals.iter().position(|e| e == z).unwrap();
                    let b = evals.iter().position(|e| *e == z.conj()).unwrap();
                    (&sums[a] - sums[b].map(|x| x.conj())) / two_pi_i
                })
                .collect()
        } else {
            let nodes: Vec<(Complex64, Complex64)> = contour.nodes.iter().map(|nd| (nd.lambda, nd.w)).collect();
            let zz = zs.to_vec();
            let sums = weighted_resolvent_sums(
                &red.band,
                &nodes,
                &move |l, w| zz.iter().map(|&z| w * powc(l, z)).collect(),
                zs.len(),
                mode,
            )?;
            sums.into_iter().map(|s| s / two_pi_i).collect()
        };
        if let Some(t) = tail {
            for (m, c) in results.iter_mut().zip(t.matrices) {
                *m += c;
            }
        }
        per_block.push(results.into_iter().map(|s| expand(&red, s)).collect());
    }
    Ok(zs
        .iter()
        .enumerate()
        .map(|(k, &z)| PowerResult { z, matrices: per_block.iter().map(|b| b[k].clone()).collect(), tail_estimate: estimates[k] })
        .collect())
}

/// The part of the rays beyond |λ| = R in closed form.
///
/// For |λ| > ‖A‖, (λ − A)⁻¹ = Σ_k A^k λ^{−k−1}, and along the two rays
/// ∫ λ^{z−k−1} dλ = R^{w}(e^{iθw} − e^{−iθw})/w with w = z − k. The series is
/// used only when ‖A‖/R ≤ e^{−1}; `remainder` bounds the omitted terms.
struct NeumannTail {
    matrices: Vec<DMatrix<Complex64>>,
    remainder: Vec<f64>,
}

impl NeumannTail {
    fn new(band: &BandMatrix, norm: f64, radius: f64, theta: f64, zs: &[Complex64]) -> Option<Self> {
        let q = norm / radius;
        if !(q <= (-1.0f64).exp()) {
            return None;
        }
        let max_im = zs.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let terms = if q == 0.0 { 1 } else { (((-39.0 - theta * max_im) / q.ln()).ceil() as usize).clamp(1, 400) };
        let n = band.n();
        let i = Complex64::new(0.0, 1.0);
        let coef = |z: Complex64, k: usize| -> Complex64 {
            let w = z - k as f64;
            let r_w = Complex64::new(radius, 0.0).powc(w);
            r_w * ((i * theta * w).exp() - (-i * theta * w).exp()) / w / Complex64::new(0.0, 2.0 * PI)
        };
        let mut matrices = vec![DMatrix::<Complex64>::zeros(n, n); zs.len()];
        let mut power = DMatrix::<Complex64>::identity(n, n);
        for k in 0..terms {
            if k > 0 {
                power = band_times_dense(band, &power);
            }
            for (m, &z) in matrices.iter_mut().zip(zs) {
                let c = coef(z, k);
                m.zip_apply(&power, |a, b| *a += c * b);
            }
        }
        let remainder = zs
            .iter()
            .map(|&z| coef(z, terms).norm().max(1e-300) * norm.powi(terms as i32) * (n as f64).sqrt() / (1.0 - q))
            .collect();
        Some(NeumannTail { matrices, remainder })
    }
}

fn band_times_dense(band: &BandMatrix, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = band.n();
    let mut out = DMatrix::<Complex64>::zeros(n, m.ncols());
    for c in 0..m.ncols() {
        for i in 0..n {
            let mut s = ZERO;
            for j in band.row_range(i) {
                s += band.get(i, j) * m[(j, c)];
            }
            out[(i, c)] = s;
        }
    }
    out
}

pub fn dunford_power(req: &PowerRequest) -> Result<PowerResult> {
    req.validate()?;
    Ok(dunford_powers_unchecked(req.target, req.contour, &[req.z])?.remove(0))
}

/// V·diag(λ^z)·V⁻¹ with the principal branch; refuses eigenvalues on the cut.
pub fn power_oracle(target: &DiscreteOperator, z: Complex64) -> Result<ModeMatrices> {
    Ok(power_oracle_many(target, &[z])?.remove(0))
}

/// [`power_oracle`] for several exponents, sharing the eigendecompositions.
pub fn power_oracle_many(target: &DiscreteOperator, zs: &[Complex64]) -> Result<Vec<ModeMatrices>> {
    let per_block: Vec<Vec<DMatrix<Complex64>>> = target
        .blocks
        .par_iter()
        .enumerate()
        .map(|(mode, b)| {
            let e = eigendecomposition(&b.matrix, mode)?;
            if !(e.cond < 1e8) {
                return Err(Error::IllConditioned { mode, cond: e.cond });
            }
            for &l in &e.values {
                if l.re <= 0.0 && l.im.abs() <= 1e-14 * l.norm().max(f64::MIN_POSITIVE) {
                    return Err(Error::BranchCut { eigenvalue: l, mode });
                }
            }
            Ok(zs.iter().map(|&z| e.apply(|l| powc(l, z))).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..zs.len()).map(|k| per_block.iter().map(|b| b[k].clone()).collect()).collect())
}

/// Contour defaults for a batch of exponents.
///
/// δ = min(0.5, ½·smallest nonzero |eigenvalue|); the rays stop at
/// R = e^{TAIL_MARGIN}·‖A‖, beyond which the tail is summed in closed form;
/// Gauss panels of 16 nodes are sized by θ (the poles sit at distance θ from
/// the rays in the s-variable) and by the oscillation e^{i Im z·s}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourChoice {
    pub delta: f64,
    pub theta: f64,
    pub s_max: f64,
    pub n_ray: usize,
    pub n_arc: usize,
    pub order: usize,
}

impl ContourChoice {
    pub fn build(&self, re_z: f64) -> Result<ContourQuadrature> {
        contour_nodes_with(
            KeyholeRegion::new(self.delta, self.theta)?,
            self.s_max,
            self.n_ray,
            self.n_arc,
            re_z,
            QuadratureRule::GaussLegendre { order: self.order },
        )
    }
}

pub fn auto_contour(spectra: &[Vec<Complex64>], norm_bound: f64, theta: f64, zs: &[Complex64]) -> Result<ContourChoice> {
    if zs.is_empty() {
        return Err(invalid("z", "no exponents given"));
    }
    let big = spectra.iter().flatten().map(|l| l.norm()).fold(0.0, f64::max);
    let small = spectra
        .iter()
        .flatten()
        .map(|l| l.norm())
        .filter(|&a| a > ZERO_EIG_REL * big && a > 0.0)
        .fold(f64::INFINITY, f64::min);
    let delta = if small.is_finite() { (0.5 * small).min(0.5) } else { 0.5 };
    let theta = contour_angle(spectra, theta);
    let mut max_im: f64 = 0.0;
    for z in zs {
        if !(z.re < 0.0) {
            return Err(invalid("z", format!("Dunford powers need Re z < 0, got {z}")));
        }
        max_im = max_im.max(z.im.abs());
    }
    // Beyond e^3·‖A‖ the tail is summed in closed form.
    let s_max = (norm_bound.max(big).max(delta) / delta).ln() + TAIL_MARGIN;
    let order = 16;
    let width = (1.2 * theta).min(2.0).min(16.0 / max_im.max(1.0));
    let panels = (s_max / width).ceil() as usize;
    // On |λ| = δ the integrand varies like e^{−Im z·φ}: mild.
    let arc_panels = (1.0 + theta * max_im / 4.0).ceil() as usize + 1;
    Ok(ContourChoice { delta, theta, s_max, n_ray: panels * order, n_arc: arc_panels * order, order })
}

/// The contour only has to keep the spectrum outside Λ(δ,θ); a smaller
/// angle than the sector's keeps |λ^z| ≤ e^{θ|Im z|}|λ|^{Re z} from swamping
/// the result with cancellation. Returns min(θ, max(π/4, max|arg λ| + 1/4)).
pub fn contour_angle(spectra: &[Vec<Complex64>], theta: f64) -> f64 {
    let widest = spectra.iter().flatten().filter(|l| l.norm() > 0.0).map(|&l| arg(l).abs()).fold(0.0, f64::max);
    theta.min((widest + 0.25).max(PI / 4.0))
}

/// A^z for each z (all Re z < 0) on the contour chosen by [`auto_contour`]
/// for the sector angle `theta`.
pub fn auto_powers(target: &DiscreteOperator, theta: f64, zs: &[Complex64]) -> Result<(ContourChoice, Vec<PowerResult>)> {
    let spectra = block_spectra(target)?;
    let choice = auto_contour(&spectra, norm_bound(target), theta, zs)?;
    let worst = zs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let contour = choice.build(worst)?;
    validate_contour(target, &contour, &spectra)?;
    Ok((choice, dunford_powers_unchecked(target, &contour, zs)?))
}

/// ln(R/‖A‖) at the truncation radius chosen by [`auto_contour`].
pub const TAIL_MARGIN: f64 = 3.0;

/// max_j ‖M_j‖_∞, a bound for every block's spectral radius.
pub fn norm_bound(target: &DiscreteOperator) -> f64 {
    target.blocks.iter().map(|b| b.matrix.norm_inf()).fold(0.0, f64::max)
}

/// E₀ = (2πi)⁻¹∮_{|λ|=δ}(λ − A)⁻¹dλ by the periodic trapezoid rule.
#[derive(Debug, Clone)]
pub struct Projection {
    pub matrices: ModeMatrices,
    /// max over blocks of ‖E₀² − E₀‖₂.
    pub idempotency_defect: f64,
}

pub fn spectral_projection_e0(target: &DiscreteOperator, delta: f64, n_arc: usize) -> Result<Projection> {
    if !(delta > 0.0) {
        return Err(invalid("delta", "must be positive"));
    }
    if n_arc < 2 {
        return Err(invalid("n_arc", "need at least 2 nodes"));
    }
    for (mode, eigs) in block_spectra(target)?.iter().enumerate() {
        for &l in eigs {
            if (l.norm() - delta).abs() <= 1e-10 * delta {
                return Err(Error::ContourCollision { eigenvalue: l, mode, detail: format!("|λ| = δ = {delta}") });
            }
        }
    }
    let mut matrices = Vec::with_capacity(target.blocks.len());
    let mut defect: f64 = 0.0;
    for (mode, b) in target.blocks.iter().enumerate() {
        let nodes: Vec<(Complex64, Complex64)> = (0..n_arc)
            .map(|k| {
                let l = Complex64::from_polar(delta, 2.0 * PI * k as f64 / n_arc as f64);
                (l, l / n_arc as f64)
            })
            .collect();
        let sums = weighted_resolvent_sums(&b.matrix, &nodes, &|_, w| vec![w], 1, mode)?;
        let e = sums.into_iter().next().unwrap();
        defect = defect.max(norm2(&(&e * &e - &e)));
        matrices.push(e);
    }
    Ok(Projection { matrices, idempotency_defect: defect })
}

/// A^{iy} := A^{−1+iy}·A.
pub fn imaginary_power(target: &DiscreteOperator, y: f64, contour: &ContourQuadrature) -> Result<ModeMatrices> {
    Ok(imaginary_powers(target, &[y], contour)?.remove(0))
}

pub fn imaginary_powers(target: &DiscreteOperator, ys: &[f64], contour: &ContourQuadrature) -> Result<Vec<ModeMatrices>> {
    let zs: Vec<Complex64> = ys.iter().map(|&y| Complex64::new(-1.0, y)).collect();
    shifted_powers(target, &zs, contour)
}

/// A^z for 0 > Re z > −1 computed as A^{z−1}·A (or any z, as A^{z−1}·A).
pub fn shifted_powers(target: &DiscreteOperator, zs: &[Complex64], contour: &ContourQuadrature) -> Result<Vec<ModeMatrices>> {
    let shifted: Vec<Complex64> = zs.iter().map(|z| z - 1.0).collect();
    let res = dunford_powers(target, contour, &shifted)?;
    Ok(res
        .into_iter()
        .map(|r| r.matrices.into_iter().zip(&target.blocks).map(|(m, b)| dense_times_band(&m, &b.matrix)).collect())
        .collect())
}

// ---------------------------------------------------------------------------
// Norm scans

/// Operator norm of one explicit block in ℓ_p: (lower, upper).
pub fn block_pnorm(m: &DMatrix<Complex64>, p: f64, seed: u64) -> (f64, f64) {
    linalg::pnorm_bounds(m, p, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub ray: String,
    pub radius: f64,
    pub lambda: Complex64,
    /// |λ|·‖(λ − A)⁻¹‖_{p→p}, worst block.
    pub value: f64,
    /// True when `value` is an estimated lower bound rather than exact.
    pub lower_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventScan {
    pub theta: f64,
    pub p: f64,
    pub rows: Vec<ScanRow>,
    pub sup: f64,
    /// Per ray: non-increasing over the last decade of radii (within `slack`).
    pub last_decade_nonincreasing: bool,
    pub slack: f64,
    pub pass: bool,
}

/// Relative slack allowed in the "non-increasing" test of a scan.
pub const SCAN_SLACK: f64 = 1e-8;

pub fn resolvent_norm_scan(
    target: &DiscreteOperator,
    sector: &Sector,
    radii: &[f64],
    p: f64,
    seed: u64,
) -> Result<ResolventScan> {
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("radii", "need positive, strictly ascending radii"));
    }
    if !(p > 1.0) {
        return Err(invalid("p", format!("p must lie in (1, ∞), got {p}")));
    }
    let theta = sector.theta();
    let mut rays = vec![("upper".to_string(), Complex64::from_polar(1.0, theta))];
    if (theta - PI).abs() > 1e-15 {
        rays.push(("lower".into(), Complex64::from_polar(1.0, -theta)));
    }
    rays.push(("negative".into(), Complex64::new(-1.0, 0.0)));
    rays.dedup_by(|a, b| (a.1 - b.1).norm() < 1e-15);

    let normal: Vec<Option<Vec<Complex64>>> = target
        .blocks
        .iter()
        .enumerate()
        .map(|(j, b)| {
            if (p - 2.0).abs() < 1e-15 && is_real_symmetric(&b.matrix, 1e-13) {
                linalg::eigenvalues(&b.matrix, j).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (name, dir) in &rays {
        for &r in radii {
            let lambda = dir * r;
            let mut worst: f64 = 0.0;
            let mut lower = false;
            for (mode, b) in target.blocks.iter().enumerate() {
                let norm = match &normal[mode] {
                    Some(eigs) => {
                        let d = eigs.iter().map(|e| (lambda - e).norm()).fold(f64::INFINITY, f64::min);
                        if d == 0.0 {
                            return Err(Error::ContourCollision {
                                eigenvalue: lambda,
                                mode,
                                detail: "scan point hits the spectrum".into(),
                            });
                        }
                        1.0 / d
                    }
                    None => {
                        lower = (p - 2.0).abs() >= 1e-15 || lower;
                        let lu = factor_shifted(&b.matrix, lambda, mode, MAX_COND).map_err(|_| Error::ContourCollision {
                            eigenvalue: lambda,
                            mode,
                            detail: "scan point hits the spectrum".into(),
                        })?;
                        let adj = factor_shifted(&b.matrix.adjoint(), lambda.conj(), mode, MAX_COND)?;
                        linalg::pnorm_estimate(
                            b.matrix.n(),
                            p,
                            |x| lu.solve(x),
                            |y| adj.solve(y),
                            if (p - 2.0).abs() < 1e-15 { 200 } else { 50 },
                            5,
                            seed ^ mode as u64,
                        )
                    }
                };
                worst = worst.max(r * norm);
            }
            rows.push(ScanRow { ray: name.clone(), radius: r, lambda, value: worst, lower_bound: lower });
        }
    }
    let sup = rows.iter().map(|r| r.value).fold(0.0, f64::max);
    let rmax = radii[radii.len() - 1];
    let mut nonincreasing = true;
    for (name, _) in &rays {
        let seq: Vec<f64> = rows.iter().filter(|r| &r.ray == name && r.radius >= rmax / 10.0 * (1.0 - 1e-12)).map(|r| r.value).collect();
        if seq.windows(2).any(|w| w[1] > w[0] * (1.0 + SCAN_SLACK)) {
            nonincreasing = false;
        }
    }
    Ok(ResolventScan {
        theta,
        p,
        rows,
        sup,
        last_decade_nonincreasing: nonincreasing,
        slack: SCAN_SLACK,
        pass: sup.is_finite() && nonincreasing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipRow {
    pub y: f64,
    /// ‖A^{iy}‖_{p→p}, worst block (estimated lower bound for p ≠ 2).
    pub norm: f64,
    /// e^{θ|y|}.
    pub e_theta_bound: f64,
    /// norm / e^{θ|y|}.
    pub ratio: f64,
    /// Riesz–Thorin upper bound (equal to `norm` for p = 2).
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectRow {
    pub z: Complex64,
    pub norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipScan {
    pub theta: f64,
    pub p: f64,
    pub rows: Vec<BipRow>,
    pub rect: Vec<RectRow>,
    pub sup: f64,
    pub sup_half_resolution: f64,
    pub sup_coarse: Option<f64>,
    pub rect_sup: f64,
    /// Largest ratio between the sups of the refinement levels.
    pub drift: f64,
    pub contour: ContourChoice,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BipOptions {
    pub y_max: f64,
    pub steps: usize,
    pub p: f64,
    pub seed: u64,
    /// Real parts sampled in the rectangle −0.1 ≤ Re z < 0.
    pub rect_re: [f64; 2],
}

impl Default for BipOptions {
    fn default() -> Self {
        BipOptions { y_max: 10.0, steps: 21, p: 2.0, seed: 0, rect_re: [-0.1, -0.05] }
    }
}

fn sup_ratio(norms: &[(f64, f64)], theta: f64) -> f64 {
    norms.iter().map(|(y, n)| n * (-theta * y.abs()).exp()).fold(0.0, f64::max)
}

/// e^{−θ|y|}‖A^{iy}‖ over y ∈ [−y_max, y_max] plus the strip −0.1 ≤ Re z < 0.
pub fn bip_scan(
    target: &DiscreteOperator,
    coarse: Option<&DiscreteOperator>,
    sector: &Sector,
    opts: &BipOptions,
) -> Result<BipScan> {
    if opts.steps < 3 {
        return Err(invalid("steps", "need at least 3 y-samples"));
    }
    if !(opts.y_max > 0.0) {
        return Err(invalid("y_max", "must be positive"));
    }
    let theta = sector.theta();
    let ys: Vec<f64> = (0..opts.steps).map(|k| -opts.y_max + 2.0 * opts.y_max * k as f64 / (opts.steps - 1) as f64).collect();
    let half_steps = opts.steps.div_ceil(2).max(2);
    let ys_half: Vec<f64> =
        (0..half_steps).map(|k| -opts.y_max + 2.0 * opts.y_max * k as f64 / (half_steps - 1) as f64).collect();

    // The rectangle is sampled on the half-resolution grid.
    let measure = |t: &DiscreteOperator, ys: &[f64], rect_ys: &[f64]| -> Result<(Vec<(f64, f64, f64)>, Vec<RectRow>, ContourChoice)> {
        let spectra = block_spectra(t)?;
        let mut zs: Vec<Complex64> = ys.iter().map(|&y| Complex64::new(0.0, y)).collect();
        for &re in &opts.rect_re {
            zs.extend(rect_ys.iter().map(|&y| Complex64::new(re, y)));
        }
        let shifted: Vec<Complex64> = zs.iter().map(|z| z - 1.0).collect();
        let choice = auto_contour(&spectra, norm_bound(t), theta, &shifted)?;
        let contour = choice.build(-1.0)?;
        validate_contour(t, &contour, &spectra)?;
        let powers = dunford_powers_unchecked(t, &contour, &shifted)?;
        let norms: Vec<(f64, f64)> = powers
            .par_iter()
            .enumerate()
            .map(|(k, pr)| {
                let mut lo: f64 = 0.0;
                let mut hi: f64 = 0.0;
                for (j, (m, b)) in pr.matrices.iter().zip(&t.blocks).enumerate() {
                    let az = dense_times_band(m, &b.matrix);
                    let (l, h) = block_pnorm(&az, opts.p, opts.seed ^ ((k as u64) << 16) ^ j as u64);
                    lo = lo.max(l);
                    hi = hi.max(h);
                }
                (lo, hi)
            })
            .collect();
        let main: Vec<(f64, f64, f64)> = ys.iter().zip(&norms).map(|(&y, &(l, h))| (y, l, h)).collect();
        let rect_rows = zs[ys.len()..]
            .iter()
            .zip(&norms[ys.len()..])
            .map(|(&z, &(l, _))| RectRow { z, norm: l, ratio: l * (-theta * z.im.abs()).exp() })
            .collect();
        Ok((main, rect_rows, choice))
    };

    let (main, rect, choice) = measure(target, &ys, &ys_half)?;
    let rows: Vec<BipRow> = main
        .iter()
        .map(|&(y, n, u)| {
            let e = (theta * y.abs()).exp();
            BipRow { y, norm: n, e_theta_bound: e, ratio: n / e, upper: u }
        })
        .collect();
    let sup = sup_ratio(&main.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>(), theta);
    // When the half grid is a subset of the full one the values are reused.
    let reused: Option<Vec<(f64, f64)>> = ys_half
        .iter()
        .map(|&y| main.iter().find(|r| (r.0 - y).abs() <= 1e-12 * opts.y_max).map(|r| (r.0, r.1)))
        .collect();
    let sup_half = match reused {
        Some(v) => sup_ratio(&v, theta),
        None => {
            let (half, _, _) = measure(target, &ys_half, &[])?;
            sup_ratio(&half.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>(), theta)
        }
    };
    let sup_coarse = match coarse {
        Some(c) => {
            let (m, _, _) = measure(c, &ys_half, &[])?;
            Some(sup_ratio(&m.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>(), theta))
        }
        None => None,
    };
    let rect_sup = rect.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let levels: Vec<f64> = [Some(sup), Some(sup_half), sup_coarse].into_iter().flatten().collect();
    let hi = levels.iter().cloned().fold(0.0, f64::max);
    let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let drift = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let pass = sup.is_finite() && rect_sup.is_finite() && drift < 2.0;
    Ok(BipScan {
        theta,
        p: opts.p,
        rows,
        rect,
        sup,
        sup_half_resolution: sup_half,
        sup_coarse,
        rect_sup,
        drift,
        contour: choice,
        pass,
    })
}

/// M·B for dense M and banded B.
pub fn dense_times_band(m: &DMatrix<Complex64>, b: &BandMatrix) -> DMatrix<Complex64> {
    let n = b.n();
    let mut out = DMatrix::<Complex64>::zeros(m.nrows(), n);
    for i in 0..n {
        for j in b.row_range(i) {
            let bij = b.get(i, j);
            if bij != ZERO {
                let src = m.column(i);
                out.column_mut(j).zip_apply(&src, |o, x| *o += x * bij);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Hardy inequalities

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardyTail {
    /// ∫₀^∞ (∫₀^t g)^p t^{−1−r} dt ≤ (p/r)^p ∫₀^∞ g^p t^{p−1−r} dt
    LowerTail,
    /// ∫₀^∞ (∫_t^∞ g)^p t^{−1+r} dt ≤ (p/r)^p ∫₀^∞ g^p t^{p−1+r} dt
    UpperTail,
}

/// Samples g(t_i) at t_i = e^{x_i}, x_i equispaced on [x_min, x_max].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardySamples {
    pub x_min: f64,
    pub x_max: f64,
    pub g: Vec<f64>,
}

impl HardySamples {
    pub fn from_fn(x_min: f64, x_max: f64, n: usize, g: impl Fn(f64) -> f64) -> Self {
        let h = (x_max - x_min) / (n - 1) as f64;
        HardySamples { x_min, x_max, g: (0..n).map(|i| g((x_min + i as f64 * h).exp())).collect() }
    }

    fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.g.len() - 1) as f64
    }

    fn t(&self, i: usize) -> f64 {
        (self.x_min + i as f64 * self.h()).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyReport {
    pub tail: HardyTail,
    pub p: f64,
    pub r: f64,
    pub lhs: f64,
    /// ∫ g^p t^{p−1∓r} dt.
    pub rhs_integral: f64,
    /// (p/r)^p · rhs_integral.
    pub bound: f64,
    pub pass: bool,
}

/// Trapezoid rule in x = log t for both sides; the inner integral is
/// accumulated node by node. Samples are taken to describe g on the grid
/// only: the lower tail adds ∫₀^{t₀} g ≈ g(t₀)·t₀ (exact for g constant
/// near 0), the upper tail treats g as zero beyond the last node.
pub fn hardy_check(samples: &HardySamples, p: f64, r: f64, tail: HardyTail) -> Result<HardyReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("need p > 1, got {p}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("r", format!("need r > 0, got {r}")));
    }
    let n = samples.g.len();
    if n < 2 || !(samples.x_max > samples.x_min) {
        return Err(invalid("g", "need at least two samples on an increasing grid"));
    }
    if let Some(i) = samples.g.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(invalid("g", format!("sample {i} is negative or not finite ({})", samples.g[i])));
    }
    let h = samples.h();
    let t: Vec<f64> = (0..n).map(|i| samples.t(i)).collect();
    let g = &samples.g;
    // ∫ f(t) dt = ∫ f(e^x) e^x dx
    let trap = |f: &dyn Fn(usize) -> f64| -> f64 {
        (0..n).map(|i| f(i) * if i == 0 || i == n - 1 { 0.5 * h } else { h }).sum()
    };
    let mut inner = vec![0.0; n];
    match tail {
        HardyTail::LowerTail => {
            inner[0] = g[0] * t[0];
            for i in 1..n {
                inner[i] = inner[i - 1] + 0.5 * h * (g[i - 1] * t[i - 1] + g[i] * t[i]);
            }
        }
        HardyTail::UpperTail => {
            // g vanishes beyond the grid.
            inner[n - 1] = 0.0;
            for i in (0..n - 1).rev() {
                inner[i] = inner[i + 1] + 0.5 * h * (g[i + 1] * t[i + 1] + g[i] * t[i]);
            }
        }
    }
    let (lhs_exp, rhs_exp) = match tail {
        HardyTail::LowerTail => (-1.0 - r, p - 1.0 - r),
        HardyTail::UpperTail => (-1.0 + r, p - 1.0 + r),
    };
    let mut lhs = trap(&|i| inner[i].powf(p) * t[i].powf(lhs_exp) * t[i]);
    // Lower tail beyond the grid: (∫₀^∞ g)^p ∫_{t_max}^∞ t^{−1−r} dt.
    if tail == HardyTail::LowerTail {
        lhs += inner[n - 1].powf(p) * t[n - 1].powf(-r) / r;
    } else {
        // Upper tail below the grid: (∫₀^∞ g)^p ∫_0^{t_min} t^{−1+r} dt.
        lhs += inner[0].powf(p) * t[0].powf(r) / r;
    }
    let rhs_integral = trap(&|i| g[i].powf(p) * t[i].powf(rhs_exp) * t[i]);
    let bound = (p / r).powf(p) * rhs_integral;
    Ok(HardyReport { tail, p, r, lhs, rhs_integral, bound, pass: lhs <= bound * (1.0 + 1e-6) })
}

/// Closed forms for g = t^a·1_(0,1]: (LHS, ∫ g^p t^{p−1∓r} dt).
///
/// Lower tail: ∫₀^t s^a ds = t^{a+1}/(a+1), so
/// LHS = (a+1)^{−p}[1/(p(a+1)−r) + 1/r] (the second term from t > 1) and the
/// right integral is 1/(p(a+1)−r); needs p(a+1) > r.
/// Upper tail: ∫_t^1 s^a ds = (1−t^{a+1})/(a+1), and the substitution
/// u = t^{a+1} gives LHS = (a+1)^{−p−1}B(r/(a+1), p+1); the right integral is
/// 1/(p(a+1)+r).
pub fn hardy_power_closed_form(a: f64, p: f64, r: f64, tail: HardyTail) -> (f64, f64) {
    let b = a + 1.0;
    match tail {
        HardyTail::LowerTail => (b.powf(-p) * (1.0 / (p * b - r) + 1.0 / r), 1.0 / (p * b - r)),
        HardyTail::UpperTail => (b.powf(-p - 1.0) * beta_fn(r / b, p + 1.0), 1.0 / (p * b + r)),
    }
}

fn beta_fn(x: f64, y: f64) -> f64 {
    (ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)).exp()
}

/// Lanczos approximation (g = 7, n = 9), good to ~1e-15 for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, &g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Principal-branch argument, exposed for reports.
pub fn principal_arg(l: Complex64) -> f64 {
    arg(l)
}
