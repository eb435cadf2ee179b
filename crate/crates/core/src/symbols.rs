//! Fuchs-type operators in mode-diagonal form and everything that can be read
//! off their symbols: conormal polynomials, indicial roots, the weight line,
//! ellipticity samples and the finite-dimensional gap between the minimal and
//! maximal extension.
//!
//! Near the tip an operator of order μ is
//!
//! ```text
//! A = t^{-μ} Σ_{j=0}^{μ} a_j(t) (−t∂_t)^j
//! ```
//!
//! and on the ν-eigenspace of Δ_X(0) the coefficient a_j(t) acts as the
//! scalar α_j(t; ν). The conormal symbol of mode ν is then the polynomial
//! z ↦ Σ α_j(0; ν) z^j.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{in_sector, Sector};
use crate::poly::{MultiPoly, Poly};

/// Default relative tolerance for deciding the order of a zero.
pub const ZERO_ORDER_TOL: f64 = 1e-8;

/// How the eigenvalue list of Δ_X(0) came about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SpectrumKind {
    /// The unit circle, ν = −k².
    Circle,
    /// The N-point periodic second difference on the circle,
    /// ν = −(4/h²) sin²(kh/2) with h = 2π/N.
    DiscreteCircle { points: usize },
    /// A user-supplied table.
    Table,
}

/// Eigenvalues of Δ_X(0), grouped: each entry is (ν, multiplicity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionSpectrum {
    pub n: usize,
    pub eigenvalues: Vec<(f64, usize)>,
    pub mode_cutoff: usize,
    pub kind: SpectrumKind,
}

impl CrossSectionSpectrum {
    /// The circle S¹ with |k| ≤ k_max.
    pub fn circle(k_max: usize) -> Self {
        let eigenvalues = (0..=k_max).map(|k| (-((k * k) as f64), if k == 0 { 1 } else { 2 })).collect();
        CrossSectionSpectrum { n: 1, eigenvalues, mode_cutoff: k_max + 1, kind: SpectrumKind::Circle }
    }

    /// Spectrum of the periodic second difference on `points` nodes.
    pub fn discrete_circle(points: usize) -> Result<Self> {
        if points < 4 || points % 2 != 0 {
            return Err(invalid("points", format!("need an even count ≥ 4, got {points}")));
        }
        let h = 2.0 * PI / points as f64;
        let half = points / 2;
        let eigenvalues = (0..=half)
            .map(|k| {
                let s = (0.5 * k as f64 * h).sin();
                let nu = if k == 0 { 0.0 } else { -4.0 / (h * h) * s * s };
                (nu, if k == 0 || k == half { 1 } else { 2 })
            })
            .collect();
        Ok(CrossSectionSpectrum {
            n: 1,
            eigenvalues,
            mode_cutoff: half + 1,
            kind: SpectrumKind::DiscreteCircle { points },
        })
    }

    pub fn table(n: usize, eigenvalues: Vec<(f64, usize)>) -> Result<Self> {
        let s = CrossSectionSpectrum { n, mode_cutoff: eigenvalues.len(), eigenvalues, kind: SpectrumKind::Table };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(invalid("cross_section.n", "dimension must be at least 1"));
        }
        if self.eigenvalues.is_empty() || self.eigenvalues[0].0 != 0.0 {
            return Err(invalid("cross_section.eigenvalues", "the list must start with ν₀ = 0"));
        }
        for w in self.eigenvalues.windows(2) {
            if w[1].0 > w[0].0 {
                return Err(invalid("cross_section.eigenvalues", "eigenvalues must be sorted nonincreasing"));
            }
        }
        for &(nu, m) in &self.eigenvalues {
            if !(nu <= 0.0 && nu.is_finite()) {
                return Err(invalid("cross_section.eigenvalues", format!("ν = {nu} is not ≤ 0")));
            }
            if m == 0 {
                return Err(invalid("cross_section.eigenvalues", "multiplicities must be positive"));
            }
        }
        if self.mode_cutoff == 0 || self.mode_cutoff > self.eigenvalues.len() {
            return Err(invalid("cross_section.modes", "mode cutoff out of range"));
        }
        Ok(())
    }

    /// Retained (ν, multiplicity) groups.
    pub fn groups(&self) -> &[(f64, usize)] {
        &self.eigenvalues[..self.mode_cutoff]
    }

    /// Total number of retained modes counting multiplicity.
    pub fn total_modes(&self) -> usize {
        self.groups().iter().map(|g| g.1).sum()
    }

    /// For each group, the Fourier wavenumbers of its copies (circle-like
    /// spectra only): group k has copies +k and −k.
    pub fn wavenumbers(&self, group: usize) -> Option<Vec<i64>> {
        match self.kind {
            SpectrumKind::Circle | SpectrumKind::DiscreteCircle { .. } => {
                let k = group as i64;
                Some(if self.eigenvalues[group].1 == 1 { vec![k] } else { vec![k, -k] })
            }
            SpectrumKind::Table => None,
        }
    }
}

/// γ, p and the weight γ_p = (n+1)(1/2 − 1/p) that identifies K^{0,γ_p}_p
/// with the unweighted L_p of the cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightData {
    pub gamma: f64,
    pub p: f64,
    pub gamma_p: f64,
}

impl WeightData {
    pub fn new(gamma: f64, p: f64, n: usize) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(invalid("weight.p", format!("p must lie in (1, ∞), got {p}")));
        }
        if !gamma.is_finite() {
            return Err(invalid("weight.gamma", "must be finite"));
        }
        Ok(WeightData { gamma, p, gamma_p: gamma_p(n, p) })
    }

    /// γ = γ_p.
    pub fn lp(p: f64, n: usize) -> Result<Self> {
        Self::new(gamma_p(n, p), p, n)
    }
}

pub fn gamma_p(n: usize, p: f64) -> f64 {
    (n as f64 + 1.0) * (0.5 - 1.0 / p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuchsOperator {
    pub mu: usize,
    pub weight: WeightData,
    pub cross_section: CrossSectionSpectrum,
    /// α_j(t; ν) as polynomials in (t, nu), j = 0..=μ.
    pub coeff: Vec<MultiPoly>,
    /// s_j(ν̂) as polynomials in `xi`, j = 0..=μ.
    pub symbol: Vec<MultiPoly>,
    /// Constant c with A + c in place of A; added to the discrete matrices as c·I.
    ///
    /// The shift is kept apart from α₀: as a coefficient it reads c·t^μ, which
    /// vanishes when the coefficients are frozen at t = 0 and would be lost on
    /// the model cone.
    pub shift: f64,
    pub label: String,
}

pub const COEFF_VARS: [&str; 2] = ["t", "nu"];
pub const SYMBOL_VARS: [&str; 1] = ["xi"];

impl FuchsOperator {
    pub fn new(
        mu: usize,
        weight: WeightData,
        cross_section: CrossSectionSpectrum,
        coeff: Vec<MultiPoly>,
        symbol: Vec<MultiPoly>,
        shift: f64,
    ) -> Result<Self> {
        if mu < 1 {
            return Err(invalid("operator.mu", "order must be at least 1"));
        }
        if coeff.len() != mu + 1 {
            return Err(invalid("operator.a_j", format!("expected {} coefficients, got {}", mu + 1, coeff.len())));
        }
        if symbol.len() != mu + 1 {
            return Err(invalid("operator.s_j", format!("expected {} symbol polynomials, got {}", mu + 1, symbol.len())));
        }
        cross_section.validate()?;
        Ok(FuchsOperator { mu, weight, cross_section, coeff, symbol, shift, label: "custom".into() })
    }

    pub fn n(&self) -> usize {
        self.cross_section.n
    }

    /// β = (n+1)/2 − γ: the exponent of the weight isometry.
    pub fn beta(&self) -> f64 {
        (self.n() as f64 + 1.0) / 2.0 - self.weight.gamma
    }

    pub fn alpha(&self, j: usize, t: f64, nu: f64) -> f64 {
        self.coeff[j].eval(&[t, nu])
    }

    pub fn with_weight(&self, weight: WeightData) -> Self {
        FuchsOperator { weight, ..self.clone() }
    }

    pub fn with_shift(&self, shift: f64) -> Self {
        FuchsOperator { shift, ..self.clone() }
    }

    /// Conormal polynomial Σ_j α_j(0; ν_mode) z^j.
    pub fn conormal_poly(&self, mode: usize) -> Poly {
        let nu = self.cross_section.eigenvalues[mode].0;
        Poly::from_real(&(0..=self.mu).map(|j| self.alpha(j, 0.0, nu)).collect::<Vec<_>>())
    }
}

/// c0 − Δ for the cone metric dt² + t²g_X with t-independent g_X.
///
/// On the ν-mode, −Δ = t^{-2}{−(−t∂_t)² + (n−1)(−t∂_t) − ν}, so the conormal
/// polynomial is −z² + (n−1)z − ν.
pub fn make_cone_laplacian(spectrum: CrossSectionSpectrum, c0: f64, weight: WeightData) -> Result<FuchsOperator> {
    if !(c0 >= 0.0 && c0.is_finite()) {
        return Err(invalid("operator.shift", format!("shift must be ≥ 0, got {c0}")));
    }
    let n = spectrum.n as f64;
    let v = &COEFF_VARS;
    let coeff = vec![
        MultiPoly::parse("-nu", v)?,
        MultiPoly::constant(v, n - 1.0),
        MultiPoly::constant(v, -1.0),
    ];
    let symbol = vec![
        MultiPoly::parse("xi^2", &SYMBOL_VARS)?,
        MultiPoly::zero(&SYMBOL_VARS),
        MultiPoly::constant(&SYMBOL_VARS, -1.0),
    ];
    let mut op = FuchsOperator::new(2, weight, spectrum, coeff, symbol, c0)?;
    op.label = "laplacian".into();
    Ok(op)
}

pub fn conormal_symbol(op: &FuchsOperator, mode: usize, z: Complex64) -> Result<Complex64> {
    if mode >= op.cross_section.mode_cutoff {
        return Err(invalid("mode", format!("mode {mode} beyond cutoff {}", op.cross_section.mode_cutoff)));
    }
    Ok(op.conormal_poly(mode).eval(z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicialRoot {
    pub z: Complex64,
    pub mode_index: usize,
    pub order: usize,
    pub nu: f64,
    pub mult: usize,
}

/// All roots of every retained mode, regardless of position.
pub fn all_roots(op: &FuchsOperator) -> Result<Vec<IndicialRoot>> {
    let mut out = Vec::new();
    for (mode, &(nu, mult)) in op.cross_section.groups().iter().enumerate() {
        let poly = op.conormal_poly(mode);
        let roots = poly.roots(ZERO_ORDER_TOL).map_err(|e| match e {
            Error::DegeneratePolynomial { .. } => Error::DegeneratePolynomial { mode },
            other => other,
        })?;
        for (z, order) in roots {
            out.push(IndicialRoot { z, mode_index: mode, order, nu, mult });
        }
    }
    Ok(out)
}

/// Roots with lo < Re z < hi, ordered by mode, then Re z, then Im z.
pub fn indicial_roots(op: &FuchsOperator, strip: (f64, f64)) -> Result<Vec<IndicialRoot>> {
    let (lo, hi) = strip;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(invalid("strip", format!("need finite bounds lo < hi, got ({lo}, {hi})")));
    }
    Ok(all_roots(op)?.into_iter().filter(|r| r.z.re > lo && r.z.re < hi).collect())
}

/// Re z = (n+1)/2 − γ − μ: the line on which the conormal symbol must be
/// invertible for A : H^{s+μ,γ+μ} → H^{s,γ}.
pub fn weight_line(op: &FuchsOperator, gamma: f64) -> f64 {
    (op.n() as f64 + 1.0) / 2.0 - gamma - op.mu as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightLineCheck {
    pub line: f64,
    pub invertible: bool,
    /// Distance from the line to the nearest root's real part (∞ if no roots).
    pub margin: f64,
}

const LINE_TOL: f64 = 1e-10;

pub fn weight_line_invertible(op: &FuchsOperator, gamma: f64) -> Result<WeightLineCheck> {
    let line = weight_line(op, gamma);
    let margin = all_roots(op)?.iter().map(|r| (r.z.re - line).abs()).fold(f64::INFINITY, f64::min);
    Ok(WeightLineCheck { line, invertible: margin > LINE_TOL * (1.0 + line.abs()), margin })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    Principal,
    Rescaled,
}

/// Principal symbol t^{-μ} Σ s_j(ν̂)(−itτ)^j, or the rescaled one Σ s_j(ν̂)(−iτ)^j.
pub fn symbol_eval(op: &FuchsOperator, kind: SymbolKind, t: f64, tau: f64, nu_hat: f64) -> Result<Complex64> {
    if tau == 0.0 && nu_hat == 0.0 {
        return Err(invalid("(tau, nu_hat)", "symbols live off the zero section"));
    }
    if nu_hat < 0.0 {
        return Err(invalid("nu_hat", "must be ≥ 0"));
    }
    let (scale, x) = match kind {
        SymbolKind::Principal => {
            if !(t > 0.0) {
                return Err(invalid("t", "principal symbol needs t > 0"));
            }
            (t.powi(-(op.mu as i32)), Complex64::new(0.0, -t * tau))
        }
        SymbolKind::Rescaled => (1.0, Complex64::new(0.0, -tau)),
    };
    let mut acc = Complex64::new(0.0, 0.0);
    let mut pow = Complex64::new(1.0, 0.0);
    for s in &op.symbol {
        acc += s.eval(&[nu_hat]) * pow;
        pow *= x;
    }
    Ok(scale * acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSample {
    pub kind: SymbolKind,
    pub t: f64,
    pub tau: f64,
    pub nu_hat: f64,
    pub value: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub theta: f64,
    pub samples: usize,
    pub e1_pass: bool,
    pub e1_failure: Option<SymbolSample>,
    /// Largest |arg| deficit: min over samples of |arg σ| measured against θ.
    pub e1_min_angle: f64,
    pub e2_checked: bool,
    pub e2_pass: bool,
    pub e2_offending: Vec<Complex64>,
    pub weight_line: WeightLineCheck,
}

impl EllipticityReport {
    pub fn pass(&self) -> bool {
        self.e1_pass && (!self.e2_checked || self.e2_pass) && self.weight_line.invertible
    }
}

/// Sector condition on sampled principal and rescaled symbols (`e1_*`), and
/// on a supplied discrete model-cone spectrum (`e2_*`).
///
/// Eigenvalues with |λ| ≤ `zero_radius` are ignored in the spectral part: it
/// concerns the sector away from a neighbourhood of the origin.
pub fn check_ellipticity(
    op: &FuchsOperator,
    sector: &Sector,
    gamma: f64,
    scan_resolution: usize,
    model_spectrum: Option<&[Complex64]>,
    zero_radius: f64,
) -> Result<EllipticityReport> {
    if scan_resolution < 8 {
        return Err(invalid("scan_resolution", format!("need at least 8 samples, got {scan_resolution}")));
    }
    let mut samples = 0usize;
    let mut failure = None;
    let mut min_angle = f64::INFINITY;
    let mut visit = |kind, t: f64, tau: f64, nu_hat: f64| -> Result<()> {
        let value = symbol_eval(op, kind, t, tau, nu_hat)?;
        samples += 1;
        min_angle = min_angle.min(crate::geometry::arg(value).abs());
        if failure.is_none() && in_sector(value, sector) {
            failure = Some(SymbolSample { kind, t, tau, nu_hat, value });
        }
        Ok(())
    };
    // ν̂ ≥ 0, so only half of the unit circle matters: walk it from (τ,ν̂) = (1,0) to (−1,0).
    for k in 0..scan_resolution {
        let phi = PI / 2.0 - PI * k as f64 / (scan_resolution - 1) as f64;
        let (tau, nu_hat) = (phi.sin(), phi.cos().max(0.0));
        visit(SymbolKind::Rescaled, 0.0, tau, nu_hat)?;
        for i in 1..=scan_resolution {
            let t = i as f64 / scan_resolution as f64;
            visit(SymbolKind::Principal, t, tau, nu_hat)?;
        }
    }
    let (e2_checked, e2_pass, offending) = match model_spectrum {
        None => (false, false, Vec::new()),
        Some(eigs) => {
            let bad: Vec<_> = eigs.iter().copied().filter(|l| l.norm() > zero_radius && in_sector(*l, sector)).collect();
            (true, bad.is_empty(), bad)
        }
    };
    Ok(EllipticityReport {
        theta: sector.theta(),
        samples,
        e1_pass: failure.is_none(),
        e1_failure: failure,
        e1_min_angle: min_angle,
        e2_checked,
        e2_pass,
        e2_offending: offending,
        weight_line: weight_line_invertible(op, gamma)?,
    })
}

/// Open strip (n+1)/2 − γ − μ < Re z < (n+1)/2 − γ.
pub fn gap_strip(op: &FuchsOperator, gamma: f64) -> (f64, f64) {
    let hi = (op.n() as f64 + 1.0) / 2.0 - gamma;
    (hi - op.mu as f64, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCount {
    pub strip: (f64, f64),
    pub dimension: usize,
    /// Count over the fixed width-2 strip, reported when μ ≠ 2.
    pub width_two: Option<usize>,
}

fn count_in_strip(roots: &[IndicialRoot], strip: (f64, f64)) -> Result<usize> {
    let mut total = 0;
    for r in roots {
        for line in [strip.0, strip.1] {
            if (r.z.re - line).abs() <= LINE_TOL * (1.0 + line.abs()) {
                return Err(Error::RootOnBoundary { root: r.z, line });
            }
        }
        if r.z.re > strip.0 && r.z.re < strip.1 {
            total += r.order * r.mult;
        }
    }
    Ok(total)
}

/// Open-strip count that tolerates roots on the edges and lists them instead.
///
/// `domain_gap` refuses such configurations (the extension problem is then not
/// Fredholm on the weighted spaces); this is the bare count of the strip
/// inequality, useful for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripCount {
    pub strip: (f64, f64),
    pub inside: usize,
    pub on_boundary: Vec<IndicialRoot>,
}

pub fn strip_count(op: &FuchsOperator, strip: (f64, f64)) -> Result<StripCount> {
    let mut inside = 0;
    let mut on_boundary = Vec::new();
    for r in all_roots(op)? {
        if [strip.0, strip.1].iter().any(|&line| (r.z.re - line).abs() <= LINE_TOL * (1.0 + line.abs())) {
            on_boundary.push(r);
        } else if r.z.re > strip.0 && r.z.re < strip.1 {
            inside += r.order * r.mult;
        }
    }
    Ok(StripCount { strip, inside, on_boundary })
}

/// dim of the quotient of maximal by minimal domain, as a strip count.
pub fn domain_gap(op: &FuchsOperator, gamma: f64) -> Result<GapCount> {
    let roots = all_roots(op)?;
    let strip = gap_strip(op, gamma);
    let dimension = count_in_strip(&roots, strip)?;
    let width_two = if op.mu != 2 { Some(count_in_strip(&roots, (strip.1 - 2.0, strip.1))?) } else { None };
    Ok(GapCount { strip, dimension, width_two })
}

pub fn domain_gap_dimension(op: &FuchsOperator, gamma: f64) -> Result<usize> {
    Ok(domain_gap(op, gamma)?.dimension)
}

/// ω(t) t^{−p} (log t)^k, attached to one copy of a mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularFunction {
    pub mode_index: usize,
    /// Which of the `mult` eigenfunctions of the ν-eigenspace.
    pub copy: usize,
    pub exponent: Complex64,
    pub log_power: usize,
    pub cutoff: String,
}

impl SingularFunction {
    /// t^{−p}(log t)^k, cut-off omitted.
    pub fn eval(&self, t: f64) -> Complex64 {
        let lt = t.ln();
        (-self.exponent * lt).exp() * lt.powi(self.log_power as i32)
    }
}

pub fn singular_functions(op: &FuchsOperator, gamma: f64) -> Result<Vec<SingularFunction>> {
    let gap = domain_gap(op, gamma)?;
    let (lo, hi) = gap.strip;
    let mut out = Vec::new();
    for r in all_roots(op)?.into_iter().filter(|r| r.z.re > lo && r.z.re < hi) {
        for copy in 0..r.mult {
            for k in 0..r.order {
                out.push(SingularFunction {
                    mode_index: r.mode_index,
                    copy,
                    exponent: r.z,
                    log_power: k,
                    cutoff: "omega(t)".into(),
                });
            }
        }
    }
    debug_assert_eq!(out.len(), gap.dimension);
    Ok(out)
}

/// 2·max(p, p′) − 1 < n.
pub fn check_pq_condition(n: usize, p: f64) -> Result<bool> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("p must lie in (1, ∞), got {p}")));
    }
    let dual = p / (p - 1.0);
    Ok(2.0 * p.max(dual) - 1.0 < n as f64)
}
