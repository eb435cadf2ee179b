//! Parabolic problems: the linear Cauchy problem u′ + Au = f with
//! maximal-regularity diagnostics, and a quasilinear diffusion stepper on the
//! two-dimensional truncated cone (0,1] × S¹.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::banded::{BandLu, BandMatrix};
use crate::calculus::block_spectra;
use crate::discretize::{DiscreteOperator, LogGrid};
use crate::error::{invalid, Error, Result};
use crate::poly::MultiPoly;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub type ModeVectors = Vec<Vec<Complex64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    BackwardEuler,
    Bdf2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeProfile {
    Constant,
    /// sin(ωτ).
    Sine(f64),
}

impl TimeProfile {
    pub fn at(&self, tau: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Sine(w) => (w * tau).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Forcing {
    Zero,
    /// f(τ) = profile(τ)·φ.
    Separable { shape: ModeVectors, time: TimeProfile },
    /// f(τ_m) for m = 0..=steps.
    Sampled(Vec<ModeVectors>),
}

#[derive(Debug, Clone)]
pub struct CauchyProblem {
    pub target: DiscreteOperator,
    pub t_final: f64,
    pub forcing: Forcing,
    /// Defaults to 0.
    pub initial: Option<ModeVectors>,
    /// Time-integrability exponent of the diagnostics.
    pub r_time: f64,
    pub stepper: Stepper,
    pub steps: usize,
}

impl CauchyProblem {
    pub fn new(target: DiscreteOperator, t_final: f64, steps: usize, stepper: Stepper) -> Self {
        CauchyProblem { target, t_final, forcing: Forcing::Zero, initial: None, r_time: 2.0, stepper, steps }
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(invalid("T", format!("must be positive, got {}", self.t_final)));
        }
        if self.steps < 2 {
            return Err(invalid("steps", format!("need at least 2, got {}", self.steps)));
        }
        if !(self.r_time >= 1.0) {
            return Err(invalid("r_time", format!("need r ≥ 1, got {}", self.r_time)));
        }
        let sizes: Vec<usize> = self.target.blocks.iter().map(|b| b.matrix.n()).collect();
        let check = |v: &ModeVectors, what: &'static str| -> Result<()> {
            if v.len() != sizes.len() || v.iter().zip(&sizes).any(|(x, &n)| x.len() != n) {
                return Err(invalid(what, "shape does not match the target's mode blocks"));
            }
            Ok(())
        };
        if let Some(u0) = &self.initial {
            check(u0, "initial")?;
        }
        match &self.forcing {
            Forcing::Zero => {}
            Forcing::Separable { shape, .. } => check(shape, "forcing")?,
            Forcing::Sampled(s) => {
                if s.len() != self.steps + 1 {
                    return Err(invalid("forcing", format!("need {} samples, got {}", self.steps + 1, s.len())));
                }
                for v in s {
                    check(v, "forcing")?;
                }
            }
        }
        Ok(())
    }

    fn forcing_at(&self, m: usize) -> ModeVectors {
        let tau = m as f64 * self.dt();
        match &self.forcing {
            Forcing::Zero => self.target.blocks.iter().map(|b| vec![ZERO; b.matrix.n()]).collect(),
            Forcing::Separable { shape, time } => {
                let s = time.at(tau);
                shape.iter().map(|v| v.iter().map(|x| x * s).collect()).collect()
            }
            Forcing::Sampled(s) => s[m].clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeatSolution {
    pub times: Vec<f64>,
    /// u(τ_m), m = 0..=steps.
    pub u: Vec<ModeVectors>,
    /// ‖u′(τ_m)‖ from the stepper's difference quotient, m = 1..=steps.
    pub du_norm: Vec<f64>,
    /// ‖Au(τ_m)‖, m = 1..=steps.
    pub au_norm: Vec<f64>,
    /// ‖f(τ_m)‖, m = 1..=steps.
    pub f_norm: Vec<f64>,
}

/// Discrete L₂ norm over all modes: √(Σ_j mult_j·h·Σ_i |v_ji|²) (h = 1
/// without a grid).
pub fn mode_norm(target: &DiscreteOperator, v: &[Vec<Complex64>]) -> f64 {
    let h = target.grid.as_ref().map_or(1.0, |g| g.h);
    target
        .blocks
        .iter()
        .zip(v)
        .map(|(b, x)| b.mult as f64 * h * x.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// c·I + d·M as a band matrix.
fn combine(m: &BandMatrix, c: f64, d: f64) -> BandMatrix {
    let mut out = m.map(|x| x * d);
    for i in 0..m.n() {
        out.add(i, i, Complex64::new(c, 0.0));
    }
    out
}

fn step_factor(m: &BandMatrix, c: f64, d: f64, mode: usize) -> Result<BandLu> {
    let lu = combine(m, c, d).lu();
    let cond = lu.cond_estimate();
    if !(cond < crate::calculus::MAX_COND) {
        return Err(Error::Singular { lambda: Complex64::new(-c / d, 0.0), mode, cond });
    }
    Ok(lu)
}

/// Implicit stepping of u′ + Au = f.
///
/// Backward Euler: (I + Δτ A)u⁺ = u + Δτ f⁺. BDF2:
/// (3/2 I + Δτ A)u⁺ = 2u − ½u⁻ + Δτ f⁺, started with one Euler step.
pub fn solve_heat(problem: &CauchyProblem) -> Result<HeatSolution> {
    problem.validate()?;
    let target = &problem.target;
    for (mode, eigs) in block_spectra(target)?.iter().enumerate() {
        if let Some(l) = eigs.iter().find(|l| !(l.re > 0.0)) {
            return Err(Error::ContourCollision {
                eigenvalue: *l,
                mode,
                detail: "the heat solver needs the spectrum in the open right half-plane; increase the shift".into(),
            });
        }
    }
    let dt = problem.dt();
    let be: Vec<BandLu> =
        target.blocks.iter().enumerate().map(|(j, b)| step_factor(&b.matrix, 1.0, dt, j)).collect::<Result<_>>()?;
    let bdf: Option<Vec<BandLu>> = match problem.stepper {
        Stepper::BackwardEuler => None,
        Stepper::Bdf2 => Some(
            target.blocks.iter().enumerate().map(|(j, b)| step_factor(&b.matrix, 1.5, dt, j)).collect::<Result<_>>()?,
        ),
    };
    let u0: ModeVectors = problem
        .initial
        .clone()
        .unwrap_or_else(|| target.blocks.iter().map(|b| vec![ZERO; b.matrix.n()]).collect());
    let mut u = vec![u0];
    let (mut du_norm, mut au_norm, mut f_norm) = (Vec::new(), Vec::new(), Vec::new());
    for m in 0..problem.steps {
        let f = problem.forcing_at(m + 1);
        let use_bdf = bdf.is_some() && m >= 1;
        let next: ModeVectors = (0..target.blocks.len())
            .into_par_iter()
            .map(|j| {
                let cur = &u[m][j];
                let mut rhs: Vec<Complex64> = if use_bdf {
                    let prev = &u[m - 1][j];
                    cur.iter().zip(prev).zip(&f[j]).map(|((c, p), fj)| 2.0 * c - 0.5 * p + dt * fj).collect()
                } else {
                    cur.iter().zip(&f[j]).map(|(c, fj)| c + dt * fj).collect()
                };
                if use_bdf {
                    bdf.as_ref().unwrap()[j].solve_in_place(&mut rhs);
                } else {
                    be[j].solve_in_place(&mut rhs);
                }
                rhs
            })
            .collect();
        if next.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { step: m + 1 });
        }
        let du: ModeVectors = (0..next.len())
            .map(|j| {
                (0..next[j].len())
                    .map(|i| {
                        if use_bdf {
                            (3.0 * next[j][i] - 4.0 * u[m][j][i] + u[m - 1][j][i]) / (2.0 * dt)
                        } else {
                            (next[j][i] - u[m][j][i]) / dt
                        }
                    })
                    .collect()
            })
            .collect();
        let au: ModeVectors = target.blocks.iter().zip(&next).map(|(b, x)| b.matrix.matvec(x)).collect();
        du_norm.push(mode_norm(target, &du));
        au_norm.push(mode_norm(target, &au));
        f_norm.push(mode_norm(target, &f));
        u.push(next);
    }
    let times = (0..=problem.steps).map(|m| m as f64 * dt).collect();
    Ok(HeatSolution { times, u, du_norm, au_norm, f_norm })
}

/// (Σ_m Δτ·x_m^r)^{1/r}.
pub fn time_norm(x: &[f64], dt: f64, r: f64) -> f64 {
    (x.iter().map(|v| dt * v.powf(r)).sum::<f64>()).powf(1.0 / r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxRegRow {
    pub omega: f64,
    pub du: f64,
    pub au: f64,
    pub f: f64,
    /// (‖u′‖ + ‖Au‖)/‖f‖ in L_r(0,T); `None` when f vanishes.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxRegReport {
    pub r_time: f64,
    pub rows: Vec<MaxRegRow>,
    pub max: f64,
    pub median: f64,
    pub notes: Vec<String>,
    pub pass: bool,
}

/// R(ω) for forcings sin(ωτ)·φ (φ seeded, shared by all ω; ω = 0 means a
/// constant-in-time forcing). Pass iff max R < 10·median R.
pub fn max_reg_diagnostic(template: &CauchyProblem, frequencies: &[f64], r_time: f64, seed: u64) -> Result<MaxRegReport> {
    if frequencies.is_empty() {
        return Err(invalid("frequencies", "empty sweep"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape: ModeVectors = template
        .target
        .blocks
        .iter()
        .map(|b| (0..b.matrix.n()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0)).collect())
        .collect();
    max_reg_with_shape(template, frequencies, r_time, shape)
}

/// As [`max_reg_diagnostic`] with an explicit spatial profile φ.
pub fn max_reg_with_shape(
    template: &CauchyProblem,
    frequencies: &[f64],
    r_time: f64,
    shape: ModeVectors,
) -> Result<MaxRegReport> {
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &omega in frequencies {
        let mut p = template.clone();
        p.r_time = r_time;
        p.initial = None;
        let time = if omega == 0.0 { TimeProfile::Constant } else { TimeProfile::Sine(omega) };
        p.forcing = Forcing::Separable { shape: shape.clone(), time };
        let sol = solve_heat(&p)?;
        let dt = p.dt();
        let du = time_norm(&sol.du_norm, dt, r_time);
        let au = time_norm(&sol.au_norm, dt, r_time);
        let f = time_norm(&sol.f_norm, dt, r_time);
        let ratio = if f > 0.0 {
            Some((du + au) / f)
        } else {
            notes.push(format!("ω = {omega}: f vanishes on the time grid, R undefined and skipped"));
            None
        };
        rows.push(MaxRegRow { omega, du, au, f, ratio });
    }
    let mut vals: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    vals.sort_by(f64::total_cmp);
    let (max, median) = if vals.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let k = vals.len();
        let med = if k % 2 == 1 { vals[k / 2] } else { 0.5 * (vals[k / 2 - 1] + vals[k / 2]) };
        (vals[k - 1], med)
    };
    let pass = !vals.is_empty() && max.is_finite() && max < 10.0 * median;
    Ok(MaxRegReport { r_time, rows, max, median, notes, pass })
}

// ---------------------------------------------------------------------------
// Quasilinear diffusion on (0,1] × S¹

/// Tensor grid: r = −log t on a truncated-cone log grid, x ∈ [0, 2π) periodic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2d {
    pub radial: LogGrid,
    pub nx: usize,
}

impl Grid2d {
    pub fn new(r_max: f64, nr: usize, nx: usize) -> Result<Self> {
        if nx < 4 || nx % 2 != 0 {
            return Err(invalid("nx", format!("need an even count ≥ 4, got {nx}")));
        }
        Ok(Grid2d { radial: LogGrid::truncated_cone(r_max, nr)?, nx })
    }

    pub fn nr(&self) -> usize {
        self.radial.n
    }

    pub fn hx(&self) -> f64 {
        2.0 * PI / self.nx as f64
    }

    pub fn x(&self, l: usize) -> f64 {
        l as f64 * self.hx()
    }

    pub fn len(&self) -> usize {
        self.nr() * self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// ‖u‖² = Σ |u|²·t²·h_r·h_x: the L₂ norm of the cone measure t dt dx.
    pub fn l2(&self, u: &[Complex64]) -> f64 {
        let (h, hx) = (self.radial.h, self.hx());
        (0..self.nr())
            .map(|i| {
                let w = (-2.0 * self.radial.r(i)).exp() * h * hx;
                u[i * self.nx..(i + 1) * self.nx].iter().map(|z| z.norm_sqr()).sum::<f64>() * w
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// How the scalar function a of one variable acts on the complex argument
/// s = t^c u ≅ (s₁, s₂).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusivityArg {
    /// a(s₁): ∂₁ = a′(s₁), ∂₂ = 0.
    #[default]
    RealPart,
    /// a(s₁² + s₂²): ∂_k = 2s_k·a′.
    SquaredModulus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diffusivity {
    pub a: MultiPoly,
    pub arg: DiffusivityArg,
    /// Admissible range of the argument of a (checked on evaluation).
    pub range: Option<(f64, f64)>,
}

impl Diffusivity {
    pub fn parse(src: &str, arg: DiffusivityArg) -> Result<Self> {
        Ok(Diffusivity { a: MultiPoly::parse(src, &["s"])?, arg, range: None })
    }

    pub fn constant(c: f64) -> Self {
        Diffusivity { a: MultiPoly::constant(&["s"], c), arg: DiffusivityArg::RealPart, range: None }
    }

    fn arg_of(&self, s: Complex64) -> f64 {
        match self.arg {
            DiffusivityArg::RealPart => s.re,
            DiffusivityArg::SquaredModulus => s.norm_sqr(),
        }
    }

    fn check(&self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(invalid("a", format!("non-finite argument {x}")));
        }
        match self.range {
            Some((lo, hi)) if !(x >= lo && x <= hi) => {
                Err(invalid("a", format!("argument {x} outside the configured range [{lo}, {hi}]")))
            }
            _ => Ok(()),
        }
    }

    /// a(s).
    pub fn value(&self, s: Complex64) -> Result<f64> {
        let x = self.arg_of(s);
        self.check(x)?;
        Ok(self.a.eval(&[x]))
    }

    /// (∂₁a(s), ∂₂a(s)).
    pub fn partials(&self, s: Complex64) -> Result<(f64, f64)> {
        let x = self.arg_of(s);
        self.check(x)?;
        let d = self.a.derivative(0).eval(&[x]);
        Ok(match self.arg {
            DiffusivityArg::RealPart => (d, 0.0),
            DiffusivityArg::SquaredModulus => (2.0 * s.re * d, 2.0 * s.im * d),
        })
    }

    pub fn is_constant(&self) -> bool {
        self.a.degree_in(0) == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    None,
    /// u − u³.
    GinzburgLandau,
    /// coefficient·u^exponent (principal branch).
    Power { exponent: f64, coefficient: f64 },
    /// coefficient·|u|^exponent.
    AbsPower { exponent: f64, coefficient: f64 },
}

impl Nonlinearity {
    pub fn eval(&self, u: Complex64) -> Complex64 {
        match *self {
            Nonlinearity::None => ZERO,
            Nonlinearity::GinzburgLandau => u - u * u * u,
            Nonlinearity::Power { exponent, coefficient } => {
                if exponent.fract() == 0.0 && exponent.abs() <= 64.0 {
                    u.powi(exponent as i32) * coefficient
                } else if u == ZERO {
                    ZERO
                } else {
                    u.powf(exponent) * coefficient
                }
            }
            Nonlinearity::AbsPower { exponent, coefficient } => Complex64::new(coefficient * u.norm().powf(exponent), 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPreset {
    Zero,
    Uniform(f64),
    /// A smooth bump supported in r ∈ (r₀, r₁), modulated by 1 + ½cos x.
    Bump { r0: f64, r1: f64, amplitude: f64 },
}

impl InitialPreset {
    pub fn sample(&self, grid: &Grid2d) -> Vec<Complex64> {
        let mut u = vec![ZERO; grid.len()];
        for i in 0..grid.nr() {
            let r = grid.radial.r(i);
            for l in 0..grid.nx {
                let v = match *self {
                    InitialPreset::Zero => 0.0,
                    InitialPreset::Uniform(c) => c,
                    InitialPreset::Bump { r0, r1, amplitude } => {
                        if r <= r0 || r >= r1 {
                            0.0
                        } else {
                            let s = (2.0 * r - r0 - r1) / (r1 - r0);
                            amplitude * (-1.0 / (1.0 - s * s)).exp() * 1f64.exp() * (1.0 + 0.5 * grid.x(l).cos())
                        }
                    }
                };
                u[i * grid.nx + l] = Complex64::new(v, 0.0);
            }
        }
        u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasilinearProblem {
    pub diffusivity: Diffusivity,
    /// Exponent c > 0 in a(t^c u).
    pub c: f64,
    pub f: Nonlinearity,
    /// Constant source g.
    pub g: f64,
    pub grid: Grid2d,
    pub initial: InitialPreset,
    pub t_final: f64,
    pub steps: usize,
    /// Multiplies a (and its derivative); 0 switches diffusion off.
    pub diffusion_scale: f64,
    /// Lower bound a_min > 0 enforced on the fly.
    pub a_min: f64,
    /// Time-integrability exponent q (only checked against (n+3)/2).
    pub q: f64,
    /// Relative PCG tolerance.
    pub tol: f64,
    /// Snapshot stride in accepted steps (0 = none).
    pub snapshot_stride: usize,
}

impl QuasilinearProblem {
    pub fn new(grid: Grid2d, diffusivity: Diffusivity, t_final: f64, steps: usize) -> Self {
        QuasilinearProblem {
            diffusivity,
            c: 1.0,
            f: Nonlinearity::None,
            g: 0.0,
            grid,
            initial: InitialPreset::Bump { r0: 0.5, r1: 3.0, amplitude: 1.0 },
            t_final,
            steps,
            diffusion_scale: 1.0,
            a_min: 1e-6,
            q: 4.0,
            tol: 1e-13,
            snapshot_stride: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(invalid("c", format!("must be positive, got {}", self.c)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(invalid("T", format!("must be positive, got {}", self.t_final)));
        }
        if self.steps < 1 {
            return Err(invalid("steps", "need at least one step"));
        }
        if !(self.diffusion_scale >= 0.0) {
            return Err(invalid("diffusion_scale", "must be non-negative"));
        }
        if !(self.a_min > 0.0) {
            return Err(invalid("a_min", "must be positive"));
        }
        if !self.g.is_finite() {
            return Err(invalid("g", "the source must be finite"));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(invalid("tol", "must lie in (0, 1)"));
        }
        Ok(())
    }

    fn t_c(&self, i: usize) -> f64 {
        (-self.c * self.grid.radial.r(i)).exp()
    }
}

/// Derivative along r of a grid row: central inside, second-order one-sided
/// at the ends (so constants have zero derivative).
fn d_r(f: &[Complex64], nr: usize, nx: usize, h: f64, i: usize, l: usize) -> Complex64 {
    let at = |k: usize| f[k * nx + l];
    if i == 0 {
        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
    } else if i == nr - 1 {
        (3.0 * at(nr - 1) - 4.0 * at(nr - 2) + at(nr - 3)) / (2.0 * h)
    } else {
        (at(i + 1) - at(i - 1)) / (2.0 * h)
    }
}

fn d_x(f: &[Complex64], nx: usize, hx: f64, i: usize, l: usize) -> Complex64 {
    let (lp, lm) = ((l + 1) % nx, (l + nx - 1) % nx);
    (f[i * nx + lp] - f[i * nx + lm]) / (2.0 * hx)
}

/// f̃(τ,u) = f(τ,u) − ∂₁a(t^c u)⟨grad(t^c Re u), grad u⟩ − i ∂₂a(t^c u)⟨grad(t^c Im u), grad u⟩.
///
/// ⟨grad v, grad w⟩ = ∂_t v ∂_t w + t⁻²∂_x v ∂_x w (bilinear), which on the
/// log grid (t∂_t = −∂_r) is e^{2r}(∂_r v ∂_r w + ∂_x v ∂_x w). The gradient
/// terms carry the diffusion scale.
pub fn assemble_ftilde(u: &[Complex64], problem: &QuasilinearProblem) -> Result<Vec<Complex64>> {
    let grid = &problem.grid;
    let (nr, nx, h, hx) = (grid.nr(), grid.nx, grid.radial.h, grid.hx());
    if u.len() != grid.len() {
        return Err(invalid("u", format!("expected {} values, got {}", grid.len(), u.len())));
    }
    if let Some(k) = u.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(invalid("u", format!("non-finite value at node {k}")));
    }
    let mut out: Vec<Complex64> = u.iter().map(|&z| problem.f.eval(z)).collect();
    if problem.diffusion_scale == 0.0 || problem.diffusivity.is_constant() {
        return Ok(out);
    }
    let tcu: Vec<Complex64> = (0..nr).flat_map(|i| u[i * nx..(i + 1) * nx].iter().map(move |z| z * problem.t_c(i))).collect();
    let re: Vec<Complex64> = tcu.iter().map(|z| Complex64::new(z.re, 0.0)).collect();
    let im: Vec<Complex64> = tcu.iter().map(|z| Complex64::new(z.im, 0.0)).collect();
    for i in 0..nr {
        let e2r = (2.0 * grid.radial.r(i)).exp();
        for l in 0..nx {
            let k = i * nx + l;
            let (a1, a2) = problem.diffusivity.partials(tcu[k])?;
            let (ur, ux) = (d_r(u, nr, nx, h, i, l), d_x(u, nx, hx, i, l));
            let mut coupling = ZERO;
            if a1 != 0.0 {
                let pair = d_r(&re, nr, nx, h, i, l) * ur + d_x(&re, nx, hx, i, l) * ux;
                coupling += a1 * e2r * pair;
            }
            if a2 != 0.0 {
                let pair = d_r(&im, nr, nx, h, i, l) * ur + d_x(&im, nx, hx, i, l) * ux;
                coupling += Complex64::new(0.0, a2) * e2r * pair;
            }
            out[k] -= problem.diffusion_scale * coupling;
        }
    }
    Ok(out)
}

/// Preconditioner: the step operator with a replaced by its angular mean,
/// diagonalised in x by the FFT; one real tridiagonal solve per wavenumber.
struct FftPreconditioner {
    nr: usize,
    nx: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Thomas factors per wavenumber: (modified diagonal, multipliers).
    factors: Vec<(Vec<f64>, Vec<f64>)>,
    off: f64,
}

impl FftPreconditioner {
    fn new(grid: &Grid2d, diag_mean: &[f64], dt: f64) -> Self {
        let (nr, nx, h, hx) = (grid.nr(), grid.nx, grid.radial.h, grid.hx());
        let mut planner = FftPlanner::new();
        let off = -dt / (h * h);
        let factors = (0..nx)
            .map(|k| {
                let s = (PI * k as f64 / nx as f64).sin();
                let lx = 4.0 / (hx * hx) * s * s;
                let mut d: Vec<f64> = diag_mean.iter().map(|&m| m + dt * (2.0 / (h * h) + lx)).collect();
                let mut mult = vec![0.0; nr];
                for i in 1..nr {
                    mult[i] = off / d[i - 1];
                    d[i] -= mult[i] * off;
                }
                (d, mult)
            })
            .collect();
        FftPreconditioner { nr, nx, forward: planner.plan_fft_forward(nx), inverse: planner.plan_fft_inverse(nx), factors, off }
    }

    fn apply(&self, r: &[Complex64]) -> Vec<Complex64> {
        let (nr, nx) = (self.nr, self.nx);
        let mut z = r.to_vec();
        for row in z.chunks_mut(nx) {
            self.forward.process(row);
        }
        for (k, (d, mult)) in self.factors.iter().enumerate() {
            for i in 1..nr {
                let prev = z[(i - 1) * nx + k];
                z[i * nx + k] -= mult[i] * prev;
            }
            z[(nr - 1) * nx + k] /= d[nr - 1];
            for i in (0..nr - 1).rev() {
                let next = z[(i + 1) * nx + k];
                z[i * nx + k] = (z[i * nx + k] - self.off * next) / d[i];
            }
        }
        let scale = 1.0 / nx as f64;
        for row in z.chunks_mut(nx) {
            self.inverse.process(row);
            row.iter_mut().for_each(|v| *v *= scale);
        }
        z
    }
}

/// y = (diag(w) − Δτ(L_r + L_x))x with zero ghosts in r and periodic x.
fn apply_step_operator(grid: &Grid2d, w: &[f64], dt: f64, x: &[Complex64]) -> Vec<Complex64> {
    let (nr, nx, h, hx) = (grid.nr(), grid.nx, grid.radial.h, grid.hx());
    let (cr, cx) = (dt / (h * h), dt / (hx * hx));
    let mut y = vec![ZERO; x.len()];
    for i in 0..nr {
        for l in 0..nx {
            let k = i * nx + l;
            let up = if i + 1 < nr { x[k + nx] } else { ZERO };
            let dn = if i > 0 { x[k - nx] } else { ZERO };
            let (lp, lm) = (i * nx + (l + 1) % nx, i * nx + (l + nx - 1) % nx);
            y[k] = w[k] * x[k] + cr * (2.0 * x[k] - up - dn) + cx * (2.0 * x[k] - x[lp] - x[lm]);
        }
    }
    y
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Preconditioned CG for the Hermitian positive definite step operator.
fn pcg(
    grid: &Grid2d,
    w: &[f64],
    dt: f64,
    b: &[Complex64],
    x0: &[Complex64],
    pre: &FftPreconditioner,
    tol: f64,
) -> (Vec<Complex64>, usize, f64) {
    let bnorm = dot(b, b).re.sqrt().max(f64::MIN_POSITIVE);
    let mut x = x0.to_vec();
    let ax = apply_step_operator(grid, w, dt, &x);
    let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let mut z = pre.apply(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 10 * grid.len().max(10);
    let mut it = 0;
    let mut rel = dot(&r, &r).re.sqrt() / bnorm;
    while rel > tol && it < max_iter {
        let ap = apply_step_operator(grid, w, dt, &p);
        let alpha = rz / dot(&p, &ap);
        for k in 0..x.len() {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        rel = dot(&r, &r).re.sqrt() / bnorm;
        it += 1;
        if rel <= tol {
            break;
        }
        z = pre.apply(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..p.len() {
            p[k] = z[k] + beta * p[k];
        }
    }
    (x, it, rel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiStep {
    pub tau: f64,
    pub dt: f64,
    /// ‖u⁺ − u‖/Δτ in the cone L₂ norm.
    pub residual: f64,
    pub pcg_iterations: usize,
    pub pcg_relative_residual: f64,
    pub a_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiReport {
    pub steps: Vec<QuasiStep>,
    /// Attained final time T₁ ≤ T.
    pub t_attained: f64,
    pub completed: bool,
    pub halvings: usize,
    pub rejected_steps: usize,
    pub monotone_residuals: bool,
    /// Sampled Lipschitz quotient of f̃ around u₀.
    pub lipschitz_probe: f64,
    pub banners: Vec<String>,
    pub diagnosis: Option<String>,
    pub snapshots: Vec<(f64, Vec<Complex64>)>,
    pub final_u: Vec<Complex64>,
}

pub const DIMENSION_BANNER: &str = "desk-scale surrogate: hypothesis (dimension) violated";

/// Largest number of consecutive step halvings before giving up.
const MAX_HALVINGS: usize = 30;

/// Sampled max ‖f̃(u₀+εv) − f̃(u₀)‖/‖εv‖ over seeded directions v.
pub fn lipschitz_probe(problem: &QuasilinearProblem, u0: &[Complex64], samples: usize, seed: u64) -> Result<f64> {
    let grid = &problem.grid;
    let base = assemble_ftilde(u0, problem)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = grid.l2(u0).max(1.0) * 1e-3;
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let v: Vec<Complex64> = (0..grid.len()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
        let nv = grid.l2(&v);
        if nv == 0.0 {
            continue;
        }
        let eps = scale / nv;
        let pert: Vec<Complex64> = u0.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
        let f = assemble_ftilde(&pert, problem)?;
        let diff: Vec<Complex64> = f.iter().zip(&base).map(|(a, b)| a - b).collect();
        best = best.max(grid.l2(&diff) / (eps * nv));
    }
    Ok(best)
}

/// Semi-implicit stepping u⁺ = u + Δτ[a(t^c u)Δ_h u⁺ + f̃(τ,u) + g].
///
/// Δ_h = e^{2r}(L_r + L_x) with zero ghosts in r (Dirichlet at t = 1 and at
/// the inner truncation). The step matrix I − Δτ·a·Δ_h becomes Hermitian
/// positive definite after scaling rows by e^{−2r}/a, and is solved by PCG.
/// A step is rejected and Δτ halved when the step residual grows by more
/// than 2× (or turns non-finite, or a drops below a_min).
pub fn solve_quasilinear(problem: &QuasilinearProblem) -> Result<QuasiReport> {
    solve_quasilinear_from(problem, problem.initial.sample(&problem.grid))
}

pub fn solve_quasilinear_from(problem: &QuasilinearProblem, u0: Vec<Complex64>) -> Result<QuasiReport> {
    problem.validate()?;
    let grid = &problem.grid;
    if u0.len() != grid.len() {
        return Err(invalid("initial", format!("expected {} values, got {}", grid.len(), u0.len())));
    }
    let (nr, nx) = (grid.nr(), grid.nx);
    let mut banners = vec![DIMENSION_BANNER.to_string()];
    if problem.q <= 2.0 {
        banners.push(format!("q = {} ≤ (n+3)/2 = 2: point evaluation of u is not covered", problem.q));
    }
    let lipschitz = lipschitz_probe(problem, &u0, 8, 7)?;

    let nominal = problem.t_final / problem.steps as f64;
    let mut dt = nominal;
    let mut tau = 0.0;
    let mut u = u0;
    let mut steps: Vec<QuasiStep> = Vec::new();
    let mut snapshots = Vec::new();
    if problem.snapshot_stride > 0 {
        snapshots.push((0.0, u.clone()));
    }
    let (mut halvings, mut rejected) = (0usize, 0usize);
    let mut diagnosis = None;
    let mut consecutive = 0usize;
    let end_tol = 1e-12 * problem.t_final;

    while problem.t_final - tau > end_tol {
        let h = dt.min(problem.t_final - tau);
        match quasi_step(problem, &u, tau, h) {
            Ok((next, iters, rel, amin)) => {
                let diff: Vec<Complex64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
                let residual = grid.l2(&diff) / h;
                let grows = steps.last().is_some_and(|s: &QuasiStep| residual > 2.0 * s.residual);
                if residual.is_finite() && !grows {
                    tau += h;
                    u = next;
                    steps.push(QuasiStep { tau, dt: h, residual, pcg_iterations: iters, pcg_relative_residual: rel, a_min: amin });
                    consecutive = 0;
                    if problem.snapshot_stride > 0 && steps.len() % problem.snapshot_stride == 0 {
                        snapshots.push((tau, u.clone()));
                    }
                    continue;
                }
                rejected += 1;
            }
            Err(Error::InvalidParameter { name: "a", reason }) => {
                diagnosis = Some(format!("lower bound on a violated at τ = {tau}: {reason}"));
                break;
            }
            Err(e) => return Err(e),
        }
        consecutive += 1;
        if consecutive > MAX_HALVINGS {
            diagnosis = Some(format!(
                "step size underflow at τ = {tau} (Δτ = {dt:e}): the solution left the neighbourhood where the problem is well posed"
            ));
            break;
        }
        dt *= 0.5;
        halvings += 1;
    }
    let completed = diagnosis.is_none();
    let monotone = steps.windows(2).all(|w| w[1].residual <= w[0].residual);
    let _ = (nr, nx);
    Ok(QuasiReport {
        steps,
        t_attained: tau,
        completed,
        halvings,
        rejected_steps: rejected,
        monotone_residuals: monotone,
        lipschitz_probe: lipschitz,
        banners,
        diagnosis,
        snapshots,
        final_u: u,
    })
}

/// One semi-implicit step; returns (u⁺, PCG iterations, PCG residual, min a).
fn quasi_step(problem: &QuasilinearProblem, u: &[Complex64], tau: f64, dt: f64) -> Result<(Vec<Complex64>, usize, f64, f64)> {
    let grid = &problem.grid;
    let (nr, nx) = (grid.nr(), grid.nx);
    let ft = assemble_ftilde(u, problem)?;
    let rhs: Vec<Complex64> = u.iter().zip(&ft).map(|(x, f)| x + dt * (f + problem.g)).collect();
    let _ = tau;
    if problem.diffusion_scale == 0.0 {
        return Ok((rhs, 0, 0.0, 0.0));
    }
    let mut a = vec![0.0; u.len()];
    let mut amin = f64::INFINITY;
    for i in 0..nr {
        let tc = problem.t_c(i);
        for l in 0..nx {
            let k = i * nx + l;
            let v = problem.diffusion_scale * problem.diffusivity.value(u[k] * tc)?;
            if !(v >= problem.a_min) {
                return Err(invalid("a", format!("a(t^c u) = {v} < a_min = {} at node ({i}, {l})", problem.a_min)));
            }
            amin = amin.min(v);
            a[k] = v;
        }
    }
    // Row scaling by e^{−2r}/a.
    let w: Vec<f64> = (0..u.len()).map(|k| (-2.0 * grid.radial.r(k / nx)).exp() / a[k]).collect();
    let b: Vec<Complex64> = rhs.iter().zip(&w).map(|(x, s)| x * s).collect();
    let mean: Vec<f64> = (0..nr).map(|i| w[i * nx..(i + 1) * nx].iter().sum::<f64>() / nx as f64).collect();
    let pre = FftPreconditioner::new(grid, &mean, dt);
    let (x, iters, rel) = pcg(grid, &w, dt, &b, u, &pre, problem.tol);
    if rel > problem.tol.max(1e-10) {
        return Err(Error::NoConvergence { mode: 0 });
    }
    Ok((x, iters, rel, amin))
}

/// Per-wavenumber view of a 2d field: û_k(r_i) = (1/N_x)Σ_l u(r_i, x_l)e^{−ikx_l}.
pub fn angular_modes(grid: &Grid2d, u: &[Complex64]) -> Vec<Vec<Complex64>> {
    let (nr, nx) = (grid.nr(), grid.nx);
    let fft = FftPlanner::new().plan_fft_forward(nx);
    let mut rows: Vec<Complex64> = u.to_vec();
    for row in rows.chunks_mut(nx) {
        fft.process(row);
    }
    (0..nx).map(|k| (0..nr).map(|i| rows[i * nx + k] / nx as f64).collect()).collect()
}

/// Inverse of [`angular_modes`].
pub fn from_angular_modes(grid: &Grid2d, modes: &[Vec<Complex64>]) -> Vec<Complex64> {
    let (nr, nx) = (grid.nr(), grid.nx);
    let fft = FftPlanner::new().plan_fft_inverse(nx);
    let mut out = vec![ZERO; nr * nx];
    for i in 0..nr {
        let row = &mut out[i * nx..(i + 1) * nx];
        for k in 0..nx {
            row[k] = modes[k][i];
        }
        fft.process(row);
    }
    out
}

/// The linear operator −e^{2r}(L_r + L_x) of the quasilinear scheme with
/// a ≡ 1, as one radial block per FFT wavenumber: the heat path on the same
/// grid.
pub fn linear_heat_operator(grid: &Grid2d) -> DiscreteOperator {
    let (nr, nx, h, hx) = (grid.nr(), grid.nx, grid.radial.h, grid.hx());
    let blocks = (0..nx)
        .map(|k| {
            let s = (PI * k as f64 / nx as f64).sin();
            let lx = 4.0 / (hx * hx) * s * s;
            let mut m = BandMatrix::zeros(nr, 1, 1);
            for i in 0..nr {
                let e = (2.0 * grid.radial.r(i)).exp();
                m.set(i, i, Complex64::new(e * (2.0 / (h * h) + lx), 0.0));
                if i > 0 {
                    m.set(i, i - 1, Complex64::new(-e / (h * h), 0.0));
                }
                if i + 1 < nr {
                    m.set(i, i + 1, Complex64::new(-e / (h * h), 0.0));
                }
            }
            let nu = k.min(nx - k) as f64;
            crate::discretize::ModeBlock { index: k, nu, mult: 1, matrix: m }
        })
        .collect();
    let mut op = DiscreteOperator::from_matrices(&[]);
    op.grid = Some(grid.radial);
    op.blocks = blocks;
    op.label = "quasilinear a≡1 heat operator".into();
    op
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn scalar(stepper: Stepper, steps: usize) -> f64 {
        let mut p = CauchyProblem::new(DiscreteOperator::diag(&[1.0]), 1.0, steps, stepper);
        p.forcing = Forcing::Separable { shape: vec![vec![c(1.0)]], time: TimeProfile::Constant };
        let sol = solve_heat(&p).unwrap();
        (sol.u[steps][0][0].re - (1.0 - (-1f64).exp())).abs()
    }

    #[test]
    fn scalar_benchmark_and_orders() {
        assert!(scalar(Stepper::Bdf2, 1000) <= 1e-4);
        for (stepper, order) in [(Stepper::BackwardEuler, 1.0), (Stepper::Bdf2, 2.0)] {
            let e: Vec<f64> = [250, 500, 1000].iter().map(|&n| scalar(stepper, n)).collect();
            for w in e.windows(2) {
                let obs = (w[0] / w[1]).log2();
                assert!((obs - order).abs() <= 0.2, "{stepper:?}: {obs}");
            }
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let p = CauchyProblem::new(DiscreteOperator::diag(&[1.0, 3.0]), 1.0, 10, Stepper::Bdf2);
        let sol = solve_heat(&p).unwrap();
        assert!(sol.u.iter().flatten().flatten().all(|z| *z == ZERO));
    }

    #[test]
    fn heat_refuses_nonpositive_spectrum() {
        let p = CauchyProblem::new(DiscreteOperator::diag(&[0.0, 3.0]), 1.0, 10, Stepper::Bdf2);
        assert!(solve_heat(&p).is_err());
    }

    #[test]
    fn constant_diffusivity_leaves_f_alone() {
        let grid = Grid2d::new(4.0, 16, 8).unwrap();
        let mut p = QuasilinearProblem::new(grid.clone(), Diffusivity::constant(2.0), 0.1, 10);
        p.f = Nonlinearity::GinzburgLandau;
        let u = InitialPreset::Bump { r0: 0.5, r1: 3.0, amplitude: 0.7 }.sample(&grid);
        let ft = assemble_ftilde(&u, &p).unwrap();
        for (a, b) in ft.iter().zip(&u) {
            assert_eq!(*a, p.f.eval(*b));
        }
    }

    #[test]
    fn constant_argument_kills_coupling() {
        let grid = Grid2d::new(4.0, 16, 8).unwrap();
        let mut p = QuasilinearProblem::new(grid.clone(), Diffusivity::parse("1+s^2", DiffusivityArg::RealPart).unwrap(), 0.1, 10);
        p.c = 1.0;
        let u: Vec<Complex64> = (0..grid.len()).map(|k| c((grid.radial.r(k / grid.nx)).exp())).collect();
        let ft = assemble_ftilde(&u, &p).unwrap();
        assert!(ft.iter().all(|z| z.norm() < 1e-9), "{:?}", ft.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }

    #[test]
    fn angular_round_trip() {
        let grid = Grid2d::new(3.0, 8, 8).unwrap();
        let u = InitialPreset::Bump { r0: 0.2, r1: 2.5, amplitude: 1.0 }.sample(&grid);
        let back = from_angular_modes(&grid, &angular_modes(&grid, &u));
        for (a, b) in u.iter().zip(&back) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn unit_diffusivity_matches_heat_path() {
        let grid = Grid2d::new(4.0, 24, 8).unwrap();
        let mut p = QuasilinearProblem::new(grid.clone(), Diffusivity::constant(1.0), 0.05, 10);
        p.initial = InitialPreset::Bump { r0: 0.5, r1: 3.0, amplitude: 1.0 };
        p.snapshot_stride = 1;
        let q = solve_quasilinear(&p).unwrap();
        assert!(q.completed && q.steps.len() == 10);
        let mut heat = CauchyProblem::new(linear_heat_operator(&grid), 0.05, 10, Stepper::BackwardEuler);
        heat.initial = Some(angular_modes(&grid, &p.initial.sample(&grid)));
        let sol = solve_heat(&heat).unwrap();
        for (m, (_, u)) in q.snapshots.iter().enumerate() {
            let modes = angular_modes(&grid, u);
            let scale = sol.u[m].iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
            for (a, b) in modes.iter().flatten().zip(sol.u[m].iter().flatten()) {
                assert!((a - b).norm() <= 1e-8 * scale, "step {m}");
            }
        }
    }

    #[test]
    fn ginzburg_landau_without_diffusion() {
        let grid = Grid2d::new(2.0, 8, 4).unwrap();
        let mut p = QuasilinearProblem::new(grid, Diffusivity::constant(1.0), 10.0, 10_000);
        p.diffusion_scale = 0.0;
        p.f = Nonlinearity::GinzburgLandau;
        p.initial = InitialPreset::Uniform(0.1);
        let q = solve_quasilinear(&p).unwrap();
        assert!(q.completed);
        let exact = 1.0 / (1.0 + (1.0 / 0.01 - 1.0) * (-20f64).exp()).sqrt();
        for z in &q.final_u {
            assert!((z.re - 1.0).abs() < 1e-3);
            assert!((z.re - exact).abs() < 1e-3);
        }
    }

    #[test]
    fn energy_decays_for_real_data() {
        let grid = Grid2d::new(4.0, 24, 8).unwrap();
        let mut p = QuasilinearProblem::new(grid.clone(), Diffusivity::parse("1+s^2", DiffusivityArg::RealPart).unwrap(), 0.02, 10);
        p.snapshot_stride = 1;
        let q = solve_quasilinear(&p).unwrap();
        let norms: Vec<f64> = q.snapshots.iter().map(|(_, u)| grid.l2(u)).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]), "{norms:?}");
    }

    #[test]
    fn bump_run_completes() {
        let grid = Grid2d::new(4.0, 32, 16).unwrap();
        let p = QuasilinearProblem::new(grid, Diffusivity::parse("1+s^2", DiffusivityArg::RealPart).unwrap(), 0.1, 20);
        let q = solve_quasilinear(&p).unwrap();
        assert!(q.completed, "{:?}", q.diagnosis);
        assert!((q.t_attained - 0.1).abs() < 1e-12);
        assert!(q.banners.iter().any(|b| b == DIMENSION_BANNER));
        assert!(q.monotone_residuals, "{:?}", q.steps.iter().map(|s| s.residual).collect::<Vec<_>>());
    }

    #[test]
    fn diffusivity_round_trips_through_json() {
        let d = Diffusivity::parse("1+s^2", DiffusivityArg::SquaredModulus).unwrap();
        let back: Diffusivity = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back.a.eval(&[0.5]), d.a.eval(&[0.5]));
    }

    #[test]
    fn max_reg_matches_closed_form_at_zero_frequency() {
        let p = CauchyProblem::new(DiscreteOperator::diag(&[1.0]), 1.0, 1000, Stepper::Bdf2);
        let rep = max_reg_with_shape(&p, &[0.0], 2.0, vec![vec![c(1.0)]]).unwrap();
        let (e1, e2) = ((-1f64).exp(), (-2f64).exp());
        let du = ((1.0 - e2) / 2.0).sqrt();
        let au = (1.0 - 2.0 * (1.0 - e1) + (1.0 - e2) / 2.0).sqrt();
        let exact = du + au;
        let got = rep.rows[0].ratio.unwrap();
        assert!((got - exact).abs() <= 0.05 * exact, "{got} vs {exact}");
    }

    #[test]
    fn zero_forcing_is_skipped_with_a_note() {
        let p = CauchyProblem::new(DiscreteOperator::diag(&[1.0]), 1.0, 10, Stepper::Bdf2);
        let rep = max_reg_with_shape(&p, &[0.0], 2.0, vec![vec![ZERO]]).unwrap();
        assert!(rep.rows[0].ratio.is_none() && rep.notes.len() == 1 && !rep.pass);
    }

    #[test]
    fn coupling_term_is_second_order() {
        // u = e^{−(r−2)²}(1 + 0.3 cos x), a(s) = 1 + s², c = 1: the coupling is
        // 2s·e^{2r}(∂_r s ∂_r u + ∂_x s ∂_x u) with s = e^{−r}u.
        let err = |nr: usize, nx: usize| {
            let grid = Grid2d::new(4.0, nr, nx).unwrap();
            let p = QuasilinearProblem::new(grid.clone(), Diffusivity::parse("1+s^2", DiffusivityArg::RealPart).unwrap(), 0.1, 1);
            let mut u = vec![ZERO; grid.len()];
            let mut exact = vec![0.0; grid.len()];
            for i in 0..grid.nr() {
                let r = grid.radial.r(i);
                for l in 0..nx {
                    let x = grid.x(l);
                    let g = (-(r - 2.0) * (r - 2.0)).exp();
                    let (ang, dang) = (1.0 + 0.3 * x.cos(), -0.3 * x.sin());
                    let uu = g * ang;
                    let ur = -2.0 * (r - 2.0) * uu;
                    let ux = g * dang;
                    let sv = (-r).exp() * uu;
                    let (sr, sx) = ((-r).exp() * (ur - uu), (-r).exp() * ux);
                    u[i * nx + l] = c(uu);
                    exact[i * nx + l] = -2.0 * sv * (2.0 * r).exp() * (sr * ur + sx * ux);
                }
            }
            let ft = assemble_ftilde(&u, &p).unwrap();
            ft.iter().zip(&exact).map(|(a, b)| (a.re - b).abs()).fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(41, 32), err(81, 64));
        let order = (coarse / fine).log2();
        assert!((order - 2.0).abs() < 0.3, "{coarse} {fine} {order}");
    }
}
