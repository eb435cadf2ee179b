//! `conecalc verify`: an invariant matrix over fixed, small problems.
//!
//! Sizes are built in (N ≤ 128) so the whole matrix runs in seconds; only the
//! seed is taken from the configuration.

use std::f64::consts::PI;

use conecalc::calculus::*;
use conecalc::discretize::*;
use conecalc::geometry::{tail_bound, Sector};
use conecalc::pde::*;
use conecalc::symbols::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::commands::CmdError;
use crate::config::RunConfig;
use crate::report::{InvariantRow, Report};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rel(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn l2() -> conecalc::Result<WeightData> {
    WeightData::new(0.0, 2.0, 1)
}

/// shift − Δ over S¹ (|k| ≤ 4) on the model cone, r ∈ [−12, 12].
fn cone(shift: f64, n: usize) -> conecalc::Result<DiscreteOperator> {
    let op = make_cone_laplacian(CrossSectionSpectrum::circle(4), shift, l2()?)?;
    assemble(&op, &LogGrid::model_cone(-12.0, 12.0, n)?)
}

pub fn verify(cfg: &RunConfig, report: &mut Report) -> Result<Vec<bool>, CmdError> {
    let seed = cfg.seed;
    let rows = &mut report.invariants;

    // symbols
    let op = make_cone_laplacian(CrossSectionSpectrum::circle(8), 0.0, l2()?)?;
    let roots = all_roots(&op)?;
    let h = (op.n() as f64 - 1.0) / 2.0;
    let formula = roots
        .iter()
        .map(|r| {
            let d = c(h * h - r.nu, 0.0).sqrt();
            (r.z - (d + h)).norm().min((r.z - (-d + h)).norm())
        })
        .fold(0.0, f64::max);
    rows.push(InvariantRow::at_most("indicial root formula", formula, 1e-10, "−Δ over S¹, |k| ≤ 8"));
    let residual = roots
        .iter()
        .map(|r| conormal_symbol(&op, r.mode_index, r.z).map(|v| v.norm() / (1.0 + r.nu.abs())))
        .collect::<conecalc::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    rows.push(InvariantRow::at_most("conormal symbol vanishes at its roots", residual, 1e-10, "max |σ_c(z)|/(1+|ν|)"));
    let total = 2 * op.cross_section.groups().len();
    let counted: usize = roots.iter().map(|r| r.order).sum::<usize>();
    rows.push(InvariantRow::holds("root count = order × modes", counted == total, format!("{counted} roots with multiplicity, {total} expected")));

    let sphere = vec![(0.0, 1), (-4.0, 5), (-10.0, 14), (-18.0, 30)];
    let s4 = make_cone_laplacian(CrossSectionSpectrum::table(4, sphere.clone())?, 0.0, WeightData::new(0.0, 2.0, 4)?)?;
    let dim = domain_gap_dimension(&s4, 0.0)?;
    let (lo, hi) = gap_strip(&s4, 0.0);
    let oracle: usize = sphere
        .iter()
        .map(|&(nu, mult)| {
            let d = (2.25 - nu).sqrt();
            mult * [1.5 + d, 1.5 - d].iter().filter(|&&z| z > lo && z < hi).count()
        })
        .sum();
    rows.push(InvariantRow::holds("domain gap dimension", dim == oracle, format!("cone over S⁴: {dim}, direct count {oracle}")));

    // geometry
    let tails: Vec<f64> = [5.0, 10.0, 20.0, 40.0].iter().map(|&s| tail_bound(0.5, s, -0.5)).collect();
    let decreasing = tails.windows(2).all(|w| w[1] < w[0]);
    rows.push(InvariantRow::holds("tail bound decreases in s_max", decreasing, format!("{tails:?}")));

    // discretize
    let bare = cone(0.0, 128)?;
    let spectra = block_spectra(&bare)?;
    let big = spectra.iter().flatten().map(|l| l.norm()).fold(0.0, f64::max);
    let min_re = spectra.iter().flatten().map(|l| l.re).fold(f64::INFINITY, f64::min);
    let max_im = spectra.iter().flatten().map(|l| l.im.abs()).fold(0.0, f64::max);
    rows.push(InvariantRow::holds(
        "−Δ spectrum real and non-negative",
        min_re >= -1e-10 * big && max_im <= 1e-10 * big,
        format!("min Re λ = {min_re:e}, max |Im λ| = {max_im:e}, max |λ| = {big:e}"),
    ));
    rows.push(InvariantRow::at_most("symmetric blocks", bare.symmetry_defect(), 1e-12, "‖M − Mᵀ‖_F/‖M‖_F, worst block"));
    let grid = bare.grid.expect("assembled on a grid");
    let mut twisted: f64 = 0.0;
    for k in [1.0, 4.0] {
        for lambda in [c(-1.0, 0.0), c(0.5, 2.0)] {
            twisted = twisted.max(twisted_homogeneity_defect(&bare, (k * grid.h).exp(), lambda, seed)?);
        }
    }
    rows.push(InvariantRow::at_most("twisted homogeneity κ_ρ", twisted, 1e-10, "ρ ∈ {e^h, e^4h}, relative defect"));

    // calculus
    let target = cone(1.0, 128)?;
    let zs = [c(-1.0, 0.0), c(-0.5, 0.0), c(-0.1, 3.0), c(-0.4, 3.0)];
    let (choice, powers) = auto_powers(&target, PI / 2.0, &zs)?;
    let oracle = power_oracle_many(&target, &zs)?;
    let dunford = powers
        .iter()
        .zip(&oracle)
        .flat_map(|(p, o)| p.matrices.iter().zip(o).map(|(a, b)| rel(a, b)))
        .fold(0.0, f64::max);
    rows.push(InvariantRow::at_most("A^z by contour vs eigendecomposition", dunford, 1e-6, "1 − Δ, N = 128, four exponents"));
    let semigroup = (0..target.blocks.len())
        .map(|j| rel(&(&powers[1].matrices[j] * &powers[1].matrices[j]), &powers[0].matrices[j]))
        .fold(0.0, f64::max);
    rows.push(InvariantRow::at_most("semigroup A^z A^w = A^{z+w}", semigroup, 1e-6, "z = w = −½"));

    let (mut idem, mut a0): (f64, f64) = (0.0, 0.0);
    for s in 0..3u64 {
        let n = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s));
        let mut eigs: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..30.0)).collect();
        eigs[0] = 0.0;
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = g.qr().q();
        let m = &q * DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_vec(eigs)) * q.transpose();
        let t = DiscreteOperator::from_real(&((&m + m.transpose()) * 0.5));
        let e0 = spectral_projection_e0(&t, 0.5, 64)?;
        idem = idem.max(e0.idempotency_defect);
        let ch = auto_contour(&block_spectra(&t)?, norm_bound(&t), PI / 2.0, &[c(-1.0, 0.0)])?;
        let zero = &shifted_powers(&t, &[c(0.0, 0.0)], &ch.build(-1.0)?)?[0][0];
        let want = DMatrix::<Complex64>::identity(n, n) - &e0.matrices[0];
        a0 = a0.max(rel(zero, &want));
    }
    rows.push(InvariantRow::at_most("E₀ idempotent", idem, 1e-8, "‖E₀² − E₀‖, rank-one kernels"));
    rows.push(InvariantRow::at_most("A⁰ = I − E₀", a0, 1e-6, "relative Frobenius error"));

    let sector = Sector::new(PI / 2.0)?;
    let radii: Vec<f64> = (0..=12).map(|k| 10f64.powf(k as f64 / 2.0)).collect();
    let coarse = resolvent_norm_scan(&cone(1.0, 64)?, &sector, &radii, 2.0, seed)?;
    let fine = resolvent_norm_scan(&target, &sector, &radii, 2.0, seed)?;
    let change = (fine.sup - coarse.sup).abs() / coarse.sup;
    rows.push(InvariantRow::at_most(
        "resolvent sup finite and stable",
        if fine.sup.is_finite() { change } else { f64::INFINITY },
        0.10,
        format!("sup |λ|‖R(λ)‖₂ = {} (N = 128), {} (N = 64)", fine.sup, coarse.sup),
    ));
    let lambda_min = block_spectra(&target)?.iter().flatten().map(|l| l.re).fold(f64::INFINITY, f64::min);
    let closed = fine
        .rows
        .iter()
        .filter(|r| r.ray == "negative")
        .map(|r| (r.value - r.radius / (r.radius + lambda_min)).abs())
        .fold(0.0, f64::max);
    rows.push(InvariantRow::at_most("negative ray = r/(r + λ_min)", closed, 1e-12, "self-adjoint target"));

    let opts = BipOptions { y_max: 4.0, steps: 9, seed, ..Default::default() };
    let bip = bip_scan(&cone(1.0, 64)?, None, &sector, &opts)?;
    let unimodular = bip.rows.iter().map(|r| (r.norm - 1.0).abs()).fold(0.0, f64::max);
    rows.push(InvariantRow::at_most("‖A^{iy}‖₂ = 1", unimodular, 1e-6, "self-adjoint target, |y| ≤ 4"));

    let mut hardy: f64 = 0.0;
    let g = HardySamples::from_fn(-40.0, 0.0, 40001, |t| t);
    for tail in [HardyTail::LowerTail, HardyTail::UpperTail] {
        let rep = hardy_check(&g, 2.0, 1.0, tail)?;
        let (lhs, rhs) = hardy_power_closed_form(1.0, 2.0, 1.0, tail);
        hardy = hardy.max(((rep.lhs - lhs) / lhs).abs()).max(((rep.rhs_integral - rhs) / rhs).abs());
        if !rep.pass {
            hardy = f64::INFINITY;
        }
    }
    rows.push(InvariantRow::at_most("Hardy inequality vs closed form", hardy, 1e-4, "g = t on (0, 1], p = 2, r = 1, both tails"));

    // pde
    let scalar = |stepper: Stepper, steps: usize| -> conecalc::Result<f64> {
        let mut p = CauchyProblem::new(DiscreteOperator::diag(&[1.0]), 1.0, steps, stepper);
        p.forcing = Forcing::Separable { shape: vec![vec![c(1.0, 0.0)]], time: TimeProfile::Constant };
        let sol = solve_heat(&p)?;
        Ok((sol.u[steps][0][0].re - (1.0 - (-1f64).exp())).abs())
    };
    let order = (scalar(Stepper::Bdf2, 200)? / scalar(Stepper::Bdf2, 400)?).log2();
    rows.push(InvariantRow::at_most("BDF2 observed order", (order - 2.0).abs(), 0.2, format!("order {order:.3} on u′ + u = 1")));

    let mut decay = CauchyProblem::new(target.clone(), 0.5, 50, Stepper::BackwardEuler);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    decay.initial = Some(target.blocks.iter().map(|b| (0..b.matrix.n()).map(|_| c(rng.random_range(-1.0..1.0), 0.0)).collect()).collect());
    let sol = solve_heat(&decay)?;
    let norms: Vec<f64> = sol.u.iter().map(|u| mode_norm(&target, u)).collect();
    let decays = norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    rows.push(InvariantRow::holds("unforced heat flow decays", decays, format!("‖u(0)‖ = {}, ‖u(T)‖ = {}", norms[0], norms[norms.len() - 1])));

    let grid = Grid2d::new(6.0, 32, 8)?;
    let mut p = QuasilinearProblem::new(grid.clone(), Diffusivity::constant(1.0), 0.05, 10);
    p.snapshot_stride = 1;
    let q = solve_quasilinear(&p)?;
    let mut heat = CauchyProblem::new(linear_heat_operator(&grid), 0.05, 10, Stepper::BackwardEuler);
    heat.initial = Some(angular_modes(&grid, &p.initial.sample(&grid)));
    let sol = solve_heat(&heat)?;
    let mut reduction: f64 = 0.0;
    for (m, (_, u)) in q.snapshots.iter().enumerate() {
        let scale = sol.u[m].iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in angular_modes(&grid, u).iter().flatten().zip(sol.u[m].iter().flatten()) {
            reduction = reduction.max((a - b).norm() / scale);
        }
    }
    rows.push(InvariantRow::at_most("a ≡ 1 reduces to the heat solver", reduction, 1e-8, "max relative difference over snapshots"));

    report.push(&json!({ "rows": report.invariants.len(), "contour": choice, "seed": seed }));
    Ok(vec![])
}
