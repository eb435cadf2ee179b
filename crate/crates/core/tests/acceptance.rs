//! Acceptance criteria 1–10. Each test prints one `criterion N: PASS|FAIL`
//! line (straight to stdout, so it shows without `--nocapture`) and then
//! asserts.

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use conecalc::calculus::*;
use conecalc::discretize::*;
use conecalc::geometry::Sector;
use conecalc::pde::*;
use conecalc::symbols::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and budgets.
const ROOT_TOL: f64 = 1e-10;
const ROOTS_BUDGET: Duration = Duration::from_secs(1);
const ORACLE_TOL: f64 = 1e-6;
const DUNFORD_BUDGET: Duration = Duration::from_secs(30);
const SEMIGROUP_TOL: f64 = 1e-6;
const IDEMPOTENCY_TOL: f64 = 1e-8;
const A0_TOL: f64 = 1e-6;
const SCAN_REFINEMENT_TOL: f64 = 0.10;
const CLOSED_FORM_TOL: f64 = 1e-12;
const UNIMODULAR_TOL: f64 = 1e-6;
const BIP_DRIFT: f64 = 2.0;
const BIP_BUDGET: Duration = Duration::from_secs(120);
const HARDY_SLACK: f64 = 1e-6;
const HARDY_QUAD_TOL: f64 = 1e-4;
const TWISTED_TOL: f64 = 1e-10;
const HEAT_BENCH_TOL: f64 = 1e-4;
const ORDER_TOL: f64 = 0.2;
const MAXREG_FACTOR: f64 = 10.0;
const REDUCTION_TOL: f64 = 1e-8;
const GL_TOL: f64 = 1e-3;
const QUASI_BUDGET: Duration = Duration::from_secs(300);

fn report(n: u32, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n}: {verdict} — {detail}");
    let _ = out.flush();
    assert!(pass, "criterion {n} failed: {detail}");
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rel(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn l2() -> WeightData {
    WeightData::new(0.0, 2.0, 1).unwrap()
}

/// −Δ + 1 on the model cone over S¹ (|k| ≤ 4), r ∈ [−12, 12].
fn laplacian_plus_one(n: usize, weight: WeightData) -> DiscreteOperator {
    let op = make_cone_laplacian(CrossSectionSpectrum::circle(4), 1.0, weight).unwrap();
    assemble(&op, &LogGrid::model_cone(-12.0, 12.0, n).unwrap()).unwrap()
}

/// Seeded SPD matrix with eigenvalues log-uniform in [lo, hi].
fn spd(n: usize, lo: f64, hi: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    let d = DMatrix::<f64>::from_fn(n, n, |i, j| if i == j { lo * (hi / lo).powf(rng.random_range(0.0..1.0)) } else { 0.0 });
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

fn power_targets() -> Vec<DiscreteOperator> {
    let mut t: Vec<DiscreteOperator> = (0..20).map(|s| DiscreteOperator::from_real(&spd(64, 0.1, 100.0, 1000 + s))).collect();
    t.push(laplacian_plus_one(256, l2()));
    t
}

fn exponents() -> Vec<Complex64> {
    vec![c(-1.0, 0.0), c(-0.5, 0.0), c(-0.1, 3.0), c(-0.1, -3.0), c(-0.1, 5.0), c(-0.1, -5.0)]
}

#[test]
fn criterion_01_indicial_roots() {
    let start = Instant::now();
    let op = make_cone_laplacian(CrossSectionSpectrum::circle(16), 0.0, l2()).unwrap();
    let roots = all_roots(&op).unwrap();
    let n = op.n() as f64;
    let h = (n - 1.0) / 2.0;
    let mut worst: f64 = 0.0;
    for (mode, &(nu, _)) in op.cross_section.groups().iter().enumerate() {
        let d = c(h * h - nu, 0.0).sqrt();
        let mut want = vec![c(h, 0.0) + d, c(h, 0.0) - d];
        for r in roots.iter().filter(|r| r.mode_index == mode) {
            for _ in 0..r.order {
                let (k, dist) = want
                    .iter()
                    .map(|w| (w - r.z).norm())
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("more roots than the closed form");
                worst = worst.max(dist);
                want.swap_remove(k);
            }
        }
        assert!(want.is_empty(), "mode {mode}: missing roots {want:?}");
    }
    let elapsed = start.elapsed();
    report(
        1,
        worst <= ROOT_TOL && elapsed < ROOTS_BUDGET,
        format!("33 modes, max |root − closed form| = {worst:.2e} (tol {ROOT_TOL:e}), {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_domain_gap() {
    // n = 1: roots ±k; the strip (−1, 1) holds the double root 0 and has ±1 on its edges.
    let circle = make_cone_laplacian(CrossSectionSpectrum::circle(8), 0.0, l2()).unwrap();
    let strip = gap_strip(&circle, 0.0);
    let count = strip_count(&circle, strip).unwrap();
    let oracle_1: usize = (0..=8i32)
        .map(|k| {
            let mult = if k == 0 { 1 } else { 2 };
            let roots = [k as f64, -(k as f64)];
            mult * roots.iter().filter(|&&z| z > strip.0 && z < strip.1).count()
        })
        .sum();
    // n = 4: ν = −k(k+3) on S⁴ with the harmonic multiplicities.
    let sphere: Vec<(f64, usize)> = vec![(0.0, 1), (-4.0, 5), (-10.0, 14), (-18.0, 30), (-28.0, 55)];
    let s4 = make_cone_laplacian(CrossSectionSpectrum::table(4, sphere.clone()).unwrap(), 0.0, WeightData::new(0.0, 2.0, 4).unwrap()).unwrap();
    let dim_4 = domain_gap_dimension(&s4, 0.0).unwrap();
    let strip4 = gap_strip(&s4, 0.0);
    let oracle_4: usize = sphere
        .iter()
        .map(|&(nu, mult)| {
            let d = (2.25 - nu).sqrt();
            mult * [1.5 + d, 1.5 - d].iter().filter(|&&z| z > strip4.0 && z < strip4.1).count()
        })
        .sum();
    let pass = count.inside == 2 && oracle_1 == 2 && dim_4 == 0 && oracle_4 == 0;
    report(
        2,
        pass,
        format!(
            "n=1: strip count {} (oracle {oracle_1}, edge roots {}), n=4: dim V = {dim_4} (oracle {oracle_4})",
            count.inside,
            count.on_boundary.len()
        ),
    );
}

#[test]
fn criterion_03_dunford_vs_oracle() {
    let start = Instant::now();
    let zs = exponents();
    let mut worst: f64 = 0.0;
    for t in power_targets() {
        let (_, got) = auto_powers(&t, PI / 2.0, &zs).unwrap();
        let want = power_oracle_many(&t, &zs).unwrap();
        for (g, w) in got.iter().zip(&want) {
            for (a, b) in g.matrices.iter().zip(w) {
                worst = worst.max(rel(a, b));
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        3,
        worst <= ORACLE_TOL && elapsed < DUNFORD_BUDGET,
        format!("20 SPD 64×64 + cone Laplacian+1 (N=256), max rel error {worst:.2e} (tol {ORACLE_TOL:e}), {elapsed:.2?}"),
    );
}

#[test]
fn criterion_04_semigroup_and_projection() {
    let pairs = [(c(-0.3, 0.0), c(-0.3, 0.0)), (c(-0.5, 0.0), c(-0.1, 3.0)), (c(-0.1, 5.0), c(-0.1, -5.0))];
    let mut semigroup: f64 = 0.0;
    for t in power_targets() {
        let mut zs = Vec::new();
        for &(z, w) in &pairs {
            zs.extend([z, w, z + w]);
        }
        let (_, r) = auto_powers(&t, PI / 2.0, &zs).unwrap();
        for k in 0..pairs.len() {
            for j in 0..t.blocks.len() {
                let prod = &r[3 * k].matrices[j] * &r[3 * k + 1].matrices[j];
                semigroup = semigroup.max(rel(&prod, &r[3 * k + 2].matrices[j]));
            }
        }
    }
    // Synthetic targets with a zero eigenvalue.
    let (mut idem, mut a0): (f64, f64) = (0.0, 0.0);
    for seed in 0..5u64 {
        let n = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut eigs: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..30.0)).collect();
        eigs[0] = 0.0;
        if seed % 2 == 1 {
            eigs[1] = 0.0;
        }
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = g.qr().q();
        let m = &q * DMatrix::<f64>::from_fn(n, n, |i, j| if i == j { eigs[i] } else { 0.0 }) * q.transpose();
        let t = DiscreteOperator::from_real(&((&m + m.transpose()) * 0.5));
        let e0 = spectral_projection_e0(&t, 0.5, 64).unwrap();
        idem = idem.max(e0.idempotency_defect);
        let choice = auto_contour(&block_spectra(&t).unwrap(), norm_bound(&t), PI / 2.0, &[c(-1.0, 0.0)]).unwrap();
        let zero = &shifted_powers(&t, &[c(0.0, 0.0)], &choice.build(-1.0).unwrap()).unwrap()[0][0];
        let want = DMatrix::<Complex64>::identity(n, n) - &e0.matrices[0];
        a0 = a0.max((zero - &want).norm() / want.norm());
    }
    report(
        4,
        semigroup <= SEMIGROUP_TOL && idem <= IDEMPOTENCY_TOL && a0 <= A0_TOL,
        format!("semigroup {semigroup:.2e} (tol {SEMIGROUP_TOL:e}), ‖E₀²−E₀‖ {idem:.2e} (tol {IDEMPOTENCY_TOL:e}), A⁰ vs I−E₀ {a0:.2e} (tol {A0_TOL:e})"),
    );
}

/// Not attainable as stated: for self-adjoint A with spectrum in [λ_min, ∞)
/// the negative ray gives exactly r/(r + λ_min), which increases in r. The
/// line reports FAIL; the test asserts everything that does hold (finite sup,
/// refinement, and that the scan reproduces that closed form), so it only
/// panics if the behaviour departs from this explained failure.
#[test]
fn criterion_05_resolvent_decay() {
    let radii: Vec<f64> = (0..=24).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
    let sector = Sector::new(PI / 2.0).unwrap();
    let mut scans = Vec::new();
    let mut closed_form: f64 = 0.0;
    let mut rise: f64 = 0.0;
    for n in [256, 512] {
        let t = laplacian_plus_one(n, l2());
        let lambda_min = block_spectra(&t).unwrap().iter().flatten().map(|e| e.re).fold(f64::INFINITY, f64::min);
        let s = resolvent_norm_scan(&t, &sector, &radii, 2.0, 0).unwrap();
        let last: Vec<f64> = s.rows.iter().filter(|r| r.ray == "negative" && r.radius >= 1e5 * (1.0 - 1e-12)).map(|r| r.value).collect();
        rise = rise.max(last.windows(2).map(|w| w[1] / w[0] - 1.0).fold(0.0, f64::max));
        for r in s.rows.iter().filter(|r| r.ray == "negative") {
            closed_form = closed_form.max((r.value - r.radius / (r.radius + lambda_min)).abs());
        }
        scans.push(s);
    }
    let (coarse, fine) = (&scans[0], &scans[1]);
    let change = (fine.sup - coarse.sup).abs() / coarse.sup;
    let attainable = coarse.sup.is_finite() && fine.sup.is_finite() && change < SCAN_REFINEMENT_TOL;
    let monotone = coarse.last_decade_nonincreasing && fine.last_decade_nonincreasing;
    let detail = format!(
        "sup |λ|‖R(λ)‖₂: {:.12} (N=256), {:.12} (N=512), change {change:.1e}; last decade non-increasing: {} / {}; \
         negative ray = r/(r+λ_min) to {closed_form:.1e}, rising by up to {rise:.1e} per step (exact value increases; see ledger)",
        coarse.sup, fine.sup, coarse.last_decade_nonincreasing, fine.last_decade_nonincreasing
    );
    let verdict = if attainable && monotone { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion 5: {verdict} — {detail}");
    let _ = out.flush();
    assert!(attainable, "{detail}");
    assert!(closed_form <= CLOSED_FORM_TOL, "{detail}");
}

#[test]
fn criterion_06_bounded_imaginary_powers() {
    let start = Instant::now();
    let sector = Sector::new(PI / 2.0).unwrap();
    let two = bip_scan(&laplacian_plus_one(256, l2()), Some(&laplacian_plus_one(128, l2())), &sector, &BipOptions::default()).unwrap();
    let unimodular = two.rows.iter().map(|r| (r.norm - 1.0).abs()).fold(0.0, f64::max);
    let mut detail = format!("p=2: max |‖A^{{iy}}‖₂ − 1| = {unimodular:.2e} (tol {UNIMODULAR_TOL:e})");
    let mut pass = unimodular <= UNIMODULAR_TOL;
    for p in [1.5, 3.0] {
        let w = WeightData::lp(p, 1).unwrap();
        let opts = BipOptions { p, ..Default::default() };
        let s = bip_scan(&laplacian_plus_one(128, w), Some(&laplacian_plus_one(64, w)), &sector, &opts).unwrap();
        pass &= s.sup.is_finite() && s.rect_sup.is_finite() && s.drift < BIP_DRIFT;
        detail.push_str(&format!("; p={p}: sup {:.4}, drift {:.3} (< {BIP_DRIFT})", s.sup, s.drift));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < BIP_BUDGET;
    report(6, pass, format!("{detail}, {elapsed:.1?}"));
}

#[test]
fn criterion_07_hardy_suite() {
    let (mut pass, mut cases, mut worst) = (true, 0, 0.0f64);
    // g = t^a on (0, 1] sampled in x = ln t; closed forms are the oracle.
    for a in [0.0, 0.5, 1.0, 2.0] {
        let g = HardySamples::from_fn(-40.0, 0.0, 40001, |t| t.powf(a));
        for tail in [HardyTail::LowerTail, HardyTail::UpperTail] {
            for (p, r) in [(2.0, 1.0), (1.5, 0.5), (3.0, 2.0)] {
                let rep = hardy_check(&g, p, r, tail).unwrap();
                let (lhs, rhs) = hardy_power_closed_form(a, p, r, tail);
                let err = ((rep.lhs - lhs) / lhs).abs().max(((rep.rhs_integral - rhs) / rhs).abs());
                worst = worst.max(err);
                pass &= rep.pass && rep.lhs <= rep.bound * (1.0 + HARDY_SLACK) && err <= HARDY_QUAD_TOL;
                cases += 1;
            }
        }
    }
    let unit = hardy_check(&HardySamples::from_fn(-40.0, 0.0, 8001, |_| 1.0), 2.0, 1.0, HardyTail::LowerTail).unwrap();
    pass &= (unit.lhs - 2.0).abs() <= 2.0 * HARDY_QUAD_TOL && (unit.bound - 4.0).abs() <= 4.0 * HARDY_QUAD_TOL;
    let zero = hardy_check(&HardySamples::from_fn(-10.0, 0.0, 101, |_| 0.0), 2.0, 1.0, HardyTail::LowerTail).unwrap();
    pass &= zero.pass && zero.lhs == 0.0;
    report(
        7,
        pass,
        format!(
            "{} cases, max rel error vs closed form {worst:.1e} (tol {HARDY_QUAD_TOL:e}); g=1, p=2, r=1: LHS {:.6}, bound {:.6}; g=0: LHS {}",
            cases + 1,
            unit.lhs,
            unit.bound,
            zero.lhs
        ),
    );
}

#[test]
fn criterion_08_twisted_homogeneity() {
    let grid = LogGrid::model_cone(-8.0, 8.0, 257).unwrap();
    let mut worst: f64 = 0.0;
    for w in [l2(), WeightData::lp(3.0, 1).unwrap()] {
        let op = make_cone_laplacian(CrossSectionSpectrum::circle(4), 0.0, w).unwrap();
        let a = assemble(&op, &grid).unwrap();
        for k in [1.0, 4.0] {
            for lambda in [c(-1.0, 0.0), c(0.5, 2.0), c(-3.0, -1.0)] {
                worst = worst.max(twisted_homogeneity_defect(&a, (k * grid.h).exp(), lambda, 11).unwrap());
            }
        }
    }
    report(8, worst <= TWISTED_TOL, format!("ρ ∈ {{e^h, e^4h}}, max relative defect {worst:.2e} (tol {TWISTED_TOL:e})"));
}

fn scalar_error(stepper: Stepper, steps: usize) -> f64 {
    let mut p = CauchyProblem::new(DiscreteOperator::diag(&[1.0]), 1.0, steps, stepper);
    p.forcing = Forcing::Separable { shape: vec![vec![c(1.0, 0.0)]], time: TimeProfile::Constant };
    let sol = solve_heat(&p).unwrap();
    (sol.u[steps][0][0].re - (1.0 - (-1f64).exp())).abs()
}

#[test]
fn criterion_09_heat_solver() {
    let bench = scalar_error(Stepper::Bdf2, 1000);
    let order = |s: Stepper| {
        let e: Vec<f64> = [250, 500, 1000].iter().map(|&n| scalar_error(s, n)).collect();
        ((e[0] / e[1]).log2() + (e[1] / e[2]).log2()) / 2.0
    };
    let (be, bdf) = (order(Stepper::BackwardEuler), order(Stepper::Bdf2));
    let template = CauchyProblem::new(laplacian_plus_one(128, l2()), 1.0, 2000, Stepper::Bdf2);
    let sweep = max_reg_diagnostic(&template, &[1.0, 10.0, 100.0, 1e3, 1e4], 2.0, 0).unwrap();
    let pass = bench <= HEAT_BENCH_TOL
        && (be - 1.0).abs() <= ORDER_TOL
        && (bdf - 2.0).abs() <= ORDER_TOL
        && sweep.max < MAXREG_FACTOR * sweep.median;
    report(
        9,
        pass,
        format!(
            "|u(1) − (1−e⁻¹)| = {bench:.2e}, orders BE {be:.3} BDF2 {bdf:.3}, R sweep max/median {:.3}",
            sweep.max / sweep.median
        ),
    );
}

#[test]
fn criterion_10_quasilinear() {
    let start = Instant::now();
    // a ≡ 1 against the heat path on the same grid.
    let grid = Grid2d::new(6.0, 64, 16).unwrap();
    let mut p = QuasilinearProblem::new(grid.clone(), Diffusivity::constant(1.0), 0.05, 20);
    p.snapshot_stride = 1;
    let q = solve_quasilinear(&p).unwrap();
    let mut heat = CauchyProblem::new(linear_heat_operator(&grid), 0.05, 20, Stepper::BackwardEuler);
    heat.initial = Some(angular_modes(&grid, &p.initial.sample(&grid)));
    let sol = solve_heat(&heat).unwrap();
    let mut reduction: f64 = 0.0;
    for (m, (_, u)) in q.snapshots.iter().enumerate() {
        let scale = sol.u[m].iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in angular_modes(&grid, u).iter().flatten().zip(sol.u[m].iter().flatten()) {
            reduction = reduction.max((a - b).norm() / scale);
        }
    }
    // Ginzburg–Landau without diffusion from u₀ = 0.1.
    let mut gl = QuasilinearProblem::new(Grid2d::new(4.0, 16, 8).unwrap(), Diffusivity::constant(1.0), 10.0, 10_000);
    gl.diffusion_scale = 0.0;
    gl.f = Nonlinearity::GinzburgLandau;
    gl.initial = InitialPreset::Uniform(0.1);
    let glr = solve_quasilinear(&gl).unwrap();
    let gl_err = glr.final_u.iter().map(|z| (z - 1.0).norm()).fold(0.0, f64::max);
    // The full 2d run.
    let full = QuasilinearProblem::new(
        Grid2d::new(12.0, 128, 64).unwrap(),
        Diffusivity::parse("1+s^2", DiffusivityArg::RealPart).unwrap(),
        0.1,
        100,
    );
    let fr = solve_quasilinear(&full).unwrap();
    let elapsed = start.elapsed();
    let pass = reduction <= REDUCTION_TOL
        && glr.completed
        && gl_err < GL_TOL
        && fr.completed
        && fr.monotone_residuals
        && elapsed < QUASI_BUDGET;
    report(
        10,
        pass,
        format!(
            "a≡1 vs heat {reduction:.2e} (tol {REDUCTION_TOL:e}), GL |u(10)−1| {gl_err:.2e}, 2d run T₁ = {} in {} steps, monotone residuals {}, {elapsed:.1?}",
            fr.t_attained,
            fr.steps.len(),
            fr.monotone_residuals
        ),
    );
}
