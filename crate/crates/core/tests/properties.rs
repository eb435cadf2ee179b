//! Property tests for the module invariants.

use std::f64::consts::PI;

use conecalc::calculus::*;
use conecalc::discretize::*;
use conecalc::geometry::*;
use conecalc::pde::*;
use conecalc::poly::MultiPoly;
use conecalc::symbols::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rel(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Q·diag(eigs)·Qᵀ with a seeded orthogonal Q.
fn symmetric_with(eigs: &[f64], seed: u64) -> DMatrix<f64> {
    let n = eigs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = g.qr().q();
    let d = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_column_slice(eigs));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

fn spd(n: usize, lo: f64, hi: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let eigs: Vec<f64> = (0..n).map(|_| lo * (hi / lo).powf(rng.random_range(0.0..1.0))).collect();
    symmetric_with(&eigs, seed)
}

fn z_grid() -> Vec<Complex64> {
    let mut zs = Vec::new();
    for re in [-1.0, -0.5, -0.1] {
        for im in [0.0, 1.0, -1.0, 5.0, -5.0] {
            zs.push(c(re, im));
        }
    }
    zs
}

// ---------------------------------------------------------------------------
// geometry

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nodes_are_closed_under_conjugation(
        delta in 0.05f64..2.0,
        theta in 0.3f64..3.0,
        n_ray in 2usize..120,
        n_arc in 2usize..40,
        gauss in any::<bool>(),
    ) {
        let rule = if gauss { QuadratureRule::GaussLegendre { order: 6 } } else { QuadratureRule::Trapezoid };
        let q = contour_nodes_with(KeyholeRegion::new(delta, theta).unwrap(), 10.0, n_ray, n_arc, -0.5, rule).unwrap();
        let scale = delta * 10f64.exp();
        // Ray and arc endpoints coincide, so match on (λ, w) jointly.
        let gap = |a: &ContourNode, n: &ContourNode| (a.lambda - n.lambda.conj()).norm() + (a.w + n.w.conj()).norm();
        for n in &q.nodes {
            let mirror = q.nodes.iter().min_by(|a, b| gap(a, n).total_cmp(&gap(b, n))).unwrap();
            prop_assert!((mirror.lambda - n.lambda.conj()).norm() <= 1e-13 * scale);
            prop_assert!((mirror.w + n.w.conj()).norm() <= 1e-13 * scale);
        }
    }
}

fn scalar_error(a: f64, z: Complex64, n_ray: usize, n_arc: usize) -> f64 {
    // Rays long enough that the truncation (e^{−0.1·400}·e^{3π/2}) is far below
    // the quadrature error being compared.
    let q = contour_nodes(KeyholeRegion::new(0.5, PI / 2.0).unwrap(), 400.0, n_ray, n_arc, z.re).unwrap();
    let v = q.integrate(|l| powc(l, z) / (l - a)) / c(0.0, 2.0 * PI);
    (v - powc(c(a, 0.0), z)).norm()
}

#[test]
fn doubling_nodes_never_increases_the_scalar_error() {
    for a in [1.0, 2.0, 10.0] {
        for z in [c(-1.0, 0.0), c(-0.5, 0.0), c(-0.1, 3.0), c(-0.1, -3.0)] {
            let mut prev = f64::INFINITY;
            for k in 0..4 {
                let m = 1usize << k;
                let err = scalar_error(a, z, 4000 * m, 32 * m);
                assert!(err <= prev * (1.0 + 1e-9) + 1e-14, "a={a} z={z}: {err} after {prev}");
                prev = err;
            }
        }
    }
}

/// The omitted scalar tail ∫_{|λ|>δe^{s_max}} λ^z(λ−1)⁻¹dλ/(2πi) by a fine
/// composite Simpson rule in s out to where the integrand is negligible.
fn omitted_tail(delta: f64, theta: f64, s_max: f64, z: f64) -> Complex64 {
    let s_end = s_max + 60.0 / z.abs();
    let n = 200_000;
    let h = (s_end - s_max) / n as f64;
    let up = Complex64::from_polar(delta, theta);
    let f = |s: f64| {
        let l1 = up * s.exp();
        let l3 = up.conj() * s.exp();
        // C3 outward minus C1 inward, dλ = λ ds.
        powc(l3, c(z, 0.0)) / (l3 - 1.0) * l3 - powc(l1, c(z, 0.0)) / (l1 - 1.0) * l1
    };
    let mut acc = f(s_max) + f(s_end);
    for i in 1..n {
        acc += f(s_max + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0 / c(0.0, 2.0 * PI)
}

#[test]
fn tail_bound_bounds_the_scalar_tail() {
    for theta in [PI / 2.0, 3.0 * PI / 4.0] {
        for z in [-1.0, -0.5, -0.1] {
            for s_max in [5.0, 10.0, 20.0] {
                let tail = omitted_tail(0.5, theta, s_max, z).norm();
                let bound = tail_bound(0.5, s_max, z);
                assert!(tail <= bound, "θ={theta} z={z} s={s_max}: {tail} > {bound}");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// symbols

fn table_laplacian(n: usize, nus: &[f64]) -> FuchsOperator {
    let eig: Vec<(f64, usize)> = nus.iter().map(|&nu| (nu, 1)).collect();
    let spectrum = CrossSectionSpectrum::table(n, eig).unwrap();
    make_cone_laplacian(spectrum, 0.0, WeightData::new(0.0, 2.0, n).unwrap()).unwrap()
}

fn expanded(roots: &[IndicialRoot], mode: usize) -> Vec<Complex64> {
    roots.iter().filter(|r| r.mode_index == mode).flat_map(|r| std::iter::repeat(r.z).take(r.order)).collect()
}

/// Greedy nearest matching; sorting is fragile when conjugate pairs differ in
/// the last bit of the real part.
fn same_multiset(a: Vec<Complex64>, mut b: Vec<Complex64>, tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    for x in a {
        let Some((k, d)) = b.iter().map(|y| (x - y).norm()).enumerate().min_by(|p, q| p.1.total_cmp(&q.1)) else {
            return false;
        };
        if d > tol {
            return false;
        }
        b.swap_remove(k);
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_roots_follow_the_formula(n in 1usize..7, nus in prop::collection::btree_set(0u32..400, 1..12)) {
        let mut nus: Vec<f64> = nus.into_iter().map(|k| -(k as f64) / 4.0).collect();
        if nus[0] != 0.0 {
            nus.push(0.0);
        }
        nus.sort_by(|a, b| b.total_cmp(a));
        let op = table_laplacian(n, &nus);
        let roots = all_roots(&op).unwrap();
        let h = (n as f64 - 1.0) / 2.0;
        for (mode, &nu) in op.cross_section.groups().iter().map(|g| &g.0).enumerate() {
            let d = c(h * h - nu, 0.0).sqrt();
            let want = vec![c(h, 0.0) + d, c(h, 0.0) - d];
            prop_assert!(same_multiset(expanded(&roots, mode), want, 1e-10 * (1.0 + d.norm())));
        }
    }

    #[test]
    fn real_operators_have_conjugate_closed_roots(
        mu in 1usize..5,
        coeffs in prop::collection::vec((-3.0f64..3.0, -2.0f64..2.0), 5),
        lead in prop_oneof![0.5f64..3.0, -3.0f64..-0.5],
    ) {
        let v = &COEFF_VARS;
        let mut coeff: Vec<MultiPoly> = (0..mu)
            .map(|j| MultiPoly::parse(&format!("{} + {}*nu", coeffs[j].0, coeffs[j].1), v).unwrap())
            .collect();
        coeff.push(MultiPoly::constant(v, lead));
        let symbol: Vec<MultiPoly> = (0..=mu).map(|j| MultiPoly::constant(&SYMBOL_VARS, if j == mu { 1.0 } else { 0.0 })).collect();
        let op = FuchsOperator::new(mu, WeightData::new(0.0, 2.0, 1).unwrap(), CrossSectionSpectrum::circle(3), coeff, symbol, 0.0).unwrap();
        let roots = all_roots(&op).unwrap();
        for mode in 0..op.cross_section.groups().len() {
            let zs = expanded(&roots, mode);
            let conj: Vec<Complex64> = zs.iter().map(|z| z.conj()).collect();
            let scale = 1.0 + zs.iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(same_multiset(zs, conj, 1e-6 * scale));
        }
    }

    #[test]
    fn domain_gap_is_stable_under_mode_refinement(gamma in -1.4f64..1.4) {
        let w = WeightData::new(gamma, 2.0, 1).unwrap();
        let base = make_cone_laplacian(CrossSectionSpectrum::circle(3), 0.0, w).unwrap();
        let a = domain_gap_dimension(&base, gamma);
        prop_assume!(a.is_ok());
        for k in [5, 9, 16] {
            let op = make_cone_laplacian(CrossSectionSpectrum::circle(k), 0.0, w).unwrap();
            prop_assert_eq!(domain_gap_dimension(&op, gamma).unwrap(), *a.as_ref().unwrap());
        }
    }

    #[test]
    fn rescaled_symbol_is_the_frozen_limit(t in 1e-8f64..1.0, tau in -50.0f64..50.0, nu_hat in 0.0f64..30.0) {
        prop_assume!(tau.abs() + nu_hat > 1e-3);
        let op = make_cone_laplacian(CrossSectionSpectrum::circle(2), 1.0, WeightData::new(0.0, 2.0, 1).unwrap()).unwrap();
        let p = symbol_eval(&op, SymbolKind::Principal, t, tau / t, nu_hat).unwrap() * t.powi(op.mu as i32);
        let r = symbol_eval(&op, SymbolKind::Rescaled, t, tau, nu_hat).unwrap();
        prop_assert!((p - r).norm() <= 1e-12 * (1.0 + r.norm()));
    }
}

// ---------------------------------------------------------------------------
// discretize

#[test]
fn gamma_pictures_have_converging_spectra() {
    let lap = |gamma: f64, n: usize| {
        let op = make_cone_laplacian(CrossSectionSpectrum::circle(2), 1.0, WeightData::new(gamma, 2.0, 1).unwrap()).unwrap();
        // On ±4 the truncation dominates; wider windows hit the round-off floor
        // of the e^{2r}-scaled matrices before N = 512.
        let d = assemble(&op, &LogGrid::model_cone(-4.0, 4.0, n).unwrap()).unwrap();
        let mut eig = spectrum(&d, Some(1)).unwrap();
        eig.sort_by(|a, b| a.re.total_cmp(&b.re));
        eig
    };
    for gamma in [0.3, -0.4] {
        let gap = |n: usize| {
            let (a, b) = (lap(0.0, n), lap(gamma, n));
            // The low end of the spectrum, where the continuum limit lives.
            a.iter().zip(&b).take(10).map(|(x, y)| (x - y).norm() / x.norm()).fold(0.0, f64::max)
        };
        let (coarse, fine) = (gap(256), gap(512));
        assert!(fine < coarse, "γ={gamma}: {coarse} → {fine}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn minus_laplacian_spectrum_is_nonnegative(k in 0usize..6, n in prop::sample::select(vec![32usize, 64, 96])) {
        let op = make_cone_laplacian(CrossSectionSpectrum::circle(k), 0.0, WeightData::new(0.0, 2.0, 1).unwrap()).unwrap();
        let d = assemble(&op, &LogGrid::model_cone(-6.0, 6.0, n).unwrap()).unwrap();
        let scale = norm_bound(&d);
        for eigs in block_spectra(&d).unwrap() {
            for l in eigs {
                prop_assert!(l.im.abs() <= 1e-8 * scale && l.re >= -1e-8 * scale);
            }
        }
    }

    #[test]
    fn kappa_is_a_group_action(j in 0isize..6, k in 0isize..6, gamma in -1.0f64..1.0, seed in any::<u64>()) {
        let grid = LogGrid::model_cone(-4.0, 4.0, 81).unwrap();
        let w = WeightData::new(gamma, 2.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Interior support, clear of both ends by more than the shifts.
        let v: Vec<Complex64> = (0..grid.n)
            .map(|i| if (15..65).contains(&i) { c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) } else { c(0.0, 0.0) })
            .collect();
        let (rj, rk) = (((j as f64) * grid.h).exp(), ((k as f64) * grid.h).exp());
        let two = kappa_apply(&kappa_apply(&v, rk, &grid, &w).unwrap(), rj, &grid, &w).unwrap();
        let one = kappa_apply(&v, (((j + k) as f64) * grid.h).exp(), &grid, &w).unwrap();
        for (a, b) in two.iter().zip(&one) {
            prop_assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn weighted_norm_is_the_plain_grid_norm(p in 1.2f64..6.0, seed in any::<u64>()) {
        let grid = LogGrid::model_cone(-3.0, 3.0, 40).unwrap();
        let n = 1;
        let gp = gamma_p(n, p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<Complex64> = (0..grid.n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let got = weighted_norm(&[(0.0, &u)], WeightedNormSpec { s: 0, gamma: gp, p }, &grid, n).unwrap();
        let beta = (n as f64 + 1.0) / 2.0 - gp;
        let plain = (0..grid.n).map(|i| (u[i] * grid.t(i).powf(beta)).norm().powf(p)).sum::<f64>().powf(1.0 / p);
        prop_assert!((got - grid.h.powf(1.0 / p) * plain).abs() <= 1e-12 * got);
    }
}

// ---------------------------------------------------------------------------
// calculus

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn dunford_agrees_with_the_oracle(n in 4usize..16, seed in any::<u64>()) {
        let t = DiscreteOperator::from_real(&spd(n, 0.05, 50.0, seed));
        let zs = z_grid();
        let (_, got) = auto_powers(&t, PI / 2.0, &zs).unwrap();
        let want = power_oracle_many(&t, &zs).unwrap();
        for (g, w) in got.iter().zip(&want) {
            prop_assert!(rel(&g.matrices[0], &w[0]) <= 1e-6, "z={}: {}", g.z, rel(&g.matrices[0], &w[0]));
        }
    }

    #[test]
    fn powers_are_holomorphic_in_z(n in 4usize..12, seed in any::<u64>(), k in 0usize..15) {
        let t = DiscreteOperator::from_real(&spd(n, 0.1, 20.0, seed));
        let z = z_grid()[k];
        let h = 1e-4;
        let zs = [z, z + h, z - h, z + c(0.0, h), z - c(0.0, h)];
        let (_, r) = auto_powers(&t, PI / 2.0, &zs).unwrap();
        let m = |i: usize| &r[i].matrices[0];
        let dx = (m(1) - m(2)) / c(2.0 * h, 0.0);
        let dy = (m(3) - m(4)) / c(2.0 * h, 0.0);
        // ∂/∂z̄ = ½(∂x + i∂y).
        let dbar = (dx + dy * c(0.0, 1.0)) * c(0.5, 0.0);
        prop_assert!(dbar.norm() <= 1e-5 * m(0).norm(), "{} vs {}", dbar.norm(), m(0).norm());
    }

    #[test]
    fn semigroup_law(n in 4usize..12, seed in any::<u64>(), i in 0usize..15, j in 0usize..15) {
        let t = DiscreteOperator::from_real(&spd(n, 0.05, 50.0, seed));
        let (z, w) = (z_grid()[i], z_grid()[j]);
        let (_, r) = auto_powers(&t, PI / 2.0, &[z, w, z + w]).unwrap();
        let prod = &r[0].matrices[0] * &r[1].matrices[0];
        prop_assert!(rel(&prod, &r[2].matrices[0]) <= 1e-6);
    }

    #[test]
    fn zero_power_is_the_complement_of_e0(n in 3usize..10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut eigs: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..20.0)).collect();
        eigs[0] = 0.0;
        let t = DiscreteOperator::from_real(&symmetric_with(&eigs, seed));
        let e0 = spectral_projection_e0(&t, 0.5, 64).unwrap();
        prop_assert!(e0.idempotency_defect <= 1e-8);
        let choice = auto_contour(&block_spectra(&t).unwrap(), norm_bound(&t), PI / 2.0, &[c(-1.0, 0.0)]).unwrap();
        let a0 = &shifted_powers(&t, &[c(0.0, 0.0)], &choice.build(-1.0).unwrap()).unwrap()[0][0];
        let want = DMatrix::<Complex64>::identity(n, n) - &e0.matrices[0];
        prop_assert!((a0 - &want).norm() <= 1e-6 * want.norm());
    }

    #[test]
    fn powers_commute_with_diagonal_similarity(n in 4usize..12, seed in any::<u64>()) {
        let a = spd(n, 0.1, 20.0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let conj = DMatrix::<f64>::from_fn(n, n, |i, j| a[(i, j)] * d[j] / d[i]);
        let zs = [c(-0.5, 0.0), c(-0.1, 3.0), c(-1.0, -1.0)];
        // One contour for both, so the two quadratures see the same nodes.
        let t = DiscreteOperator::from_real(&a);
        let choice = auto_contour(&block_spectra(&t).unwrap(), norm_bound(&t).max(norm_bound(&DiscreteOperator::from_real(&conj))), PI / 2.0, &zs).unwrap();
        let q = choice.build(-0.1).unwrap();
        let plain = dunford_powers(&t, &q, &zs).unwrap();
        let similar = dunford_powers(&DiscreteOperator::from_real(&conj), &q, &zs).unwrap();
        for (p, s) in plain.iter().zip(&similar) {
            let want = DMatrix::<Complex64>::from_fn(n, n, |i, j| p.matrices[0][(i, j)] * d[j] / d[i]);
            prop_assert!(rel(&s.matrices[0], &want) <= 1e-10, "{}", rel(&s.matrices[0], &want));
        }
    }
}

// ---------------------------------------------------------------------------
// pde

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_never_grows(amp in 0.1f64..1.0, k in 0.0f64..1.0, r0 in 0.2f64..1.0, width in 1.0f64..2.5) {
        let grid = Grid2d::new(4.0, 24, 8).unwrap();
        let a = Diffusivity::parse(&format!("1 + {k}*s^2"), DiffusivityArg::RealPart).unwrap();
        let mut p = QuasilinearProblem::new(grid.clone(), a, 0.02, 8);
        p.initial = InitialPreset::Bump { r0, r1: r0 + width, amplitude: amp };
        p.snapshot_stride = 1;
        let q = solve_quasilinear(&p).unwrap();
        let norms: Vec<f64> = q.snapshots.iter().map(|(_, u)| grid.l2(u)).collect();
        prop_assert!(norms.windows(2).all(|w| w[1] <= w[0]), "{:?}", norms);
    }

    #[test]
    fn unit_diffusivity_is_the_heat_path(amp in 0.1f64..2.0, r0 in 0.2f64..1.0, width in 1.0f64..2.5, steps in 2usize..8) {
        let grid = Grid2d::new(4.0, 20, 8).unwrap();
        let mut p = QuasilinearProblem::new(grid.clone(), Diffusivity::constant(1.0), 0.05, steps);
        p.initial = InitialPreset::Bump { r0, r1: r0 + width, amplitude: amp };
        p.snapshot_stride = 1;
        let q = solve_quasilinear(&p).unwrap();
        let mut heat = CauchyProblem::new(linear_heat_operator(&grid), 0.05, steps, Stepper::BackwardEuler);
        heat.initial = Some(angular_modes(&grid, &p.initial.sample(&grid)));
        let sol = solve_heat(&heat).unwrap();
        for (m, (_, u)) in q.snapshots.iter().enumerate() {
            let scale = sol.u[m].iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
            for (a, b) in angular_modes(&grid, u).iter().flatten().zip(sol.u[m].iter().flatten()) {
                prop_assert!((a - b).norm() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn constant_diffusivity_gives_f_exactly(a in 0.1f64..5.0, seed in any::<u64>(), gl in any::<bool>()) {
        let grid = Grid2d::new(3.0, 12, 8).unwrap();
        let mut p = QuasilinearProblem::new(grid.clone(), Diffusivity::constant(a), 0.1, 1);
        p.f = if gl { Nonlinearity::GinzburgLandau } else { Nonlinearity::Power { exponent: 3.0, coefficient: -0.5 } };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<Complex64> = (0..grid.len()).map(|_| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
        let ft = assemble_ftilde(&u, &p).unwrap();
        for (x, z) in ft.iter().zip(&u) {
            prop_assert_eq!(*x, p.f.eval(*z));
        }
    }
}
