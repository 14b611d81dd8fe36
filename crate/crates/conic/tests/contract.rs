use nalgebra::{DMatrix, DVector};
use nfbf_conic::{solve, ConicProgram, LinExpr, SolverSettings, Status};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn min_x_with_lower_bound() {
    let mut p = ConicProgram::new();
    let x = p.var();
    p.add_ge(x, 3.0);
    p.minimize(x);
    let s = solve(&p).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert!((s.value(x) - 3.0).abs() < 1e-7);
    assert!((s.objective - 3.0).abs() < 1e-7);
}

#[test]
fn infeasible_is_reported() {
    let mut p = ConicProgram::new();
    let x = p.var();
    p.add_ge(x, 3.0);
    p.add_le(x, 1.0);
    p.minimize(x);
    assert_eq!(solve(&p).unwrap().status, Status::Infeasible);
}

#[test]
fn unbounded_is_reported() {
    let mut p = ConicProgram::new();
    let x = p.var();
    p.add_le(x, 1.0);
    p.minimize(x);
    assert_eq!(solve(&p).unwrap().status, Status::Unbounded);
}

#[test]
fn malformed_program_rejected() {
    let mut p = ConicProgram::new();
    let x = p.var();
    p.minimize(LinExpr::term(x, f64::NAN));
    assert!(solve(&p).is_err());
}

fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

#[test]
fn trace_max_gives_top_eigenvalue_real() {
    let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, -0.3, 0.1, -0.3, 0.4]);
    let mut p = ConicProgram::new();
    let v = p.vars(6);
    let idx = |r: usize, c: usize| {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        c * (c + 1) / 2 + r
    };
    p.add_psd(3, |r, cc| v[idx(r, cc)].into());
    p.add_eq(LinExpr::sum((0..3).map(|i| LinExpr::from(v[idx(i, i)]))), 1.0);
    let mut obj = LinExpr::zero();
    for r in 0..3 {
        for cc in 0..3 {
            obj.add_term(v[idx(r, cc)], c[(r, cc)]);
        }
    }
    p.maximize(obj);
    let s = solve(&p).unwrap();
    let lmax = c.symmetric_eigenvalues().max();
    assert_eq!(s.status, Status::Optimal);
    assert!((s.objective - lmax).abs() < 1e-7, "{} vs {}", s.objective, lmax);
    assert!(s.primal_residual <= 1e-7);
}

#[test]
fn trace_max_gives_top_eigenvalue_hermitian() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [1usize, 2, 4] {
        let c = random_hermitian(n, &mut rng);
        let mut p = ConicProgram::new();
        let x = p.hermitian_psd(n);
        p.add_eq(x.trace(), 1.0);
        p.maximize(x.real_inner(&c));
        let s = solve(&p).unwrap();
        let lmax = c.clone().symmetric_eigen().eigenvalues.max();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - lmax).abs() < 1e-7, "n={n}: {} vs {}", s.objective, lmax);
        let xv = s.hermitian(&x);
        // Hermitian by construction, unit trace, and PSD within tolerance
        assert!((xv.trace().re - 1.0).abs() < 1e-7);
        assert!(xv.clone().symmetric_eigen().eigenvalues.min() > -1e-7);
        assert!(((&xv - xv.adjoint()).norm()) < 1e-12);
    }
}

#[test]
fn objective_matches_reevaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut p = ConicProgram::new();
        let xs = p.vars(4);
        let t = p.var();
        let c: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
        p.add_soc(t, xs.iter().map(|&v| LinExpr::from(v)).collect());
        p.add_le(t, 2.0);
        let mut obj = LinExpr::constant(rng.random());
        for (v, ci) in xs.iter().zip(&c) {
            obj.add_term(*v, *ci);
        }
        p.minimize(obj);
        let s = solve(&p).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - p.objective_value(&s.x)).abs() < 1e-7);
        assert!(s.primal_residual <= 1e-7);
        // closed form: -2‖c‖ + constant
        let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((s.objective - (p.objective_value(&vec![0.0; 5]) - 2.0 * cn)).abs() < 1e-6);
    }
}

#[test]
fn rotated_cone_bounds_square() {
    // min y s.t. x² ≤ y·1, x = 3  → y = 9
    let mut p = ConicProgram::new();
    let x = p.var();
    let y = p.var();
    p.add_eq(x, 3.0);
    p.add_rotated_soc(y, 1.0, vec![x.into()]);
    p.minimize(y);
    let s = solve(&p).unwrap();
    assert!((s.value(y) - 9.0).abs() < 1e-6);
}

#[test]
fn complex_inner_product_form() {
    let mut p = ConicProgram::new();
    let z = p.complex_vector(3);
    let a = [Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.3), Complex64::new(0.0, -1.0)];
    let xv = [Complex64::new(0.2, -0.7), Complex64::new(1.5, 0.1), Complex64::new(-0.3, 0.4)];
    for k in 0..3 {
        p.add_eq(z.re[k], xv[k].re);
        p.add_eq(z.im[k], xv[k].im);
    }
    p.minimize(LinExpr::zero());
    let s = solve(&p).unwrap();
    let got = s.eval_c(&z.inner_from(&a));
    let want: Complex64 = a.iter().zip(&xv).map(|(ai, xi)| ai.conj() * xi).sum();
    assert!((got - want).norm() < 1e-7);
}

/// Euclidean projection onto {(t, x): ‖x‖ ≤ t}.
fn soc_projection(t0: f64, x0: &DVector<f64>) -> (f64, DVector<f64>) {
    let nx = x0.norm();
    if nx <= t0 {
        (t0, x0.clone())
    } else if nx <= -t0 {
        (0.0, DVector::zeros(x0.len()))
    } else {
        let a = 0.5 * (1.0 + t0 / nx);
        (a * nx, x0 * a)
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, failure_persistence: None, ..ProptestConfig::default() })]
    #[test]
    fn soc_projection_matches_closed_form(
        t0 in -2.0f64..2.0,
        x0 in proptest::collection::vec(-2.0f64..2.0, 1..5),
    ) {
        let x0 = DVector::from_vec(x0);
        let m = x0.len();
        // squared-distance objective keeps the argmin well conditioned; the vertex case needs a
        // tight gap to pin the point itself to 1e-7
        let mut p = ConicProgram::with_settings(SolverSettings { gap_tol: 1e-12, ..SolverSettings::default() });
        let t = p.var();
        let x = p.vars(m);
        p.add_soc(t, x.iter().map(|&v| v.into()).collect());
        let mut lin = LinExpr::from(t) * -t0;
        p.add_quadratic(t, 1.0);
        for (&v, &c) in x.iter().zip(x0.iter()) {
            lin.add_term(v, -c);
            p.add_quadratic(v, 1.0);
        }
        p.minimize(lin);
        let sol = solve(&p).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        let (tp, xp) = soc_projection(t0, &x0);
        prop_assert!((sol.value(t) - tp).abs() < 1e-7, "t {} vs {}", sol.value(t), tp);
        for k in 0..m {
            prop_assert!((sol.value(x[k]) - xp[k]).abs() < 1e-7);
        }
        prop_assert!(sol.primal_residual <= 1e-7);
        prop_assert!((sol.objective - p.objective_value(&sol.x)).abs() < 1e-7);
    }
}
