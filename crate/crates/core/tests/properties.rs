use proptest::prelude::*;

use pklab::cli::{parse_measure_spec, Command, MeasureSpec, RunConfig, SweepResult, SweepRow};
use pklab::linalg::{cholesky, Matrix};
use pklab::measure::{build_gauss_hermite, build_product, max_delta_h6, MarginalSpec, QuadratureMeasure};
use pklab::polyfield::{antisym_projection, l2_inner, sym_grad, AntisymMatrix, Polynomial, VectorField};
use pklab::spectral::{assemble, build_basis, cpk_lower_bound, ibp_residual_check, rayleigh};
use pklab::stein::{build_V, recenter_solution, solve_stein, verify_poisson, ScalarField};
use pklab::zolotarev::{stability_report, stein_upper_bound, theta_grid, zol2_lower, CosineTest};

fn poly_strategy(dim: usize, max_degree: u32, max_terms: usize) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(0..=max_degree, dim), -2.0f64..2.0), 1..=max_terms).prop_map(
        move |terms| {
            let terms = terms.into_iter().filter(|(e, _)| e.iter().sum::<u32>() <= max_degree).collect::<Vec<_>>();
            Polynomial::from_terms(dim, terms).unwrap()
        },
    )
}

fn field_strategy(dim: usize, max_degree: u32) -> impl Strategy<Value = VectorField> {
    prop::collection::vec(poly_strategy(dim, max_degree, 4), dim).prop_map(|c| VectorField::new(c).unwrap())
}

fn point(dim: usize, radius: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-radius..radius, dim)
}

fn delta() -> impl Strategy<Value = f64> {
    (0.0f64..0.95).prop_map(|t| t * max_delta_h6())
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn hermite6(delta: f64, n: usize, m: usize) -> QuadratureMeasure {
    build_product(&vec![MarginalSpec::Hermite6 { delta }; n], m).unwrap()
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn quadrature_weights_form_a_probability(d in delta(), n in 2usize..=3, half in 1usize..=6) {
        let mu = hermite6(d, n, 2 * half);
        prop_assert!(!mu.is_empty());
        prop_assert!(mu.weights().iter().all(|&w| w >= 0.0));
        let total: f64 = mu.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        let cov = Matrix::from_rows(&mu.second_moments());
        prop_assert!(cov.asymmetry() == 0.0);
        prop_assert!(cov.to_rows().iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn delta_outside_the_positivity_range_is_rejected(t in 1.0f64..5.0) {
        let spec = [MarginalSpec::Hermite6 { delta: t * max_delta_h6() }; 2];
        prop_assert!(build_product(&spec, 8).is_err());
        let negative = [MarginalSpec::Hermite6 { delta: -(t - 0.999) * max_delta_h6() }; 2];
        prop_assert!(build_product(&negative, 8).is_err());
    }

    #[test]
    fn nonpositive_variance_is_rejected(s in -3.0f64..=0.0) {
        let rejected = build_product(&[MarginalSpec::GaussianVar { sigma2: s }, MarginalSpec::StandardNormal], 8).is_err();
        prop_assert!(rejected);
    }

    #[test]
    fn polynomial_algebra(p in poly_strategy(2, 4, 6), q in poly_strategy(2, 4, 6), x in point(2, 2.0)) {
        prop_assert!((&p - &p).is_zero());
        prop_assert_eq!((&p - &p).term_count(), 0);
        prop_assert!(p.terms().all(|(_, c)| c != 0.0));
        prop_assert_eq!(&p + &q, &q + &p);
        let prod = (&p * &q).eval(&x);
        prop_assert!((prod - p.eval(&x) * q.eval(&x)).abs() <= 1e-10 * (1.0 + prod.abs()));
    }

    #[test]
    fn hermite_expansion_round_trips(p in poly_strategy(2, 6, 6)) {
        let back = Polynomial::from_hermite(2, &p.to_hermite());
        prop_assert!((&back - &p).terms().all(|(_, c)| c.abs() < 1e-9));
    }

    #[test]
    fn symmetrized_gradient_is_symmetric(u in field_strategy(3, 3)) {
        prop_assert!(sym_grad(&u).is_symmetric());
    }

    #[test]
    fn rigid_motions_have_zero_symmetrized_gradient(upper in prop::collection::vec(-3.0f64..3.0, 3)) {
        let a = Matrix::from_fn(3, 3, |i, j| match (i, j) {
            (0, 1) => upper[0],
            (0, 2) => upper[1],
            (1, 2) => upper[2],
            _ => 0.0,
        });
        let field = AntisymMatrix::from_upper(&a).as_field();
        prop_assert!(sym_grad(&field).is_zero());
    }

    #[test]
    fn antisymmetric_residual_is_orthogonal(u in field_strategy(2, 3), d in delta()) {
        let mu = hermite6(d, 2, 10);
        let a = antisym_projection(&u, &mu).unwrap();
        let residual = &u - &a.as_field();
        for b in AntisymMatrix::basis(2) {
            let overlap = l2_inner(&residual, &b.as_field(), &mu).value;
            prop_assert!(overlap.abs() <= 1e-10, "{overlap}");
        }
    }

    #[test]
    fn stein_solution_satisfies_poisson(f in poly_strategy(2, 6, 6), probes in prop::collection::vec(point(2, 3.0), 10)) {
        let f = ScalarField::Polynomial(f);
        let sol = solve_stein(&f).unwrap();
        let scale = 1.0 + probes.iter().map(|x| f.value(x).abs()).fold(0.0, f64::max);
        prop_assert!(verify_poisson(&f, &sol, &probes) <= 1e-12 * scale);
    }

    #[test]
    fn matrix_field_reproduces_generator(f in poly_strategy(2, 5, 5), x in point(2, 3.0)) {
        prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1e-4);
        let f = ScalarField::Polynomial(f);
        let sol = solve_stein(&f).unwrap();
        let (_, sol_g) = recenter_solution(&f, &sol).unwrap();
        prop_assert!(sol_g.origin_value().iter().all(|v| v.abs() <= 1e-12));
        let v = build_V(&sol_g).unwrap();
        let vx = v.value(&x).transpose().matvec(&x);
        let phi = sol_g.phi(&x);
        for (a, b) in vx.iter().zip(&phi) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn cosine_tests_are_admissible(theta in point(3, 10.0), x in point(3, 20.0)) {
        prop_assume!(theta.iter().any(|&t| t != 0.0));
        let t = CosineTest::new(theta).unwrap();
        prop_assert!(t.hessian(&x).frobenius_norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn zolotarev_lower_bound_is_symmetric_and_nonnegative(a in delta(), b in delta()) {
        let grid = theta_grid(2, 0.5, 4.0, 8).unwrap();
        let mu = hermite6(a, 2, 8);
        let nu = hermite6(b, 2, 8);
        let ab = zol2_lower(&mu, &nu, &grid).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, zol2_lower(&nu, &mu, &grid).unwrap());
    }

    #[test]
    fn upper_bound_is_monotone(c in 1.0f64..3.0, dc in 0.0f64..1.0, n in 2usize..6) {
        let lo = stein_upper_bound(c, n).unwrap();
        prop_assert!(lo >= 0.0);
        prop_assert!(lo <= stein_upper_bound(c + dc, n).unwrap());
        prop_assert!(lo <= stein_upper_bound(c, n + 1).unwrap());
    }

    #[test]
    fn measure_specs_round_trip(deltas in prop::collection::vec(prop::option::of(delta()), 2..=4)) {
        let factors: Vec<MarginalSpec> = deltas
            .into_iter()
            .map(|d| d.map_or(MarginalSpec::StandardNormal, |delta| MarginalSpec::Hermite6 { delta }))
            .collect();
        let spec = MeasureSpec::Product(factors);
        prop_assert_eq!(parse_measure_spec(&spec.to_string()).unwrap(), spec);
    }

    #[test]
    fn run_config_node_rule(degree in 0usize..6, m in 1usize..20) {
        let config = RunConfig {
            command: Command::Cpk,
            measure: Some("gaussian(dim=2)".into()),
            degree,
            nodes_per_axis: Some(m),
            ..RunConfig::default()
        };
        let valid = degree >= 2 && m % 2 == 0 && m >= 2 * degree + 2;
        prop_assert_eq!(config.validate().is_ok(), valid);
    }

    #[test]
    fn sweep_csv_round_trips(rows in prop::collection::vec((1e-6f64..1e-2, 1.0f64..2.0, 0.0f64..1.0, 0.0f64..10.0), 1..6)) {
        let mut rows: Vec<SweepRow> = rows
            .into_iter()
            .map(|(delta, cpk_lower, zol2_lower, rhs)| SweepRow {
                delta,
                cpk_lower,
                zol2_lower,
                rhs,
                consistent: zol2_lower <= rhs,
            })
            .collect();
        rows.sort_by(|a, b| a.delta.total_cmp(&b.delta));
        let sweep = SweepResult { rows };
        prop_assert_eq!(SweepResult::from_csv(&sweep.to_csv()).unwrap(), sweep);
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn basis_fields_are_centered_and_rigid_free(d in delta()) {
        let mu = hermite6(d, 2, 10);
        let basis = build_basis(2, 3, &mu).unwrap();
        for b in basis.fields() {
            prop_assert!(b.mean(&mu).iter().all(|m| m.abs() <= 1e-10));
            prop_assert!(antisym_projection(b, &mu).unwrap().max_abs() <= 1e-10);
        }
        let gram = assemble(&basis, &mu).unwrap();
        prop_assert!(gram.m.asymmetry() <= 1e-12 && gram.k.asymmetry() <= 1e-12);
        prop_assert!(cholesky(&gram.k).is_ok());
    }

    #[test]
    fn galerkin_estimates_are_lower_bounds_and_monotone(d in delta()) {
        let mu = hermite6(d, 2, 12);
        let mut prev = 0.0;
        for degree in 2..=5 {
            let est = cpk_lower_bound(&mu, degree).unwrap();
            prop_assert!(est.value >= 1.0 - 1e-8);
            prop_assert!(est.value >= prev - 1e-10);
            prop_assert!((rayleigh(&est.witness, &mu).unwrap() - est.value).abs() <= 1e-8);
            prev = est.value;
        }
    }

    #[test]
    fn integration_by_parts_holds_with_a_valid_constant(d in delta(), v in field_strategy(2, 3)) {
        let mu = hermite6(d, 2, 12);
        let c = cpk_lower_bound(&mu, 4).unwrap().value;
        let u = pklab::polyfield::candidate_field(1, 0, 2).unwrap();
        prop_assume!(pklab::polyfield::dirichlet_inner(&v, &v, &mu).value > 1e-6);
        prop_assert!(ibp_residual_check(&u, &v, &mu, c).unwrap().holds);
    }

    #[test]
    fn stability_flag_matches_its_fields(d in delta()) {
        let mu = hermite6(d, 2, 10);
        let grid = theta_grid(2, 0.25, 8.0, 16).unwrap();
        let r = stability_report(&mu, 4, &grid, 1e-9).unwrap();
        prop_assert_eq!(r.rhs, stein_upper_bound(r.cpk_lower, 2).unwrap());
        prop_assert_eq!(r.consistent, r.zol2_lower <= r.rhs + 1e-9);
    }
}

#[test]
fn gaussian_is_the_zero_deficit_endpoint() {
    let g = build_gauss_hermite(3, 8).unwrap();
    assert!((cpk_lower_bound(&g, 3).unwrap().value - 1.0).abs() <= 1e-8);
}
