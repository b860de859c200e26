//! Solves the Gaussian Poisson equation for a polynomial and a cosine, then
//! recenters, builds the matrix test field and evaluates its Stein residual.

use pklab::measure::{build_gauss_hermite, build_product, MarginalSpec};
use pklab::polyfield::Polynomial;
use pklab::stein::{
    build_V, probe_grid, recenter_solution, regularity_check, solve_stein, stein_residual, v_gradient_norms,
    verify_poisson, ScalarField, PROBE_SEED,
};

fn main() -> pklab::Result<()> {
    let probes = probe_grid(2, 100, 4.0, PROBE_SEED);

    let cubic = ScalarField::Polynomial(Polynomial::from_terms(2, vec![(vec![3, 0], 1.0), (vec![1, 1], -2.0)])?);
    let sol = solve_stein(&cubic)?;
    println!("x₁³ − 2x₁x₂: {:?}, Poisson residual {:.1e}", sol.kind(), verify_poisson(&cubic, &sol, &probes));
    if let Some(phi) = sol.as_polynomial() {
        println!("  φ₁ = {:?}", phi.component(0).terms().map(|(a, c)| (a.exponents().to_vec(), c)).collect::<Vec<_>>());
    }

    let f = ScalarField::cosine(vec![1.2, -0.6])?;
    let sol = solve_stein(&f)?;
    println!("cosine: {:?}, Poisson residual {:.1e}", sol.kind(), verify_poisson(&f, &sol, &probes));
    let reg = regularity_check(&f, &sol, &probes);
    println!(
        "  max ‖∇φ‖ = {:.6} (bound {}), max ‖∇²φ‖ = {:.6}",
        reg.max_gradient_norm,
        0.5 * reg.hessian_sup,
        reg.max_hessian_norm
    );

    let (_, sol_g) = recenter_solution(&f, &sol)?;
    let v = build_V(&sol_g)?;
    let gamma = build_gauss_hermite(2, 12)?;
    let mu = build_product(&[MarginalSpec::Hermite6 { delta: 0.008 }; 2], 16)?;
    println!("Stein residual under γ: {:.2e}", stein_residual(&v, &gamma)?);
    let gap = (mu.integrate(|x| f.value(x)) - f.gaussian_mean()).abs();
    println!("Stein residual under μ: {:.10}  (|∫f dμ − ∫f dγ| = {gap:.10})", stein_residual(&v, &mu)?);
    let norms = v_gradient_norms(&v, &mu)?;
    println!("‖∇V_ij‖ under μ: {:?}", norms.to_rows());
    Ok(())
}
