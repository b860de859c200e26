//! Galerkin lower bounds on the Poincaré–Korn constant for the Gaussian and
//! for a sixth-order Hermite perturbation, across trial degrees.

use pklab::measure::{build_gauss_hermite, build_product, MarginalSpec};
use pklab::spectral::{cpk_lower_bound, rayleigh};

fn main() -> pklab::Result<()> {
    println!("degree  basis  gaussian            hermite6(0.008)");
    for degree in 2..=5 {
        let m = 2 * degree + 2;
        let gamma = build_gauss_hermite(2, m)?;
        let mu = build_product(&[MarginalSpec::Hermite6 { delta: 0.008 }; 2], m.max(10))?;
        let g = cpk_lower_bound(&gamma, degree)?;
        let h = cpk_lower_bound(&mu, degree)?;
        println!("{degree:>6}  {:>5}  {:<18.15}  {:.15}", h.basis_size, g.value, h.value);
    }

    let mu = build_product(&[MarginalSpec::Hermite6 { delta: 0.008 }; 2], 10)?;
    let est = cpk_lower_bound(&mu, 4)?;
    println!(
        "degree-4 witness: {} nonzero coefficients, Rayleigh quotient {:.15}, pencil residual {:.1e}",
        est.witness_coeffs.iter().filter(|c| c.abs() > 1e-12).count(),
        rayleigh(&est.witness, &mu)?,
        est.residuals.pencil
    );
    Ok(())
}
