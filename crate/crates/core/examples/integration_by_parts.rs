//! The approximate integration-by-parts check: at the Gaussian with C = 1 the
//! candidate field is exactly extremal, and under a perturbed measure the
//! check holds with C set to the Galerkin estimate.

use pklab::measure::{build_gauss_hermite, build_product, MarginalSpec};
use pklab::polyfield::candidate_field;
use pklab::spectral::{build_basis, cpk_lower_bound, ibp_epsilon, ibp_residual_check, probe_battery};

fn main() -> pklab::Result<()> {
    let u = candidate_field(0, 1, 2)?;
    let gamma = build_gauss_hermite(2, 10)?;
    for c in [1.0, 1.02, 1.1] {
        println!("ε(candidate, C = {c}) = {:.8}", ibp_epsilon(&u, &gamma, c)?);
    }

    let basis = build_basis(2, 4, &gamma)?;
    let worst = probe_battery(&basis, 50, 7)
        .iter()
        .map(|v| ibp_residual_check(&u, v, &gamma, 1.0).map(|r| r.lhs))
        .collect::<pklab::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    println!("gaussian, C = 1: largest residual over 50 fields = {worst:.2e}");

    let mu = build_product(&[MarginalSpec::Hermite6 { delta: 0.004 }; 2], 10)?;
    let c = cpk_lower_bound(&mu, 4)?.value;
    let basis = build_basis(2, 4, &mu)?;
    let mut holds = 0;
    let battery = probe_battery(&basis, 50, 7);
    for v in &battery {
        if ibp_residual_check(&u, v, &mu, c)?.holds {
            holds += 1;
        }
    }
    println!("hermite6(0.004), C = {c:.6}: check holds for {holds}/{} fields", battery.len());
    Ok(())
}
