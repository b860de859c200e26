//! Cosine lower bounds on the Zolotarev-2 distance and the two sides of the
//! stability inequality for a family of perturbed products.

use pklab::measure::{build_gauss_hermite, build_product, MarginalSpec};
use pklab::zolotarev::{default_theta_grid, stability_report, zol2_lower, DEFAULT_SLACK};

fn main() -> pklab::Result<()> {
    let grid = default_theta_grid(2)?;
    let gamma = build_gauss_hermite(2, 10)?;
    println!("grid of {} frequencies; zol2(γ, γ) = {}", grid.len(), zol2_lower(&gamma, &gamma, &grid)?);

    let oracle = 16.0 * (-2.0f64).exp();
    println!("delta   zol2_lower   16e^-2·δ    cpk_lower    rhs         consistent");
    for delta in [0.002, 0.004, 0.008] {
        let mu = build_product(&[MarginalSpec::Hermite6 { delta }; 2], 10)?;
        let r = stability_report(&mu, 4, &grid, DEFAULT_SLACK)?;
        println!(
            "{delta:<7} {:<12.8} {:<11.8} {:<12.8} {:<11.6} {}",
            r.zol2_lower,
            oracle * delta,
            r.cpk_lower,
            r.rhs,
            r.consistent
        );
    }
    Ok(())
}
