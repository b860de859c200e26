//! Builds the reference Gaussian and a perturbed product measure, checks the
//! moment assumption on both, and prints a JSON dump of the perturbed one.

use pklab::cli::MeasureDump;
use pklab::measure::{build_gauss_hermite, build_product, check_moments, max_delta_h6, MarginalSpec};

fn main() -> pklab::Result<()> {
    let gamma = build_gauss_hermite(2, 8)?;
    println!("gaussian: {} nodes, weights sum to {:.15}", gamma.len(), gamma.weights().iter().sum::<f64>());

    let threshold = max_delta_h6();
    println!("hermite6 positivity threshold: {threshold:.8}");

    let delta = 0.008;
    let mu = build_product(&[MarginalSpec::Hermite6 { delta }; 2], 10)?;
    let sixth = mu.integrate(|x| x[0].powi(6));
    println!("∫x₁⁶ dμ = {sixth:.10}  (Gaussian value 15, shift 720δ = {})", 720.0 * delta);

    for (name, m) in [("gaussian", &gamma), ("hermite6", &mu)] {
        let r = check_moments(m, 1e-10);
        println!(
            "{name:>9}: passes={} isotropy={:.1e} fourth={:.1e}",
            r.passes, r.isotropy_residual, r.fourth_moment_residual
        );
    }

    let skewed = build_product(&[MarginalSpec::GaussianVar { sigma2: 2.0 }, MarginalSpec::StandardNormal], 8)?;
    println!("gaussian_var(2,1) isotropy residual: {}", check_moments(&skewed, 1e-10).isotropy_residual);

    match build_product(&[MarginalSpec::Hermite6 { delta: 0.05 }; 2], 8) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!("delta above the threshold must be rejected"),
    }

    println!("{}", serde_json::to_string_pretty(&MeasureDump::new(&mu)).expect("dump serializes"));
    Ok(())
}
