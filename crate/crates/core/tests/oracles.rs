use pklab::measure::{build_product, max_delta_h6, MarginalSpec};
use pklab::spectral::{build_basis, cpk_lower_bound, rayleigh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn positivity_threshold_matches_the_sextic_minimum() {
    let x2 = 5.0 + 10f64.sqrt();
    let he6 = x2.powi(3) - 15.0 * x2 * x2 + 45.0 * x2 - 15.0;
    assert!((he6 + 103.2456).abs() < 1e-4, "{he6}");
    assert!((max_delta_h6() - 1.0 / he6.abs()).abs() < 1e-12);
}

#[test]
fn hermite6_degree_four_estimate_is_frozen() {
    let mu = build_product(&[MarginalSpec::Hermite6 { delta: 0.008 }; 2], 10).unwrap();
    let est = cpk_lower_bound(&mu, 4).unwrap();
    assert!((est.value - 1.2460082507962968).abs() < 1e-12, "{}", est.value);
    assert!(est.residuals.pencil < 1e-10);
}

#[test]
fn estimate_is_the_maximum_rayleigh_quotient_on_the_span() {
    let mu = build_product(&[MarginalSpec::Hermite6 { delta: 0.008 }; 2], 10).unwrap();
    let est = cpk_lower_bound(&mu, 4).unwrap();
    let basis = build_basis(2, 4, &mu).unwrap();
    assert!((rayleigh(&est.witness, &mu).unwrap() - est.value).abs() < 1e-10);

    // perturbations of the witness never beat it, random directions never reach it
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut best_random: f64 = 0.0;
    for step in 0..200 {
        let noise: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeffs: Vec<f64> = if step % 2 == 0 {
            est.witness_coeffs.iter().zip(&noise).map(|(w, e)| w + 1e-3 * e).collect()
        } else {
            noise
        };
        let q = rayleigh(&basis.combine(&coeffs), &mu).unwrap();
        assert!(q <= est.value + 1e-10, "{q} > {}", est.value);
        if step % 2 == 1 {
            best_random = best_random.max(q);
        }
    }
    assert!(best_random < est.value);
}
