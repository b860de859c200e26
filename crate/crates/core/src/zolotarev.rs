//! Lower bounds on the Zolotarev distance of order two and the stability
//! comparison against the Poincaré–Korn deficit.
//!
//! Every `±f_θ(x) = ∓cos(θ·x)/|θ|²` has `‖∇²f_θ‖₂ ≤ 1`, so
//! `|∫f_θ dμ − ∫f_θ dν|` bounds the distance from below for each frequency.
//! Integrals of cosines are characteristic functions, which the measures
//! supply in closed form where they can.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::measure::{dot, QuadratureMeasure};
use crate::spectral::cpk_lower_bound;
use crate::stein::ScalarField;

/// Constant in front of `n² √(C(C − 1))` in the stability bound.
pub const RHS_CONSTANT: f64 = 20.0;

/// Default absolute slack for the consistency flag.
pub const DEFAULT_SLACK: f64 = 1e-9;

/// Rounding allowance below one for Poincaré–Korn estimates.
pub const CPK_ROUNDING: f64 = 1e-8;

/// Excess `C − 1` below this is eigensolver rounding and counts as zero.
pub const EXCESS_FLOOR: f64 = 1e-12;

/// Magnitude range and count of the default frequency grid.
pub const DEFAULT_GRID_RANGE: (f64, f64) = (0.25, 8.0);
pub const DEFAULT_GRID_COUNT: usize = 64;

/// The admissible test function `−cos(θ·x)/|θ|²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineTest {
    theta: Vec<f64>,
}

impl CosineTest {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || theta.iter().any(|t| !t.is_finite()) || theta.iter().all(|&t| t == 0.0) {
            return Err(Error::InvalidArgument("frequency must be finite and nonzero".into()));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.theta.iter().map(|t| t * t).sum()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        -dot(&self.theta, x).cos() / self.norm_sq()
    }

    /// `∇²f_θ(x) = cos(θ·x) θθᵀ / |θ|²`
    pub fn hessian(&self, x: &[f64]) -> Matrix {
        let c = dot(&self.theta, x).cos() / self.norm_sq();
        Matrix::from_fn(self.dim(), self.dim(), |i, j| self.theta[i] * self.theta[j] * c)
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField::Cosine { theta: self.theta.clone() }
    }
}

/// `count` log-spaced magnitudes in `[lo, hi]` along each coordinate axis and
/// along the unit diagonal.
pub fn theta_grid(dim: usize, lo: f64, hi: f64, count: usize) -> Result<Vec<CosineTest>> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
        return Err(Error::InvalidArgument(format!(
            "frequency grid needs 0 < lo ≤ hi and count ≥ 1, got lo={lo}, hi={hi}, count={count}"
        )));
    }
    let magnitudes: Vec<f64> = if count == 1 {
        vec![lo]
    } else {
        let ratio = (hi / lo).ln() / (count - 1) as f64;
        (0..count).map(|i| lo * (ratio * i as f64).exp()).collect()
    };
    let mut directions: Vec<Vec<f64>> =
        (0..dim).map(|k| (0..dim).map(|j| if j == k { 1.0 } else { 0.0 }).collect()).collect();
    directions.push(vec![1.0 / (dim as f64).sqrt(); dim]);
    let mut out = Vec::with_capacity(directions.len() * count);
    for d in &directions {
        for &r in &magnitudes {
            out.push(CosineTest::new(d.iter().map(|c| c * r).collect())?);
        }
    }
    Ok(out)
}

pub fn default_theta_grid(dim: usize) -> Result<Vec<CosineTest>> {
    theta_grid(dim, DEFAULT_GRID_RANGE.0, DEFAULT_GRID_RANGE.1, DEFAULT_GRID_COUNT)
}

/// `max_θ |ĉ_ν(θ) − ĉ_μ(θ)| / |θ|²`
pub fn zol2_lower(mu: &QuadratureMeasure, nu: &QuadratureMeasure, thetas: &[CosineTest]) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    if thetas.is_empty() {
        return Err(Error::InvalidArgument("frequency grid is empty".into()));
    }
    if let Some(t) = thetas.iter().find(|t| t.dim() != mu.dim()) {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: t.dim() });
    }
    let gaps: Vec<f64> = thetas
        .par_iter()
        .map(|t| {
            let a = mu.characteristic(t.theta())?;
            let b = nu.characteristic(t.theta())?;
            Ok((b - a).abs() / t.norm_sq())
        })
        .collect::<Result<_>>()?;
    Ok(gaps.into_iter().fold(0.0, f64::max))
}

/// `20 n² √(C (C − 1))`
pub fn stein_upper_bound(cpk: f64, dim: usize) -> Result<f64> {
    stein_upper_bound_with(cpk, dim, RHS_CONSTANT)
}

/// `constant · n² · √(C (C − 1))`. Values of `C` within [`CPK_ROUNDING`]
/// below one are accepted, and an excess under [`EXCESS_FLOOR`] counts as zero.
pub fn stein_upper_bound_with(cpk: f64, dim: usize, constant: f64) -> Result<f64> {
    if !cpk.is_finite() || cpk < 1.0 - CPK_ROUNDING {
        return Err(Error::InvalidArgument(format!("Poincaré–Korn constant must be ≥ 1, got {cpk}")));
    }
    let excess = if cpk - 1.0 < EXCESS_FLOOR { 0.0 } else { cpk - 1.0 };
    let n = dim as f64;
    Ok(constant * n * n * (cpk.max(1.0) * excess).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub cpk_lower: f64,
    pub zol2_lower: f64,
    pub rhs_constant: f64,
    pub rhs: f64,
    pub consistent: bool,
    pub degree: usize,
    pub theta_grid_size: usize,
}

/// Both sides of `d_Zol,2(μ, γ) ≤ 20 n² √(C(μ)(C(μ) − 1))` from a Galerkin
/// estimate of `C(μ)` and a cosine lower bound on the distance.
pub fn stability_report(
    mu: &QuadratureMeasure,
    degree: usize,
    thetas: &[CosineTest],
    slack: f64,
) -> Result<StabilityReport> {
    stability_report_with(mu, degree, thetas, slack, RHS_CONSTANT)
}

pub fn stability_report_with(
    mu: &QuadratureMeasure,
    degree: usize,
    thetas: &[CosineTest],
    slack: f64,
    rhs_constant: f64,
) -> Result<StabilityReport> {
    let cpk_lower = cpk_lower_bound(mu, degree)?.value;
    let gamma = crate::measure::build_gauss_hermite(mu.dim(), 2)?;
    let zol = zol2_lower(mu, &gamma, thetas)?;
    let rhs = stein_upper_bound_with(cpk_lower, mu.dim(), rhs_constant)?;
    Ok(StabilityReport {
        cpk_lower,
        zol2_lower: zol,
        rhs_constant,
        rhs,
        consistent: zol <= rhs + slack,
        degree,
        theta_grid_size: thetas.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{build_gauss_hermite, build_product, MarginalSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hermite6(delta: f64) -> QuadratureMeasure {
        build_product(&[MarginalSpec::Hermite6 { delta }; 2], 10).unwrap()
    }

    #[test]
    fn default_grid_shape() {
        let g = default_theta_grid(2).unwrap();
        assert_eq!(g.len(), 3 * 64);
        let mags: Vec<f64> = g[..64].iter().map(|t| t.norm_sq().sqrt()).collect();
        assert!((mags[0] - 0.25).abs() < 1e-15 && (mags[63] - 8.0).abs() < 1e-12);
        assert!(mags.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn cosine_family_is_admissible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in default_theta_grid(2).unwrap().iter().step_by(7) {
            for _ in 0..1000 {
                let x = [rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0)];
                assert!(t.hessian(&x).frobenius_norm() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn identical_measures_have_zero_gap() {
        let g = build_gauss_hermite(2, 8).unwrap();
        assert_eq!(zol2_lower(&g, &g, &default_theta_grid(2).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn hermite6_axis_oracle() {
        // max_θ δ θ⁴ e^{−θ²/2} at θ² = 4
        let axis: Vec<CosineTest> = (1..=400).map(|i| CosineTest::new(vec![i as f64 * 0.01, 0.0]).unwrap()).collect();
        let g = build_gauss_hermite(2, 8).unwrap();
        for delta in [0.002, 0.004, 0.008] {
            let got = zol2_lower(&hermite6(delta), &g, &axis).unwrap();
            let expect = 16.0 * (-2.0f64).exp() * delta;
            assert!((got - expect).abs() < 1e-14, "{got} {expect}");
        }
    }

    #[test]
    fn gaussian_variance_small_frequency_limit() {
        let s = 0.1;
        let mu =
            build_product(&[MarginalSpec::GaussianVar { sigma2: 1.0 + s }, MarginalSpec::StandardNormal], 8).unwrap();
        let g = build_gauss_hermite(2, 8).unwrap();
        let t = CosineTest::new(vec![1e-3, 0.0]).unwrap();
        let got = zol2_lower(&mu, &g, &[t]).unwrap();
        assert!((got - s / 2.0).abs() < 1e-4);
    }

    #[test]
    fn symmetric_and_grid_monotone() {
        let g = build_gauss_hermite(2, 8).unwrap();
        let mu = hermite6(0.006);
        let grid = default_theta_grid(2).unwrap();
        assert_eq!(zol2_lower(&mu, &g, &grid).unwrap(), zol2_lower(&g, &mu, &grid).unwrap());
        let coarse = zol2_lower(&mu, &g, &grid[..20]).unwrap();
        assert!(coarse <= zol2_lower(&mu, &g, &grid).unwrap());
        let g3 = build_gauss_hermite(3, 4).unwrap();
        assert!(matches!(zol2_lower(&mu, &g3, &grid), Err(Error::DimensionMismatch { .. })));
        assert!(zol2_lower(&mu, &g, &[]).is_err());
    }

    #[test]
    fn upper_bound_examples() {
        assert_eq!(stein_upper_bound(1.0, 3).unwrap(), 0.0);
        let v = stein_upper_bound(1.0001, 2).unwrap();
        assert!((v - 80.0 * (1.0001f64 * 0.0001).sqrt()).abs() < 1e-12);
        assert!((v - 0.80004).abs() < 1e-5);
        assert!(stein_upper_bound(1.2, 2).unwrap() < stein_upper_bound(1.3, 2).unwrap());
        assert!(stein_upper_bound(1.2, 2).unwrap() < stein_upper_bound(1.2, 3).unwrap());
        assert!(stein_upper_bound(0.9, 2).is_err());
        assert_eq!(stein_upper_bound(1.0 - 1e-12, 2).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_stability_endpoint() {
        let g = build_gauss_hermite(2, 8).unwrap();
        let r = stability_report(&g, 2, &default_theta_grid(2).unwrap(), DEFAULT_SLACK).unwrap();
        assert!((r.cpk_lower - 1.0).abs() < 1e-8);
        assert_eq!(r.zol2_lower, 0.0);
        assert_eq!(r.rhs, 0.0);
        assert!(r.consistent);
    }

    #[test]
    fn non_isotropic_is_rejected() {
        let v = build_product(&[MarginalSpec::GaussianVar { sigma2: 2.0 }, MarginalSpec::StandardNormal], 8).unwrap();
        let r = stability_report(&v, 2, &default_theta_grid(2).unwrap(), DEFAULT_SLACK);
        assert!(matches!(r, Err(Error::Hypothesis(_))));
    }
}
