//! Probability measures on `R^n` held as deterministic quadrature rules.
//!
//! The standard Gaussian `γ` is a tensor Gauss–Hermite rule. Product measures
//! reuse the same nodes and multiply each axis weight by the marginal density
//! ratio against the standard normal; Gaussian marginals with a different
//! variance rescale the nodes instead, so their moments stay exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{gauss_hermite_rule, he};
use crate::sum::par_tree_sum;

pub const DEFAULT_NODE_BUDGET: usize = 10_000_000;
pub const DEFAULT_MOMENT_TOL: f64 = 1e-10;

/// One-dimensional factor of a product measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginalSpec {
    StandardNormal,
    /// Density `(1 + δ He₆(x)) φ(x)`; moments through order five equal the normal ones.
    Hermite6 {
        delta: f64,
    },
    /// Centered normal with variance `sigma2`.
    GaussianVar {
        sigma2: f64,
    },
}

impl MarginalSpec {
    /// `∫ cos(t x) dρ(x)` in closed form (all marginals are symmetric).
    pub fn characteristic(&self, t: f64) -> f64 {
        let g = (-0.5 * t * t).exp();
        match *self {
            MarginalSpec::StandardNormal => g,
            // ∫ He₆ e^{itx} dγ = (it)⁶ e^{−t²/2} = −t⁶ e^{−t²/2}
            MarginalSpec::Hermite6 { delta } => g * (1.0 - delta * t.powi(6)),
            MarginalSpec::GaussianVar { sigma2 } => (-0.5 * sigma2 * t * t).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MarginalSpec::StandardNormal => Ok(()),
            MarginalSpec::Hermite6 { delta } => {
                let threshold = max_delta_h6();
                // He₆ → +∞ in the tails, so δ < 0 is never a density
                if !delta.is_finite() || delta < 0.0 || delta >= threshold {
                    Err(Error::PositivityViolation { delta, threshold })
                } else {
                    Ok(())
                }
            }
            MarginalSpec::GaussianVar { sigma2 } => {
                if sigma2.is_finite() && sigma2 > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("gaussian_var needs sigma2 > 0, got {sigma2}")))
                }
            }
        }
    }

    /// Per-axis nodes, weights and the polynomial degree integrated exactly.
    fn axis_rule(&self, nodes: &[f64], weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>, i64)> {
        let base_exact = 2 * nodes.len() as i64 - 1;
        match *self {
            MarginalSpec::StandardNormal => Ok((nodes.to_vec(), weights.to_vec(), base_exact)),
            MarginalSpec::Hermite6 { delta } => {
                let mut w = Vec::with_capacity(nodes.len());
                for (&x, &wx) in nodes.iter().zip(weights) {
                    let ratio = 1.0 + delta * he(6, x);
                    if ratio < 0.0 {
                        return Err(Error::PositivityViolation { delta, threshold: max_delta_h6() });
                    }
                    w.push(wx * ratio);
                }
                Ok((nodes.to_vec(), w, (base_exact - 6).max(0)))
            }
            MarginalSpec::GaussianVar { sigma2 } => {
                let s = sigma2.sqrt();
                Ok((nodes.iter().map(|x| s * x).collect(), weights.to_vec(), base_exact))
            }
        }
    }
}

/// How a measure was built; drives closed-form shortcuts and report dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum MeasureKind {
    Gaussian,
    Product(Vec<MarginalSpec>),
    /// Arbitrary user-supplied nodes and weights.
    Custom,
}

#[derive(Debug, Clone)]
pub struct QuadratureMeasure {
    dim: usize,
    nodes_per_axis: usize,
    /// Row-major: node `i` is `nodes[i*dim..(i+1)*dim]`.
    nodes: Vec<f64>,
    weights: Vec<f64>,
    exactness_degree: usize,
    kind: MeasureKind,
}

impl QuadratureMeasure {
    /// A measure from explicit points and nonnegative weights; the weights are
    /// normalized to sum to one. `exactness_degree = 0` means unknown.
    pub fn from_points(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>, exactness_degree: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidArgument("need dim > 0 and equally many (nonzero) points and weights".into()));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let nodes = points.concat();
        Self::assemble(dim, 0, nodes, weights, exactness_degree, MeasureKind::Custom)
    }

    fn assemble(
        dim: usize,
        nodes_per_axis: usize,
        nodes: Vec<f64>,
        mut weights: Vec<f64>,
        exactness_degree: usize,
        kind: MeasureKind,
    ) -> Result<Self> {
        let total = crate::sum::pairwise_sum(&weights);
        if total.is_nan() || total <= 0.0 {
            return Err(Error::InvalidArgument("total mass must be positive".into()));
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        Ok(Self { dim, nodes_per_axis, nodes, weights, exactness_degree, kind })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nodes per axis for tensor rules, zero for custom measures.
    pub fn nodes_per_axis(&self) -> usize {
        self.nodes_per_axis
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exactness_degree(&self) -> usize {
        self.exactness_degree
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn contains_origin(&self) -> bool {
        (0..self.len()).any(|i| self.node(i).iter().all(|&v| v == 0.0))
    }

    /// `∫ f dμ`, tree-summed over the nodes.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        par_tree_sum(self.len(), |i| self.weights[i] * f(self.node(i)))
    }

    /// `∫ cos(θ·x) dμ`: closed form for Gaussian and product measures,
    /// quadrature otherwise.
    pub fn characteristic(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: theta.len() });
        }
        Ok(match &self.kind {
            MeasureKind::Gaussian => (-0.5 * theta.iter().map(|t| t * t).sum::<f64>()).exp(),
            MeasureKind::Product(specs) => specs.iter().zip(theta).map(|(s, &t)| s.characteristic(t)).product(),
            MeasureKind::Custom => self.integrate(|x| dot(theta, x).cos()),
        })
    }

    /// Second-moment matrix `∫ x xᵀ dμ`.
    pub fn second_moments(&self) -> Vec<Vec<f64>> {
        let n = self.dim;
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = self.integrate(|x| x[i] * x[j]);
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        out
    }

    /// Largest `|∫ x_i x_j dμ − δ_ij|`.
    pub fn isotropy_residual(&self) -> f64 {
        let cov = self.second_moments();
        let mut worst = 0.0f64;
        for (i, row) in cov.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_budget(n: usize, m: usize, budget: usize) -> Result<()> {
    let requested = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if requested > budget as u128 {
        return Err(Error::NodeBudgetExceeded { requested, budget });
    }
    Ok(())
}

fn check_shape(n: usize, m: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("dimension must be at least 2, got {n}")));
    }
    if m < 2 || m % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "nodes per axis must be even and at least 2 (keeps the origin off the grid), got {m}"
        )));
    }
    Ok(())
}

fn tensor(axes: &[(Vec<f64>, Vec<f64>)], m: usize) -> (Vec<f64>, Vec<f64>) {
    let n = axes.len();
    let count = m.pow(n as u32);
    let mut nodes = Vec::with_capacity(count * n);
    let mut weights = Vec::with_capacity(count);
    let mut idx = vec![0usize; n];
    for _ in 0..count {
        let mut w = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            nodes.push(axes[k].0[i]);
            w *= axes[k].1[i];
        }
        weights.push(w);
        // last axis fastest
        for k in (0..n).rev() {
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
        }
    }
    (nodes, weights)
}

/// Tensor Gauss–Hermite rule for the standard Gaussian on `R^n`.
pub fn build_gauss_hermite(n: usize, m: usize) -> Result<QuadratureMeasure> {
    build_gauss_hermite_with_budget(n, m, DEFAULT_NODE_BUDGET)
}

pub fn build_gauss_hermite_with_budget(n: usize, m: usize, budget: usize) -> Result<QuadratureMeasure> {
    check_shape(n, m)?;
    check_budget(n, m, budget)?;
    let rule = gauss_hermite_rule(m);
    let axes = vec![rule; n];
    let (nodes, weights) = tensor(&axes, m);
    QuadratureMeasure::assemble(n, m, nodes, weights, 2 * m - 1, MeasureKind::Gaussian)
}

/// Product of the given marginals on the `m`-point Gauss–Hermite grid.
pub fn build_product(specs: &[MarginalSpec], m: usize) -> Result<QuadratureMeasure> {
    build_product_with_budget(specs, m, DEFAULT_NODE_BUDGET)
}

pub fn build_product_with_budget(specs: &[MarginalSpec], m: usize, budget: usize) -> Result<QuadratureMeasure> {
    let n = specs.len();
    check_shape(n, m)?;
    check_budget(n, m, budget)?;
    for s in specs {
        s.validate()?;
    }
    let (x, w) = gauss_hermite_rule(m);
    let mut axes = Vec::with_capacity(n);
    let mut exact = usize::MAX;
    for s in specs {
        let (ax, aw, e) = s.axis_rule(&x, &w)?;
        exact = exact.min(e as usize);
        axes.push((ax, aw));
    }
    let (nodes, weights) = tensor(&axes, m);
    QuadratureMeasure::assemble(n, m, nodes, weights, exact, MeasureKind::Product(specs.to_vec()))
}

/// Residuals of the moment assumption (centering, isotropy, vanishing third
/// moments, and the mixed fourth moments `∫(x_i²+x_j²)x_j² = 4`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub centered_residual: f64,
    pub isotropy_residual: f64,
    pub third_moment_residual: f64,
    pub fourth_moment_residual: f64,
    pub passes: bool,
    pub tolerance: f64,
    /// Set when the rule is not known to integrate quartics exactly.
    pub exactness_warning: bool,
}

pub fn check_moments(mu: &QuadratureMeasure, tol: f64) -> MomentReport {
    let n = mu.dim();
    let mut centered = 0.0f64;
    let mut third = 0.0f64;
    let mut fourth = 0.0f64;
    for i in 0..n {
        centered = centered.max(mu.integrate(|x| x[i]).abs());
        for j in i..n {
            for k in j..n {
                third = third.max(mu.integrate(|x| x[i] * x[j] * x[k]).abs());
            }
        }
        for j in 0..n {
            if i != j {
                let v = mu.integrate(|x| (x[i] * x[i] + x[j] * x[j]) * x[j] * x[j]);
                fourth = fourth.max((v - 4.0).abs());
            }
        }
    }
    let isotropy = mu.isotropy_residual();
    let passes = [centered, isotropy, third, fourth].iter().all(|r| *r <= tol);
    MomentReport {
        centered_residual: centered,
        isotropy_residual: isotropy,
        third_moment_residual: third,
        fourth_moment_residual: fourth,
        passes,
        tolerance: tol,
        exactness_warning: mu.exactness_degree() < 4,
    }
}

/// Largest `|δ|` keeping `1 + δ He₆` nonnegative: `1 / |min He₆|`.
///
/// The minimum sits at `x² = 5 + √10`; it is located here by a grid scan
/// followed by Newton steps on `He₆' = 6 He₅`.
pub fn max_delta_h6() -> f64 {
    let mut best_x = 0.0;
    let mut best = he(6, 0.0);
    let steps = 6000;
    for s in 0..=steps {
        let x = 6.0 * s as f64 / steps as f64;
        let v = he(6, x);
        if v < best {
            best = v;
            best_x = x;
        }
    }
    let mut x = best_x;
    for _ in 0..50 {
        // He₅' = 5 He₄
        let step = he(5, x) / (5.0 * he(4, x));
        x -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    1.0 / he(6, x).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::gaussian_moment;

    #[test]
    fn rejects_odd_or_small_m() {
        assert!(build_gauss_hermite(2, 7).is_err());
        assert!(build_gauss_hermite(2, 0).is_err());
        assert!(build_gauss_hermite(1, 8).is_err());
    }

    #[test]
    fn node_budget_is_enforced() {
        let err = build_gauss_hermite_with_budget(3, 10, 999).unwrap_err();
        assert!(matches!(err, Error::NodeBudgetExceeded { requested: 1000, budget: 999 }));
        assert!(build_gauss_hermite_with_budget(3, 10, 1000).is_ok());
    }

    #[test]
    fn first_moment_vanishes() {
        let g = build_gauss_hermite(2, 8).unwrap();
        assert!(g.integrate(|x| x[0]).abs() < 1e-14);
        let s: f64 = g.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(!g.contains_origin());
        assert_eq!(g.exactness_degree(), 15);
    }

    #[test]
    fn mixed_fourth_moment_is_four() {
        let g = build_gauss_hermite(2, 8).unwrap();
        assert!((g.integrate(|x| x[0] * x[0] * x[1] * x[1]) - 1.0).abs() < 1e-12);
        assert!((g.integrate(|x| x[1].powi(4)) - 3.0).abs() < 1e-12);
        assert!((g.integrate(|x| (x[0] * x[0] + x[1] * x[1]) * x[1] * x[1]) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn squared_norm_in_three_dimensions() {
        let g = build_gauss_hermite(3, 6).unwrap();
        assert!((g.integrate(|x| dot(x, x)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_exactness_generator_set() {
        let m = 5 * 2;
        let g = build_gauss_hermite(2, m).unwrap();
        for a in 0..(2 * m) {
            for b in [0usize, 1, 2, 5, 2 * m - 1] {
                let q = g.integrate(|x| x[0].powi(a as i32) * x[1].powi(b as i32));
                let exact = gaussian_moment(a) * gaussian_moment(b);
                let scale = (gaussian_moment(a + a % 2) * gaussian_moment(b + b % 2)).max(1.0);
                assert!((q - exact).abs() <= 1e-10 * scale, "a={a} b={b}");
            }
        }
    }

    #[test]
    fn standard_normal_product_equals_gaussian_rule() {
        let p = build_product(&[MarginalSpec::StandardNormal; 2], 8).unwrap();
        let g = build_gauss_hermite(2, 8).unwrap();
        assert_eq!(p.weights(), g.weights());
        for i in 0..g.len() {
            assert_eq!(p.node(i), g.node(i));
        }
    }

    #[test]
    fn hermite6_low_moments_match_gaussian() {
        let spec = MarginalSpec::Hermite6 { delta: 0.008 };
        let mu = build_product(&[spec, spec], 10).unwrap();
        for a in 0..=5usize {
            for b in 0..=(5 - a) {
                let q = mu.integrate(|x| x[0].powi(a as i32) * x[1].powi(b as i32));
                let exact = gaussian_moment(a) * gaussian_moment(b);
                assert!((q - exact).abs() < 1e-12, "a={a} b={b} {q} {exact}");
            }
        }
        // sixth moment moves by 720 δ
        let q6 = mu.integrate(|x| x[0].powi(6));
        assert!((q6 - (15.0 + 720.0 * 0.008)).abs() < 1e-10);
    }

    #[test]
    fn moment_reports() {
        let g = build_gauss_hermite(2, 8).unwrap();
        assert!(check_moments(&g, 1e-10).passes);
        let h = MarginalSpec::Hermite6 { delta: 0.008 };
        assert!(check_moments(&build_product(&[h, h], 8).unwrap(), 1e-10).passes);
        let v =
            build_product(&[MarginalSpec::GaussianVar { sigma2: 2.0 }, MarginalSpec::GaussianVar { sigma2: 1.0 }], 8)
                .unwrap();
        let r = check_moments(&v, 1e-10);
        assert!(!r.passes);
        assert!((r.isotropy_residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn low_exactness_sets_warning() {
        let g = build_gauss_hermite(2, 2).unwrap();
        assert!(check_moments(&g, 1e-10).exactness_warning);
    }

    #[test]
    fn h6_threshold() {
        let t = max_delta_h6();
        assert!(t <= 1.0 / 15.0);
        // x² = 5 + √10
        let x = (5.0 + 10f64.sqrt()).sqrt();
        assert!((1.0 / t - he(6, x).abs()).abs() < 1e-9);
        assert!((t - 0.00968).abs() < 5e-5, "{t}");
    }

    #[test]
    fn positivity_violation() {
        let bad = MarginalSpec::Hermite6 { delta: 0.05 };
        let err = build_product(&[bad, bad], 8).unwrap_err();
        assert!(matches!(err, Error::PositivityViolation { .. }));
        let ok = MarginalSpec::Hermite6 { delta: 0.009 };
        let mu = build_product(&[ok, ok], 20).unwrap();
        assert!(mu.weights().iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn closed_form_characteristic_matches_fine_quadrature() {
        let h = MarginalSpec::Hermite6 { delta: 0.008 };
        let mu = build_product(&[h, MarginalSpec::StandardNormal], 40).unwrap();
        let th = [1.3, -0.7];
        let quad = mu.integrate(|x| dot(&th, x).cos());
        assert!((mu.characteristic(&th).unwrap() - quad).abs() < 1e-13);
    }
}
