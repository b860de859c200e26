//! The Gaussian Poisson equation `f − ∫f dγ = x·φ − Tr ∇φ` and the matrix
//! test fields built from its solution.
//!
//! The solution is Barbour's `φ_f = ∇ ∫₀^∞ P_t f dt`, where `P_t` is the
//! Ornstein–Uhlenbeck semigroup
//!
//! ```text
//!     P_t f(x) = ∫ f(e^{−t} x + √(1 − e^{−2t}) z) dγ(z).
//! ```
//!
//! Polynomials are solved exactly: `He_α` is an eigenfunction of `P_t` with
//! eigenvalue `e^{−|α| t}`, so the time integral divides each Hermite
//! coefficient by `|α|`. Other fields go through quadrature. Substituting
//! `s = e^{−t}` and commuting derivatives with the semigroup gives
//!
//! ```text
//!     φ    = ∫₀¹      P_s(∇f)  ds
//!     ∇φ   = ∫₀¹ s  · P_s(∇²f) ds
//!     ∇²φ  = ∫₀¹ s² · P_s(D³f) ds
//! ```
//!
//! with `P_s h(x) = ∫ h(s x + √(1 − s²) z) dγ(z)`, evaluated with
//! Gauss–Legendre nodes in `s` and a tensor Gauss–Hermite rule in `z`.
//!
//! Tensor norms are Frobenius norms of the flattened tensor throughout.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{gauss_hermite_rule, gauss_legendre_unit};
use crate::linalg::Matrix;
use crate::measure::{build_gauss_hermite_with_budget, dot, MeasureKind, QuadratureMeasure};
use crate::polyfield::{jacobian, MatrixField, MultiIndex, Polynomial, VectorField};

/// Seed for random probe points.
pub const PROBE_SEED: u64 = 0x5EED;

/// Default number of Gauss–Legendre nodes in `s = e^{−t}`.
pub const DEFAULT_TIME_NODES: usize = 64;

/// Highest polynomial degree the spectral solver accepts.
pub const MAX_SPECTRAL_DEGREE: usize = 8;

/// Largest inner Gaussian rule the semigroup solver will build.
const INNER_NODE_BUDGET: usize = 1_000_000;

/// Tolerance on `φ_g(0)` and `∇φ_g(0)` before `V` may be built.
const RECENTER_TOL: f64 = 1e-10;

/// A scalar test function with closed-form derivatives up to third order.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarField {
    Polynomial(Polynomial),
    /// `−cos(θ·x) / |θ|²`
    Cosine {
        theta: Vec<f64>,
    },
    /// `base(x) − aᵀx − ½ xᵀQx`
    Recentered {
        base: Box<ScalarField>,
        linear: Vec<f64>,
        quadratic: Matrix,
    },
}

impl ScalarField {
    pub fn cosine(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidArgument("frequency vector is empty".into()));
        }
        if theta.iter().any(|t| !t.is_finite()) || theta.iter().all(|&t| t == 0.0) {
            return Err(Error::InvalidArgument("frequency must be finite and nonzero".into()));
        }
        Ok(Self::Cosine { theta })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Polynomial(p) => p.dim(),
            Self::Cosine { theta } => theta.len(),
            Self::Recentered { linear, .. } => linear.len(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Polynomial(p) => p.eval(x),
            Self::Cosine { theta } => -dot(theta, x).cos() / norm_sq(theta),
            Self::Recentered { base, linear, quadratic } => {
                base.value(x) - dot(linear, x) - 0.5 * quadratic.bilinear(x, x)
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Polynomial(p) => p.gradient().eval(x),
            Self::Cosine { theta } => {
                let s = dot(theta, x).sin() / norm_sq(theta);
                theta.iter().map(|t| t * s).collect()
            }
            Self::Recentered { base, linear, quadratic } => {
                let mut g = base.gradient(x);
                let qx = quadratic.matvec(x);
                let qtx = quadratic.transpose().matvec(x);
                for k in 0..g.len() {
                    g[k] -= linear[k] + 0.5 * (qx[k] + qtx[k]);
                }
                g
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> Matrix {
        match self {
            Self::Polynomial(p) => jacobian(&p.gradient()).eval(x),
            Self::Cosine { theta } => {
                let c = dot(theta, x).cos() / norm_sq(theta);
                Matrix::from_fn(theta.len(), theta.len(), |i, j| theta[i] * theta[j] * c)
            }
            Self::Recentered { base, quadratic, .. } => {
                let mut h = base.hessian(x);
                let n = h.rows();
                for i in 0..n {
                    for j in 0..n {
                        h[(i, j)] -= 0.5 * (quadratic[(i, j)] + quadratic[(j, i)]);
                    }
                }
                h
            }
        }
    }

    /// `D³f(x)` flattened with index `(i n + j) n + k` for `∂_i ∂_j ∂_k f`.
    pub fn third_derivative(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        match self {
            Self::Polynomial(p) => {
                let mut out = vec![0.0; n * n * n];
                for i in 0..n {
                    let di = p.derivative(i);
                    for j in 0..n {
                        let dij = di.derivative(j);
                        for k in 0..n {
                            out[(i * n + j) * n + k] = dij.derivative(k).eval(x);
                        }
                    }
                }
                out
            }
            Self::Cosine { theta } => {
                let s = -dot(theta, x).sin() / norm_sq(theta);
                let mut out = Vec::with_capacity(n * n * n);
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            out.push(theta[i] * theta[j] * theta[k] * s);
                        }
                    }
                }
                out
            }
            Self::Recentered { base, .. } => base.third_derivative(x),
        }
    }

    /// Writes the flattened derivative tensor of the given order (1 to 3)
    /// into `out`. Cosines skip the intermediate allocations.
    fn derivative_into(&self, order: u32, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Cosine { theta } => {
                let arg = dot(theta, x);
                let trig = match order {
                    1 => arg.sin(),
                    2 => arg.cos(),
                    _ => -arg.sin(),
                } / norm_sq(theta);
                let n = theta.len();
                for (idx, slot) in out.iter_mut().enumerate() {
                    let mut v = trig;
                    let mut rest = idx;
                    for _ in 0..order {
                        v *= theta[rest % n];
                        rest /= n;
                    }
                    *slot = v;
                }
            }
            _ => {
                let full = match order {
                    1 => self.gradient(x),
                    2 => self.hessian(x).to_rows().concat(),
                    _ => self.third_derivative(x),
                };
                out.copy_from_slice(&full);
            }
        }
    }

    /// `∫ f dγ` in closed form.
    pub fn gaussian_mean(&self) -> f64 {
        match self {
            Self::Polynomial(p) => p.gaussian_mean(),
            Self::Cosine { theta } => {
                let t2 = norm_sq(theta);
                -(-0.5 * t2).exp() / t2
            }
            Self::Recentered { base, quadratic, .. } => {
                let trace: f64 = (0..quadratic.rows()).map(|i| quadratic[(i, i)]).sum();
                base.gaussian_mean() - 0.5 * trace
            }
        }
    }

    /// An upper bound on `sup_x ‖∇²f(x)‖₂`, when one is known in closed form.
    /// Polynomials of degree three or more have unbounded Hessians.
    pub fn hessian_sup_bound(&self) -> Option<f64> {
        match self {
            Self::Polynomial(p) if p.degree() <= 2 => {
                Some(jacobian(&p.gradient()).eval(&vec![0.0; p.dim()]).frobenius_norm())
            }
            Self::Polynomial(_) => None,
            Self::Cosine { .. } => Some(1.0),
            Self::Recentered { base, quadratic, .. } => {
                let mut sym = quadratic.clone();
                sym.symmetrize();
                base.hessian_sup_bound().map(|b| b + sym.frobenius_norm())
            }
        }
    }

    /// Short human-readable description.
    pub fn label(&self) -> String {
        match self {
            Self::Polynomial(p) => format!("poly(degree={}, terms={})", p.degree(), p.term_count()),
            Self::Cosine { theta } => {
                let parts: Vec<String> = theta.iter().map(|t| format!("{t}")).collect();
                format!("cosine({})", parts.join(","))
            }
            Self::Recentered { base, .. } => format!("recentered({})", base.label()),
        }
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|t| t * t).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    HermiteSpectral,
    SemigroupQuadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverOptions {
    /// Gauss–Legendre nodes in `s`.
    pub time_nodes: usize,
    /// Gauss–Hermite nodes per axis for the inner expectation; chosen from the
    /// field when `None`.
    pub inner_nodes: Option<usize>,
    /// Route polynomials through quadrature as well.
    pub force_quadrature: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { time_nodes: DEFAULT_TIME_NODES, inner_nodes: None, force_quadrature: false }
    }
}

#[derive(Debug, Clone)]
struct SemigroupSolver {
    f: ScalarField,
    s_nodes: Vec<f64>,
    s_weights: Vec<f64>,
    inner: QuadratureMeasure,
}

impl SemigroupSolver {
    /// `Σ_s w_s s^power Σ_z w_z D^order f(s x + √(1−s²) z)`, flattened.
    fn smooth(&self, x: &[f64], power: i32, order: u32) -> Vec<f64> {
        let n = x.len();
        let len = n.pow(order);
        let mut acc = vec![0.0; len];
        let mut inner = vec![0.0; len];
        let mut buf = vec![0.0; len];
        let mut y = vec![0.0; n];
        for (&s, &ws) in self.s_nodes.iter().zip(&self.s_weights) {
            let r = (1.0 - s * s).max(0.0).sqrt();
            inner.fill(0.0);
            for q in 0..self.inner.len() {
                let z = self.inner.node(q);
                for k in 0..n {
                    y[k] = s * x[k] + r * z[k];
                }
                self.f.derivative_into(order, &y, &mut buf);
                let wz = self.inner.weight(q);
                for (a, v) in inner.iter_mut().zip(&buf) {
                    *a += wz * v;
                }
            }
            let scale = ws * s.powi(power);
            for (a, v) in acc.iter_mut().zip(&inner) {
                *a += scale * v;
            }
        }
        acc
    }

    fn phi(&self, x: &[f64]) -> Vec<f64> {
        self.smooth(x, 0, 1)
    }

    fn jacobian(&self, x: &[f64]) -> Matrix {
        let n = x.len();
        let flat = self.smooth(x, 1, 2);
        Matrix::from_fn(n, n, |i, j| flat[i * n + j])
    }

    fn second(&self, x: &[f64]) -> Vec<f64> {
        self.smooth(x, 2, 3)
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Spectral {
        phi: VectorField,
        jac: MatrixField,
    },
    Semigroup(Box<SemigroupSolver>),
    /// `φ_base(x) − value − jacobian · x`
    Shifted {
        base: Box<SteinSolution>,
        value: Vec<f64>,
        jacobian: Matrix,
    },
}

/// Solution `φ` of the Gaussian Poisson equation for one right-hand side.
#[derive(Debug, Clone)]
pub struct SteinSolution {
    kind: SolverKind,
    dim: usize,
    repr: Repr,
    origin_value: Vec<f64>,
    origin_jacobian: Matrix,
}

impl SteinSolution {
    fn finish(kind: SolverKind, dim: usize, repr: Repr) -> Self {
        let mut sol = Self { kind, dim, repr, origin_value: vec![0.0; dim], origin_jacobian: Matrix::zeros(dim, dim) };
        let zero = vec![0.0; dim];
        let (v, j) = sol.phi_and_jacobian(&zero);
        sol.origin_value = v;
        sol.origin_jacobian = j;
        sol
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `φ(0)`
    pub fn origin_value(&self) -> &[f64] {
        &self.origin_value
    }

    /// `∇φ(0)`, entry `(i, j)` is `∂_j φ_i`.
    pub fn origin_jacobian(&self) -> &Matrix {
        &self.origin_jacobian
    }

    pub fn phi(&self, x: &[f64]) -> Vec<f64> {
        match &self.repr {
            Repr::Spectral { phi, .. } => phi.eval(x),
            Repr::Semigroup(s) => s.phi(x),
            Repr::Shifted { base, value, jacobian } => {
                let mut out = base.phi(x);
                let jx = jacobian.matvec(x);
                for k in 0..out.len() {
                    out[k] -= value[k] + jx[k];
                }
                out
            }
        }
    }

    /// `∇φ(x)`, entry `(i, j)` is `∂_j φ_i`.
    pub fn jacobian(&self, x: &[f64]) -> Matrix {
        match &self.repr {
            Repr::Spectral { jac, .. } => jac.eval(x),
            Repr::Semigroup(s) => s.jacobian(x),
            Repr::Shifted { base, jacobian, .. } => {
                let mut out = base.jacobian(x);
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        out[(i, j)] -= jacobian[(i, j)];
                    }
                }
                out
            }
        }
    }

    pub fn phi_and_jacobian(&self, x: &[f64]) -> (Vec<f64>, Matrix) {
        (self.phi(x), self.jacobian(x))
    }

    /// `D²φ(x)` flattened with index `(i n + j) n + k` for `∂_j ∂_k φ_i`.
    pub fn second_derivative(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        match &self.repr {
            Repr::Spectral { jac, .. } => {
                let mut out = Vec::with_capacity(n * n * n);
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            out.push(jac.entry(i, j).derivative(k).eval(x));
                        }
                    }
                }
                out
            }
            Repr::Semigroup(s) => s.second(x),
            Repr::Shifted { base, .. } => base.second_derivative(x),
        }
    }

    /// `φ` as an exact polynomial field, when it is one.
    pub fn as_polynomial(&self) -> Option<VectorField> {
        match &self.repr {
            Repr::Spectral { phi, .. } => Some(phi.clone()),
            Repr::Semigroup(_) => None,
            Repr::Shifted { base, value, jacobian } => {
                let b = base.as_polynomial()?;
                let negated: Vec<f64> = value.iter().map(|v| -v).collect();
                // shifted(c) subtracts c, so this is J x + value
                let affine = VectorField::linear(jacobian).shifted(&negated);
                Some(&b - &affine)
            }
        }
    }
}

/// `P_t f(x)` by quadrature against a Gaussian rule `gamma_quad`.
pub fn ou_semigroup(f: &ScalarField, t: f64, x: &[f64], gamma_quad: &QuadratureMeasure) -> Result<f64> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("semigroup time must be finite and ≥ 0, got {t}")));
    }
    if x.len() != f.dim() || gamma_quad.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: x.len().max(gamma_quad.dim()) });
    }
    if !matches!(gamma_quad.kind(), MeasureKind::Gaussian) {
        return Err(Error::InvalidArgument("semigroup quadrature needs a Gauss–Hermite rule".into()));
    }
    let decay = (-t).exp();
    let spread = (-(-2.0 * t).exp_m1()).sqrt();
    Ok(gamma_quad.integrate(|z| {
        let y: Vec<f64> = x.iter().zip(z).map(|(xi, zi)| decay * xi + spread * zi).collect();
        f.value(&y)
    }))
}

pub fn solve_stein(f: &ScalarField) -> Result<SteinSolution> {
    solve_stein_with(f, SolverOptions::default())
}

pub fn solve_stein_with(f: &ScalarField, options: SolverOptions) -> Result<SteinSolution> {
    let n = f.dim();
    match f {
        ScalarField::Polynomial(p) if !options.force_quadrature => solve_spectral(p),
        ScalarField::Recentered { base, linear, quadratic } => {
            let base_sol = solve_stein_with(base, options)?;
            // φ of aᵀx + ½xᵀQx is a + ½(Q + Qᵀ)x
            let half_sym = Matrix::from_fn(n, n, |i, j| 0.5 * (quadratic[(i, j)] + quadratic[(j, i)]));
            let kind = base_sol.kind;
            Ok(SteinSolution::finish(
                kind,
                n,
                Repr::Shifted { base: Box::new(base_sol), value: linear.clone(), jacobian: half_sym },
            ))
        }
        _ => solve_semigroup(f, options),
    }
}

fn solve_spectral(p: &Polynomial) -> Result<SteinSolution> {
    if p.degree() > MAX_SPECTRAL_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "spectral solver handles degree ≤ {MAX_SPECTRAL_DEGREE}, got {}",
            p.degree()
        )));
    }
    let n = p.dim();
    let potential: BTreeMap<MultiIndex, f64> = p
        .to_hermite()
        .into_iter()
        .filter(|(alpha, _)| alpha.total_degree() > 0)
        .map(|(alpha, c)| {
            let order = f64::from(alpha.total_degree());
            (alpha, c / order)
        })
        .collect();
    let phi = Polynomial::from_hermite(n, &potential).gradient();
    let jac = jacobian(&phi);
    Ok(SteinSolution::finish(SolverKind::HermiteSpectral, n, Repr::Spectral { phi, jac }))
}

fn solve_semigroup(f: &ScalarField, options: SolverOptions) -> Result<SteinSolution> {
    if options.time_nodes == 0 {
        return Err(Error::InvalidArgument("time quadrature needs at least one node".into()));
    }
    let n = f.dim();
    let m = options.inner_nodes.unwrap_or_else(|| inner_nodes_for(f));
    let m = m.max(2) + m % 2;
    let inner = build_gauss_hermite_with_budget(n, m, INNER_NODE_BUDGET)?;
    let (s_nodes, s_weights) = gauss_legendre_unit(options.time_nodes);
    let solver = SemigroupSolver { f: f.clone(), s_nodes, s_weights, inner };
    Ok(SteinSolution::finish(SolverKind::SemigroupQuadrature, n, Repr::Semigroup(Box::new(solver))))
}

/// Inner Gauss–Hermite size: exact for polynomials, and for a cosine the
/// smallest `m` whose error estimate `|θ|^{2m} m!/(2m)!` is below `1e-16`.
fn inner_nodes_for(f: &ScalarField) -> usize {
    match f {
        ScalarField::Polynomial(p) => p.degree() / 2 + 2,
        ScalarField::Cosine { theta } => {
            let ln_t = norm_sq(theta).sqrt().ln();
            let target = 1e-16f64.ln();
            let mut ln_ratio = 0.0; // ln(m!/(2m)!)
            for m in 1..200usize {
                ln_ratio += (m as f64).ln() - ((2 * m - 1) as f64).ln() - ((2 * m) as f64).ln();
                if 2.0 * m as f64 * ln_t + ln_ratio < target && m >= 8 {
                    return m;
                }
            }
            200
        }
        ScalarField::Recentered { base, .. } => inner_nodes_for(base),
    }
}

/// `max_x |f(x) − ∫f dγ − x·φ(x) + Tr ∇φ(x)|` over the probes.
pub fn verify_poisson(f: &ScalarField, sol: &SteinSolution, probes: &[Vec<f64>]) -> f64 {
    let mean = f.gaussian_mean();
    probes
        .iter()
        .map(|x| {
            let (phi, jac) = sol.phi_and_jacobian(x);
            let trace: f64 = (0..x.len()).map(|i| jac[(i, i)]).sum();
            (f.value(x) - mean - dot(x, &phi) + trace).abs()
        })
        .fold(0.0, f64::max)
}

/// Subtracts the affine part of `φ_f` at the origin.
///
/// With `a = φ_f(0)` and `J = ∇φ_f(0)`, returns `g = f − aᵀx − ½xᵀQx` for
/// `Q = J + Jᵀ` together with `φ_g = φ_f − a − J x`, so that `φ_g(0) = 0` and
/// `∇φ_g(0) = 0`.
pub fn recenter_solution(f: &ScalarField, sol: &SteinSolution) -> Result<(ScalarField, SteinSolution)> {
    if f.dim() != sol.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: sol.dim() });
    }
    let a = sol.origin_value().to_vec();
    let j = sol.origin_jacobian().clone();
    let q = Matrix::from_fn(sol.dim(), sol.dim(), |r, c| j[(r, c)] + j[(c, r)]);
    let g = ScalarField::Recentered { base: Box::new(f.clone()), linear: a.clone(), quadratic: q };
    let repr = Repr::Shifted { base: Box::new(sol.clone()), value: a, jacobian: j };
    Ok((g, SteinSolution::finish(sol.kind, sol.dim(), repr)))
}

/// A matrix-valued field with first derivatives, for the Stein residual.
pub trait MatrixTestFn: Sync {
    fn dim(&self) -> usize;

    /// `V(x)` and `∂_k V_ij(x)` at flat index `(i n + j) n + k`.
    fn value_and_gradient(&self, x: &[f64]) -> (Matrix, Vec<f64>);

    /// Whether the field is only defined by continuity at the origin.
    fn singular_at_origin(&self) -> bool {
        false
    }
}

impl MatrixTestFn for MatrixField {
    fn dim(&self) -> usize {
        MatrixField::dim(self)
    }

    fn value_and_gradient(&self, x: &[f64]) -> (Matrix, Vec<f64>) {
        let n = self.dim();
        let mut grad = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                let e = self.entry(i, j);
                for k in 0..n {
                    grad.push(e.derivative(k).eval(x));
                }
            }
        }
        (self.eval(x), grad)
    }
}

/// `V(x) = x φ_g(x)ᵀ / |x|²` with `V(0) = 0`.
#[derive(Debug, Clone)]
pub struct MatrixTestField {
    phi_g: SteinSolution,
}

impl MatrixTestField {
    pub fn generator(&self) -> &SteinSolution {
        &self.phi_g
    }

    pub fn value(&self, x: &[f64]) -> Matrix {
        let r2 = norm_sq(x);
        let n = x.len();
        if r2 == 0.0 {
            return Matrix::zeros(n, n);
        }
        let phi = self.phi_g.phi(x);
        Matrix::from_fn(n, n, |i, j| x[i] * phi[j] / r2)
    }
}

impl MatrixTestFn for MatrixTestField {
    fn dim(&self) -> usize {
        self.phi_g.dim()
    }

    fn value_and_gradient(&self, x: &[f64]) -> (Matrix, Vec<f64>) {
        let n = x.len();
        let r2 = norm_sq(x);
        if r2 == 0.0 {
            return (Matrix::zeros(n, n), vec![0.0; n * n * n]);
        }
        let (phi, jac) = self.phi_g.phi_and_jacobian(x);
        let r4 = r2 * r2;
        let value = Matrix::from_fn(n, n, |i, j| x[i] * phi[j] / r2);
        let mut grad = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let own = if i == k { phi[j] } else { 0.0 };
                    grad.push(-2.0 * x[k] * x[i] * phi[j] / r4 + (own + x[i] * jac[(j, k)]) / r2);
                }
            }
        }
        (value, grad)
    }

    fn singular_at_origin(&self) -> bool {
        true
    }
}

/// Builds `V` from a recentered solution; fails unless `φ_g(0)` and
/// `∇φ_g(0)` vanish.
#[allow(non_snake_case)]
pub fn build_V(sol_g: &SteinSolution) -> Result<MatrixTestField> {
    let value = sol_g.origin_value().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let jac = sol_g.origin_jacobian().to_rows().concat().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if value > RECENTER_TOL || jac > RECENTER_TOL {
        return Err(Error::Precondition(format!(
            "V needs φ(0) = 0 and ∇φ(0) = 0 (got {value:e}, {jac:e}); recenter the solution first"
        )));
    }
    Ok(MatrixTestField { phi_g: sol_g.clone() })
}

/// `|∫ (xxᵀ − I)·V dμ − ∫ Σ_ij x_i ∂_j V_ij dμ|`
pub fn stein_residual<V: MatrixTestFn + ?Sized>(v: &V, mu: &QuadratureMeasure) -> Result<f64> {
    let n = v.dim();
    if mu.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mu.dim() });
    }
    if v.singular_at_origin() && mu.contains_origin() {
        return Err(Error::Precondition("quadrature has a node at the origin".into()));
    }
    let total = mu.integrate(|x| {
        let (val, grad) = v.value_and_gradient(x);
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                acc += (x[i] * x[j] - id) * val[(i, j)];
                acc -= x[i] * grad[(i * n + j) * n + j];
            }
        }
        acc
    });
    Ok(total.abs())
}

/// `‖∇V_ij‖_{L²(μ)}` for every entry.
pub fn v_gradient_norms<V: MatrixTestFn + ?Sized>(v: &V, mu: &QuadratureMeasure) -> Result<Matrix> {
    let n = v.dim();
    if mu.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mu.dim() });
    }
    if v.singular_at_origin() && mu.contains_origin() {
        return Err(Error::Precondition("quadrature has a node at the origin".into()));
    }
    let grads: Vec<Vec<f64>> = (0..mu.len()).into_par_iter().map(|q| v.value_and_gradient(mu.node(q)).1).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let sq = crate::sum::par_tree_sum(mu.len(), |q| {
                let g = &grads[q][(i * n + j) * n..(i * n + j + 1) * n];
                mu.weight(q) * g.iter().map(|c| c * c).sum::<f64>()
            });
            out[(i, j)] = sq.sqrt();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// `max ‖∇φ(x)‖₂` over the grid.
    pub max_gradient_norm: f64,
    /// `max ‖∇²φ(x)‖₂` over the grid.
    pub max_hessian_norm: f64,
    /// Bound on `sup ‖∇²f‖₂`; a grid maximum when no closed form exists.
    pub hessian_sup: f64,
    /// `hessian_sup` is a true supremum bound rather than a grid maximum.
    pub hessian_sup_is_global: bool,
    /// `max ‖∇φ‖₂ ≤ ½ sup ‖∇²f‖₂ + 1e-8`
    pub gradient_holds: bool,
    /// `max ‖∇²φ‖₂ ≤ sup ‖∇²f‖₂ + 1e-8`
    pub hessian_holds: bool,
}

pub fn regularity_check(f: &ScalarField, sol: &SteinSolution, grid: &[Vec<f64>]) -> RegularityReport {
    let frob = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let mut max_gradient_norm = 0.0f64;
    let mut max_hessian_norm = 0.0f64;
    let mut grid_hessian = 0.0f64;
    for x in grid {
        max_gradient_norm = max_gradient_norm.max(sol.jacobian(x).frobenius_norm());
        max_hessian_norm = max_hessian_norm.max(frob(&sol.second_derivative(x)));
        grid_hessian = grid_hessian.max(f.hessian(x).frobenius_norm());
    }
    let (hessian_sup, hessian_sup_is_global) = match f.hessian_sup_bound() {
        Some(b) => (b, true),
        None => (grid_hessian, false),
    };
    RegularityReport {
        max_gradient_norm,
        max_hessian_norm,
        hessian_sup,
        hessian_sup_is_global,
        gradient_holds: max_gradient_norm <= 0.5 * hessian_sup + 1e-8,
        hessian_holds: max_hessian_norm <= hessian_sup + 1e-8,
    }
}

/// Tensor Gauss–Hermite points (four per axis) inside the ball of the given
/// radius, followed by `random_count` uniform points in that ball.
pub fn probe_grid(dim: usize, random_count: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let (axis, _) = gauss_hermite_rule(4);
    let mut out = Vec::new();
    if dim <= 4 {
        let total = axis.len().pow(dim as u32);
        for mut code in 0..total {
            let mut p = vec![0.0; dim];
            for k in (0..dim).rev() {
                p[k] = axis[code % axis.len()];
                code /= axis.len();
            }
            if norm_sq(&p) <= radius * radius {
                out.push(p);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn = 0;
    while drawn < random_count {
        let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect();
        if norm_sq(&p) <= radius * radius {
            out.push(p);
            drawn += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteinReport {
    pub f_spec: String,
    pub solver_kind: SolverKind,
    pub poisson_residual: f64,
    pub lipschitz_check: RegularityReport,
    #[serde(rename = "V_gradient_norms")]
    pub v_gradient_norms: Vec<Vec<f64>>,
    pub stein_residual: f64,
}

/// Solves for `f`, checks the Poisson equation and regularity on the default
/// probe grid, builds `V` and evaluates its Stein residual under `mu`.
pub fn stein_report(f: &ScalarField, f_spec: &str, mu: &QuadratureMeasure) -> Result<SteinReport> {
    if f.dim() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: f.dim() });
    }
    let sol = solve_stein(f)?;
    let probes = probe_grid(f.dim(), 100, 4.0, PROBE_SEED);
    let poisson_residual = verify_poisson(f, &sol, &probes);
    let lipschitz_check = regularity_check(f, &sol, &probes);
    let (_, sol_g) = recenter_solution(f, &sol)?;
    let v = build_V(&sol_g)?;
    Ok(SteinReport {
        f_spec: f_spec.to_string(),
        solver_kind: sol.kind(),
        poisson_residual,
        lipschitz_check,
        v_gradient_norms: v_gradient_norms(&v, mu)?.to_rows(),
        stein_residual: stein_residual(&v, mu)?,
    })
}
