//! Exact multivariate polynomial algebra with real coefficients, and the
//! scalar / vector / matrix polynomial fields built from it.
//!
//! Polynomials are sparse maps from exponent vectors to coefficients, kept
//! in graded-lex order with no stored zeros.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{gaussian_moment, he_coefficients, monomial_in_hermite};
use crate::linalg::Matrix;
use crate::measure::{QuadratureMeasure, DEFAULT_MOMENT_TOL};

/// Exponent vector of a monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// `e_k`
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut e = vec![0; dim];
        e[k] = 1;
        Self(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn combine(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `x^α`
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).filter(|(e, _)| **e > 0).map(|(&e, &xi)| xi.powi(e as i32)).product()
    }

    /// All multi-indices of dimension `dim` with total degree exactly `degree`,
    /// in descending lexicographic order.
    pub fn of_degree(dim: usize, degree: u32) -> Vec<MultiIndex> {
        fn rec(dim: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if prefix.len() + 1 == dim {
                prefix.push(left);
                out.push(MultiIndex(prefix.clone()));
                prefix.pop();
                return;
            }
            for e in (0..=left).rev() {
                prefix.push(e);
                rec(dim, left - e, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        if dim > 0 {
            rec(dim, degree, &mut Vec::with_capacity(dim), &mut out);
        }
        out
    }
}

impl Ord for MultiIndex {
    /// Graded lexicographic: total degree first, then `x₁ > x₂ > …`.
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree().cmp(&other.total_degree()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<TermRecord>", try_from = "Vec<TermRecord>")]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

/// Serialized form of one polynomial term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

impl From<Polynomial> for Vec<TermRecord> {
    fn from(p: Polynomial) -> Self {
        if p.terms.is_empty() {
            // keeps the dimension recoverable
            return vec![TermRecord { exponents: vec![0; p.dim], coeff: 0.0 }];
        }
        p.terms.into_iter().map(|(k, c)| TermRecord { exponents: k.0, coeff: c }).collect()
    }
}

impl TryFrom<Vec<TermRecord>> for Polynomial {
    type Error = Error;
    fn try_from(records: Vec<TermRecord>) -> Result<Self> {
        let dim = records
            .first()
            .map(|r| r.exponents.len())
            .ok_or_else(|| Error::InvalidArgument("polynomial needs at least one record".into()))?;
        let mut p = Polynomial::zero(dim);
        for r in records {
            if r.exponents.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.exponents.len() });
            }
            if !r.coeff.is_finite() {
                return Err(Error::InvalidArgument("non-finite coefficient".into()));
            }
            p.add_term(MultiIndex(r.exponents), r.coeff);
        }
        Ok(p)
    }
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(MultiIndex::zero(dim), c);
        p
    }

    /// `x_k`
    pub fn variable(dim: usize, k: usize) -> Self {
        Self::monomial(MultiIndex::unit(dim, k), 1.0)
    }

    pub fn monomial(index: MultiIndex, coeff: f64) -> Self {
        let mut p = Self::zero(index.dim());
        p.add_term(index, coeff);
        p
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Result<Self> {
        let mut p = Self::zero(dim);
        for (e, c) in terms {
            if e.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: e.len() });
            }
            p.add_term(MultiIndex(e), c);
        }
        Ok(p)
    }

    /// `Π_k He_{α_k}(x_k)` expanded in monomials.
    pub fn hermite(index: &MultiIndex) -> Self {
        let dim = index.dim();
        let mut p = Self::constant(dim, 1.0);
        for (k, &a) in index.0.iter().enumerate() {
            let mut axis = Self::zero(dim);
            for (power, c) in he_coefficients(a as usize).into_iter().enumerate() {
                let mut e = vec![0; dim];
                e[k] = power as u32;
                axis.add_term(MultiIndex(e), c);
            }
            p = &p * &axis;
        }
        p
    }

    pub fn add_term(&mut self, index: MultiIndex, coeff: f64) {
        assert_eq!(index.dim(), self.dim, "multi-index dimension");
        if coeff == 0.0 {
            return;
        }
        let entry = self.terms.entry(index);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let v = *o.get() + coeff;
                if v == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(k, v)| (k, *v))
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, exponents: &[u32]) -> f64 {
        self.terms.get(&MultiIndex(exponents.to_vec())).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; zero for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|k| k.total_degree() as usize).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.terms.iter().map(|(k, c)| c * k.eval(x)).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = Self::zero(self.dim);
        for (k, c) in &self.terms {
            p.add_term(k.clone(), c * s);
        }
        p
    }

    /// `∂_k p`
    pub fn derivative(&self, k: usize) -> Self {
        let mut p = Self::zero(self.dim);
        for (idx, c) in &self.terms {
            let e = idx.0[k];
            if e == 0 {
                continue;
            }
            let mut d = idx.0.clone();
            d[k] -= 1;
            p.add_term(MultiIndex(d), c * e as f64);
        }
        p
    }

    pub fn gradient(&self) -> VectorField {
        VectorField { components: (0..self.dim).map(|k| self.derivative(k)).collect() }
    }

    /// `∫ p dγ` from the exact Gaussian moments.
    pub fn gaussian_mean(&self) -> f64 {
        self.terms.iter().map(|(k, c)| c * k.0.iter().map(|&e| gaussian_moment(e as usize)).product::<f64>()).sum()
    }

    /// Coefficients in the tensor Hermite basis `He_α`.
    pub fn to_hermite(&self) -> BTreeMap<MultiIndex, f64> {
        let mut out: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (idx, c) in &self.terms {
            // expand each axis and take the tensor product
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), *c)];
            for &e in &idx.0 {
                let axis = monomial_in_hermite(e as usize);
                let mut next = Vec::new();
                for (prefix, pc) in &partial {
                    for (j, &aj) in axis.iter().enumerate() {
                        if aj != 0.0 {
                            let mut v = prefix.clone();
                            v.push(j as u32);
                            next.push((v, pc * aj));
                        }
                    }
                }
                partial = next;
            }
            for (e, v) in partial {
                *out.entry(MultiIndex(e)).or_insert(0.0) += v;
            }
        }
        out.retain(|_, v| *v != 0.0);
        out
    }

    pub fn from_hermite(dim: usize, coeffs: &BTreeMap<MultiIndex, f64>) -> Self {
        let mut p = Self::zero(dim);
        for (idx, c) in coeffs {
            p = &p + &Self::hermite(idx).scale(*c);
        }
        p
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, rhs.dim, "polynomial dimension");
        let mut p = self.clone();
        for (k, c) in &rhs.terms {
            p.add_term(k.clone(), *c);
        }
        p
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, rhs.dim, "polynomial dimension");
        let mut p = self.clone();
        for (k, c) in &rhs.terms {
            p.add_term(k.clone(), -*c);
        }
        p
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, rhs.dim, "polynomial dimension");
        let mut p = Polynomial::zero(self.dim);
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                p.add_term(a.combine(b), ca * cb);
            }
        }
        p
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// Polynomial map `R^n → R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    components: Vec<Polynomial>,
}

impl VectorField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::InvalidArgument("vector field needs at least one component".into()));
        }
        if let Some(c) = components.iter().find(|c| c.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: c.dim() });
        }
        Ok(Self { components })
    }

    pub fn zero(n: usize) -> Self {
        Self { components: vec![Polynomial::zero(n); n] }
    }

    /// `x ↦ A x`
    pub fn linear(a: &Matrix) -> Self {
        let n = a.rows();
        assert!(a.is_square());
        let components = (0..n)
            .map(|i| {
                let mut p = Polynomial::zero(n);
                for j in 0..n {
                    p.add_term(MultiIndex::unit(n, j), a[(i, j)]);
                }
                p
            })
            .collect();
        Self { components }
    }

    pub fn identity(n: usize) -> Self {
        Self::linear(&Matrix::identity(n))
    }

    /// `p · e_k`
    pub fn along_axis(p: Polynomial, k: usize) -> Self {
        let n = p.dim();
        let mut f = Self::zero(n);
        f.components[k] = p;
        f
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, k: usize) -> &Polynomial {
        &self.components[k]
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn degree(&self) -> usize {
        self.components.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Polynomial::is_zero)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { components: self.components.iter().map(|c| c.scale(s)).collect() }
    }

    /// Subtracts a constant vector.
    pub fn shifted(&self, c: &[f64]) -> Self {
        let n = self.dim();
        Self { components: self.components.iter().zip(c).map(|(p, &ci)| p - &Polynomial::constant(n, ci)).collect() }
    }

    pub fn mean(&self, mu: &QuadratureMeasure) -> Vec<f64> {
        self.components.iter().map(|c| mu.integrate(|x| c.eval(x))).collect()
    }
}

impl Add for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        VectorField { components: self.components.iter().zip(&rhs.components).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        VectorField { components: self.components.iter().zip(&rhs.components).map(|(a, b)| a - b).collect() }
    }
}

/// Polynomial map `R^n → M_{n×n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixField {
    entries: Vec<Vec<Polynomial>>,
}

impl MatrixField {
    pub fn new(entries: Vec<Vec<Polynomial>>) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::InvalidArgument("matrix field needs at least one row".into()));
        }
        for row in &entries {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            if let Some(p) = row.iter().find(|p| p.dim() != n) {
                return Err(Error::DimensionMismatch { expected: n, got: p.dim() });
            }
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i][j]
    }

    pub fn degree(&self) -> usize {
        self.entries.iter().flatten().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| self.entries[i][j].eval(x))
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim();
        Self { entries: (0..n).map(|i| (0..n).map(|j| self.entries[j][i].clone()).collect()).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(Polynomial::is_zero)
    }

    pub fn is_symmetric(&self) -> bool {
        *self == self.transpose()
    }
}

/// Antisymmetric `n×n` matrix stored as its strict upper triangle, row by
/// row; this is also the enumeration order of the basis `E_ij − E_ji`, `i<j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntisymMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl AntisymMatrix {
    pub fn zero(n: usize) -> Self {
        Self { n, upper: vec![0.0; n * (n - 1) / 2] }
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Takes the upper triangle; the caller vouches for antisymmetry.
    pub fn from_upper(a: &Matrix) -> Self {
        let n = a.rows();
        let mut m = Self::zero(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let s = m.slot(i, j);
                m.upper[s] = a[(i, j)];
            }
        }
        m
    }

    /// `E_ij − E_ji` for `i < j`, lexicographic.
    pub fn basis(n: usize) -> Vec<Self> {
        let count = n * (n - 1) / 2;
        (0..count)
            .map(|s| {
                let mut m = Self::zero(n);
                m.upper[s] = 1.0;
                m
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            Ordering::Equal => 0.0,
            Ordering::Less => self.upper[self.slot(i, j)],
            Ordering::Greater => -self.upper[self.slot(j, i)],
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum()).collect()
    }

    pub fn as_field(&self) -> VectorField {
        VectorField::linear(&self.to_matrix())
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Entry `(i, j)` is `∂_j u_i`.
pub fn jacobian(u: &VectorField) -> MatrixField {
    let n = u.dim();
    MatrixField { entries: (0..n).map(|i| (0..n).map(|j| u.component(i).derivative(j)).collect()).collect() }
}

/// Symmetrized gradient, entry `(k, l)` is `½(∂_k u_l + ∂_l u_k)`.
pub fn sym_grad(u: &VectorField) -> MatrixField {
    let n = u.dim();
    let jac = jacobian(u);
    let entries = (0..n).map(|k| (0..n).map(|l| (jac.entry(l, k) + jac.entry(k, l)).scale(0.5)).collect()).collect();
    MatrixField { entries }
}

/// `A_u = ½ ∫ (u xᵀ − x uᵀ) dμ`, the matrix of the `L²(μ)`-closest
/// antisymmetric linear field. Requires an isotropic `μ`.
pub fn antisym_projection(u: &VectorField, mu: &QuadratureMeasure) -> Result<AntisymMatrix> {
    check_isotropic(mu)?;
    antisym_projection_unchecked(u, mu)
}

pub(crate) fn check_isotropic(mu: &QuadratureMeasure) -> Result<()> {
    let r = mu.isotropy_residual();
    if r > DEFAULT_MOMENT_TOL {
        return Err(Error::Precondition(format!(
            "antisymmetric projection needs an isotropic measure (isotropy residual {r:e})"
        )));
    }
    Ok(())
}

pub(crate) fn antisym_projection_unchecked(u: &VectorField, mu: &QuadratureMeasure) -> Result<AntisymMatrix> {
    let n = mu.dim();
    if u.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.dim() });
    }
    let mut a = AntisymMatrix::zero(n);
    for k in 0..n {
        for l in (k + 1)..n {
            let uk = u.component(k);
            let ul = u.component(l);
            let v = 0.5 * mu.integrate(|x| uk.eval(x) * x[l] - x[k] * ul.eval(x));
            let s = a.slot(k, l);
            a.upper[s] = v;
        }
    }
    Ok(a)
}

/// The field `u_k = δ_ik (1 − x_j²) + δ_jk x_i x_j` (zero-based `i ≠ j`).
pub fn candidate_field(i: usize, j: usize, n: usize) -> Result<VectorField> {
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidArgument(format!(
            "candidate field needs distinct indices below {n}, got ({i}, {j})"
        )));
    }
    let mut u = VectorField::zero(n);
    let mut xj2 = vec![0; n];
    xj2[j] = 2;
    u.components[i] = Polynomial::from_terms(n, [(vec![0; n], 1.0), (xj2, -1.0)])?;
    let mut xixj = vec![0; n];
    xixj[i] = 1;
    xixj[j] = 1;
    u.components[j] = Polynomial::monomial(MultiIndex(xixj), 1.0);
    Ok(u)
}

/// A quadrature value together with whether the rule integrates it exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub exact: bool,
}

fn exact_for(mu: &QuadratureMeasure, degree: usize) -> bool {
    // zero means the rule's exactness is unknown
    mu.exactness_degree() > 0 && mu.exactness_degree() >= degree
}

/// `∫ u·v dμ`
pub fn l2_inner(u: &VectorField, v: &VectorField, mu: &QuadratureMeasure) -> Integral {
    assert_eq!(u.dim(), v.dim());
    let value = mu.integrate(|x| u.components().iter().zip(v.components()).map(|(a, b)| a.eval(x) * b.eval(x)).sum());
    Integral { value, exact: exact_for(mu, u.degree() + v.degree()) }
}

/// `∫ ∇_s u · ∇_s v dμ` (Frobenius pairing).
pub fn dirichlet_inner(u: &VectorField, v: &VectorField, mu: &QuadratureMeasure) -> Integral {
    assert_eq!(u.dim(), v.dim());
    let su = sym_grad(u);
    let sv = sym_grad(v);
    let n = u.dim();
    let value = mu.integrate(|x| {
        let mut s = 0.0;
        for k in 0..n {
            for l in 0..n {
                let a = su.entry(k, l);
                let b = sv.entry(k, l);
                if !a.is_zero() && !b.is_zero() {
                    s += a.eval(x) * b.eval(x);
                }
            }
        }
        s
    });
    let deg = u.degree().saturating_sub(1) + v.degree().saturating_sub(1);
    Integral { value, exact: exact_for(mu, deg) }
}
