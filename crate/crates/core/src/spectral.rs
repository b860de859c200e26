//! Galerkin lower bounds on the Poincaré–Korn constant.
//!
//! On a finite trial space of centered vector fields with their rigid-motion
//! part removed, the Poincaré–Korn ratio
//!
//! ```text
//!     ‖u − a_u‖²_{L²(μ)} / (2 ‖∇_s u‖²_{L²(μ)})
//! ```
//!
//! is a ratio of two quadratic forms, the `L²` Gram `M` and the Dirichlet Gram
//! `K`. Its maximum over the span is the top eigenvalue of the pencil
//! `M w = λ (2K) w`, and because the true constant is a supremum over every
//! admissible field, that eigenvalue is a lower bound on it.
//!
//! Trial fields are `e_k He_α(x)` for `1 ≤ |α| ≤ degree`, listed by degree so
//! that the space for degree `d` is a prefix of the one for `d + 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{generalized_eigen, Matrix};
use crate::measure::{check_moments, QuadratureMeasure, DEFAULT_MOMENT_TOL};
use crate::polyfield::{
    antisym_projection_unchecked, check_isotropic, dirichlet_inner, l2_inner, sym_grad, MultiIndex, Polynomial,
    VectorField,
};
use crate::sum::pairwise_sum;

/// Relative threshold on the Dirichlet residual below which a trial field is
/// treated as a rigid motion or as dependent on earlier fields.
pub const KERNEL_THRESHOLD: f64 = 1e-12;

/// Relative gap under which two top eigenvalues count as tied.
const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BasisSet {
    fields: Vec<VectorField>,
    /// `(axis k, α)` generating each kept field; empty for custom bases.
    labels: Vec<(usize, MultiIndex)>,
    degree: usize,
    dim: usize,
}

impl BasisSet {
    /// A basis from caller-chosen fields: each is centered and stripped of its
    /// antisymmetric part; fields in the rigid-motion kernel are dropped.
    pub fn from_fields(fields: Vec<VectorField>, degree: usize, mu: &QuadratureMeasure) -> Result<Self> {
        require_moments(mu)?;
        let n = mu.dim();
        if let Some(f) = fields.iter().find(|f| f.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: f.dim() });
        }
        let projected: Vec<VectorField> =
            fields.iter().map(|f| quotient_representative(f, mu)).collect::<Result<_>>()?;
        let tab = tabulate(&projected, mu);
        let (_, k) = gram_from(&tab, mu);
        let keep = independent_prefix_selection(&k);
        if keep.is_empty() {
            return Err(Error::InvalidArgument("basis is empty after kernel removal".into()));
        }
        Ok(Self { fields: keep.iter().map(|&i| projected[i].clone()).collect(), labels: Vec::new(), degree, dim: n })
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    pub fn labels(&self) -> &[(usize, MultiIndex)] {
        &self.labels
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// `Σ c_i b_i`
    pub fn combine(&self, coeffs: &[f64]) -> VectorField {
        assert_eq!(coeffs.len(), self.fields.len());
        let mut out = VectorField::zero(self.dim);
        for (c, b) in coeffs.iter().zip(&self.fields) {
            if *c != 0.0 {
                out = &out + &b.scale(*c);
            }
        }
        out
    }
}

/// Gram matrices of a basis: `m` for `∫ b_i·b_j dμ`, `k` for
/// `∫ ∇_s b_i · ∇_s b_j dμ`.
#[derive(Debug, Clone)]
pub struct GramPair {
    pub m: Matrix,
    pub k: Matrix,
    /// Whether the quadrature integrates every entry exactly.
    pub exact: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CpkEstimate {
    /// Lower bound on the Poincaré–Korn constant.
    pub value: f64,
    pub degree: usize,
    pub basis_size: usize,
    /// Top pencil eigenvector in basis coordinates (`2K`-normalized).
    pub witness_coeffs: Vec<f64>,
    /// The same eigenvector expanded as a polynomial field.
    pub witness: VectorField,
    pub exact: bool,
    pub residuals: EstimateResiduals,
}

/// Checks on a computed estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResiduals {
    /// Relative eigen-equation residual of the witness.
    pub pencil: f64,
    /// `|rayleigh(witness) − value|`, recomputed from the polynomial field.
    pub witness_rayleigh_gap: f64,
    /// Size of the top eigenspace within the tie tolerance.
    pub tied_eigenvalues: usize,
}

/// Values and symmetrized gradients of fields at every node.
struct Tabulation {
    /// `values[f][node * n + k]`
    values: Vec<Vec<f64>>,
    /// `grads[f][node * n² + k * n + l]`
    grads: Vec<Vec<f64>>,
}

fn tabulate(fields: &[VectorField], mu: &QuadratureMeasure) -> Tabulation {
    let n = mu.dim();
    let per_field: Vec<(Vec<f64>, Vec<f64>)> = fields
        .par_iter()
        .map(|f| {
            let sg = sym_grad(f);
            let mut vals = Vec::with_capacity(mu.len() * n);
            let mut grads = Vec::with_capacity(mu.len() * n * n);
            for i in 0..mu.len() {
                let x = mu.node(i);
                vals.extend(f.eval(x));
                for k in 0..n {
                    for l in 0..n {
                        grads.push(sg.entry(k, l).eval(x));
                    }
                }
            }
            (vals, grads)
        })
        .collect();
    let (values, grads) = per_field.into_iter().unzip();
    Tabulation { values, grads }
}

fn weighted_dot(weights: &[f64], a: &[f64], b: &[f64], stride: usize) -> f64 {
    let terms: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let lo = i * stride;
            let s: f64 = a[lo..lo + stride].iter().zip(&b[lo..lo + stride]).map(|(x, y)| x * y).sum();
            w * s
        })
        .collect();
    pairwise_sum(&terms)
}

fn gram_from(tab: &Tabulation, mu: &QuadratureMeasure) -> (Matrix, Matrix) {
    let n = mu.dim();
    let count = tab.values.len();
    let pairs: Vec<(usize, usize)> = (0..count).flat_map(|i| (i..count).map(move |j| (i, j))).collect();
    let entries: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let m = weighted_dot(mu.weights(), &tab.values[i], &tab.values[j], n);
            let k = weighted_dot(mu.weights(), &tab.grads[i], &tab.grads[j], n * n);
            (m, k)
        })
        .collect();
    let mut m = Matrix::zeros(count, count);
    let mut k = Matrix::zeros(count, count);
    for (&(i, j), &(mv, kv)) in pairs.iter().zip(&entries) {
        m[(i, j)] = mv;
        m[(j, i)] = mv;
        k[(i, j)] = kv;
        k[(j, i)] = kv;
    }
    (m, k)
}

fn require_moments(mu: &QuadratureMeasure) -> Result<()> {
    let report = check_moments(mu, DEFAULT_MOMENT_TOL);
    if !report.passes {
        return Err(Error::Hypothesis(format!(
            "measure fails the moment assumption (centered {:e}, isotropy {:e}, third {:e}, fourth {:e})",
            report.centered_residual,
            report.isotropy_residual,
            report.third_moment_residual,
            report.fourth_moment_residual
        )));
    }
    Ok(())
}

/// Removes the mean and the antisymmetric linear part of `u`.
pub fn quotient_representative(u: &VectorField, mu: &QuadratureMeasure) -> Result<VectorField> {
    let mean = u.mean(mu);
    let centered = u.shifted(&mean);
    let a = antisym_projection_unchecked(&centered, mu)?;
    Ok(&centered - &a.as_field())
}

/// Trial space `{e_k He_α : 1 ≤ |α| ≤ degree}`, centered, with antisymmetric
/// parts removed, and with rigid motions and dependent fields dropped.
pub fn build_basis(n: usize, degree: usize, mu: &QuadratureMeasure) -> Result<BasisSet> {
    if mu.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mu.dim() });
    }
    if degree == 0 {
        return Err(Error::InvalidArgument("trial degree 0 leaves an empty basis".into()));
    }
    require_moments(mu)?;

    let mut raw = Vec::new();
    let mut labels = Vec::new();
    for d in 1..=degree {
        for alpha in MultiIndex::of_degree(n, d as u32) {
            let h = Polynomial::hermite(&alpha);
            for k in 0..n {
                raw.push(VectorField::along_axis(h.clone(), k));
                labels.push((k, alpha.clone()));
            }
        }
    }
    let projected: Vec<VectorField> = raw.par_iter().map(|f| quotient_representative(f, mu)).collect::<Result<_>>()?;

    let tab = tabulate(&projected, mu);
    let (_, k) = gram_from(&tab, mu);
    let keep = independent_prefix_selection(&k);
    if keep.is_empty() {
        return Err(Error::InvalidArgument("basis is empty after kernel removal".into()));
    }
    Ok(BasisSet {
        fields: keep.iter().map(|&i| projected[i].clone()).collect(),
        labels: keep.iter().map(|&i| labels[i].clone()).collect(),
        degree,
        dim: n,
    })
}

/// Greedy in-order selection: keep field `i` when its `K`-residual against the
/// fields already kept exceeds `KERNEL_THRESHOLD · max K_ii`.
fn independent_prefix_selection(k: &Matrix) -> Vec<usize> {
    let count = k.rows();
    let max_diag = (0..count).map(|i| k[(i, i)]).fold(0.0f64, f64::max);
    if max_diag <= 0.0 {
        return Vec::new();
    }
    let cut = KERNEL_THRESHOLD * max_diag;
    let mut keep: Vec<usize> = Vec::new();
    // rows of the Cholesky factor of K restricted to `keep`
    let mut l_rows: Vec<Vec<f64>> = Vec::new();
    for i in 0..count {
        let col: Vec<f64> = keep.iter().map(|&j| k[(j, i)]).collect();
        let mut y = Vec::with_capacity(keep.len());
        for (r, row) in l_rows.iter().enumerate() {
            let s: f64 = col[r] - row.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
            y.push(s / row[r]);
        }
        let resid = k[(i, i)] - y.iter().map(|v| v * v).sum::<f64>();
        if resid > cut {
            y.push(resid.sqrt());
            l_rows.push(y);
            keep.push(i);
        }
    }
    keep
}

/// `M_ij = ∫ b_i·b_j dμ`, `K_ij = ∫ ∇_s b_i·∇_s b_j dμ`.
pub fn assemble(basis: &BasisSet, mu: &QuadratureMeasure) -> Result<GramPair> {
    if basis.dim() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), got: mu.dim() });
    }
    let tab = tabulate(basis.fields(), mu);
    let (m, k) = gram_from(&tab, mu);
    let d = basis.degree();
    let e = mu.exactness_degree();
    let exact = e > 0 && e >= 2 * d;
    Ok(GramPair { m, k, exact })
}

/// Top eigenpair of `M w = λ (2K) w` on the degree-`degree` trial space.
pub fn cpk_lower_bound(mu: &QuadratureMeasure, degree: usize) -> Result<CpkEstimate> {
    if degree < 2 {
        return Err(Error::InvalidArgument(format!("trial degree must be at least 2, got {degree}")));
    }
    let basis = build_basis(mu.dim(), degree, mu)?;
    let gram = assemble(&basis, mu)?;
    let two_k = gram.k.scaled(2.0);
    let eig = generalized_eigen(&gram.m, &two_k).map_err(|e| match e {
        Error::Conditioning(msg) => Error::Conditioning(format!("reduced Dirichlet Gram: {msg}")),
        other => other,
    })?;
    let count = eig.values.len();
    let top = eig.values[count - 1];
    let tied: Vec<usize> = (0..count).filter(|&t| eig.values[t] >= top - TIE_TOLERANCE * top.abs().max(1.0)).collect();
    let coeffs = canonical_top_vector(&eig.vectors, &tied, &two_k);
    let witness = basis.combine(&coeffs);
    let residuals = EstimateResiduals {
        pencil: pencil_residual(&gram.m, &two_k, top, &coeffs),
        witness_rayleigh_gap: (rayleigh(&witness, mu)? - top).abs(),
        tied_eigenvalues: tied.len(),
    };
    Ok(CpkEstimate {
        value: top,
        degree,
        basis_size: basis.len(),
        witness_coeffs: coeffs,
        witness,
        exact: gram.exact,
        residuals,
    })
}

/// `‖M w − λ B w‖_∞ / (‖M‖_F ‖w‖_∞)`
fn pencil_residual(m: &Matrix, b: &Matrix, lambda: f64, w: &[f64]) -> f64 {
    let mw = m.matvec(w);
    let bw = b.matvec(w);
    let worst = mw.iter().zip(&bw).fold(0.0f64, |acc, (x, y)| acc.max((x - lambda * y).abs()));
    let scale = m.frobenius_norm() * w.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

/// Picks the vector of the (possibly degenerate) top eigenspace obtained by
/// `B`-orthogonally projecting the lowest-index unit vector that the space
/// does not annihilate. This does not depend on the rotation the eigensolver
/// happened to return inside the eigenspace.
fn canonical_top_vector(vectors: &Matrix, tied: &[usize], b: &Matrix) -> Vec<f64> {
    let n = vectors.rows();
    let cols: Vec<Vec<f64>> = tied.iter().map(|&t| vectors.column(t)).collect();
    // (Xᵀ B e_p)_t = (B x_t)_p
    let bx: Vec<Vec<f64>> = cols.iter().map(|x| b.matvec(x)).collect();
    let scale = bx.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for p in 0..n {
        let proj: Vec<f64> = bx.iter().map(|v| v[p]).collect();
        if proj.iter().any(|v| v.abs() > 1e-8 * scale) {
            let mut w = vec![0.0; n];
            for (x, c) in cols.iter().zip(&proj) {
                for i in 0..n {
                    w[i] += c * x[i];
                }
            }
            let norm = b.bilinear(&w, &w).sqrt();
            let sign = if w[p] < 0.0 { -1.0 } else { 1.0 };
            return w.iter().map(|v| sign * v / norm).collect();
        }
    }
    cols[0].clone()
}

/// Squared quotient norm `‖u − mean − A_u x‖²` and `‖∇_s u‖²`.
fn quotient_and_dirichlet(u: &VectorField, mu: &QuadratureMeasure) -> Result<(f64, f64)> {
    if u.dim() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: u.dim() });
    }
    check_isotropic(mu)?;
    let r = quotient_representative(u, mu)?;
    Ok((l2_inner(&r, &r, mu).value, dirichlet_inner(u, u, mu).value))
}

/// `‖u − a_u‖² / (2 ‖∇_s u‖²)`, with `a_u` the explicit antisymmetric
/// projection and the mean removed.
pub fn rayleigh(u: &VectorField, mu: &QuadratureMeasure) -> Result<f64> {
    let (q, s) = quotient_and_dirichlet(u, mu)?;
    if s <= 1e-14 {
        return Err(Error::Precondition(format!(
            "field lies in the kernel of the symmetrized gradient (‖∇_s u‖² = {s:e})"
        )));
    }
    Ok(q / (2.0 * s))
}

/// Smallest `ε ≥ 0` with `(2 − ε²/4) C ‖∇_s u‖² ≤ ‖u − a_u‖²`.
pub fn ibp_epsilon(u: &VectorField, mu: &QuadratureMeasure, c: f64) -> Result<f64> {
    let (q, s) = quotient_and_dirichlet(u, mu)?;
    epsilon_from(q, s, c)
}

fn epsilon_from(q: f64, s: f64, c: f64) -> Result<f64> {
    if s <= 1e-14 {
        return Err(Error::Precondition("field lies in the kernel of the symmetrized gradient".into()));
    }
    let ratio = q / (2.0 * s);
    if c < ratio * (1.0 - 1e-10) {
        return Err(Error::Precondition(format!(
            "C = {c} is below the Rayleigh quotient {ratio} of the field, so it is not a valid constant for it"
        )));
    }
    Ok(2.0 * (2.0 - q / (c * s)).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbpCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub epsilon: f64,
    pub holds: bool,
}

/// Compares `|∫(u−a_u)·(v−a_v) − 2C ∫∇_s u·∇_s v|` against
/// `ε C ‖∇_s u‖ ‖∇_s v‖` with `ε = ibp_epsilon(u, μ, C)`.
pub fn ibp_residual_check(u: &VectorField, v: &VectorField, mu: &QuadratureMeasure, c: f64) -> Result<IbpCheck> {
    if v.dim() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: v.dim() });
    }
    let (q, s) = quotient_and_dirichlet(u, mu)?;
    let epsilon = epsilon_from(q, s, c)?;
    let ru = quotient_representative(u, mu)?;
    let rv = quotient_representative(v, mu)?;
    let cross = l2_inner(&ru, &rv, mu).value;
    let grad_cross = dirichlet_inner(u, v, mu).value;
    let sv = dirichlet_inner(v, v, mu).value;
    let lhs = (cross - 2.0 * c * grad_cross).abs();
    let rhs = epsilon * c * s.sqrt() * sv.max(0.0).sqrt();
    Ok(IbpCheck { lhs, rhs, epsilon, holds: lhs <= rhs + 1e-10 })
}

/// Test fields in the span of `basis`: the basis fields themselves, then
/// seeded random combinations until `count` fields exist.
pub fn probe_battery(basis: &BasisSet, count: usize, seed: u64) -> Vec<VectorField> {
    let mut out: Vec<VectorField> = basis.fields().iter().take(count).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < count {
        let coeffs: Vec<f64> = (0..basis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        out.push(basis.combine(&coeffs));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{build_gauss_hermite, build_product, MarginalSpec};
    use crate::polyfield::{antisym_projection, candidate_field};

    fn hermite6(delta: f64, n: usize, m: usize) -> QuadratureMeasure {
        build_product(&vec![MarginalSpec::Hermite6 { delta }; n], m).unwrap()
    }

    #[test]
    fn linear_basis_keeps_symmetric_part_only() {
        let g = build_gauss_hermite(2, 8).unwrap();
        let b = build_basis(2, 1, &g).unwrap();
        assert_eq!(b.len(), 3);
        let g3 = build_gauss_hermite(3, 6).unwrap();
        assert_eq!(build_basis(3, 1, &g3).unwrap().len(), 6);
    }

    #[test]
    fn degree_zero_rejected() {
        let g = build_gauss_hermite(2, 8).unwrap();
        assert!(build_basis(2, 0, &g).is_err());
        assert!(cpk_lower_bound(&g, 1).is_err());
    }

    #[test]
    fn basis_fields_are_centered_and_projected() {
        let mu = hermite6(0.008, 2, 10);
        let b = build_basis(2, 3, &mu).unwrap();
        for f in b.fields() {
            assert!(f.mean(&mu).iter().all(|m| m.abs() < 1e-10));
            assert!(antisym_projection(f, &mu).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_span_contains_candidate() {
        let g = build_gauss_hermite(2, 8).unwrap();
        let b = build_basis(2, 2, &g).unwrap();
        let gram = assemble(&b, &g).unwrap();
        let u = candidate_field(0, 1, 2).unwrap();
        let rhs: Vec<f64> = b.fields().iter().map(|f| l2_inner(f, &u, &g).value).collect();
        // least squares in the M inner product
        let l = crate::linalg::cholesky(&gram.m).unwrap();
        let y = crate::linalg::forward_substitute(&l, &rhs);
        let captured: f64 = y.iter().map(|v| v * v).sum();
        let total = l2_inner(&u, &u, &g).value;
        assert!((total - captured).abs() < 1e-10, "{total} {captured}");
    }

    #[test]
    fn candidate_gram_is_three_and_three_halves() {
        for mu in [build_gauss_hermite(2, 8).unwrap(), hermite6(0.004, 2, 8)] {
            let b = BasisSet::from_fields(vec![candidate_field(0, 1, 2).unwrap()], 2, &mu).unwrap();
            let gram = assemble(&b, &mu).unwrap();
            assert!((gram.m[(0, 0)] - 3.0).abs() < 1e-12);
            assert!((gram.k[(0, 0)] - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_symmetry_and_hermite_orthogonality() {
        let g = build_gauss_hermite(2, 10).unwrap();
        let b = build_basis(2, 4, &g).unwrap();
        let gram = assemble(&b, &g).unwrap();
        assert!(gram.exact);
        assert!(gram.m.asymmetry() < 1e-12 && gram.k.asymmetry() < 1e-12);
        // different total degree of α ⇒ orthogonal (degree ≥ 2; degree 1 is projected)
        for i in 0..b.len() {
            for j in 0..b.len() {
                let di = b.labels()[i].1.total_degree();
                let dj = b.labels()[j].1.total_degree();
                if di != dj && di >= 2 && dj >= 2 {
                    assert!(gram.m[(i, j)].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gaussian_constant_is_one() {
        let g = build_gauss_hermite(2, 8).unwrap();
        let est = cpk_lower_bound(&g, 2).unwrap();
        assert!((est.value - 1.0).abs() < 1e-8, "{}", est.value);
        let r = rayleigh(&est.witness, &g).unwrap();
        assert!((r - est.value).abs() < 1e-8);
    }

    #[test]
    fn perturbed_constant_exceeds_one() {
        let mu = hermite6(0.008, 2, 10);
        let est = cpk_lower_bound(&mu, 4).unwrap();
        assert!(est.value > 1.0);
        assert!((rayleigh(&est.witness, &mu).unwrap() - est.value).abs() < 1e-8);
    }

    #[test]
    fn top_eigenvalue_beats_random_search() {
        let mu = hermite6(0.008, 2, 10);
        let est = cpk_lower_bound(&mu, 3).unwrap();
        let b = build_basis(2, 3, &mu).unwrap();
        let gram = assemble(&b, &mu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
        let mut best = 0.0f64;
        for _ in 0..2000 {
            let c: Vec<f64> = (0..b.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            best = best.max(gram.m.bilinear(&c, &c) / (2.0 * gram.k.bilinear(&c, &c)));
        }
        assert!(best <= est.value + 1e-12);
        // ascent from the witness cannot improve
        let w = &est.witness_coeffs;
        for i in 0..b.len() {
            let mut c = w.clone();
            c[i] += 1e-3;
            let r = gram.m.bilinear(&c, &c) / (2.0 * gram.k.bilinear(&c, &c));
            assert!(r <= est.value + 1e-12);
        }
    }

    #[test]
    fn moment_failure_is_a_hypothesis_error() {
        let v =
            build_product(&[MarginalSpec::GaussianVar { sigma2: 2.0 }, MarginalSpec::GaussianVar { sigma2: 1.0 }], 8)
                .unwrap();
        assert!(matches!(cpk_lower_bound(&v, 2), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn rayleigh_examples() {
        let g = build_gauss_hermite(3, 6).unwrap();
        let u = candidate_field(0, 2, 3).unwrap();
        assert!((rayleigh(&u, &g).unwrap() - 1.0).abs() < 1e-12);
        assert!((rayleigh(&u.scale(-3.5), &g).unwrap() - 1.0).abs() < 1e-12);
        let s = Matrix::from_rows(&[vec![1.0, 0.5, 0.0], vec![0.5, -0.3, 0.2], vec![0.0, 0.2, -0.7]]);
        assert!((rayleigh(&VectorField::linear(&s), &g).unwrap() - 0.5).abs() < 1e-12);
        let a = crate::polyfield::AntisymMatrix::basis(3)[0].as_field();
        assert!(matches!(rayleigh(&a, &g), Err(Error::Precondition(_))));
    }

    #[test]
    fn epsilon_examples() {
        let g = build_gauss_hermite(2, 8).unwrap();
        let u = candidate_field(0, 1, 2).unwrap();
        assert_eq!(ibp_epsilon(&u, &g, 1.0).unwrap(), 0.0);
        let e = ibp_epsilon(&u, &g, 1.02).unwrap();
        let expect = 2.0 * 2f64.sqrt() * (1.0 - 1.0 / 1.02f64).sqrt();
        assert!((e - expect).abs() < 1e-10);
        assert!((e - 0.39606).abs() < 1e-5);
        assert!(matches!(ibp_epsilon(&u, &g, 0.9), Err(Error::Precondition(_))));
    }

    #[test]
    fn exact_integration_by_parts_at_gaussian() {
        let g = build_gauss_hermite(2, 10).unwrap();
        let u = candidate_field(1, 0, 2).unwrap();
        let b = build_basis(2, 4, &g).unwrap();
        for v in probe_battery(&b, 30, 7) {
            let chk = ibp_residual_check(&u, &v, &g, 1.0).unwrap();
            assert!(chk.lhs < 1e-10 && chk.holds, "{chk:?}");
        }
        let self_check = ibp_residual_check(&u, &u, &g, 1.3).unwrap();
        let (q, s) = (3.0f64, 1.5f64);
        assert!((self_check.lhs - (q - 2.0 * 1.3 * s).abs()).abs() < 1e-10);
        assert!(self_check.holds);
    }

    #[test]
    fn battery_is_deterministic() {
        let g = build_gauss_hermite(2, 8).unwrap();
        let b = build_basis(2, 2, &g).unwrap();
        let a = probe_battery(&b, 12, 3);
        let c = probe_battery(&b, 12, 3);
        assert_eq!(a, c);
        assert_eq!(a.len(), 12);
    }
}
