//! Probabilists' Hermite polynomials `He_k` (weight `e^{-x²/2}`) and the
//! one-dimensional rules built on them.

use crate::linalg::{jacobi_eigen, Matrix};

/// `He_k(x)` by the three-term recurrence `He_{k+1} = x He_k − k He_{k−1}`.
pub fn he(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = x * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Monomial coefficients of `He_k`, index = power.
pub fn he_coefficients(k: usize) -> Vec<f64> {
    let mut prev = vec![1.0];
    if k == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0];
    for j in 1..k {
        let mut next = vec![0.0; j + 2];
        for (p, c) in cur.iter().enumerate() {
            next[p + 1] += c;
        }
        for (p, c) in prev.iter().enumerate() {
            next[p] -= j as f64 * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// Expansion of `x^k` in the Hermite basis: `x^k = Σ_j c_j He_j(x)`, index = j.
///
/// `c_{k−2m} = k! / (2^m m! (k−2m)!)`.
pub fn monomial_in_hermite(k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k + 1];
    let mut m = 0;
    while 2 * m <= k {
        let j = k - 2 * m;
        out[j] = factorial(k) / (2f64.powi(m as i32) * factorial(m) * factorial(j));
        m += 1;
    }
    out
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// `∫ x^k dγ` for the standard normal: `(k−1)!!` for even `k`, zero otherwise.
pub fn gaussian_moment(k: usize) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    (1..k).step_by(2).map(|v| v as f64).product()
}

/// Orthonormal values `h_k = He_k/√k!` for `k < count`, and `h_count`.
fn orthonormal_hermite(count: usize, x: f64) -> (Vec<f64>, f64) {
    let mut h = Vec::with_capacity(count + 1);
    h.push(1.0);
    if count >= 1 {
        h.push(x);
    }
    for k in 1..count {
        let next = (x * h[k] - (k as f64).sqrt() * h[k - 1]) / ((k + 1) as f64).sqrt();
        h.push(next);
    }
    let top = h[count];
    h.truncate(count);
    (h, top)
}

/// `m`-point Gauss–Hermite rule against the standard normal density: nodes
/// ascending, weights summing to one.
///
/// Golub–Welsch supplies starting nodes, Newton on the orthonormal recurrence
/// polishes them, and the weights are the Christoffel numbers
/// `1 / Σ_{k<m} h_k(x)²`.
pub fn gauss_hermite_rule(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "Gauss–Hermite rule needs at least one node");
    let jacobi = Matrix::from_fn(m, m, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64).sqrt() } else { 0.0 });
    let mut nodes = jacobi_eigen(&jacobi).expect("tridiagonal Jacobi matrix is symmetric").values;
    for x in nodes.iter_mut() {
        for _ in 0..10 {
            let (h, top) = orthonormal_hermite(m, *x);
            // h_m' = √m h_{m−1}
            let deriv = (m as f64).sqrt() * h[m - 1];
            let step = top / deriv;
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }
    // exact symmetry about zero
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let r = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -r;
        nodes[j] = r;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    let mut weights: Vec<f64> =
        nodes.iter().map(|&x| 1.0 / orthonormal_hermite(m, x).0.iter().map(|v| v * v).sum::<f64>()).collect();
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let avg = 0.5 * (weights[i] + weights[j]);
        weights[i] = avg;
        weights[j] = avg;
    }
    let total: f64 = crate::sum::pairwise_sum(&weights);
    for w in weights.iter_mut() {
        *w /= total;
    }
    (nodes, weights)
}

/// `m`-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        dp = if d.is_finite() { d } else { dp };
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
