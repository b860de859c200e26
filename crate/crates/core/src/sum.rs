//! Deterministic reductions.
//!
//! Every integral in the crate is a weighted sum over quadrature nodes. Terms
//! are produced in node order (possibly in parallel) and then reduced by a
//! fixed binary tree, so the result does not depend on the worker count.

use rayon::prelude::*;

const LEAF: usize = 8;

/// Pairwise (tree) summation with a fixed split rule.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Evaluates `term(i)` for `i in 0..len` in parallel, then tree-sums in index order.
pub fn par_tree_sum<F>(len: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let terms: Vec<f64> = (0..len).into_par_iter().map(term).collect();
    pairwise_sum(&terms)
}
