//! Exact polynomial vector fields: the candidate extremal field, its
//! symmetrized gradient, the antisymmetric projection, and the two quadratic
//! forms whose ratio is the Poincaré–Korn quotient.

use pklab::measure::{build_gauss_hermite, build_product, MarginalSpec};
use pklab::polyfield::{
    antisym_projection, candidate_field, dirichlet_inner, l2_inner, sym_grad, Polynomial, VectorField,
};

fn main() -> pklab::Result<()> {
    let n = 3;
    // u_k = δ_ik (1 − x_j²) + δ_jk x_i x_j with (i, j) = (0, 2)
    let u = candidate_field(0, 2, n)?;
    for k in 0..n {
        println!("u_{k} has {} terms, degree {}", u.component(k).term_count(), u.component(k).degree());
    }
    let s = sym_grad(&u);
    println!("∇_s u symmetric: {}, degree {}", s.is_symmetric(), s.degree());

    let gamma = build_gauss_hermite(n, 6)?;
    let perturbed = build_product(&[MarginalSpec::Hermite6 { delta: 0.005 }; 3], 8)?;
    for (name, mu) in [("gaussian", &gamma), ("hermite6", &perturbed)] {
        let q = l2_inner(&u, &u, mu);
        let d = dirichlet_inner(&u, &u, mu);
        println!("{name:>9}: ‖u‖² = {:.12} (exact: {}), 2‖∇_s u‖² = {:.12}", q.value, q.exact, 2.0 * d.value);
    }

    // a rotation field is pure antisymmetric part
    let x = Polynomial::variable(n, 0);
    let y = Polynomial::variable(n, 1);
    let rotation = VectorField::new(vec![-&y, x, Polynomial::zero(n)])?;
    let a = antisym_projection(&rotation, &gamma)?;
    println!("A_rotation[0][1] = {:.12}, ∇_s is zero: {}", a.get(0, 1), sym_grad(&rotation).is_zero());

    println!("{}", serde_json::to_string(u.component(0)).expect("polynomial serializes"));
    Ok(())
}
