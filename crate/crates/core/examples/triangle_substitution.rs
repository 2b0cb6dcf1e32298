//! Evaluates the second-order term of the integral equation in the original
//! (s, u) variables and on the triangle domains of the (σ, x) substitution.
//!
//! cargo run --example triangle_substitution

use wcl::kernels::{second_order_term_su, second_order_term_triangle, TriangleDomain};
use wcl::model::{build_random_model, QuadratureConfig};
use wcl::opalg::spectral_norm;
use wcl::propagate::Dynamics;

fn main() -> wcl::Result<()> {
    let lambda = 0.4;
    let tau = 0.4;
    let m = build_random_model(7, 2, 8, 1.0, 1.0)?.with_lambda(lambda)?;
    let qc = QuadratureConfig::default();
    let d = Dynamics::new(&m);
    let w = |u: f64| d.projected(u);
    let su = second_order_term_su(&m, tau / (lambda * lambda), &qc, w)?;
    println!("‖second-order term‖ = {:.6}", spectral_norm(su.matrix()));
    for (alpha, q) in [(-1.0, -0.5), (0.0, 0.0), (0.5, 0.0), (1.0, 0.5)] {
        let dom = TriangleDomain::new(lambda, tau, alpha, q);
        let tri = second_order_term_triangle(&m, tau, alpha, q, &qc, w)?;
        println!(
            "α = {alpha:5.2}, q = {q:5.2}: vertices {:?}, area {:.4}, difference {:.2e}",
            dom.vertices().map(|(a, b)| (round(a), round(b))),
            dom.area(),
            spectral_norm(&(tri.matrix() - su.matrix()))
        );
    }
    Ok(())
}

fn round(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}
