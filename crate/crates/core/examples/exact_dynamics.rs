//! Solves the exact integral equation for the projected dynamics by
//! fixed-point iteration and compares it with `P0 exp((Z + λA)t) P0`.
//!
//! cargo run --example exact_dynamics

use nalgebra::DMatrix;
use wcl::kernels::volterra_solve;
use wcl::model::{build_random_model, QuadratureConfig};
use wcl::opalg::spectral_norm;
use wcl::propagate::Dynamics;

fn main() -> wcl::Result<()> {
    let lambda = 0.3;
    let m = build_random_model(7, 2, 8, 1.0, 1.0)?.with_lambda(lambda)?;
    let qc = QuadratureConfig::default();
    let tau_bar = 0.45;
    let sol = volterra_solve(&m, tau_bar, &DMatrix::identity(2, 2), &qc)?;
    println!("{} grid points, {} iterations, last increment {:.2e}", sol.tau.len(), sol.iterations(), sol.increments.last().unwrap());

    let d = Dynamics::new(&m);
    println!("{:>8} {:>12} {:>12}", "t", "‖W_t‖", "error");
    for k in (0..sol.tau.len()).step_by(sol.tau.len() / 8) {
        let t = sol.tau[k] / (lambda * lambda);
        let exact = d.projected(t);
        let err = spectral_norm(&(sol.schrodinger(&d, k) - &exact));
        println!("{t:8.3} {:12.9} {err:12.3e}", spectral_norm(&exact));
    }
    Ok(())
}
