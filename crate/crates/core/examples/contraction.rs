//! Contrasts the dynamical average, whose semigroup contracts, with the
//! Davies-type family member, which does not, and checks the decomposition
//! of the full-space generator.
//!
//! cargo run --example contraction

use wcl::analysis::{contraction_scan, dissipativity_check, DEFAULT_ALPHAS};
use wcl::generators::{dyn_avg_generator, family_generator, semigroup_generator, tilde_decomposition, DynAvgForm};
use wcl::model::{build_random_model, QuadratureConfig};
use wcl::opalg::spectral_norm;

fn main() -> wcl::Result<()> {
    let lambda = 0.2;
    let m = build_random_model(2, 4, 64, 2.0, 1.0)?.with_lambda(lambda)?;
    let qc = QuadratureConfig::default();
    let t = 1.0 / (lambda * m.a_norm());
    let t_max = 1.0 / (lambda * lambda);

    for (name, k) in [
        ("dynamical average", dyn_avg_generator(&m, t, DynAvgForm::QAverage, &qc)?),
        ("family (½, 0, T)", family_generator(&m, 0.5, 0.0, t, &qc)?),
    ] {
        let scan = contraction_scan(&m, &k, lambda, t_max, 200)?;
        let diss = dissipativity_check(&semigroup_generator(&m, &k)?, &DEFAULT_ALPHAS, 32, 1)?;
        println!(
            "{name:<18} max norm {:.9} at t = {:.3}; resolvent slack {:+.2e}",
            scan.max_norm, scan.argmax_t, diss.min_slack
        );
    }

    let small = build_random_model(7, 2, 8, 1.0, 1.0)?;
    let td = tilde_decomposition(&small, 5.0, &qc)?;
    let k = dyn_avg_generator(&small, 5.0, DynAvgForm::OrderedDouble, &qc)?;
    println!("\n‖P0 K̃ P0 − K_T‖ = {:.2e}", spectral_norm(&(td.reduced().matrix() - k.matrix())));
    println!("conservative part skew residual = {:.2e}", td.conservative.skew_hermitian_residual());
    Ok(())
}
