//! Runs the weak-coupling sweep of the shipped quasi-continuum configuration
//! and prints the error table.
//!
//! cargo run --example weak_coupling

use std::path::Path;

use wcl::analysis::convergence_experiment;
use wcl::io::RunConfig;

fn main() -> wcl::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quasicontinuum.json");
    let (cfg, base) = RunConfig::load(&path)?;
    let m = cfg.model.load(&base)?;
    let res = convergence_experiment(&m, &cfg.generator, &cfg.transition_time, &cfg.lambda_grid, cfg.tau_bar, cfg.time_nodes)?;
    println!("{:>6} {:>8} {:>12} {:>9} {:>10}", "λ", "T(λ)", "E(λ)", "argmax t", "a0");
    for r in &res.rows {
        println!(
            "{:6.3} {:8.3} {:12.4e} {:9.3} {:10.4}",
            r.lambda,
            r.t_lambda.unwrap_or(f64::NAN),
            r.sup_error,
            r.argmax_t,
            r.a0_plateau
        );
    }
    println!("total {:.0} ms", res.wall_ms);
    Ok(())
}
