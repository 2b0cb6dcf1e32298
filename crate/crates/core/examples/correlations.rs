//! Tabulates the correlation integrals a_n(t) and the growth of a_0 up to
//! the recurrence time of a quasi-continuum.
//!
//! cargo run --example correlations

use wcl::analysis::{correlation_integral, correlation_profile};
use wcl::model::{build_random_model, QuadratureConfig, QuasiContinuum};

fn main() -> wcl::Result<()> {
    let qc = QuadratureConfig::default();
    let builder = QuasiContinuum::new(5, 1, 64, 20.0, 3.0, 1.0);
    let m = builder.build()?;
    let recurrence = 2.0 * std::f64::consts::PI / builder.spacing();
    println!("a_0(t) up to the recurrence time {recurrence:.2}:");
    for (t, a0) in correlation_profile(&m, recurrence, 10, &qc)? {
        println!("  t = {t:7.3}  a_0 = {a0:.6}");
    }
    // The quasi-continuum has no bath-bath coupling, so only a_0 is nonzero
    // there; the random model has all orders.
    let random = build_random_model(7, 2, 8, 1.0, 1.0)?;
    println!("\nrandom model, orders at t = 1:");
    for n in 0..=2 {
        println!("  a_{n}(1) = {:.6}", correlation_integral(&random, n, 1.0, &qc)?);
    }
    Ok(())
}
