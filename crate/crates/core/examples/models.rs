//! Builds the two model families, validates them and round-trips one
//! through JSON.
//!
//! cargo run --example models

use wcl::io::{model_from_json, model_to_json};
use wcl::model::{build_random_model, validate_model, QuasiContinuum};

fn main() -> wcl::Result<()> {
    let random = build_random_model(7, 2, 8, 1.0, 1.0)?.with_lambda(0.3)?;
    println!("random model n0={} n1={} ‖A‖={:.3}", random.n0, random.n1, random.a_norm());
    println!("{}", validate_model(&random));

    let builder = QuasiContinuum::new(1, 2, 64, 20.0, 1.0, 1.0).system_omega(vec![-4.0, 4.5]);
    let qc = builder.build()?;
    let recurrence = 2.0 * std::f64::consts::PI / builder.spacing();
    println!("\nquasi-continuum: spacing {:.4}, recurrence time {recurrence:.2}", builder.spacing());
    println!("{}", validate_model(&qc));

    let json = model_to_json(&random)?;
    let back = model_from_json(&json)?;
    println!("\nJSON round trip exact: {} ({} bytes)", back == random, json.len());
    Ok(())
}
