//! Shot-by-shot sampling of the deterministic hidden-variable model against
//! its closed-form sawtooth.

use std::f64::consts::PI;

use bell_lab::model::{lhv_correlation, lhv_response, AnalyzerSettings};
use bell_lab::rng::Stream;

pub fn run() -> bell_lab::Result<()> {
    let samples = 200_000;
    let mut stream = Stream::new(11, 0);
    println!("delta/pi   sawtooth   sampled   cos 2delta");
    for k in 0..=8 {
        let delta = k as f64 * PI / 16.0;
        let mut sum = 0i64;
        for _ in 0..samples {
            let lambda = stream.uniform() * PI;
            sum += (lhv_response(lambda, 0.0).sign() * lhv_response(lambda, delta).sign()) as i64;
        }
        let exact = lhv_correlation(&AnalyzerSettings::new(0.0, delta)?)?;
        println!(
            "{:>8.4}  {:>+9.4}  {:>+8.4}  {:>+10.4}",
            delta / PI,
            exact,
            sum as f64 / samples as f64,
            (2.0 * delta).cos()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> bell_lab::Result<()> {
    run()
}
