//! A deviation that moves probability from `--` to `++` leaves the
//! correlation untouched. The same data fail the `(1,0,0,-1)` test.

use bell_lab::inequality::CoefficientVector;
use bell_lab::model::{model_quad, AnalyzerSettings, StateModel};
use bell_lab::simulator::{simulate, ExperimentPlan, NoiseConfig};
use bell_lab::statistics::{empirical_quad, evaluate_test};

pub fn run() -> bell_lab::Result<()> {
    let model = StateModel::max_entangled();
    let angles = [0.0, 22.5, 45.0, 67.5];
    let setting_pairs = angles
        .iter()
        .flat_map(|&a| angles.iter().map(move |&b| AnalyzerSettings::from_degrees(a, b)))
        .collect::<bell_lab::Result<Vec<_>>>()?;
    let plan = ExperimentPlan {
        setting_pairs,
        shots_per_pair: 100_000,
        model,
        noise: NoiseConfig {
            anomaly_eps1: 0.02,
            ..NoiseConfig::default()
        },
        seed: 7,
    };
    let sim = simulate(&plan)?;

    println!("alpha  beta   eps1    z(corr)  rho(corr)  z(1,0,0,-1)");
    for pair in &sim.pairs {
        let settings = pair.record.settings;
        let predicted = model_quad(&model, &settings)?;
        let observed = empirical_quad(&pair.record)?;
        let corr = evaluate_test(&CoefficientVector::CORRELATION, &observed, &predicted);
        let probe = evaluate_test(&CoefficientVector::SAME_IMBALANCE, &observed, &predicted);
        println!(
            "{:>5} {:>5}  {:.4}  {:>+7.2}  {:>9.3}  {:>+11.2}",
            settings.alpha_deg(),
            settings.beta_deg(),
            pair.applied_eps1,
            corr.z,
            corr.compensation_ratio,
            probe.z
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> bell_lab::Result<()> {
    run()
}
