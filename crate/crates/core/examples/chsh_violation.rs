//! CHSH values of the quantum and hidden-variable models, and of simulated
//! data with finite visibility.

use bell_lab::analysis::{chsh_from_model, chsh_from_records, ModelSpec};
use bell_lab::inequality::{ChshAngles, CHSH_CLASSICAL_BOUND, TSIRELSON_BOUND};
use bell_lab::model::{AnalyzerSettings, StateModel};
use bell_lab::simulator::{run_experiment, ExperimentPlan, NoiseConfig};

pub fn run() -> bell_lab::Result<()> {
    let angles = ChshAngles::standard();
    println!("angles (deg): {:?}", angles.degrees());
    println!("classical bound {CHSH_CLASSICAL_BOUND}, Tsirelson {TSIRELSON_BOUND:.6}");
    for (name, model) in [("max", StateModel::max_entangled()), ("lhv", StateModel::lhv())] {
        println!("S[{name}] = {:.6}", chsh_from_model(&ModelSpec::new(model), &angles)?);
    }

    let pairs: Vec<AnalyzerSettings> = angles
        .pairs()
        .iter()
        .map(|&(a, b)| AnalyzerSettings::new(a, b))
        .collect::<bell_lab::Result<_>>()?;
    for visibility in [1.0, 0.8, 0.7] {
        let plan = ExperimentPlan {
            setting_pairs: pairs.clone(),
            shots_per_pair: 50_000,
            model: StateModel::max_entangled().with_visibility(visibility)?,
            noise: NoiseConfig::default(),
            seed: 1,
        };
        let records = run_experiment(&plan)?;
        let (s, sigma) = chsh_from_records(&records.iter().collect::<Vec<_>>())?;
        println!(
            "v={visibility}: S = {s:.4} +/- {sigma:.4}, {:.1} sigma above the classical bound",
            (s - CHSH_CLASSICAL_BOUND) / sigma
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> bell_lab::Result<()> {
    run()
}
