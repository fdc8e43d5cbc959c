//! Writes a counts file, reads it back and prints the JSON report the
//! `analyze` command would produce.

use bell_lab::analysis::{analyze, AnalysisConfig, ModelSpec};
use bell_lab::fitting::FitFamily;
use bell_lab::io::{load_dataset, to_json, write_counts, Dataset, DuplicatePolicy};
use bell_lab::model::{AnalyzerSettings, StateModel};
use bell_lab::simulator::{run_experiment, ExperimentPlan, NoiseConfig};

pub fn run() -> bell_lab::Result<()> {
    let plan = ExperimentPlan {
        setting_pairs: vec![
            AnalyzerSettings::from_degrees(0.0, 22.5)?,
            AnalyzerSettings::from_degrees(0.0, 67.5)?,
            AnalyzerSettings::from_degrees(45.0, 22.5)?,
            AnalyzerSettings::from_degrees(45.0, 67.5)?,
        ],
        shots_per_pair: 20_000,
        model: StateModel::max_entangled().with_visibility(0.98)?,
        noise: NoiseConfig::default(),
        seed: 2,
    };
    let path = std::env::temp_dir().join(format!("bell-lab-example-{}.csv", std::process::id()));
    write_counts(&Dataset::new(run_experiment(&plan)?), &path)?;
    print!("{}", std::fs::read_to_string(&path)?);

    let dataset = load_dataset(&path, DuplicatePolicy::Merge)?;
    std::fs::remove_file(&path)?;
    let mut config = AnalysisConfig::new(ModelSpec::new(StateModel::max_entangled()));
    config.fit = Some(FitFamily::new().free_visibility());
    let report = analyze(&dataset, &config)?;
    print!("{}", to_json(&report)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> bell_lab::Result<()> {
    run()
}
