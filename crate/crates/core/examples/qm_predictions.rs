//! Joint outcome probabilities and correlations for the entangled-state
//! models, next to the hidden-variable sawtooth.

use bell_lab::inequality::correlation;
use bell_lab::model::{model_quad, AnalyzerSettings, StateModel, OUTCOME_LABELS};

pub fn run() -> bell_lab::Result<()> {
    let models = [
        ("max", StateModel::max_entangled()),
        ("nonmax(0.6)", StateModel::non_max_entangled(0.6)?),
        ("max, v=0.9", StateModel::max_entangled().with_visibility(0.9)?),
        ("lhv", StateModel::lhv()),
    ];
    for (name, model) in &models {
        println!("{name}");
        for delta_deg in [0.0, 22.5, 45.0, 67.5, 90.0] {
            let settings = AnalyzerSettings::from_degrees(0.0, delta_deg)?;
            let quad = model_quad(model, &settings)?;
            let cells: Vec<String> = OUTCOME_LABELS
                .iter()
                .zip(quad.as_array())
                .map(|(label, p)| format!("P{label}={p:.4}"))
                .collect();
            println!("  beta={delta_deg:>5}  {}  E={:+.4}", cells.join(" "), correlation(&quad));
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> bell_lab::Result<()> {
    run()
}
