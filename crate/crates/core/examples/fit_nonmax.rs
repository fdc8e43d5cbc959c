//! Minimum chi-square fit of the nonmaximally entangled family, on clean
//! data and on data carrying a compensating anomaly.

use bell_lab::fitting::{fit_model, FitFamily};
use bell_lab::model::{AnalyzerSettings, StateModel};
use bell_lab::simulator::{run_experiment, ExperimentPlan, NoiseConfig};

fn grid() -> bell_lab::Result<Vec<AnalyzerSettings>> {
    let angles = [0.0, 22.5, 45.0, 67.5];
    angles
        .iter()
        .flat_map(|&a| angles.iter().map(move |&b| AnalyzerSettings::from_degrees(a, b)))
        .collect()
}

pub fn run() -> bell_lab::Result<()> {
    let family = FitFamily::parse_free("theta,visibility,offsets")?;
    let cases = [
        ("theta=0.6, v=0.95", StateModel::non_max_entangled(0.6)?.with_visibility(0.95)?, 0.0),
        ("max + eps1=0.03", StateModel::max_entangled(), 0.03),
    ];
    for (name, model, eps1) in cases {
        let plan = ExperimentPlan {
            setting_pairs: grid()?,
            shots_per_pair: 100_000,
            model,
            noise: NoiseConfig {
                anomaly_eps1: eps1,
                ..NoiseConfig::default()
            },
            seed: 5,
        };
        let fit = fit_model(&run_experiment(&plan)?, &family)?;
        let p = fit.parameters;
        println!(
            "{name}: theta={:.4} v={:.4} offsets=({:.3}, {:.3}) deg  chi2={:.1}/{} p={:.3e}",
            p.theta,
            p.visibility,
            p.alpha_offset.to_degrees(),
            p.beta_offset.to_degrees(),
            fit.chi2,
            fit.dof,
            fit.p_value
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> bell_lab::Result<()> {
    run()
}
