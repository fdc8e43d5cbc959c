use bell_lab::analysis::{analyze, AnalysisConfig, ModelSpec};
use bell_lab::fitting::{family_chi_square, FitParameters};
use bell_lab::io::{format_counts, parse_counts, Dataset, DuplicatePolicy};
use bell_lab::model::{AnalyzerSettings, StateKind, StateModel};
use bell_lab::simulator::{run_experiment, ExperimentPlan, NoiseConfig};

fn grid16() -> Vec<AnalyzerSettings> {
    let angles = [0.0, 22.5, 45.0, 67.5];
    angles
        .iter()
        .flat_map(|&a| angles.iter().map(move |&b| AnalyzerSettings::from_degrees(a, b).unwrap()))
        .collect()
}

fn chsh_settings() -> Vec<AnalyzerSettings> {
    [(0.0, 22.5), (0.0, 67.5), (45.0, 22.5), (45.0, 67.5)]
        .iter()
        .map(|&(a, b)| AnalyzerSettings::from_degrees(a, b).unwrap())
        .collect()
}

#[test]
fn noiseless_pipeline_is_calibrated() {
    let model = StateModel::max_entangled();
    let config = AnalysisConfig::new(ModelSpec::new(model));
    let runs = 100;
    let mut quiet = 0;
    for seed in 0..runs {
        let plan = ExperimentPlan {
            setting_pairs: chsh_settings(),
            shots_per_pair: 100_000,
            model,
            noise: NoiseConfig::default(),
            seed,
        };
        let report = analyze(&Dataset::new(run_experiment(&plan).unwrap()), &config).unwrap();
        let max_z = report
            .per_pair
            .iter()
            .flat_map(|p| p.tests.iter().map(|t| t.z.abs()))
            .fold(0.0, f64::max);
        if max_z < 4.0 {
            quiet += 1;
        }
    }
    assert!(quiet as f64 >= 0.95 * runs as f64, "{quiet} of {runs}");
}

#[test]
fn chi_square_at_truth_concentrates() {
    let truth = FitParameters {
        theta: 0.6,
        visibility: 0.95,
        alpha_offset: 0.0,
        beta_offset: 0.0,
    };
    let model = StateModel::new(StateKind::NonMaxEntangled { theta: truth.theta }, truth.visibility).unwrap();
    let dof: f64 = 3.0 * 16.0;
    let band = 3.0 * (2.0 * dof).sqrt();
    let mut inside = 0;
    for seed in 0..100 {
        let plan = ExperimentPlan {
            setting_pairs: grid16(),
            shots_per_pair: 10_000,
            model,
            noise: NoiseConfig::default(),
            seed,
        };
        let chi2 = family_chi_square(&run_experiment(&plan).unwrap(), &truth).unwrap();
        if (chi2 - dof).abs() <= band {
            inside += 1;
        }
    }
    assert!(inside >= 90, "{inside} of 100");
}

#[test]
fn simulated_counts_survive_a_file_round_trip() {
    let plan = ExperimentPlan {
        setting_pairs: grid16(),
        shots_per_pair: 777,
        model: StateModel::lhv().with_visibility(0.8).unwrap(),
        noise: NoiseConfig::default(),
        seed: 12,
    };
    let records = run_experiment(&plan).unwrap();
    let text = format_counts(&Dataset::new(records.clone()));
    let loaded = parse_counts(&text, DuplicatePolicy::Strict).unwrap();
    assert_eq!(loaded.records.len(), records.len());
    for (a, b) in loaded.records.iter().zip(&records) {
        assert_eq!(a.counts, b.counts);
        assert!((a.settings.alpha - b.settings.alpha).abs() < 1e-12);
        assert!((a.settings.beta - b.settings.beta).abs() < 1e-12);
    }
}

#[test]
fn parallel_simulation_is_schedule_independent() {
    let plan = ExperimentPlan {
        setting_pairs: grid16(),
        shots_per_pair: 50_000,
        model: StateModel::non_max_entangled(0.3).unwrap(),
        noise: NoiseConfig {
            anomaly_eps1: 0.01,
            anomaly_eps2: -0.005,
            ..NoiseConfig::default()
        },
        seed: 99,
    };
    let parallel = run_experiment(&plan).unwrap();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_experiment(&plan).unwrap());
    assert_eq!(parallel, single);
}
