use sfpca_core::sampling::{OperatorSpec, PointsSpec};
use sfpca_experiments::config::{BetaChoice, CellSpec};
use sfpca_experiments::output::{json_without_timestamp, write_rates_csv};
use sfpca_experiments::{run_cells, run_rate_experiment, ExperimentConfig};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).unwrap()
}

const SMALL: &str = r#"{
    "model": {"r": 1, "signals": [1.0], "component_indices": [1], "sigma0": 1.0},
    "operator": {"variant": "time", "m": 1},
    "n_grid": [20, 40],
    "m_grid": {"values": [12, 24]},
    "trials": 6,
    "base_seed": 3,
    "outputs": ["discrete_dist2", "function_dist2", "dm", "predictions"]
}"#;

#[test]
fn noiseless_cells_recover_the_subspace() {
    let cfg = config(
        &SMALL
            .replace(r#""sigma0": 1.0"#, r#""sigma0": 0.0"#)
            .replace(r#""trials": 6"#, r#""trials": 4, "beta": {"fixed": 0.0}"#),
    );
    let res = run_rate_experiment(&cfg).unwrap();
    assert_eq!(res.cells.len(), 4);
    for c in &res.cells {
        assert_eq!(c.failures, 0);
        assert!(c.mean_dist2.unwrap() <= 1e-16, "{:?}", c.mean_dist2);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = config(SMALL);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let res = pool.install(|| run_rate_experiment(&cfg).unwrap());
        json_without_timestamp(&serde_json::to_string(&res).unwrap()).unwrap()
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn poisoned_cell_does_not_abort_neighbours() {
    let cfg = config(SMALL);
    let mut cells = cfg.cells();
    // Two nearly coincident points: the Gram matrix is numerically singular.
    let poison = OperatorSpec { points: PointsSpec::Explicit(vec![0.5, 0.5 + f64::EPSILON / 2.0]), ..OperatorSpec::time(2) };
    cells.insert(1, CellSpec { index: 99, n: 20, operator: poison, beta: BetaChoice::Constrained(None) });
    let res = run_cells(&cfg, &cells).unwrap();
    assert_eq!(res.cells.len(), 5);
    let bad = &res.cells[1];
    assert!(bad.flagged && bad.failures == bad.trials && bad.mean_dist2.is_none());
    assert!(bad.errors[0].contains("positive definite"), "{:?}", bad.errors);
    for (i, c) in res.cells.iter().enumerate().filter(|(i, _)| *i != 1) {
        assert!(!c.flagged && c.failures == 0 && c.mean_dist2.is_some(), "cell {i}");
    }
    assert!(res.fit.is_some());
}

#[test]
fn requested_outputs_are_filled() {
    let res = run_rate_experiment(&config(SMALL)).unwrap();
    for c in &res.cells {
        assert_eq!(c.trials, 6);
        assert!(c.stderr.unwrap().is_finite());
        let f = c.mean_function_dist2.unwrap();
        assert!((0.0..=2.0).contains(&f));
        assert!(c.dm.unwrap() >= 0.0);
        assert!(c.prediction.is_some() && c.lower_bound.is_some());
        assert!(c.constrained && c.beta.unwrap() >= 0.0);
    }
    let p = res.prediction.as_ref().unwrap();
    assert!((p.exponent + 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(p.discrete.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cells.csv");
    write_rates_csv(&res, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,m,beta,mean_dist2,stderr,trials,failures"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn error_shrinks_with_n_at_fixed_m() {
    let cfg = config(
        r#"{
        "model": {"r": 1, "signals": [1.0], "component_indices": [1], "sigma0": 1.0},
        "operator": {"variant": "time", "m": 1},
        "n_grid": [25, 50, 100, 200, 400, 800],
        "m_grid": {"values": [32]},
        "trials": 30,
        "base_seed": 11
    }"#,
    );
    let res = run_rate_experiment(&cfg).unwrap();
    let means: Vec<f64> = res.cells.iter().map(|c| c.mean_dist2.unwrap()).collect();
    let inversions = means.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(inversions <= 1, "{means:?}");
    assert!(res.fit.unwrap().slope < 0.0);
}
