use std::path::Path;

use scp_mppi::bench::{read_records, run_suite, run_suite_config, SuiteOptions};
use scp_mppi::config::FileConfig;
use scp_mppi::Variant;

const SMALL: &str = r#"
samples = 16
horizon = 40
control_points = 4
svgd_iterations = 1
max_time = 3.0
trials = 2
seed = 11

[[variants]]
variant = "mppi"

[[variants]]
variant = "scp-svgd"

[[environments]]
density = "low"
"#;

fn small() -> FileConfig {
    FileConfig::parse(SMALL, Path::new("small.toml")).unwrap()
}

#[test]
fn same_config_and_seed_give_the_same_report() {
    let a = run_suite_config(&small(), Path::new("."), &SuiteOptions::default()).unwrap();
    let b = run_suite_config(&small(), Path::new("."), &SuiteOptions::default()).unwrap();
    assert_eq!(a.records.len(), 4);
    assert!(a.report.same_values(&b.report));
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!((x.variant, x.trial, x.env_seed, x.solver_seed), (y.variant, y.trial, y.env_seed, y.solver_seed));
        assert_eq!((&x.outcome, x.steps, x.path_length), (&y.outcome, y.steps, y.path_length));
    }
    // Both variants fly the same forests.
    assert_eq!(a.records[0].env_seed, a.records[2].env_seed);
    assert_eq!(a.records[0].solver_seed, a.records[2].solver_seed);

    let mut other = small();
    other.seed = 12;
    let c = run_suite_config(&other, Path::new("."), &SuiteOptions::default()).unwrap();
    assert_ne!(a.records[0].env_seed, c.records[0].env_seed);
}

#[test]
fn outputs_are_written_and_reloadable() {
    let dir = tempfile::tempdir().unwrap();
    let options = SuiteOptions {
        out_dir: Some(dir.path().to_path_buf()),
        export_plots: true,
        capture_candidates: true,
    };
    let run = run_suite_config(&small(), Path::new("."), &options).unwrap();
    for name in ["trials.csv", "summary.csv", "report.txt"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let reloaded = read_records(&dir.path().join("trials.csv")).unwrap();
    assert_eq!(reloaded.len(), run.records.len());
    let trajectories = std::fs::read_dir(dir.path().join("trajectories")).unwrap().count();
    let plots = std::fs::read_dir(dir.path().join("plots")).unwrap().count();
    assert_eq!((trajectories, plots), (4, 4));
    let outcomes = ["reached", "collided", "stuck", "timeout"];
    assert!(run.records.iter().all(|r| outcomes.contains(&r.outcome.as_str())));
}

#[test]
fn suite_file_with_environment_path_is_resolved_relative_to_it() {
    let dir = tempfile::tempdir().unwrap();
    let env = scp_mppi::world::generate_forest(&small().forest(scp_mppi::world::DensityTier::Low), 4).unwrap();
    scp_mppi::world::save_environment(&env, &dir.path().join("forest.txt")).unwrap();
    let text = SMALL.replace("density = \"low\"", "file = \"forest.txt\"").replace("trials = 2", "trials = 1");
    let path = dir.path().join("suite.toml");
    std::fs::write(&path, text).unwrap();
    let report = run_suite(&path).unwrap();
    assert_eq!(report.cells.len(), 2);
    assert!(report.cell(Variant::Mppi, "forest").is_some(), "{:?}", report.cells);
}

#[test]
fn shipped_suite_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1.toml");
    let file = FileConfig::load(&path).unwrap();
    let specs = file.variant_specs();
    assert_eq!(specs.len(), 5);
    for spec in &specs {
        let cfg = file.solver_for(spec).unwrap();
        assert_eq!(cfg.shift_warm_start, spec.variant == Variant::Mppi);
    }
    assert_eq!(file.environment_specs().len(), 3);
    assert_eq!(file.trials, 10);
}
