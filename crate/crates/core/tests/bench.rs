use std::fs;

use flowshop_core::bench::{emit_report, run_experiment, ExperimentPlan, ReportFormat, RunOptions};
use flowshop_core::engine::Algorithm;
use flowshop_core::Capacity;

fn small_plan() -> ExperimentPlan {
    ExperimentPlan::from_json(
        r#"{
            "n_examples": 3,
            "n": 10,
            "buffers": [null, 1],
            "trials": 2,
            "gbml": {"gbml": {"population_size": 10, "generations": 6}},
            "sa": {"iterations": 300},
            "sa_at_unbounded": true,
            "master_seed": 42
        }"#,
    )
    .unwrap()
}

fn csv(plan: &ExperimentPlan, opts: &RunOptions) -> String {
    emit_report(&run_experiment(plan, opts).unwrap(), ReportFormat::Csv)
}

#[test]
fn report_is_independent_of_worker_count() {
    let plan = small_plan();
    let one = csv(
        &plan,
        &RunOptions {
            workers: 1,
            resume: None,
        },
    );
    let many = csv(
        &plan,
        &RunOptions {
            workers: 3,
            resume: None,
        },
    );
    assert_eq!(one, many);
    assert_eq!(one.lines().count(), 1 + 3 * 2);
}

#[test]
fn resume_skips_finished_cells_and_survives_a_torn_line() {
    let plan = small_plan();
    let reference = csv(&plan, &RunOptions::default());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cells.jsonl");
    let opts = RunOptions {
        workers: 1,
        resume: Some(path.clone()),
    };
    assert_eq!(csv(&plan, &opts), reference);
    let full = fs::read_to_string(&path).unwrap();
    let cells = 3 * 2 * 3 * 2;
    assert_eq!(full.lines().count(), cells);

    // keep five records plus half of the sixth, as after a crash mid-write
    let lines: Vec<&str> = full.lines().collect();
    let mut torn = lines[..5].join("\n");
    torn.push('\n');
    torn.push_str(&lines[5][..lines[5].len() / 2]);
    fs::write(&path, torn).unwrap();

    assert_eq!(csv(&plan, &opts), reference);
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), cells);

    // a fully populated file needs no work and still reproduces the table
    assert_eq!(csv(&plan, &opts), reference);
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), cells);
}

#[test]
fn corrupt_interior_line_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cells.jsonl");
    fs::write(&path, "{oops\n{}\n").unwrap();
    let opts = RunOptions {
        workers: 1,
        resume: Some(path),
    };
    assert!(run_experiment(&small_plan(), &opts).is_err());
}

#[test]
fn johnson_is_seed_invariant_and_ratios_are_consistent() {
    let plan = small_plan();
    let table = run_experiment(&plan, &RunOptions::default()).unwrap();
    assert!(table.failures.is_empty());
    for row in &table.rows {
        let j = &row.stats[&Algorithm::Johnson];
        assert_eq!(j.min, j.max);
        assert_eq!(j.std_dev, 0.0);
        let (i_ii, i_iii, ii_iii) = (
            row.ratio_i_ii().unwrap(),
            row.ratio_i_iii().unwrap(),
            row.ratio_ii_iii().unwrap(),
        );
        assert!((i_iii / ii_iii - i_ii).abs() < 1e-12);
    }
    assert_eq!(table.rows_for(Capacity::Bounded(1)).count(), 3);
}

#[test]
fn unknown_plan_fields_are_rejected() {
    assert!(ExperimentPlan::from_json(r#"{"trails": 3}"#).is_err());
    assert!(ExperimentPlan::from_json(r#"{"trials": 0}"#).is_err());
}
