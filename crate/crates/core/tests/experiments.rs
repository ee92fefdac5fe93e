use std::fs;

use palsgd::experiments::runner::{EVENTS_FILE, METRICS_FILE, SUMMARY_FILE};
use palsgd::experiments::sweep::TABLE_FILE;
use palsgd::experiments::{
    parse_config, parse_raw, read_metrics, read_table, run_experiment, sweep, Grid, Summary,
};

fn quad_config(dir: &std::path::Path, variant: &str, extra: &str) -> String {
    format!(
        r#"{{ "workload": {{ "kind": "quadratic", "dim": 8, "mu": 1, "l": 4, "noise_sigma": 1 }},
             "algorithm": {{ "variant": "{variant}" }},
             "schedule": {{ "alpha": 0.02, "eta": 2, "p": 0.1, "h": 16, "total_steps": 320 }},
             "workers": 4, "seed": 7,
             "cluster": {{ "jitter": 0.2 }},
             "output": {{ "dir": {dir:?} }} {extra} }}"#
    )
}

#[test]
fn run_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let config = parse_config(&quad_config(&dir, "palsgd", "")).unwrap();
    let result = run_experiment(&config).unwrap();

    let summary: Summary =
        serde_json::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary, result.summary);
    let events = fs::read_to_string(dir.join(EVENTS_FILE)).unwrap();
    assert_eq!(summary.sync_count, events.lines().count() as u64);
    assert_eq!(summary.sync_count, 20);

    let metrics = read_metrics(fs::read(dir.join(METRICS_FILE)).unwrap().as_slice()).unwrap();
    assert_eq!(metrics, result.metrics);
    assert_eq!(metrics.len(), 320);
    assert!(metrics.windows(2).all(|w| w[0].t < w[1].t));
    assert_eq!(metrics.last().unwrap().sync_count, summary.sync_count);
    assert_eq!(summary.final_loss, metrics.last().unwrap().loss);

    let dumped: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(dumped["config"]["schedule"]["p"], 0.1);
    assert_eq!(dumped["derived"]["total_steps"], 320);
}

#[test]
fn ddp_syncs_every_step_palsgd_every_h() {
    let tmp = tempfile::tempdir().unwrap();
    let ddp =
        run_experiment(&parse_config(&quad_config(&tmp.path().join("d"), "ddp", "")).unwrap())
            .unwrap();
    let pal =
        run_experiment(&parse_config(&quad_config(&tmp.path().join("p"), "palsgd", "")).unwrap())
            .unwrap();
    assert_eq!(ddp.summary.sync_count, 320);
    assert_eq!(pal.summary.sync_count, 320 / 16);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_experiment(&parse_config(&quad_config(&a, "palsgd", "")).unwrap()).unwrap();
    run_experiment(&parse_config(&quad_config(&b, "palsgd", "")).unwrap()).unwrap();
    for file in [METRICS_FILE, EVENTS_FILE, SUMMARY_FILE] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn divergence_is_flagged_in_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let text = quad_config(&tmp.path().join("x"), "local_sgd", "")
        .replace("\"alpha\": 0.02", "\"alpha\": 3.0");
    let result = run_experiment(&parse_config(&text).unwrap()).unwrap();
    assert!(result.summary.diverged);
    assert_eq!(result.summary.final_loss, f64::INFINITY);
    assert!(result.summary.steps_completed < 320);
}

#[test]
fn sweep_table_matches_cell_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let base = parse_raw(&quad_config(&out, "palsgd", "")).unwrap();
    let grid = Grid::parse(r#"{ "schedule.h": [4, 8, 16], "schedule.p": [0.05, 0.5] }"#).unwrap();
    let report = sweep(&base, &grid, Some(&out)).unwrap();
    assert_eq!(report.cells.len(), 5);
    assert_eq!(report.failures(), 0);

    let table = read_table(&out.join(TABLE_FILE)).unwrap();
    assert_eq!(table, report.rows());
    for (row, cell) in table.iter().zip(&report.cells) {
        let summary: Summary = serde_json::from_str(
            &fs::read_to_string(cell.dir.as_ref().unwrap().join(SUMMARY_FILE)).unwrap(),
        )
        .unwrap();
        assert_eq!(row.final_loss, summary.final_loss);
        assert_eq!(row.sim_time_s, summary.total_sim_time_s);
        assert_eq!(row.sync_count, summary.sync_count);
        assert_eq!(row.diverged, summary.diverged);
    }
    let header = fs::read_to_string(out.join(TABLE_FILE)).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "param,value,final_loss,sim_time_s,sync_count,diverged"
    );
}

#[test]
fn sweep_records_failed_cells_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let base = parse_raw(&quad_config(&out, "palsgd", "")).unwrap();
    let grid = Grid::parse(r#"{ "schedule.p": [0.1, 1.5, 0.2] }"#).unwrap();
    let report = sweep(&base, &grid, Some(&out)).unwrap();
    assert_eq!(report.failures(), 1);
    assert!(report.cells[1]
        .error
        .as_ref()
        .unwrap()
        .contains("schedule.p"));
    assert!(report.cells[1]
        .dir
        .as_ref()
        .unwrap()
        .join("error.txt")
        .exists());
    assert_eq!(read_table(&out.join(TABLE_FILE)).unwrap().len(), 2);
}

#[test]
fn sweep_rejects_unknown_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let base = parse_raw(&quad_config(tmp.path(), "palsgd", "")).unwrap();
    let grid = Grid::parse(r#"{ "schedule.hh": [1] }"#).unwrap();
    let err = sweep(&base, &grid, None).unwrap_err();
    assert!(err.to_string().contains("schedule.hh"), "{err}");
}

#[test]
fn mlp_run_reports_eval_metrics() {
    let text = r#"{ "workload": { "kind": "mlp", "hidden": [16],
                      "data": { "classes": 3, "dim": 4, "samples_per_class": 30, "eval_samples_per_class": 10, "center_scale": 3 } },
                    "algorithm": { "variant": "diloco" },
                    "schedule": { "alpha": 0.01, "h": 8, "epochs": 4 },
                    "workers": 2, "batch_size": 8 }"#;
    let config = parse_config(text).unwrap();
    assert_eq!(config.derived.total_steps, 23);
    let result = run_experiment(&config).unwrap();
    let acc = result.summary.final_eval_accuracy.unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(result.summary.final_eval_loss.is_some());
}
