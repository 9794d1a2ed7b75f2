mod common;

use common::{snapshot, tiny_spec};
use dpbias::dp::{NoObserver, PrivacyTarget};
use dpbias::metrics::BiasReport;
use dpbias::runner::{aggregate, pearson, run_cell, run_matrix, Workspace, RunMatrixResult};

fn lines(path: &std::path::Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn single_cell_matrix_matches_a_direct_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec(dir.path());
    spec.modes = vec![PrivacyTarget::Epsilon(3.0)];
    let result = run_matrix(&spec, 1).unwrap();
    assert_eq!(result.cells.len(), 1);
    let from_matrix = result.outputs().next().unwrap();

    let ws = Workspace::prepare(&spec).unwrap();
    let direct = run_cell(&ws, &spec, &spec.cells()[0], &mut NoObserver).unwrap();
    assert_eq!(from_matrix.params.to_bytes(), direct.params.to_bytes());
    assert_eq!(from_matrix.report, direct.report);
    assert_eq!(from_matrix.log.to_csv(), direct.log.to_csv());
}

#[test]
fn file_count_matches_the_requested_cells() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec(dir.path());
    spec.modes = vec![PrivacyTarget::Epsilon(3.0), PrivacyTarget::Epsilon(10.0), PrivacyTarget::NonPrivate];
    spec.mixing_ratios = vec![0.0, 1.0];
    spec.seeds = vec![0, 1, 2];
    let result = run_matrix(&spec, 2).unwrap();
    assert!(result.failures().is_empty());

    let reports = BiasReport::from_csv("reports.csv", &std::fs::read_to_string(dir.path().join("reports.csv")).unwrap())
        .unwrap();
    assert_eq!(reports.len(), 18);
    assert_eq!(reports.iter().filter(|r| r.meta.mode == "non-private").count(), 6);
    let cells: Vec<_> = std::fs::read_dir(dir.path().join("cells")).unwrap().collect();
    assert_eq!(cells.len(), 18);
    for key in spec.cells() {
        let cell = dir.path().join("cells").join(key.label());
        for f in ["checkpoint.bin", "report.csv", "training_log.csv", "disparity.csv", "cell.hash"] {
            assert!(cell.join(f).exists(), "{}/{f}", key.label());
        }
    }
    let manifest = lines(&dir.path().join("manifest.tsv"));
    assert!(manifest[0].starts_with("# run-spec sha256 "));
    assert_eq!(manifest.iter().filter(|l| l.contains("\tcheckpoint\t")).count(), 18);

    // one disparity row per epoch and mode
    let fig3 = lines(&dir.path().join("plots/fig3_gradient_ratio_by_epoch.csv"));
    assert_eq!(fig3.len() - 1, spec.dp.epochs * spec.modes.len());
    // one increase row per mixing ratio
    let fig2 = lines(&dir.path().join("plots/fig2_bias_increase_by_mixing_ratio.csv"));
    assert_eq!(fig2.len() - 1, 2);
    let fig1 = lines(&dir.path().join("plots/fig1_bias_by_epsilon.csv"));
    assert_eq!(fig1.len() - 1, 6);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_matrix(&tiny_spec(a.path()), 1).unwrap();
    run_matrix(&tiny_spec(b.path()), 2).unwrap();
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.iter().map(|f| &f.0).collect::<Vec<_>>(), sb.iter().map(|f| &f.0).collect::<Vec<_>>());
    for (x, y) in sa.iter().zip(&sb) {
        assert!(x.1 == y.1, "{} differs", x.0);
    }
}

#[test]
fn matching_cells_are_resumed_and_changed_ones_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    run_matrix(&spec, 1).unwrap();
    let before = snapshot(dir.path());
    let again = run_matrix(&spec, 1).unwrap();
    assert!(again.cells.iter().all(|c| c.resumed));
    assert_eq!(snapshot(dir.path()), before);

    let mut changed = spec.clone();
    changed.dp.lr = 0.02;
    let rerun = run_matrix(&changed, 1).unwrap();
    assert!(rerun.cells.iter().all(|c| !c.resumed));
}

#[test]
fn failed_cells_are_reported_without_stopping_the_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec(dir.path());
    // no noise level in range reaches this budget
    spec.modes = vec![PrivacyTarget::Epsilon(1e-4), PrivacyTarget::NonPrivate];
    let result = run_matrix(&spec, 1).unwrap();
    assert_eq!(result.failures().len(), 1);
    assert_eq!(result.outputs().count(), 1);
    let failures = std::fs::read_to_string(dir.path().join("failures.txt")).unwrap();
    assert!(failures.starts_with("eps0.0001_r0_s0\t"));
}

#[test]
fn empty_metric_column_is_dropped_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec(dir.path());
    // no continuation tokens, so gender_count has no values anywhere
    spec.gen.n_tokens = 0;
    run_matrix(&spec, 1).unwrap();
    let manifest = std::fs::read_to_string(dir.path().join("manifest.tsv")).unwrap();
    assert!(manifest.contains("# warning: metric gender_count_bias has no values; column omitted"));
    let fig1 = lines(&dir.path().join("plots/fig1_bias_by_epsilon.csv"));
    assert!(!fig1[0].contains("gender_count_bias"));
    assert!(fig1[0].contains("occupation_bias"));
}

#[test]
fn aggregates_ignore_cell_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec(dir.path());
    spec.mixing_ratios = vec![0.0, 0.5, 1.0];
    spec.seeds = vec![0, 1];
    let result = run_matrix(&spec, 1).unwrap();
    let mut cells = result.cells.clone();
    cells.reverse();
    let reversed = RunMatrixResult {
        spec_hash: result.spec_hash.clone(),
        cells,
    };
    assert_eq!(aggregate(&spec, &result), aggregate(&spec, &reversed));
    let agg = aggregate(&spec, &result);
    assert_eq!(agg.increases.len(), 3);
}

#[test]
fn pearson_examples() {
    assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    // hand value: x = 0..4, y = (1, 3, 2, 5, 4) gives r = 0.8
    assert!((pearson(&[0.0, 1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
    assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    assert!(pearson(&[1.0], &[1.0]).is_err());
    assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
}
