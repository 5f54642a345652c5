//! Bench sweeps, aggregation and report emission.

use modelprox::core::{MetricKind, ModelFamily};
use modelprox::harness::{self, AggRow, BenchSpec, ReportFormat, RunSummary, Suite};
use proptest::prelude::*;

fn tiny_qip(runs: usize) -> BenchSpec {
    let mut spec = BenchSpec::desk(Suite::Qip);
    spec.n = 5;
    spec.m = 20;
    spec.runs = runs;
    spec.params = vec![1e-2];
    spec.families = vec![ModelFamily::M1, ModelFamily::Taylor];
    spec.metrics = vec![MetricKind::PsdHessian, MetricKind::Bb];
    spec
}

#[test]
fn single_run_aggregation_copies_the_run() {
    let spec = tiny_qip(1);
    let out = harness::run_bench(&spec).unwrap();
    assert_eq!(out.rows.len(), spec.cells().len());
    assert_eq!(out.artifacts.len(), spec.cells().len());
    for (row, art) in out.rows.iter().zip(&out.artifacts) {
        assert_eq!(row.algorithm, art.algorithm);
        if row.failures == 0 {
            assert_eq!(row.k, Some(art.result.outer_iterations as f64));
            assert_eq!(row.f_v, Some(art.result.f_final));
        } else {
            assert_eq!(row.k, None);
        }
    }
}

#[test]
fn identical_specs_give_identical_reports() {
    let spec = tiny_qip(3);
    let a = harness::run_bench(&spec).unwrap();
    let b = harness::run_bench(&spec).unwrap();
    let csv = |o: &harness::BenchOutput| harness::emit_report(&o.rows, ReportFormat::Csv).unwrap();
    assert_eq!(csv(&a), csv(&b));

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    harness::write_bench(&a, Suite::Qip, dir_a.path()).unwrap();
    harness::write_bench(&b, Suite::Qip, dir_b.path()).unwrap();
    for art in &a.artifacts {
        let name = art.file_name();
        assert!(name.starts_with("qip_") && name.ends_with(".json"), "{name}");
        let x = std::fs::read(dir_a.path().join(&name)).unwrap();
        let y = std::fs::read(dir_b.path().join(&name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    for f in ["qip_report.csv", "qip_report.md", "qip_convergence_0.01.svg"] {
        assert!(dir_a.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn reloaded_artifacts_reproduce_the_report() {
    let spec = tiny_qip(2);
    let out = harness::run_bench(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    harness::write_bench(&out, Suite::Qip, dir.path()).unwrap();
    let loaded = harness::load_artifacts(dir.path()).unwrap();
    assert_eq!(loaded, out.artifacts);
    let summaries: Vec<_> = loaded.iter().map(|a| a.summary()).collect();
    assert_eq!(harness::aggregate(&summaries), out.rows);
}

#[test]
fn run_seeds_follow_base_plus_index() {
    let mut spec = tiny_qip(3);
    spec.base_seed = 40;
    let out = harness::run_bench(&spec).unwrap();
    for a in &out.artifacts {
        assert_eq!(a.seed, 40 + a.run_index as u64);
        assert_eq!(a.base_seed, 40);
    }
}

#[test]
fn rows_satisfy_table_invariants() {
    let out = harness::run_bench(&tiny_qip(3)).unwrap();
    for r in &out.rows {
        if let (Some(k), Some(j), Some(d_f)) = (r.k, r.j, r.d_f) {
            assert!(k >= 1.0 && j >= k && d_f >= 0.0, "{r:?}");
        }
    }
}

#[test]
fn desk_m1_reaches_small_objective() {
    let mut spec = BenchSpec::desk(Suite::Qip);
    spec.params = vec![1e-2];
    spec.families = vec![ModelFamily::M1];
    spec.metrics = vec![MetricKind::PsdHessian];
    let out = harness::run_bench(&spec).unwrap();
    let row = &out.rows[0];
    assert_eq!(row.algorithm, "MQN-M1");
    assert_eq!(row.failures, 0);
    let f_v = row.f_v.unwrap();
    assert!(f_v <= 0.05, "mean final objective {f_v}");
}

#[test]
fn markdown_groups_by_param_and_dashes_failures() {
    let row = |param: f64, algorithm: &str, failures: usize| AggRow {
        param,
        algorithm: algorithm.into(),
        k: (failures == 0).then_some(2.0),
        j: (failures == 0).then_some(5.0),
        cpu_s: (failures == 0).then_some(0.1),
        f_v: (failures == 0).then_some(0.5),
        d_f: (failures == 0).then_some(1e-9),
        r: (failures == 0).then_some(3.0),
        failures,
    };
    let rows = vec![row(0.1, "MQN-M1", 0), row(0.1, "MG-M1", 2), row(0.01, "MQN-M1", 0)];
    let md = harness::emit_report(&rows, ReportFormat::Md).unwrap();
    let lines: Vec<&str> = md.lines().collect();
    assert_eq!(lines[0], "| param | algorithm | k | j | cpu_s | f_v | d_f | r | failures |");
    assert!(lines[2].starts_with("| 1.0000e-1 | MQN-M1 |") && !lines[2].contains(" - "));
    assert!(lines[3].starts_with("|  | MG-M1 | - | - | - | - | - | - | 2 |"), "{}", lines[3]);
    assert!(lines[4].starts_with("| 1.0000e-2 |"));

    let csv = harness::emit_report(&rows, ReportFormat::Csv).unwrap();
    assert!(csv.starts_with("param,algorithm,k,j,cpu_s,f_v,d_f,r,failures\n"));
    assert_eq!(harness::parse_report_csv(&csv).unwrap(), rows);
    assert!(harness::emit_report(&[], ReportFormat::Csv).is_err());
}

fn summary() -> impl Strategy<Value = RunSummary> {
    (0usize..2, 0usize..2, any::<bool>(), 1u32..50, 0u32..50, 0.0f64..10.0, 0.0f64..1e-3).prop_map(
        |(p, a, converged, k, extra, f_v, d_f)| RunSummary {
            param: [0.1, 0.01][p],
            algorithm: ["MQN-M1", "MG-M1"][a].into(),
            converged,
            k: k as f64,
            j: (k + extra) as f64,
            cpu_s: 0.0,
            f_v,
            d_f,
            r: 3.0,
        },
    )
}

fn sorted(mut rows: Vec<AggRow>) -> Vec<AggRow> {
    rows.sort_by(|a, b| a.param.total_cmp(&b.param).then(a.algorithm.cmp(&b.algorithm)));
    rows
}

proptest! {
    #[test]
    fn aggregation_is_permutation_invariant(
        runs in proptest::collection::vec(summary(), 1..30),
        shift in 0usize..30,
    ) {
        let mut rotated = runs.clone();
        rotated.rotate_left(shift % runs.len());
        rotated.reverse();
        let a = sorted(harness::aggregate(&runs));
        let b = sorted(harness::aggregate(&rotated));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.algorithm, &y.algorithm);
            prop_assert_eq!(x.failures, y.failures);
            for (u, v) in [(x.k, y.k), (x.j, y.j), (x.f_v, y.f_v), (x.d_f, y.d_f)] {
                match (u, v) {
                    (Some(u), Some(v)) => prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs())),
                    (None, None) => {}
                    _ => prop_assert!(false, "dash mismatch"),
                }
            }
        }
    }

    #[test]
    fn aggregated_rows_keep_j_above_k(runs in proptest::collection::vec(summary(), 1..30)) {
        for r in harness::aggregate(&runs) {
            prop_assert_eq!(r.k.is_none(), r.failures > 0);
            if let (Some(k), Some(j)) = (r.k, r.j) {
                prop_assert!(j >= k - 1e-12);
            }
        }
    }
}
