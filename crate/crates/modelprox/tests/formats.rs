//! Instance, trace, result and config files.

use modelprox::config::ConfigFile;
use modelprox::core::problems::{gen_polytope, gen_qip, QipGenOptions};
use modelprox::core::{MetricKind, ModelFamily, Problem, Solver, SolverConfig};
use modelprox::io::{self, ResultFile, TRACE_HEADER};
use modelprox::plot;

#[test]
fn instances_round_trip_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let problems = [
        Problem::Polytope(gen_polytope(4, 7, 3.0, 2.0, 11).unwrap()),
        Problem::Qip(gen_qip(3, 9, 1e-2, 5, QipGenOptions { rank: 2, noise_sd: 0.1 }).unwrap()),
    ];
    for (idx, problem) in problems.iter().enumerate() {
        let path = dir.path().join(format!("nested/inst{idx}.json"));
        io::write_atomic(&path, io::instance_to_json(problem).unwrap().as_bytes()).unwrap();
        let back = io::read_instance(&path).unwrap();
        let x = vec![0.3; problem.dim()];
        assert_eq!(back.dim(), problem.dim());
        assert_eq!(back.objective(&x), problem.objective(&x));
        assert_eq!(io::instance_to_json(&back).unwrap(), io::instance_to_json(problem).unwrap());
    }
}

#[test]
fn instance_files_reject_unknown_and_missing_fields() {
    let good = io::instance_to_json(&Problem::Polytope(gen_polytope(2, 3, 2.0, 2.0, 0).unwrap())).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
    v["extra"] = 1.into();
    assert!(serde_json::from_value::<io::InstanceFile>(v.clone()).is_err());
    v.as_object_mut().unwrap().remove("extra");
    v.as_object_mut().unwrap().remove("p");
    let file: io::InstanceFile = serde_json::from_value(v).unwrap();
    assert!(file.into_problem().is_err());
}

#[test]
fn trace_csv_has_the_fixed_header_and_one_row_per_step() {
    let problem = Problem::Qip(gen_qip(4, 16, 1e-2, 2, QipGenOptions::default()).unwrap());
    let cfg = SolverConfig {
        metric_kind: MetricKind::PsdHessian,
        ..SolverConfig::default()
    };
    let result = Solver::new(&problem, ModelFamily::Taylor, cfg).unwrap().run(&problem.default_start()).unwrap();
    let text = io::trace_csv(&result.trace, false).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), TRACE_HEADER.join(","));
    assert_eq!(TRACE_HEADER.join(","), "k,i_k,gamma_k,f,model_error,step_norm,step_norm_H,wall_ms");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), result.trace.len());
    for (row, rec) in rows.iter().zip(&result.trace) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 8);
        assert_eq!(cols[0].parse::<usize>().unwrap(), rec.k);
        assert_eq!(cols[3].parse::<f64>().unwrap(), rec.f);
        assert_eq!(cols[7], "0");
    }

    let file = ResultFile::new(ModelFamily::Taylor, MetricKind::PsdHessian, &result, "converged", true, false);
    let json = serde_json::to_string(&file).unwrap();
    let back: ResultFile = serde_json::from_str(&json).unwrap();
    assert_eq!(back, file);
    assert!(back.converged());
    assert_eq!(back.x_final, result.x_final);
}

#[test]
fn config_rejects_unknown_keys() {
    assert!(ConfigFile::parse(r#"{"solver":{"tau":2,"sigma":1}}"#).is_err());
    assert!(ConfigFile::parse(r#"{"bench":{"lambdas":[0.01],"lamdas":[1]}}"#).is_err());
    assert!(ConfigFile::parse(r#"{"solver":{"mu":-1}}"#).is_err());
    let ok = ConfigFile::parse(r#"{"solver":{"tau":3},"bench":{"lambdas":[0.01],"runs":2}}"#).unwrap();
    assert_eq!(ok.solver.tau, Some(3.0));
    assert_eq!(ok.bench.runs, Some(2));
}

#[test]
fn atomic_writes_replace_whole_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.txt");
    io::write_atomic(&path, b"first version, longer").unwrap();
    io::write_atomic(&path, b"second").unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), b"second");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn plot_draws_one_polyline_per_trace() {
    let svg = plot::convergence_svg(&[
        ("MQN-Softplus".into(), vec![10.0, 1.0, 0.1, 0.0]),
        ("MG-Softplus".into(), vec![10.0, f64::NAN]),
    ])
    .unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains(">MQN-Softplus<") && svg.contains(">MG-Softplus<"));
}
