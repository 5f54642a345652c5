//! Seeded benchmark sweeps, aggregation and report rendering.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use modelprox_core::problems::{gen_polytope, gen_qip, QipGenOptions};
use modelprox_core::{Clock, MetricKind, ModelFamily, Problem, SolveError, SolveResult, Solver, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::BenchSection;
use crate::io::{write_atomic, ResultFile};
use crate::{plot, Error, StdClock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Polytope,
    Qip,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Polytope => "polytope",
            Suite::Qip => "qip",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "polytope" => Ok(Suite::Polytope),
            "qip" => Ok(Suite::Qip),
            _ => Err(Error::Config(format!("unknown suite `{s}`"))),
        }
    }
}

/// A sweep over `params × families × metrics × runs`. `params` holds `λ` for
/// the quadratic inverse problem and `p` for the polytope problem; run `r`
/// uses seed `base_seed + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub suite: Suite,
    pub families: Vec<ModelFamily>,
    pub metrics: Vec<MetricKind>,
    pub params: Vec<f64>,
    pub runs: usize,
    pub base_seed: u64,
    pub n: usize,
    pub m: usize,
    /// Softplus smoothing for the polytope problem.
    pub c: f64,
    pub solver: SolverConfig,
    /// Record wall-clock times in artifacts and reports.
    pub timings: bool,
}

impl BenchSpec {
    /// CI-sized defaults.
    pub fn desk(suite: Suite) -> Self {
        match suite {
            Suite::Qip => Self {
                suite,
                families: vec![ModelFamily::M1, ModelFamily::M2, ModelFamily::M3],
                metrics: vec![MetricKind::PsdHessian, MetricKind::Bb],
                params: vec![(-2.0f64).exp(), (-3.0f64).exp(), (-4.0f64).exp()],
                runs: 10,
                base_seed: 0,
                n: 20,
                m: 200,
                c: 2.0,
                solver: SolverConfig::default(),
                timings: false,
            },
            Suite::Polytope => Self {
                suite,
                families: vec![ModelFamily::Softplus],
                metrics: vec![MetricKind::PsdHessian, MetricKind::Bb],
                params: vec![2.0, 3.0, 3.5, 4.0],
                runs: 10,
                base_seed: 0,
                n: 100,
                m: 200,
                c: 2.0,
                solver: SolverConfig::default(),
                timings: false,
            },
        }
    }

    /// Full-size sweep: 100 runs, and `n = 50, m = 1000` for the quadratic
    /// inverse problem.
    pub fn paper_scale(suite: Suite) -> Self {
        let mut spec = Self::desk(suite);
        spec.runs = 100;
        if suite == Suite::Qip {
            spec.n = 50;
            spec.m = 1000;
        }
        spec
    }

    pub fn apply(&mut self, section: &BenchSection) -> Result<(), Error> {
        if let Some(models) = &section.models {
            self.families = models.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
        }
        if let Some(metrics) = &section.metrics {
            self.metrics = metrics.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
        }
        match self.suite {
            Suite::Qip => {
                if let Some(l) = &section.lambdas {
                    self.params = l.clone();
                }
            }
            Suite::Polytope => {
                if let Some(p) = &section.ps {
                    self.params = p.clone();
                }
            }
        }
        self.runs = section.runs.unwrap_or(self.runs);
        self.base_seed = section.seed.unwrap_or(self.base_seed);
        self.n = section.n.unwrap_or(self.n);
        self.m = section.m.unwrap_or(self.m);
        self.c = section.c.unwrap_or(self.c);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: &str| Err(Error::Config(msg.to_owned()));
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.families.is_empty() || self.metrics.is_empty() || self.params.is_empty() {
            return bad("models, metrics and params must be nonempty");
        }
        if self.n == 0 || self.m == 0 {
            return bad("dimensions must be positive");
        }
        for f in &self.families {
            let ok = match self.suite {
                Suite::Polytope => matches!(f, ModelFamily::Softplus | ModelFamily::Taylor),
                Suite::Qip => *f != ModelFamily::Softplus,
            };
            if !ok {
                return bad(&format!("model `{f}` does not apply to the {} suite", self.suite.as_str()));
            }
        }
        self.solver.validate()?;
        Ok(())
    }

    pub fn instance(&self, param: f64, seed: u64) -> Result<Problem, Error> {
        Ok(match self.suite {
            Suite::Polytope => Problem::Polytope(gen_polytope(self.n, self.m, param, self.c, seed)?),
            Suite::Qip => Problem::Qip(gen_qip(self.n, self.m, param, seed, QipGenOptions::default())?),
        })
    }

    /// Cells in sweep order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &param in &self.params {
            for &family in &self.families {
                for &metric in &self.metrics {
                    out.push(Cell { param, family, metric });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub param: f64,
    pub family: ModelFamily,
    pub metric: MetricKind,
}

impl Cell {
    pub fn algorithm(&self) -> String {
        algorithm_label(self.family, self.metric)
    }
}

/// `MQN-M1`, `MG-Softplus`, ...
pub fn algorithm_label(family: ModelFamily, metric: MetricKind) -> String {
    format!("{}-{}", metric.method_label(), family.label())
}

/// How a single run ended.
pub fn run_status(outcome: &Result<SolveResult, SolveError>) -> &'static str {
    match outcome {
        Ok(r) => match r.termination_reason {
            modelprox_core::TerminationReason::ToleranceMet => "converged",
            modelprox_core::TerminationReason::MaxOuter => "max_outer",
            modelprox_core::TerminationReason::InnerFailure => "inner_failure",
        },
        Err(SolveError::Diverged { .. }) => "diverged",
        Err(SolveError::InexactSubproblem { .. }) => "inexact_subproblem",
        Err(_) => "error",
    }
}

/// Per-run artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArtifact {
    pub suite: Suite,
    pub algorithm: String,
    pub param: f64,
    pub cell: usize,
    pub run_index: usize,
    pub base_seed: u64,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub error: Option<String>,
    pub result: ResultFile,
}

impl RunArtifact {
    pub fn file_name(&self) -> String {
        format!("{}_{}_{}_{}.json", self.suite.as_str(), self.algorithm, self.param, self.seed)
    }

    pub fn summary(&self) -> RunSummary {
        let r = &self.result;
        RunSummary {
            param: self.param,
            algorithm: self.algorithm.clone(),
            converged: r.converged(),
            k: r.outer_iterations as f64,
            j: r.total_inner_trials as f64,
            cpu_s: r.wall_ms / 1e3,
            f_v: r.f_final,
            d_f: r.final_model_error,
            r: r.nonzeros as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub param: f64,
    pub algorithm: String,
    pub converged: bool,
    pub k: f64,
    pub j: f64,
    pub cpu_s: f64,
    pub f_v: f64,
    pub d_f: f64,
    pub r: f64,
}

/// Averages for one `(param, algorithm)` cell. The means are `None` when any
/// run failed to converge.
#[derive(Debug, Clone, PartialEq)]
pub struct AggRow {
    pub param: f64,
    pub algorithm: String,
    pub k: Option<f64>,
    pub j: Option<f64>,
    pub cpu_s: Option<f64>,
    pub f_v: Option<f64>,
    pub d_f: Option<f64>,
    pub r: Option<f64>,
    pub failures: usize,
}

/// Groups consecutive summaries by `(param, algorithm)`, keeping first-seen
/// order.
pub fn aggregate(runs: &[RunSummary]) -> Vec<AggRow> {
    let mut keys: Vec<(f64, &str)> = Vec::new();
    for r in runs {
        if !keys.iter().any(|k| k.0 == r.param && k.1 == r.algorithm) {
            keys.push((r.param, &r.algorithm));
        }
    }
    keys.into_iter()
        .map(|(param, algorithm)| {
            let group: Vec<&RunSummary> =
                runs.iter().filter(|r| r.param == param && r.algorithm == algorithm).collect();
            let failures = group.iter().filter(|r| !r.converged).count();
            let mean = |f: fn(&RunSummary) -> f64| {
                (failures == 0).then(|| group.iter().map(|r| f(r)).sum::<f64>() / group.len() as f64)
            };
            AggRow {
                param,
                algorithm: algorithm.to_owned(),
                k: mean(|r| r.k),
                j: mean(|r| r.j),
                cpu_s: mean(|r| r.cpu_s),
                f_v: mean(|r| r.f_v),
                d_f: mean(|r| r.d_f),
                r: mean(|r| r.r),
                failures,
            }
        })
        .collect()
}

pub struct BenchOutput {
    pub artifacts: Vec<RunArtifact>,
    pub rows: Vec<AggRow>,
    /// Per-cell traces of run 0 as `f_0, f_1, …, f_final`.
    pub first_traces: Vec<(Cell, Vec<f64>)>,
    /// Measured wall time of each artifact's run, kept out of the artifacts
    /// so that they stay reproducible.
    pub wall_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub algorithm: String,
    pub param: f64,
    pub seed: u64,
    pub wall_ms: f64,
}

/// Runs every job on a pool capped by `MODELPROX_THREADS`; results are
/// collected in sweep order, so the output does not depend on scheduling.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchOutput, Error> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..spec.runs).map(move |r| (c, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(crate::thread_cap())
        .build()
        .map_err(|e| Error::Format(e.to_string()))?;
    let results: Vec<Result<(RunArtifact, Vec<f64>, f64), Error>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| run_one(spec, c, &cells[c], r))
            .collect()
    });
    let mut artifacts = Vec::with_capacity(results.len());
    let mut first_traces = Vec::new();
    let mut wall_ms = Vec::with_capacity(jobs.len());
    for (res, &(c, r)) in results.into_iter().zip(&jobs) {
        let (artifact, trace, wall) = res?;
        if r == 0 {
            first_traces.push((cells[c], trace));
        }
        artifacts.push(artifact);
        wall_ms.push(wall);
    }
    let summaries: Vec<RunSummary> = artifacts.iter().map(RunArtifact::summary).collect();
    Ok(BenchOutput {
        rows: aggregate(&summaries),
        artifacts,
        first_traces,
        wall_ms,
    })
}

fn run_one(
    spec: &BenchSpec,
    cell_index: usize,
    cell: &Cell,
    run_index: usize,
) -> Result<(RunArtifact, Vec<f64>, f64), Error> {
    let seed = spec.base_seed + run_index as u64;
    let problem = spec.instance(cell.param, seed)?;
    let mut config = spec.solver.clone();
    config.metric_kind = cell.metric;
    let solver = Solver::new(&problem, cell.family, config)?;
    let clock = StdClock::start();
    let outcome = solver.run_with_clock(&problem.default_start(), &clock);
    let wall = clock.now_ms();
    let status = run_status(&outcome);
    let (result, error, completed) = match outcome {
        Ok(r) => (r, None, true),
        Err(SolveError::Diverged { partial }) | Err(SolveError::InexactSubproblem { partial }) => {
            let msg = format!("{status} after {} outer iterations", partial.outer_iterations);
            (partial, Some(msg), false)
        }
        Err(e) => return Err(e.into()),
    };
    let mut trace: Vec<f64> = result.trace.iter().map(|r| r.f).collect();
    trace.push(result.f_final);
    let file = ResultFile::new(cell.family, cell.metric, &result, status, completed, spec.timings);
    let artifact = RunArtifact {
        suite: spec.suite,
        algorithm: cell.algorithm(),
        param: cell.param,
        cell: cell_index,
        run_index,
        base_seed: spec.base_seed,
        seed,
        n: spec.n,
        m: spec.m,
        error,
        result: file,
    };
    Ok((artifact, trace, wall))
}

/// Writes artifacts, the CSV and Markdown reports and one convergence plot
/// per parameter into `dir`.
pub fn write_bench(out: &BenchOutput, suite: Suite, dir: &Path) -> Result<(), Error> {
    for a in &out.artifacts {
        write_atomic(&dir.join(a.file_name()), serde_json::to_string_pretty(a)?.as_bytes())?;
    }
    let timings: Vec<RunTiming> = out
        .artifacts
        .iter()
        .zip(&out.wall_ms)
        .map(|(a, &wall_ms)| RunTiming {
            algorithm: a.algorithm.clone(),
            param: a.param,
            seed: a.seed,
            wall_ms,
        })
        .collect();
    write_atomic(
        &dir.join(format!("{}_timing.json", suite.as_str())),
        serde_json::to_string_pretty(&timings)?.as_bytes(),
    )?;
    let stem = format!("{}_report", suite.as_str());
    write_atomic(&dir.join(format!("{stem}.csv")), emit_report(&out.rows, ReportFormat::Csv)?.as_bytes())?;
    write_atomic(&dir.join(format!("{stem}.md")), emit_report(&out.rows, ReportFormat::Md)?.as_bytes())?;
    let mut params: Vec<f64> = Vec::new();
    for (cell, _) in &out.first_traces {
        if !params.contains(&cell.param) {
            params.push(cell.param);
        }
    }
    for p in params {
        let traces: Vec<(String, Vec<f64>)> = out
            .first_traces
            .iter()
            .filter(|(c, _)| c.param == p)
            .map(|(c, t)| (c.algorithm(), t.clone()))
            .collect();
        let svg = plot::convergence_svg(&traces)?;
        write_atomic(&dir.join(format!("{}_convergence_{p}.svg", suite.as_str())), svg.as_bytes())?;
    }
    Ok(())
}

/// Loads every `*.json` artifact in `dir`, in sweep order.
pub fn load_artifacts(dir: &Path) -> Result<Vec<RunArtifact>, Error> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            if let Ok(a) = serde_json::from_str::<RunArtifact>(&text) {
                out.push(a);
            }
        }
    }
    out.sort_by_key(|a| (a.suite as u8, a.cell, a.run_index));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Md,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Md),
            _ => Err(Error::Config(format!("unknown report format `{s}`"))),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 9] = ["param", "algorithm", "k", "j", "cpu_s", "f_v", "d_f", "r", "failures"];

const DASH: &str = "-";

fn cell_text(v: Option<f64>) -> String {
    v.map_or_else(|| DASH.to_owned(), |x| x.to_string())
}

pub fn emit_report(rows: &[AggRow], format: ReportFormat) -> Result<String, Error> {
    if rows.is_empty() {
        return Err(Error::Format("report needs at least one row".into()));
    }
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(REPORT_COLUMNS)?;
            for r in rows {
                w.write_record([
                    r.param.to_string(),
                    r.algorithm.clone(),
                    cell_text(r.k),
                    cell_text(r.j),
                    cell_text(r.cpu_s),
                    cell_text(r.f_v),
                    cell_text(r.d_f),
                    cell_text(r.r),
                    r.failures.to_string(),
                ])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
        }
        ReportFormat::Md => {
            let mut s = String::new();
            let _ = writeln!(s, "| {} |", REPORT_COLUMNS.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(REPORT_COLUMNS.len()));
            let fixed = |v: Option<f64>| v.map_or_else(|| DASH.to_owned(), |x| format!("{x:.1}"));
            let sci = |v: Option<f64>| v.map_or_else(|| DASH.to_owned(), |x| format!("{x:.3e}"));
            let mut last: Option<f64> = None;
            for r in rows {
                let param = if last == Some(r.param) { String::new() } else { format!("{:.4e}", r.param) };
                last = Some(r.param);
                let _ = writeln!(
                    s,
                    "| {param} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    r.algorithm,
                    fixed(r.k),
                    fixed(r.j),
                    sci(r.cpu_s),
                    sci(r.f_v),
                    sci(r.d_f),
                    fixed(r.r),
                    r.failures
                );
            }
            Ok(s)
        }
    }
}

pub fn parse_report_csv(text: &str) -> Result<Vec<AggRow>, Error> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != REPORT_COLUMNS {
        return Err(Error::Format(format!("unexpected report header {header:?}")));
    }
    let num = |s: &str| -> Result<f64, Error> { s.parse().map_err(|_| Error::Format(format!("bad number `{s}`"))) };
    let opt = |s: &str| -> Result<Option<f64>, Error> { if s == DASH { Ok(None) } else { num(s).map(Some) } };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let failures = rec[8].parse().map_err(|_| Error::Format(format!("bad failure count `{}`", &rec[8])))?;
        rows.push(AggRow {
            param: num(&rec[0])?,
            algorithm: rec[1].to_owned(),
            k: opt(&rec[2])?,
            j: opt(&rec[3])?,
            cpu_s: opt(&rec[4])?,
            f_v: opt(&rec[5])?,
            d_f: opt(&rec[6])?,
            r: opt(&rec[7])?,
            failures,
        });
    }
    Ok(rows)
}
