use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use modelprox::config::ConfigFile;
use modelprox::core::problems::{gen_polytope, gen_qip, QipGenOptions};
use modelprox::core::{Clock, InitialGamma, MetricKind, ModelFamily, Problem, SolveError, Solver, SolverConfig};
use modelprox::harness::{self, BenchSpec, ReportFormat, Suite};
use modelprox::io::{self, write_atomic, ResultFile};
use modelprox::{diagnostics, StdClock};
use serde::Serialize;

const EXIT_USAGE: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_DIAGNOSTIC: u8 = 3;

#[derive(Parser)]
#[command(name = "modelprox", version, about = "Model-based proximal quasi-Newton solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random polytope feasibility instance.
    GenPolytope(GenPolytope),
    /// Write a random sparse quadratic inverse problem instance.
    GenQip(GenQip),
    /// Solve one instance.
    Solve(Solve),
    /// Run a seeded benchmark sweep.
    Bench(Bench),
    /// Re-render a report from bench artifacts.
    Report(Report),
    /// Run derivative and subsolver diagnostics.
    Check(Check),
}

#[derive(Args)]
struct GenPolytope {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenQip {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 1e-2)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Columns of each `U_i` in `A_i = U_i U_iᵀ`.
    #[arg(long, default_value_t = 1)]
    rank: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolverFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gamma_min: Option<f64>,
    #[arg(long)]
    gamma_max: Option<f64>,
    /// Fixed initial step parameter for every outer iteration.
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Accept subproblem solutions from solvers that hit their iteration cap.
    #[arg(long)]
    allow_inexact: bool,
    /// Record wall-clock times in trace and result files.
    #[arg(long)]
    timings: bool,
}

impl SolverFlags {
    fn load_config(&self) -> anyhow::Result<ConfigFile> {
        match &self.config {
            Some(path) => Ok(ConfigFile::load(path)?),
            None => Ok(ConfigFile::default()),
        }
    }

    /// Defaults, then the file, then flags.
    fn solver_config(&self, file: &ConfigFile) -> anyhow::Result<SolverConfig> {
        let mut cfg = SolverConfig::default();
        file.solver.apply(&mut cfg);
        macro_rules! set {
            ($($flag:ident => $target:expr),*) => { $(if let Some(v) = self.$flag { $target = v; })* };
        }
        set!(tau => cfg.tau, delta => cfg.delta, mu => cfg.mu, gamma_min => cfg.gamma_min,
             gamma_max => cfg.gamma_max, max_outer => cfg.max_outer);
        if let Some(g) = self.gamma0 {
            cfg.initial_gamma = InitialGamma::Fixed(g);
        }
        cfg.allow_inexact |= self.allow_inexact;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct Solve {
    #[arg(long)]
    instance: PathBuf,
    /// m1, m2, m3, softplus or taylor.
    #[arg(long)]
    model: ModelFamily,
    /// hessian, bb or identity.
    #[arg(long, default_value = "hessian")]
    metric: MetricKind,
    /// Trace CSV path.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Result JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct Bench {
    #[arg(long)]
    suite: Suite,
    #[arg(long)]
    out_dir: PathBuf,
    /// 100 runs, and n = 50, m = 1000 for the quadratic inverse suite.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelFamily>>,
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<MetricKind>>,
    /// λ values (qip) or exponents p (polytope).
    #[arg(long, value_delimiter = ',')]
    params: Option<Vec<f64>>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct Report {
    /// Directory holding bench artifacts.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Check {
    /// Random points per derivative check.
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// Random payloads per subsolver shape.
    #[arg(long, default_value_t = 20)]
    payloads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize)]
struct TimingSidecar {
    wall_ms: f64,
    iteration_wall_ms: Vec<f64>,
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn gen_polytope_cmd(a: GenPolytope) -> anyhow::Result<u8> {
    let inst = gen_polytope(a.n, a.m, a.p, a.c, a.seed)?;
    write_atomic(&a.out, io::instance_to_json(&Problem::Polytope(inst))?.as_bytes())?;
    Ok(0)
}

fn gen_qip_cmd(a: GenQip) -> anyhow::Result<u8> {
    let opts = QipGenOptions {
        rank: a.rank,
        noise_sd: a.noise,
    };
    let inst = gen_qip(a.n, a.m, a.lambda, a.seed, opts)?;
    write_atomic(&a.out, io::instance_to_json(&Problem::Qip(inst))?.as_bytes())?;
    Ok(0)
}

fn solve_cmd(a: Solve) -> anyhow::Result<u8> {
    let problem = io::read_instance(&a.instance)?;
    let file = a.solver.load_config()?;
    let mut cfg = a.solver.solver_config(&file)?;
    cfg.metric_kind = a.metric;
    if !problem.supports(a.model) {
        bail!("model `{}` is not defined for this instance", a.model);
    }
    let solver = Solver::new(&problem, a.model, cfg)?;
    let clock = StdClock::start();
    let outcome = solver.run_with_clock(&problem.default_start(), &clock);
    let wall_ms = clock.now_ms();
    let status = harness::run_status(&outcome);
    let (result, completed) = match outcome {
        Ok(r) => (r, true),
        Err(SolveError::Diverged { partial }) | Err(SolveError::InexactSubproblem { partial }) => (partial, false),
        Err(e) => return Err(e.into()),
    };
    let timings = a.solver.timings;
    if let Some(path) = &a.trace {
        write_atomic(path, io::trace_csv(&result.trace, timings)?.as_bytes())?;
    }
    if let Some(path) = &a.out {
        write_json(path, &ResultFile::new(a.model, a.metric, &result, status, completed, timings))?;
        let mut sidecar = path.as_os_str().to_owned();
        sidecar.push(".timing.json");
        let timing = TimingSidecar {
            wall_ms,
            iteration_wall_ms: result.trace.iter().map(|r| r.wall_ms).collect(),
        };
        write_json(Path::new(&sidecar), &timing)?;
    }
    println!(
        "{status}: {} outer iterations, {} inner trials, f = {:e}",
        result.outer_iterations, result.total_inner_trials, result.f_final
    );
    Ok(if completed && result.converged() { 0 } else { EXIT_NOT_CONVERGED })
}

fn bench_cmd(a: Bench) -> anyhow::Result<u8> {
    let file = a.solver.load_config()?;
    let mut spec = if a.paper_scale {
        BenchSpec::paper_scale(a.suite)
    } else {
        BenchSpec::desk(a.suite)
    };
    spec.apply(&file.bench)?;
    spec.solver = a.solver.solver_config(&file)?;
    spec.timings = a.solver.timings;
    spec.runs = a.runs.unwrap_or(spec.runs);
    spec.base_seed = a.seed.unwrap_or(spec.base_seed);
    spec.n = a.n.unwrap_or(spec.n);
    spec.m = a.m.unwrap_or(spec.m);
    if let Some(m) = a.models {
        spec.families = m;
    }
    if let Some(m) = a.metrics {
        spec.metrics = m;
    }
    if let Some(p) = a.params {
        spec.params = p;
    }
    spec.validate()?;
    let out = harness::run_bench(&spec)?;
    harness::write_bench(&out, spec.suite, &a.out_dir)?;
    print!("{}", harness::emit_report(&out.rows, ReportFormat::Md)?);
    Ok(0)
}

fn report_cmd(a: Report) -> anyhow::Result<u8> {
    let artifacts = harness::load_artifacts(&a.dir)?;
    if artifacts.is_empty() {
        bail!("no bench artifacts in {}", a.dir.display());
    }
    let summaries: Vec<_> = artifacts.iter().map(|r| r.summary()).collect();
    let text = harness::emit_report(&harness::aggregate(&summaries), a.format)?;
    match &a.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn check_cmd(a: Check) -> anyhow::Result<u8> {
    let results = diagnostics::run_all(a.points, a.payloads, a.seed).context("diagnostics aborted")?;
    let mut failed = 0;
    for d in &results {
        let verdict = if d.passed() { "ok  " } else { "FAIL" };
        failed += usize::from(!d.passed());
        println!("{verdict} {:<52} max error {:.3e} (tol {:.0e}, n = {})", d.name, d.max_error, d.tolerance, d.samples);
    }
    Ok(if failed == 0 { 0 } else { EXIT_DIAGNOSTIC })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let is_check = matches!(cli.command, Command::Check(_));
    let result = match cli.command {
        Command::GenPolytope(a) => gen_polytope_cmd(a),
        Command::GenQip(a) => gen_qip_cmd(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Check(a) => check_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_check { EXIT_DIAGNOSTIC } else { EXIT_USAGE })
        }
    }
}
