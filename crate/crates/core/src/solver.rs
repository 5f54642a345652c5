//! The outer loop: metric update, γ-backtracking with the model-error
//! acceptance test, termination and trace emission.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::fmath;
use crate::linalg::{self, Metric};
use crate::models::ModelState;
use crate::problems::{ModelFamily, Problem};
use crate::subsolvers::{self, SubsolverOptions};
use crate::Error;

/// Upper clamp for the Barzilai–Borwein scale.
pub const BB_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    /// `P_{S+}(∇²(smooth part)) + μI`.
    PsdHessian,
    /// `L_k·I` with the Barzilai–Borwein ratio `L_k`.
    Bb,
    /// The identity.
    Identity,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::PsdHessian => "hessian",
            MetricKind::Bb => "bb",
            MetricKind::Identity => "identity",
        }
    }

    /// `MQN` for the projected Hessian, `MG` for the BB scaling and `MG-Id`
    /// for the plain identity.
    pub fn method_label(self) -> &'static str {
        match self {
            MetricKind::PsdHessian => "MQN",
            MetricKind::Bb => "MG",
            MetricKind::Identity => "MG-Id",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "hessian" | "psd_hessian" => Ok(MetricKind::PsdHessian),
            "bb" | "bb_identity" => Ok(MetricKind::Bb),
            "identity" => Ok(MetricKind::Identity),
            _ => Err(Error::InvalidInput("unknown metric kind")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientNorm {
    Inf,
    Two,
}

/// Rule for `γ_k^0`. Every value is clamped to `[γ_min, γ_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialGamma {
    /// Per problem: for the quadratic inverse problem
    /// `GradientNorm { Inf, 2 }` under M1 (and the Taylor model) and
    /// `GradientNorm { Two, 2 }` under M2/M3; `γ_min` throughout for the
    /// polytope problem.
    Auto,
    /// The same value at every iteration.
    Fixed(f64),
    /// `γ_0^0 = ‖∇(smooth part)(x0)‖`, then `subsequent` for `k ≥ 1`.
    GradientNorm { norm: GradientNorm, subsequent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminationRule {
    /// `ObjectiveBelow(1e-4)` for the polytope problem,
    /// `RelativeDecrease(1e-4)` for the quadratic inverse problem, plus the
    /// linearized residual test under M3.
    Auto,
    /// `f(x^k) ≤ tol`, tested before each outer iteration.
    ObjectiveBelow(f64),
    /// `(f(x^k) − f(x^{k+1})) / max(1, f(x^{k+1})) ≤ tol`.
    RelativeDecrease(f64),
    /// `RelativeDecrease(decrease)` and
    /// `Σᵢ |r̄ᵢ² + 2r̄ᵢ⟨Aᵢx^k, x^{k+1} − x^k⟩| ≤ residual`.
    RelativeDecreaseWithLinearizedResidual { decrease: f64, residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tau: f64,
    pub delta: f64,
    pub mu: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub initial_gamma: InitialGamma,
    pub metric_kind: MetricKind,
    pub termination: TerminationRule,
    pub max_outer: usize,
    pub max_inner: usize,
    pub subsolver: SubsolverOptions,
    /// Accept subproblem solutions whose iterative solver hit its cap.
    pub allow_inexact: bool,
    /// Scale of the first BB metric and fallback when `⟨s,y⟩ ≤ 0`.
    pub bb_initial: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 2.0,
            delta: 0.25,
            mu: 0.5,
            gamma_min: 1.0,
            gamma_max: 1e10,
            initial_gamma: InitialGamma::Auto,
            metric_kind: MetricKind::PsdHessian,
            termination: TerminationRule::Auto,
            max_outer: 2000,
            max_inner: 60,
            subsolver: SubsolverOptions::default(),
            allow_inexact: false,
            bb_initial: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |msg| Err(SolveError::InvalidConfig(msg));
        if !(self.tau > 1.0) || !self.tau.is_finite() {
            return bad("tau must exceed 1");
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return bad("delta must lie in (0, 1/2)");
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return bad("mu must be positive");
        }
        if !(self.gamma_min > 0.0 && self.gamma_min <= self.gamma_max) || !self.gamma_max.is_finite() {
            return bad("need 0 < gamma_min <= gamma_max");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration caps must be positive");
        }
        if !(self.bb_initial > 0.0) || !self.bb_initial.is_finite() {
            return bad("bb_initial must be positive");
        }
        let s = &self.subsolver;
        if !(s.admm_tol > 0.0 && s.pdhg_tol > 0.0) || s.admm_max_iter == 0 || s.pdhg_max_iter == 0 {
            return bad("subsolver tolerances and caps must be positive");
        }
        match self.initial_gamma {
            InitialGamma::Fixed(g) | InitialGamma::GradientNorm { subsequent: g, .. } if !(g > 0.0) || !g.is_finite() => {
                return bad("initial gamma must be positive");
            }
            _ => {}
        }
        match self.termination {
            TerminationRule::ObjectiveBelow(t) | TerminationRule::RelativeDecrease(t) if !(t >= 0.0) => {
                return bad("termination tolerance must be nonnegative");
            }
            TerminationRule::RelativeDecreaseWithLinearizedResidual { decrease, residual }
                if !(decrease >= 0.0 && residual >= 0.0) =>
            {
                return bad("termination tolerance must be nonnegative");
            }
            _ => {}
        }
        Ok(())
    }
}

/// One accepted outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub i_k: usize,
    pub gamma0: f64,
    pub gamma_k: f64,
    /// `f(x^k)`.
    pub f: f64,
    /// `f(x^{k+1})`.
    pub f_next: f64,
    /// `f_{x^k}(x^{k+1})`.
    pub model_value: f64,
    pub model_error: f64,
    pub step_norm: f64,
    pub step_norm_h: f64,
    /// Milliseconds since the start of the solve.
    pub wall_ms: f64,
}

impl TraceRecord {
    /// Right-hand side of the acceptance test, `δ(γ_k/2)‖Δ‖²_H`.
    pub fn acceptance_bound(&self, delta: f64) -> f64 {
        delta * 0.5 * self.gamma_k * self.step_norm_h * self.step_norm_h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    ToleranceMet,
    MaxOuter,
    InnerFailure,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::ToleranceMet => "tolerance_met",
            TerminationReason::MaxOuter => "max_outer",
            TerminationReason::InnerFailure => "inner_failure",
        }
    }
}

impl FromStr for TerminationReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "tolerance_met" => Ok(TerminationReason::ToleranceMet),
            "max_outer" => Ok(TerminationReason::MaxOuter),
            "inner_failure" => Ok(TerminationReason::InnerFailure),
            _ => Err(Error::InvalidInput("unknown termination reason")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x_final: Vec<f64>,
    pub f_final: f64,
    pub trace: Vec<TraceRecord>,
    pub outer_iterations: usize,
    /// Inner trials over all outer iterations, including a failed last one.
    pub total_inner_trials: usize,
    pub termination_reason: TerminationReason,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.termination_reason == TerminationReason::ToleranceMet
    }

    /// Model error of the last accepted step, or 0 without steps.
    pub fn final_model_error(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.model_error)
    }

    pub fn wall_ms(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.wall_ms)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    InvalidConfig(&'static str),
    /// A non-finite value was met; `partial` holds the steps taken so far.
    Diverged { partial: SolveResult },
    /// An iterative subsolver hit its cap and inexact solves are not allowed.
    InexactSubproblem { partial: SolveResult },
    Numerical(Error),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            SolveError::Diverged { partial } => {
                write!(f, "diverged after {} outer iterations", partial.outer_iterations)
            }
            SolveError::InexactSubproblem { partial } => write!(
                f,
                "subproblem solver did not converge at outer iteration {}",
                partial.outer_iterations
            ),
            SolveError::Numerical(e) => write!(f, "numerical error: {e}"),
        }
    }
}

impl core::error::Error for SolveError {}

impl From<Error> for SolveError {
    fn from(e: Error) -> Self {
        SolveError::Numerical(e)
    }
}

/// Source of elapsed milliseconds.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// A clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

/// `P_{S+}(Ĥ) + μI` for the smooth-part Hessian `Ĥ` at `x`.
pub fn metric_psd_hessian(problem: &Problem, x: &[f64], mu: f64) -> Result<Metric, Error> {
    let h = problem.smooth_hessian(x)?;
    let (projected, max) = linalg::psd_project_with_max(&h, mu)?;
    Metric::dense_with_max_eigenvalue(projected, max)
}

/// Barzilai–Borwein scale `⟨s,y⟩/⟨s,s⟩` clamped to `[μ, BB_MAX]`, keeping
/// `previous` when `⟨s,y⟩ ≤ 0` or `s = 0`.
pub fn bb_scale(s: &[f64], y: &[f64], previous: f64, mu: f64) -> f64 {
    let ss = linalg::dot(s, s);
    let sy = linalg::dot(s, y);
    if !(sy > 0.0) || !(ss > 0.0) {
        return previous;
    }
    (sy / ss).clamp(mu, BB_MAX)
}

/// `L_k·I` from two iterates and their gradients; `L0·I` without a prior
/// iterate.
pub fn metric_bb(
    prev: Option<(&[f64], &[f64])>,
    x: &[f64],
    grad: &[f64],
    previous: f64,
    mu: f64,
) -> Result<Metric, Error> {
    let scale = match prev {
        None => previous,
        Some((px, pg)) => bb_scale(&linalg::sub(x, px), &linalg::sub(grad, pg), previous, mu),
    };
    Metric::scaled_identity(x.len(), scale)
}

/// `f(x^k) − f(x^{k+1}) ≤ tol·max(1, f(x^{k+1}))`.
pub fn relative_decrease_met(f_k: f64, f_next: f64, tol: f64) -> bool {
    (f_k - f_next) / f_next.max(1.0) <= tol
}

/// Outcome of one backtracking search.
#[derive(Debug, Clone, PartialEq)]
pub enum Backtrack {
    Accepted {
        x: Vec<f64>,
        f: f64,
        model_value: f64,
        gamma: f64,
        i: usize,
    },
    /// No trial passed within `max_inner` trials.
    Exhausted { trials: usize },
    /// A trial produced a non-finite value.
    NonFinite { trials: usize },
    /// A trial's subproblem solve hit its iteration cap.
    Inexact { trials: usize },
}

/// Tries `γ_{k,i} = τ^{i+1}γ_k^0` for `i = 0, 1, …` until
/// `|f(x^{k,i}) − f_{x^k}(x^{k,i})| ≤ δ(γ_{k,i}/2)‖x^{k,i} − x^k‖²_H`.
pub fn backtrack_accept(
    problem: &Problem,
    model: &ModelState,
    metric: &Metric,
    gamma0: f64,
    config: &SolverConfig,
) -> Result<Backtrack, Error> {
    let center = model.center();
    for i in 0..config.max_inner {
        let gamma = fmath::powi(config.tau, i as i32 + 1) * gamma0;
        let sol = subsolvers::solve_subproblem(model.payload(), metric, gamma, &config.subsolver)?;
        if !sol.converged && !config.allow_inexact {
            return Ok(Backtrack::Inexact { trials: i + 1 });
        }
        let f = problem.objective(&sol.x);
        let model_value = model.eval(&sol.x);
        if !f.is_finite() || !model_value.is_finite() || !sol.x.iter().all(|v| v.is_finite()) {
            return Ok(Backtrack::NonFinite { trials: i + 1 });
        }
        let d = linalg::sub(&sol.x, center);
        let bound = config.delta * 0.5 * gamma * metric.quad_form(&d);
        if fmath::abs(f - model_value) <= bound {
            return Ok(Backtrack::Accepted {
                x: sol.x,
                f,
                model_value,
                gamma,
                i,
            });
        }
    }
    Ok(Backtrack::Exhausted {
        trials: config.max_inner,
    })
}

/// A configured solve of one problem with one model family.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    problem: &'a Problem,
    family: ModelFamily,
    config: SolverConfig,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a Problem, family: ModelFamily, config: SolverConfig) -> Result<Self, SolveError> {
        config.validate()?;
        if !problem.supports(family) {
            return Err(SolveError::InvalidConfig("model family does not apply to this problem"));
        }
        Ok(Self {
            problem,
            family,
            config,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Termination rule after resolving `Auto`.
    pub fn termination_rule(&self) -> TerminationRule {
        match (self.config.termination, self.problem, self.family) {
            (TerminationRule::Auto, Problem::Polytope(_), _) => TerminationRule::ObjectiveBelow(1e-4),
            (TerminationRule::Auto, Problem::Qip(_), ModelFamily::M3) => {
                TerminationRule::RelativeDecreaseWithLinearizedResidual {
                    decrease: 1e-4,
                    residual: 1e-4,
                }
            }
            (TerminationRule::Auto, Problem::Qip(_), _) => TerminationRule::RelativeDecrease(1e-4),
            (rule, _, _) => rule,
        }
    }

    /// `γ_k^0`, clamped to `[γ_min, γ_max]`.
    pub fn initial_gamma(&self, k: usize, x0: &[f64]) -> f64 {
        let rule = match (self.config.initial_gamma, self.problem, self.family) {
            (InitialGamma::Auto, Problem::Polytope(_), _) => InitialGamma::Fixed(self.config.gamma_min),
            (InitialGamma::Auto, Problem::Qip(_), ModelFamily::M2 | ModelFamily::M3) => InitialGamma::GradientNorm {
                norm: GradientNorm::Two,
                subsequent: 2.0,
            },
            (InitialGamma::Auto, Problem::Qip(_), _) => InitialGamma::GradientNorm {
                norm: GradientNorm::Inf,
                subsequent: 2.0,
            },
            (rule, _, _) => rule,
        };
        let g = match rule {
            InitialGamma::Fixed(g) => g,
            InitialGamma::GradientNorm { subsequent, .. } if k > 0 => subsequent,
            InitialGamma::GradientNorm { norm, .. } => {
                let grad = self.problem.smooth_gradient(x0);
                match norm {
                    GradientNorm::Inf => linalg::norm_inf(&grad),
                    GradientNorm::Two => linalg::norm2(&grad),
                }
            }
            InitialGamma::Auto => unreachable!("resolved above"),
        };
        if g.is_nan() {
            return self.config.gamma_min;
        }
        g.clamp(self.config.gamma_min, self.config.gamma_max)
    }

    pub fn run(&self, x0: &[f64]) -> Result<SolveResult, SolveError> {
        self.run_with_clock(x0, &NoClock)
    }

    pub fn run_with_clock(&self, x0: &[f64], clock: &dyn Clock) -> Result<SolveResult, SolveError> {
        let cfg = &self.config;
        let problem = self.problem;
        if x0.len() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                got: x0.len(),
            }
            .into());
        }
        let rule = self.termination_rule();
        let start = clock.now_ms();

        let mut x = x0.to_vec();
        let mut f = problem.objective(&x);
        let mut result = SolveResult {
            x_final: x.clone(),
            f_final: f,
            trace: Vec::new(),
            outer_iterations: 0,
            total_inner_trials: 0,
            termination_reason: TerminationReason::MaxOuter,
        };
        if !f.is_finite() {
            return Err(SolveError::Diverged { partial: result });
        }

        let mut bb_prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut bb_last = cfg.bb_initial;

        for k in 0..cfg.max_outer {
            if let TerminationRule::ObjectiveBelow(tol) = rule {
                if f <= tol {
                    result.termination_reason = TerminationReason::ToleranceMet;
                    return Ok(result);
                }
            }

            let metric = match cfg.metric_kind {
                MetricKind::PsdHessian => metric_psd_hessian(problem, &x, cfg.mu)?,
                MetricKind::Identity => Metric::scaled_identity(x.len(), 1.0)?,
                MetricKind::Bb => {
                    let grad = problem.smooth_gradient(&x);
                    let m = metric_bb(
                        bb_prev.as_ref().map(|(px, pg)| (px.as_slice(), pg.as_slice())),
                        &x,
                        &grad,
                        bb_last,
                        cfg.mu,
                    )?;
                    bb_last = m.scale().unwrap_or(bb_last);
                    bb_prev = Some((x.clone(), grad));
                    m
                }
            };

            let model = problem.model(&x, self.family)?;
            let gamma0 = self.initial_gamma(k, x0);
            let (x_next, f_next, model_value, gamma, i) = match backtrack_accept(problem, &model, &metric, gamma0, cfg)? {
                Backtrack::Accepted {
                    x,
                    f,
                    model_value,
                    gamma,
                    i,
                } => (x, f, model_value, gamma, i),
                Backtrack::Exhausted { trials } => {
                    result.total_inner_trials += trials;
                    result.termination_reason = TerminationReason::InnerFailure;
                    return Ok(result);
                }
                Backtrack::NonFinite { trials } => {
                    result.total_inner_trials += trials;
                    return Err(SolveError::Diverged { partial: result });
                }
                Backtrack::Inexact { trials } => {
                    result.total_inner_trials += trials;
                    return Err(SolveError::InexactSubproblem { partial: result });
                }
            };

            let d = linalg::sub(&x_next, &x);
            let record = TraceRecord {
                k,
                i_k: i,
                gamma0,
                gamma_k: gamma,
                f,
                f_next,
                model_value,
                model_error: fmath::abs(f_next - model_value),
                step_norm: linalg::norm2(&d),
                step_norm_h: metric.norm(&d),
                wall_ms: clock.now_ms() - start,
            };
            let stop = match rule {
                TerminationRule::RelativeDecrease(tol) => relative_decrease_met(f, f_next, tol),
                TerminationRule::RelativeDecreaseWithLinearizedResidual { decrease, residual } => {
                    relative_decrease_met(f, f_next, decrease)
                        && match problem {
                            Problem::Qip(q) => q.linearized_residual_sum(&x, &x_next) <= residual,
                            Problem::Polytope(_) => true,
                        }
                }
                _ => false,
            };

            result.trace.push(record);
            result.outer_iterations += 1;
            result.total_inner_trials += i + 1;
            x = x_next;
            f = f_next;
            result.x_final.clone_from(&x);
            result.f_final = f;

            if stop {
                result.termination_reason = TerminationReason::ToleranceMet;
                return Ok(result);
            }
            // From k ≥ 1 on, a zero step leaves x, the metric and γ_k^0 unchanged,
            // so every later iteration repeats this one exactly.
            if k >= 1 && d.iter().all(|v| *v == 0.0) {
                let last = result.trace[result.trace.len() - 1].clone();
                for kk in (k + 1)..cfg.max_outer {
                    result.trace.push(TraceRecord {
                        k: kk,
                        wall_ms: clock.now_ms() - start,
                        ..last.clone()
                    });
                    result.outer_iterations += 1;
                    result.total_inner_trials += last.i_k + 1;
                }
                break;
            }
        }
        if let TerminationRule::ObjectiveBelow(tol) = rule {
            if f <= tol {
                result.termination_reason = TerminationReason::ToleranceMet;
            }
        }
        Ok(result)
    }
}
