//! JSON configuration file with solver and bench sections.

use std::path::Path;

use modelprox_core::{InitialGamma, MetricKind, SolverConfig, TerminationRule};
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gamma0 {
    Fixed(f64),
    Named(Gamma0Name),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma0Name {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminationSpec {
    Auto {},
    ObjectiveBelow { tol: f64 },
    RelativeDecrease { tol: f64 },
    RelativeDecreaseWithResidual { tol: f64, residual: f64 },
}

impl From<TerminationSpec> for TerminationRule {
    fn from(t: TerminationSpec) -> Self {
        match t {
            TerminationSpec::Auto {} => TerminationRule::Auto,
            TerminationSpec::ObjectiveBelow { tol } => TerminationRule::ObjectiveBelow(tol),
            TerminationSpec::RelativeDecrease { tol } => TerminationRule::RelativeDecrease(tol),
            TerminationSpec::RelativeDecreaseWithResidual { tol, residual } => {
                TerminationRule::RelativeDecreaseWithLinearizedResidual { decrease: tol, residual }
            }
        }
    }
}

/// Solver overrides; absent keys keep the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tau: Option<f64>,
    pub delta: Option<f64>,
    pub mu: Option<f64>,
    pub gamma_min: Option<f64>,
    pub gamma_max: Option<f64>,
    pub gamma0: Option<Gamma0>,
    pub termination: Option<TerminationSpec>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub admm_tol: Option<f64>,
    pub admm_max_iter: Option<usize>,
    pub pdhg_tol: Option<f64>,
    pub pdhg_max_iter: Option<usize>,
    pub allow_inexact: Option<bool>,
    pub bb_initial: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub models: Option<Vec<String>>,
    pub metrics: Option<Vec<String>>,
    pub lambdas: Option<Vec<f64>>,
    pub ps: Option<Vec<f64>>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub bench: BenchSection,
}

impl ConfigFile {
    /// Parses and validates against the solver defaults.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let cfg: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut probe = SolverConfig::default();
        cfg.solver.apply(&mut probe);
        probe.validate().map_err(|e| Error::Config(e.to_string()))?;
        cfg.bench.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

impl SolverSection {
    pub fn apply(&self, cfg: &mut SolverConfig) {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set! {
            tau => cfg.tau,
            delta => cfg.delta,
            mu => cfg.mu,
            gamma_min => cfg.gamma_min,
            gamma_max => cfg.gamma_max,
            max_outer => cfg.max_outer,
            max_inner => cfg.max_inner,
            admm_tol => cfg.subsolver.admm_tol,
            admm_max_iter => cfg.subsolver.admm_max_iter,
            pdhg_tol => cfg.subsolver.pdhg_tol,
            pdhg_max_iter => cfg.subsolver.pdhg_max_iter,
            allow_inexact => cfg.allow_inexact,
            bb_initial => cfg.bb_initial,
        }
        if let Some(g) = self.gamma0 {
            cfg.initial_gamma = match g {
                Gamma0::Fixed(v) => InitialGamma::Fixed(v),
                Gamma0::Named(Gamma0Name::Auto) => InitialGamma::Auto,
            };
        }
        if let Some(t) = self.termination {
            cfg.termination = t.into();
        }
    }
}

impl BenchSection {
    fn validate(&self) -> Result<(), Error> {
        let bad = |msg: &str| Err(Error::Config(msg.to_owned()));
        for m in self.models.iter().flatten() {
            if m.parse::<modelprox_core::ModelFamily>().is_err() {
                return bad(&format!("unknown model `{m}`"));
            }
        }
        for m in self.metrics.iter().flatten() {
            if m.parse::<MetricKind>().is_err() {
                return bad(&format!("unknown metric `{m}`"));
            }
        }
        if self.runs == Some(0) {
            return bad("runs must be at least 1");
        }
        if self.n == Some(0) || self.m == Some(0) {
            return bad("dimensions must be positive");
        }
        if self.lambdas.iter().flatten().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return bad("lambdas must be finite and nonnegative");
        }
        if self.ps.iter().flatten().any(|p| !(*p > 1.0) || !p.is_finite()) {
            return bad("p values must exceed 1");
        }
        if self.c.is_some_and(|c| !(c > 0.0) || !c.is_finite()) {
            return bad("c must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_keeps_defaults() {
        let cfg = ConfigFile::parse("{}").unwrap();
        let mut s = SolverConfig::default();
        cfg.solver.apply(&mut s);
        assert_eq!(s, SolverConfig::default());
        assert_eq!((s.tau, s.delta, s.mu, s.gamma_min, s.gamma_max), (2.0, 0.25, 0.5, 1.0, 1e10));
    }

    #[test]
    fn overrides_apply() {
        let text = r#"{"solver":{"tau":3,"gamma0":4.5,"termination":{"rule":"objective_below","tol":1e-6}},
                       "bench":{"runs":2,"models":["m1"]}}"#;
        let cfg = ConfigFile::parse(text).unwrap();
        let mut s = SolverConfig::default();
        cfg.solver.apply(&mut s);
        assert_eq!(s.tau, 3.0);
        assert_eq!(s.initial_gamma, InitialGamma::Fixed(4.5));
        assert_eq!(s.termination, TerminationRule::ObjectiveBelow(1e-6));
        let auto = ConfigFile::parse(r#"{"solver":{"gamma0":"auto"}}"#).unwrap();
        assert_eq!(auto.solver.gamma0, Some(Gamma0::Named(Gamma0Name::Auto)));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_bounds() {
        for text in [
            r#"{"solverr":{}}"#,
            r#"{"solver":{"taus":2}}"#,
            r#"{"bench":{"run":2}}"#,
            r#"{"solver":{"termination":{"rule":"auto","tol":1}}}"#,
            r#"{"solver":{"tau":1}}"#,
            r#"{"solver":{"delta":0.5}}"#,
            r#"{"solver":{"gamma_min":5,"gamma_max":1}}"#,
            r#"{"solver":{"gamma0":"fast"}}"#,
            r#"{"bench":{"runs":0}}"#,
            r#"{"bench":{"models":["m9"]}}"#,
        ] {
            assert!(ConfigFile::parse(text).is_err(), "{text}");
        }
    }
}
