//! Instance, trace and result file formats.

use std::fs;
use std::io::Write;
use std::path::Path;

use modelprox_core::linalg::{Matrix, SymMatrix};
use modelprox_core::problems::nonzero_count;
use modelprox_core::{
    ModelFamily, MetricKind, PolytopeInstance, Problem, QipInstance, SolveResult, TerminationReason, TraceRecord,
};
use serde::{Deserialize, Serialize};

use crate::Error;

/// Threshold for the nonzero count reported with every result.
pub const NONZERO_THRESHOLD: f64 = 1e-6;

pub const TRACE_HEADER: [&str; 8] = [
    "k",
    "i_k",
    "gamma_k",
    "f",
    "model_error",
    "step_norm",
    "step_norm_H",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Polytope,
    Qip,
}

/// On-disk instance; matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(rename = "type")]
    pub kind: InstanceKind,
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub seed: u64,
    /// Polytope rows, `m×n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    /// Sampling matrices, `m` entries of `n×n`.
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub big_a: Option<Vec<Vec<f64>>>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_truth: Option<Vec<f64>>,
}

impl InstanceFile {
    pub fn from_problem(problem: &Problem) -> Self {
        match problem {
            Problem::Polytope(p) => Self {
                kind: InstanceKind::Polytope,
                n: p.dim(),
                m: p.constraints(),
                p: Some(p.p()),
                c: Some(p.c()),
                lambda: None,
                seed: p.seed(),
                a: Some(p.a().data().to_vec()),
                big_a: None,
                b: p.b().to_vec(),
                x_truth: None,
            },
            Problem::Qip(q) => Self {
                kind: InstanceKind::Qip,
                n: q.dim(),
                m: q.measurements(),
                p: None,
                c: None,
                lambda: Some(q.lambda()),
                seed: q.seed(),
                a: None,
                big_a: Some(q.matrices().iter().map(|a| a.data().to_vec()).collect()),
                b: q.b().to_vec(),
                x_truth: q.x_truth().map(<[f64]>::to_vec),
            },
        }
    }

    pub fn into_problem(self) -> Result<Problem, Error> {
        let missing = |field: &str| Error::Format(format!("{} instance is missing `{field}`", self.kind_name()));
        match self.kind {
            InstanceKind::Polytope => {
                let a = self.a.clone().ok_or_else(|| missing("a"))?;
                let p = self.p.ok_or_else(|| missing("p"))?;
                let c = self.c.ok_or_else(|| missing("c"))?;
                let a = Matrix::new(self.m, self.n, a)?;
                Ok(Problem::Polytope(PolytopeInstance::new(a, self.b, p, c, self.seed)?))
            }
            InstanceKind::Qip => {
                let mats = self.big_a.clone().ok_or_else(|| missing("A"))?;
                let lambda = self.lambda.ok_or_else(|| missing("lambda"))?;
                if mats.len() != self.m {
                    return Err(Error::Format(format!("expected {} matrices, found {}", self.m, mats.len())));
                }
                let mats = mats
                    .into_iter()
                    .map(|data| SymMatrix::new(self.n, data))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Problem::Qip(QipInstance::new(mats, self.b, lambda, self.seed, self.x_truth)?))
            }
        }
    }

    fn kind_name(&self) -> &'static str {
        match self.kind {
            InstanceKind::Polytope => "polytope",
            InstanceKind::Qip => "qip",
        }
    }
}

pub fn instance_to_json(problem: &Problem) -> Result<String, Error> {
    Ok(serde_json::to_string(&InstanceFile::from_problem(problem))?)
}

pub fn read_instance(path: &Path) -> Result<Problem, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: InstanceFile = serde_json::from_str(&text)?;
    file.into_problem()
}

/// A trace row as stored in result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRow {
    pub k: usize,
    pub i_k: usize,
    pub gamma0: f64,
    pub gamma_k: f64,
    pub f: f64,
    pub f_next: f64,
    pub model_value: f64,
    pub model_error: f64,
    pub step_norm: f64,
    pub step_norm_h: f64,
    pub wall_ms: f64,
}

impl TraceRow {
    pub fn new(r: &TraceRecord, timings: bool) -> Self {
        Self {
            k: r.k,
            i_k: r.i_k,
            gamma0: r.gamma0,
            gamma_k: r.gamma_k,
            f: r.f,
            f_next: r.f_next,
            model_value: r.model_value,
            model_error: r.model_error,
            step_norm: r.step_norm,
            step_norm_h: r.step_norm_h,
            wall_ms: if timings { r.wall_ms } else { 0.0 },
        }
    }
}

/// Serialized solve outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub model: String,
    pub metric: String,
    pub status: String,
    pub termination_reason: Option<String>,
    pub outer_iterations: usize,
    pub total_inner_trials: usize,
    pub f_final: f64,
    pub final_model_error: f64,
    pub nonzeros: usize,
    pub wall_ms: f64,
    pub x_final: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

impl ResultFile {
    /// `status` is `converged`, `max_outer`, `inner_failure`, `diverged` or
    /// `inexact_subproblem`; `termination_reason` is set for completed runs.
    pub fn new(
        family: ModelFamily,
        metric: MetricKind,
        result: &SolveResult,
        status: &str,
        completed: bool,
        timings: bool,
    ) -> Self {
        Self {
            model: family.as_str().to_owned(),
            metric: metric.as_str().to_owned(),
            status: status.to_owned(),
            termination_reason: completed.then(|| result.termination_reason.as_str().to_owned()),
            outer_iterations: result.outer_iterations,
            total_inner_trials: result.total_inner_trials,
            f_final: result.f_final,
            final_model_error: result.final_model_error(),
            nonzeros: nonzero_count(&result.x_final, NONZERO_THRESHOLD).unwrap_or(0),
            wall_ms: if timings { result.wall_ms() } else { 0.0 },
            x_final: result.x_final.clone(),
            trace: result.trace.iter().map(|r| TraceRow::new(r, timings)).collect(),
        }
    }

    pub fn converged(&self) -> bool {
        self.termination_reason.as_deref() == Some(TerminationReason::ToleranceMet.as_str())
    }
}

pub fn trace_csv(trace: &[TraceRecord], timings: bool) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for r in trace {
        let wall = if timings { r.wall_ms } else { 0.0 };
        w.write_record([
            r.k.to_string(),
            r.i_k.to_string(),
            r.gamma_k.to_string(),
            r.f.to_string(),
            r.model_error.to_string(),
            r.step_norm.to_string(),
            r.step_norm_h.to_string(),
            wall.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Writes `contents` to a temporary file in the target directory and renames
/// it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Error> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
