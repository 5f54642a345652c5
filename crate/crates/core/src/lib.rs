//! Model-based proximal quasi-Newton methods for nonsmooth nonconvex problems.
//!
//! The solver minimizes `f` by repeatedly minimizing a local model `f_x̄` of `f`
//! plus a variable-metric proximal term, accepting a trial point once the model
//! error is dominated by the proximal term. Everything in this crate is pure
//! computation over `alloc` containers; IO, file formats and the CLI live in the
//! `modelprox` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
mod fmath;
pub mod linalg;
pub mod models;
pub mod problems;
pub mod solver;
pub mod subsolvers;

pub use error::{Error, Result};
pub use linalg::{Matrix, Metric, SpdFactorization, SymMatrix};
pub use models::{ModelErrorSample, ModelState, Objective};
pub use problems::{ModelFamily, PolytopeInstance, Problem, QipInstance};
pub use solver::{
    Clock, InitialGamma, MetricKind, NoClock, SolveError, SolveResult, Solver, SolverConfig,
    TerminationReason, TerminationRule, TraceRecord,
};
pub use subsolvers::{Payload, PayloadShape, SubproblemSolution};
