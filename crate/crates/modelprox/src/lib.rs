//! File formats, configuration, benchmark harness and diagnostics around
//! [`modelprox_core`].

use std::path::{Path, PathBuf};

pub mod config;
pub mod diagnostics;
pub mod harness;
pub mod io;
pub mod plot;

pub use modelprox_core as core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] modelprox_core::Error),
    #[error(transparent)]
    Solve(#[from] modelprox_core::SolveError),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }
}

/// Worker count from `MODELPROX_THREADS`, defaulting to the available cores.
pub fn thread_cap() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("MODELPROX_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(n) if n >= 1 => n,
        _ => available,
    }
}

/// Milliseconds since construction.
pub struct StdClock(std::time::Instant);

impl StdClock {
    pub fn start() -> Self {
        Self(std::time::Instant::now())
    }
}

impl modelprox_core::Clock for StdClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}
