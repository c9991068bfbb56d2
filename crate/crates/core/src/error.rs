use std::path::PathBuf;

use crate::model::Violation;
use crate::picard::PicardTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {}", format_violations(.0))]
    InvalidParameters(Vec<Violation>),

    #[error("invalid EMT rate: {0}")]
    InvalidEmtRate(String),

    #[error("invalid run configuration: {0}")]
    InvalidRunConfig(String),

    #[error("non-finite value in {field} at step {step}")]
    NonFinite { step: u64, field: &'static str },

    #[error("time step underflow at step {step}: dt = {dt:e}")]
    Stiffness { step: u64, dt: f64 },

    #[error("{field} dropped to {min:e} at step {step}, beyond the positivity slack")]
    Positivity {
        step: u64,
        field: &'static str,
        min: f64,
    },

    #[error("at t = {time}: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("state invariant violated: {0}")]
    InvalidState(String),

    #[error("cannot compute bounds: {0}")]
    Bounds(String),

    #[error("hard monitor violation at t = {time}: {check}")]
    MonitorViolation { time: f64, check: String },

    #[error(
        "Picard iteration is not contracting after {iterations} iterations; use a smaller window"
    )]
    NonContraction {
        iterations: usize,
        trace: Box<PicardTrace>,
    },

    #[error("Picard iteration did not reach tolerance in {iterations} iterations (last difference {last:e})")]
    PicardConvergence {
        iterations: usize,
        last: f64,
        trace: Box<PicardTrace>,
    },

    #[error("Picard window starting at t = {start} failed: {source}")]
    Window {
        start: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("refinement level {nx}x{ny} failed: {source}")]
    Refinement {
        nx: usize,
        ny: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
