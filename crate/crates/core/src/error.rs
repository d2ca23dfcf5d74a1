//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by panel ingestion, taxonomy handling and the analytics
/// pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file content; carries origin and 1-based line number.
    #[error("parse error at {origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: u64,
        message: String,
    },

    /// Duplicate (country, activity, year) triple with conflicting values.
    #[error("conflicting duplicate at {origin}:{line}: {message}")]
    Conflict {
        origin: String,
        line: u64,
        message: String,
    },

    /// A value violates a domain precondition (negative export, non-finite
    /// number, empty panel, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration parameter.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Two panels to be merged share activity codes.
    #[error("activity axis collision: {0}")]
    AxisCollision(String),

    /// Merged panels have no common countries or years.
    #[error("empty intersection: {0}")]
    EmptyIntersection(String),

    /// Taxonomy edges do not form a single rooted tree.
    #[error("taxonomy structure error: {0}")]
    Structure(String),

    /// A child's layer index is not its parent's layer plus one.
    #[error("taxonomy layer error: {0}")]
    Layer(String),

    /// The complete set does not cover the leaves exactly once, or a
    /// complete-set code is absent where required.
    #[error("complete-set coverage error: {0}")]
    Coverage(String),

    /// Axis labels of two aligned structures differ.
    #[error("axis alignment error: {0}")]
    Alignment(String),

    /// A matrix of the wrong kind was supplied.
    #[error("matrix kind error: {0}")]
    Kind(String),

    /// A year slice with no usable data.
    #[error("degenerate slice: {0}")]
    DegenerateSlice(String),

    /// A matrix with all-zero rows or columns fed to an operation that
    /// cannot tolerate them.
    #[error("matrix structure error: {0}")]
    ZeroAxis(String),

    #[error("fit did not converge: residual {residual:e} after {iterations} iterations")]
    FitNotConverged { residual: f64, iterations: usize },

    /// Year/lag range yields nothing to compute.
    #[error("range error: {0}")]
    Range(String),

    /// No fully observed sub-panel available for benchmark evaluation.
    #[error("evaluation-set error: {0}")]
    EvaluationSet(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user configuration rather than by the
    /// data; the CLI maps these to usage exit codes.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
