use thiserror::Error;

/// Errors raised by the discrimination toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid operator: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("operators are equal up to a global phase (distance {distance:.3e})")]
    OperatorsEqual { distance: f64 },

    #[error("not single-run discriminable: theta = {theta:.6} < pi")]
    NotSingleRunDiscriminable { theta: f64 },

    #[error("sequential synthesis failed after {runs} auxiliary operations (best overlap {best_overlap:.3e})")]
    SynthesisFailed { runs: usize, best_overlap: f64 },

    #[error("compilation failed within {max_boxes} boxes (best error {best_error:.3e})")]
    CompileFailed { max_boxes: usize, best_error: f64 },

    #[error("no imprimitivity witness found in {scanned} product inputs")]
    WitnessNotFound { scanned: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Short module-level name, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Validation(_) => "ValidationError",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::Eigensolver(_) => "EigensolverError",
            Error::OperatorsEqual { .. } => "OperatorsEqual",
            Error::NotSingleRunDiscriminable { .. } => "NotSingleRunDiscriminable",
            Error::SynthesisFailed { .. } => "SynthesisFailed",
            Error::CompileFailed { .. } => "CompileFailed",
            Error::WitnessNotFound { .. } => "WitnessNotFound",
            Error::Precondition(_) => "PreconditionViolated",
            Error::Stage { source, .. } => source.name(),
        }
    }

    /// The innermost error, skipping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
