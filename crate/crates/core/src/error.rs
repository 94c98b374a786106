use thiserror::Error;

/// Errors raised anywhere in the inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate moment variance: gamma2 - gamma1^2 = {0:e}")]
    DegenerateVariance(f64),

    #[error("truncation level {0} exceeds the cap of {max}", max = crate::jacobi::MAX_ORDER)]
    TruncationCap(usize),

    #[error("need {needed} moments but only {available} available")]
    InsufficientMoments { needed: usize, available: usize },

    #[error("approximate density is nonpositive on the whole grid")]
    EmptySupport,

    #[error("rejection sampler acceptance rate {0:.2e} is below 1e-3")]
    DegenerateEnvelope(f64),

    #[error("numerical integration did not converge on [{lo}, {hi}] (error estimate {err:e})")]
    Integration { lo: f64, hi: f64, err: f64 },

    #[error("latent state error: {0}")]
    State(String),

    #[error("chain aborted at iteration {iteration}: {message}")]
    ChainAbort { iteration: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code: 2 validation, 3 numerical failure, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::Domain(_)
            | Error::TruncationCap(_)
            | Error::InsufficientMoments { .. }
            | Error::EmptyDataset
            | Error::Parse { .. }
            | Error::Validation { .. }
            | Error::State(_)
            | Error::Json(_) => 2,
            Error::DegenerateVariance(_)
            | Error::EmptySupport
            | Error::DegenerateEnvelope(_)
            | Error::Integration { .. }
            | Error::ChainAbort { .. } => 3,
            Error::Io { .. } => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
