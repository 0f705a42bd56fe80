use std::fmt;

/// Shape of a dense matrix as `(rows, cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape(pub usize, pub usize);

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    Dimension {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value while evaluating parameter `{path}`[{index}]")]
    NonFinite { path: String, index: usize },

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: Shape, right: Shape) -> Self {
        Error::Dimension { op, left, right }
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by NaN/Inf or a diverging optimizer.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite { .. } | Error::Divergence { .. } => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
