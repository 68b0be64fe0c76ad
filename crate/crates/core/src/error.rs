use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("newick syntax error at offset {offset}: {message}")]
    NewickSyntax { offset: usize, message: String },

    #[error("empty tree")]
    EmptyTree,

    #[error("duplicate terminal label `{0}`")]
    DuplicateLabel(String),

    #[error("terminal `{0}` has zero root-to-tip depth")]
    ZeroDepth(String),

    #[error("tree must have at least 2 terminals, found {0}")]
    TooFewTerminals(usize),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("degenerate target: {0}")]
    Degenerate(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("chain {chain}: {source}")]
    InChain {
        chain: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn not_pd(msg: impl Into<String>) -> Self {
        Error::NotPositiveDefinite(msg.into())
    }
}
