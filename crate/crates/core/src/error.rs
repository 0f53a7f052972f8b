use thiserror::Error;

/// Errors raised anywhere in the attribution pipeline.
///
/// Every variant carries the module it originated from so that the CLI can
/// report provenance and pick an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("[config] {0}")]
    Config(String),

    #[error("[{module}] invalid input: {message}")]
    Input { module: &'static str, message: String },

    #[error("[{module}] contract violation: {message}")]
    Contract { module: &'static str, message: String },

    #[error("[gateway] transport failure after {attempts} attempt(s): {message}")]
    Gateway { attempts: u32, message: String },

    #[error("[gateway] remote returned status {status}: {body}")]
    Remote { status: u16, body: String },

    #[error("[gateway] model does not provide the {0} tier")]
    UnsupportedTier(&'static str),

    #[error("[gateway] target output is empty")]
    EmptyTarget,

    #[error("[scalarizers] remote scorer failure: {0}")]
    Scorer(String),

    #[error("[attributors] insufficient budget: {budget} masks for {units} units (need at least {})", units + 1)]
    InsufficientBudget { budget: usize, units: usize },

    #[error("[attributors] design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("[attributors] evaluation aborted after {completed} of {total} masks: {source}")]
    Partial {
        completed: usize,
        total: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("[io] {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("[json] {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Input,
    Gateway,
    Contract,
}

impl Error {
    pub fn input(module: &'static str, message: impl Into<String>) -> Self {
        Error::Input {
            module,
            message: message.into(),
        }
    }

    pub fn contract(module: &'static str, message: impl Into<String>) -> Self {
        Error::Contract {
            module,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::UnsupportedTier(_) => ErrorKind::Config,
            Error::Input { .. } | Error::Io { .. } | Error::Json(_) => ErrorKind::Input,
            Error::Gateway { .. } | Error::Remote { .. } | Error::Scorer(_) | Error::EmptyTarget => {
                ErrorKind::Gateway
            }
            Error::Contract { .. } | Error::InsufficientBudget { .. } | Error::RankDeficient(_) => {
                ErrorKind::Contract
            }
            Error::Partial { source, .. } => source.kind(),
        }
    }

    /// Process exit code for this error: 2 config, 3 input, 4 gateway, 5 contract.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Input => 3,
            ErrorKind::Gateway => 4,
            ErrorKind::Contract => 5,
        }
    }
}
