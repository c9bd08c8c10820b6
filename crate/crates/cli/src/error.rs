use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: jumpfb::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn numerical(context: impl Into<String>) -> impl FnOnce(jumpfb::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Numerical { context, source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Validation(_) | CliError::Model(_) => 2,
            CliError::Numerical { .. } | CliError::Io { .. } => 1,
        }
    }
}
