use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error("missing input {}: run `{stage}` first", path.display())]
    Missing { path: PathBuf, stage: &'static str },

    #[error("data mismatch: {0}")]
    Mismatch(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0} simulation(s) failed to converge")]
    Failed(usize),

    #[error(transparent)]
    Core(#[from] rvemor::Error),
}

impl CliError {
    pub fn io(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.to_string(),
            source,
        }
    }

    /// 2 configuration, 3 solver nonconvergence, 4 data mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Missing { .. } => 2,
            CliError::Mismatch(_) | CliError::Io { .. } => 4,
            CliError::Failed(_) => 3,
            CliError::Core(e) => core_code(e),
        }
    }
}

fn core_code(e: &rvemor::Error) -> i32 {
    use rvemor::Error as E;
    match e {
        E::InvalidParameter(_) | E::InvalidConfig(_) | E::OutOfBounds(_) => 2,
        E::Inversion { .. }
        | E::ReturnMapping { .. }
        | E::Newton { .. }
        | E::Simulation { .. }
        | E::LinearSolve(_)
        | E::NonFiniteLoss { .. } => 3,
        E::AtQuadPoint { source, .. } => core_code(source),
        E::Rank { .. } | E::Empty(_) | E::Shape(_) | E::Fingerprint { .. } | E::Format(_) | E::Io(_) => 4,
    }
}
