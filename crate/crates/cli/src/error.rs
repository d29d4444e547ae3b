use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICS: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] mcseg_core::Error),

    #[error("{}: {detail}", path.display())]
    Json { path: PathBuf, detail: String },

    #[error("stage {stage}: {source}")]
    InStage {
        stage: String,
        #[source]
        source: Box<CliError>,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ CliError::InStage { .. } => e,
            e => CliError::InStage {
                stage: stage.into(),
                source: Box::new(e),
            },
        }
    }

    /// Innermost stage the error was raised in.
    pub fn stage(&self) -> Option<&str> {
        match self {
            CliError::InStage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use mcseg_core::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Json { .. } => EXIT_DATA,
            CliError::InStage { source, .. } => source.exit_code(),
            CliError::Core(e) => match e {
                E::Numerics { .. } | E::Convergence { .. } => EXIT_NUMERICS,
                E::Config(_) | E::Strategy(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            },
        }
    }
}
