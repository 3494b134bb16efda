use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("{origin}: {msg}")]
    Invalid { origin: String, msg: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] oampdc::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration and usage errors, 3 for numerical failures,
    /// 4 for gaps beyond the resolved range, 1 for I/O.
    pub fn exit_code(&self) -> u8 {
        use oampdc::Error as E;
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Invalid { .. } | CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                E::Config(_) | E::ModelRange { .. } | E::UndefinedSensitivity | E::Index(_) | E::Unsupported(_) => 2,
                E::Resolution { .. } => 4,
                E::Io(_) | E::Csv(_) => 1,
                E::SeriesOverflow { .. }
                | E::Truncation { .. }
                | E::SvdFailure(_)
                | E::DegenerateNormalization(_)
                | E::Fit(_)
                | E::GridMismatch(_)
                | E::Cache(_) => 3,
            },
            CliError::Io(_) | CliError::Json(_) => 1,
        }
    }
}
