use std::path::PathBuf;

use erade_service::ServiceError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] erade_core::Error),
    #[error("{}: {source}", path.as_ref().map_or("<stdout>".into(), |p| p.display().to_string()))]
    Io {
        path: Option<PathBuf>,
        source: std::io::Error,
    },
    #[error(transparent)]
    Service(#[from] ServiceError),
}

impl CliError {
    /// 2 usage, 3 domain, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Domain(erade_core::Error::Parse { .. }) => 2,
            CliError::Domain(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Service(ServiceError::Io(_)) => 4,
            CliError::Service(_) => 3,
        }
    }
}
