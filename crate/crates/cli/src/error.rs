use cdds_chem::ChemError;
use cdds_compute::ComputeError;
use cdds_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint was trained with architecture {found}, config describes {expected} (use --force to load anyway)")]
    ConfigHashMismatch { expected: String, found: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] ComputeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 0 success, 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::ConfigHashMismatch { .. } => 1,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(CoreError::Invalid(_)) => 1,
            CliError::Checkpoint(ComputeError::NonFinite { .. }) => 3,
            _ => 2,
        }
    }
}
