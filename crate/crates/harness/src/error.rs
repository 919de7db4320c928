use intercept_core::SimError;
use intercept_policy::PolicyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("config fault: {0}")]
    Config(String),
    /// The run finished but a check it performs failed.
    #[error("check failed: {0}")]
    Check(String),
}

impl HarnessError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    /// Stable fault label for machine-readable records.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Sim(SimError::ConfigFault(_)) | Self::Config(_) => "config-fault",
            Self::Sim(SimError::InfeasibleConfig { .. }) => "infeasible-config",
            Self::Sim(_) => "simulation-fault",
            Self::Policy(PolicyError::LoadFault { .. }) => "load-fault",
            Self::Policy(_) => "policy-fault",
            Self::Io { .. } => "io-fault",
            Self::Csv(_) | Self::Json(_) => "format-fault",
            Self::Check(_) => "check-failed",
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
