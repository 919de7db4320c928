use intercept_core::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("config fault: {0}")]
    ConfigFault(String),
    /// Weight file problem; `tensor` names the first offending tensor.
    #[error("load fault{}: {message}", tensor.as_ref().map(|t| format!(" in tensor {t}")).unwrap_or_default())]
    LoadFault { tensor: Option<String>, message: String },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl PolicyError {
    pub fn load(tensor: Option<&str>, message: impl Into<String>) -> Self {
        Self::LoadFault { tensor: tensor.map(str::to_owned), message: message.into() }
    }
}

pub type Result<T, E = PolicyError> = std::result::Result<T, E>;
