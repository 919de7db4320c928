use thiserror::Error;

/// Faults raised by the simulation stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A derivative or state component became non-finite during integration.
    #[error("integration fault in state component {index}{}", time.map(|t| format!(" (last valid t = {t} s)")).unwrap_or_default())]
    IntegrationFault { index: usize, time: Option<f64> },

    #[error("dynamics fault: {0}")]
    DynamicsFault(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// Reconstructed line of sight falls outside the unit sphere cap the seeker can see.
    #[error("seeker field-of-view fault: sin²θu + sin²θv = {0} > 1")]
    FovFault(f64),

    #[error("infeasible engagement geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("no feasible engagement after {retries} attempts")]
    InfeasibleConfig { retries: u32 },

    /// Closing velocity is not positive; the intercept window has passed.
    #[error("closing velocity {0} m/s is not positive")]
    PastIntercept(f64),

    #[error("configuration fault: {0}")]
    ConfigFault(String),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
