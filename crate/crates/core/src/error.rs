use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input outside the domain: {0}")]
    InputDomain(String),
    #[error("preset `{0}` does not provide the requested analytic data")]
    UnsupportedPreset(String),
    #[error("quadrature under-resolves the coefficient field (tail energy {tail:.3e})")]
    Resolution { tail: f64 },
    #[error("singular Galerkin system at lambda = {lambda:.3e} (condition estimate {condition:.3e})")]
    SingularSystem { lambda: f64, condition: f64 },
    #[error("lambda extrapolation unreliable: {0}")]
    ExtrapolationUnreliable(String),
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("kernel geometry violated: {0}")]
    GeometryViolation(String),
    #[error("simulation failed: {flagged} of {total} paths flagged")]
    SimulationFailure { flagged: usize, total: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = core::result::Result<T, Error>;
