use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("subsystem label `{0}` appears in both operands")]
    LabelCollision(String),

    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not a projector: {0}")]
    InvalidProjector(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid pulse program: {0}")]
    InvalidProgram(String),

    #[error("invalid gate sequence: {0}")]
    InvalidGates(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("ill-conditioned reconstruction (condition number {condition:.3e}) for bases {bases}")]
    IllConditioned { condition: f64, bases: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("register of {requested} photons exceeds the cap of {cap}")]
    RegisterTooLarge { requested: usize, cap: usize },

    #[error("incomplete tomography settings, missing: {0}")]
    IncompleteSettings(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
    }

    /// True for errors that come from conditioning or positivity checks
    /// rather than from malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::IllConditioned { .. })
    }
}
