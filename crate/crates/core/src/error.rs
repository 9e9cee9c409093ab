use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed word: {0}")]
    MalformedWord(String),

    #[error("enumeration too large: {requested} items exceeds cap {cap}")]
    EnumerationTooLarge { requested: u128, cap: usize },

    #[error("geodesic search exceeded radius cap {cap}")]
    RadiusCap { cap: usize },

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("unsupported presentation: {0}")]
    UnsupportedPresentation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid conjugator: {0}")]
    InvalidConjugator(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A computation contradicted an invariant that the underlying theory
    /// guarantees; the run must not continue.
    #[error("internal consistency failure: {0}")]
    InternalConsistency(String),
}
