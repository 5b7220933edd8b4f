use thiserror::Error;

use crate::levels::State;

#[derive(Debug, Error)]
pub enum VmcError {
    #[error("target level {target} exceeds source level {source_level}")]
    LevelTooHigh { target: usize, source_level: usize },

    #[error("invalid path at level {level}: {reason}")]
    InvalidPath { level: usize, reason: String },

    #[error("invalid distribution at level {level}: {reason}")]
    InvalidDistribution { level: usize, reason: String },

    #[error("invalid stochastic matrix at level {level}: {reason}")]
    InvalidMatrix { level: usize, reason: String },

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("prefix too short: need level {needed}, have {available}")]
    PrefixTooShort { needed: usize, available: usize },

    #[error("state {state} exceeds the configured bound {bound}")]
    ResourceGuard { state: usize, bound: usize },

    #[error("incompatible (VID, VTM) pair: {0}")]
    Incompatible(String),

    #[error("marginal sequence is not a member: first violation at level {level}, state {state}")]
    MembershipViolation { level: usize, state: State },

    #[error("sampler occupied state {state} at level {level}, which carries no marginal mass")]
    InternalUnreachableState { level: usize, state: State },

    #[error("conditioning event {{S_(N+1) = N+1}} never observed for N = {level}")]
    ConditioningEventUnobserved { level: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("singular linear system while classifying state {state}")]
    SingularSystem { state: State },

    #[error("certificate failed re-validation: {0}")]
    CertificateRejected(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("horizon must be positive")]
    ZeroHorizon,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = VmcError> = std::result::Result<T, E>;
