use thiserror::Error;

/// Errors produced anywhere in the planning library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid factor space at {path}: {reason}")]
    InvalidSpace { path: String, reason: String },

    #[error("config has {found} entries but the space has {expected} factors")]
    ConfigLength { expected: usize, found: usize },

    #[error("value index {index} out of range for factor `{factor}` ({count} values)")]
    ValueOutOfRange {
        factor: String,
        index: usize,
        count: usize,
    },

    #[error("unknown value `{value}` for factor `{factor}`")]
    UnknownValue { factor: String, value: String },

    #[error("unknown factor `{0}`")]
    UnknownFactor(String),

    #[error("config does not assign factor `{0}`")]
    MissingFactor(String),

    #[error("factor index {index} out of range (space has {count} factors)")]
    FactorIndex { index: usize, count: usize },

    #[error("combination count overflows usize")]
    Overflow,

    #[error("{strategy} requires every factor to have the same number of values")]
    UnequalValueCounts { strategy: String },

    #[error("requested {requested} configs but the space only has {available}")]
    NotEnoughConfigs { requested: usize, available: usize },

    #[error("{demos} demos cannot cover {entries} entries")]
    InsufficientDemos { demos: usize, entries: usize },

    #[error("change budget {budget} is below the initial setup cost {minimum}")]
    BudgetTooSmall { budget: usize, minimum: usize },

    #[error("plan has no entries")]
    EmptyPlan,

    #[error("value `{value}` has no {kind} embedding")]
    MissingEmbedding { value: String, kind: &'static str },

    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("quaternion for value `{value}` has norm {norm}, expected 1")]
    NonUnitQuaternion { value: String, norm: f64 },

    #[error("cannot choose {k} medoids from {n} values")]
    MedoidCount { k: usize, n: usize },

    #[error("exact k-medoids refused for {n} values (limit {limit})")]
    ExactTooLarge { n: usize, limit: usize },

    #[error("space has {size} combinations; exact evaluation is capped at {limit}")]
    SpaceTooLarge { size: usize, limit: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid pair ({0}, {1})")]
    InvalidPair(usize, usize),

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("duplicate episode id `{0}`")]
    DuplicateEpisode(String),

    #[error("plan file: {0}")]
    PlanDocument(String),

    #[error("session already complete")]
    SessionComplete,

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
