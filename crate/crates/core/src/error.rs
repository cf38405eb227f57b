use thiserror::Error;

/// Every failure the library reports. Variants carry enough context to name
/// the offending input.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdtError {
    #[error("piece weights sum to {sum}, expected 1 within 1e-12")]
    WeightSum { sum: f64 },
    #[error("posterior of piece {piece} leaves [0,1] (reaches {value})")]
    PosteriorRange { piece: usize, value: f64 },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("point {point:?} is not on the support")]
    OffSupport { point: Vec<f64> },
    #[error("score is not piecewise affine on piece {piece}")]
    UnsupportedScore { piece: usize },
    #[error("degenerate cost matrix: C10 + C01 - C00 - C11 = {denominator}")]
    DegenerateCost { denominator: f64 },
    #[error("decisions are not monotone in c at score {score}")]
    NonMonotone { score: f64 },
    #[error("family would have {size} classes, limit is {limit}")]
    FamilyTooLarge { size: f64, limit: usize },
    #[error("log is inconsistent with every c in [0,1]: {reason}")]
    InconsistentLog { reason: String },
    #[error("decision log has no records")]
    EmptyLog,
    #[error("no class in the family is consistent with the log")]
    NoConsistentClass,
    #[error("record {record} has no protected attribute")]
    MissingAttribute { record: usize },
    #[error("parameter {name} = {value} outside {allowed}")]
    ParameterRange { name: &'static str, value: f64, allowed: &'static str },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, IdtError>;
