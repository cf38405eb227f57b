//! Inverse decision theory.
//!
//! Given a known joint law of observations and outcomes, and a log of
//! decisions made by an agent that minimizes expected loss, recover the
//! agent's loss trade-off `c` (the normalized cost of a false positive).
//! The agent may be Bayes optimal, optimal within a known class of threshold
//! rules, or optimal within one unknown member of a family of classes.
//!
//! Decision problems are finite mixtures of atoms, segments and rectangles
//! with affine posteriors, so every risk and disagreement probability is
//! computed in closed form.

pub mod agents;
pub mod constructions;
pub mod dist;
pub mod error;
pub mod estimators;
mod geometry;
pub mod harness;
pub mod hypothesis;
mod profile;
pub mod schema;

pub use agents::{generate_log, pointwise_surrogate_argmin, Agent, AttributeMap, DecisionLog, SampleRecord, Surrogate};
pub use dist::{AffinePosterior, CostMatrix, DecisionProblem, Piece, PieceKind, PiecewiseDistribution};
pub use error::{IdtError, Result};
pub use estimators::{
    audit_fairness, estimate_known_class, estimate_optimal, estimate_unknown_family, EstimateResult,
    FairnessReport, Verdict,
};
pub use hypothesis::{
    check_monotone, disagreement, enumerate_family, feature_subset_vc_bound, induced_posterior, md_smoothness_alpha,
    min_disagreement, optimal_in_class, Alpha, ClassFamily, DecisionRule, ScoreFunction, ThresholdClass,
    ThresholdRange,
};
