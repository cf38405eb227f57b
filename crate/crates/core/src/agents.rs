//! Simulated decision makers and the logs they produce.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::{check_loss_parameter, PiecewiseDistribution};
use crate::error::{IdtError, Result};
use crate::hypothesis::{enumerate_family, ClassFamily, DecisionRule, PreparedClass, ThresholdClass};

/// Convex losses standing in for the indicator in the risk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surrogate {
    /// `max(0, 1 + w)`
    Hinge,
    /// `ln(1 + e^w)`
    Logistic,
    /// `(1 + w)²`
    Square,
}

impl Surrogate {
    pub fn value(&self, w: f64) -> f64 {
        match self {
            Self::Hinge => (1.0 + w).max(0.0),
            Self::Logistic => {
                // ln(1 + e^w) without overflow
                if w > 0.0 {
                    w + (-w).exp().ln_1p()
                } else {
                    w.exp().ln_1p()
                }
            }
            Self::Square => (1.0 + w) * (1.0 + w),
        }
    }

    /// One-sided derivatives `(V'(w−), V'(w+))`.
    fn derivatives(&self, w: f64) -> (f64, f64) {
        match self {
            Self::Hinge => (if w > -1.0 { 1.0 } else { 0.0 }, if w >= -1.0 { 1.0 } else { 0.0 }),
            Self::Logistic => {
                let s = 1.0 / (1.0 + (-w).exp());
                (s, s)
            }
            Self::Square => (2.0 * (1.0 + w), 2.0 * (1.0 + w)),
        }
    }
}

/// Search window for surrogate minimizers. Objectives without a finite
/// minimizer (e.g. logistic at `q ∈ {0, 1}`) return a point at this boundary.
const SURROGATE_BOUND: f64 = 64.0;

/// Minimizer of `(1−q)·c·V(w) + q·(1−c)·V(−w)`; the midpoint when the
/// minimizer set is an interval.
pub fn pointwise_surrogate_argmin(q: f64, c: f64, surrogate: Surrogate) -> f64 {
    let a = (1.0 - q) * c;
    let b = q * (1.0 - c);
    // one-sided derivatives of the objective; both are non-decreasing in w
    let right = |w: f64| {
        let (_, vp) = surrogate.derivatives(w);
        let (vm_neg, _) = surrogate.derivatives(-w);
        a * vp - b * vm_neg
    };
    let left = |w: f64| {
        let (vm, _) = surrogate.derivatives(w);
        let (_, vp_neg) = surrogate.derivatives(-w);
        a * vm - b * vp_neg
    };
    // lower end: first w with right(w) >= 0
    let lower = bisect(|w| right(w) >= 0.0);
    // upper end: last w with left(w) <= 0
    let upper = bisect(|w| left(w) > 0.0);
    0.5 * (lower + upper)
}

/// Boundary of a predicate that is false then true on `[-B, B]`.
fn bisect(pred: impl Fn(f64) -> bool) -> f64 {
    let (mut lo, mut hi) = (-SURROGATE_BOUND, SURROGATE_BOUND);
    if pred(lo) {
        return lo;
    }
    if !pred(hi) {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimizers this close to zero count as indifference, which decides 1.
const INDIFFERENCE: f64 = 1e-9;

/// How a group label is read off an observation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeMap {
    /// Coordinate `j` (1-based), rounded to the nearest integer.
    Coordinate(usize),
}

impl AttributeMap {
    pub fn attribute(&self, x: &[f64]) -> Result<i64> {
        match self {
            Self::Coordinate(j) => x
                .get(j.wrapping_sub(1))
                .map(|v| v.round() as i64)
                .ok_or_else(|| IdtError::Invalid(format!("attribute coordinate {j} out of range"))),
        }
    }
}

/// A decision maker with a hidden loss parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum Agent {
    /// `1{q(x) ≥ c}`.
    OptimalBayes { c: f64 },
    /// Optimal rule within a fixed class, cached at construction.
    ClassRestricted { class: ThresholdClass, c: f64, rule: DecisionRule },
    /// Optimal rule within one named class of a family.
    FamilyMember { family: ClassFamily, class_id: String, c: f64, rule: DecisionRule },
    /// Thresholds the pointwise surrogate-risk minimizer at zero.
    SurrogateMinimizer { surrogate: Surrogate, c: f64 },
    /// Routes each observation to the sub-agent of its group.
    GroupWise { attribute: AttributeMap, groups: Vec<(i64, Agent)> },
    /// A prescribed rule reported with a nominal loss parameter. Used by
    /// constructions whose agents are near-optimal rather than optimal.
    FixedRule { rule: DecisionRule, c: f64 },
}

impl Agent {
    pub fn optimal_bayes(c: f64) -> Result<Self> {
        check_loss_parameter(c)?;
        Ok(Self::OptimalBayes { c })
    }

    pub fn class_restricted(dist: &PiecewiseDistribution, class: ThresholdClass, c: f64) -> Result<Self> {
        check_loss_parameter(c)?;
        let rule = PreparedClass::new(dist, &class)?.optimal(c);
        Ok(Self::ClassRestricted { class, c, rule })
    }

    pub fn family_member(dist: &PiecewiseDistribution, family: ClassFamily, class_id: &str, c: f64) -> Result<Self> {
        check_loss_parameter(c)?;
        let class = match &family {
            ClassFamily::Explicit(_) => enumerate_family(&family)?
                .into_iter()
                .find(|(id, _)| id == class_id)
                .map(|(_, cl)| cl),
            ClassFamily::FeatureSubsets { .. } => family.class(class_id),
        }
        .ok_or_else(|| IdtError::Invalid(format!("class {class_id} not in family")))?;
        let rule = PreparedClass::new(dist, &class)?.optimal(c);
        Ok(Self::FamilyMember { family, class_id: class_id.to_string(), c, rule })
    }

    pub fn surrogate(surrogate: Surrogate, c: f64) -> Result<Self> {
        check_loss_parameter(c)?;
        Ok(Self::SurrogateMinimizer { surrogate, c })
    }

    pub fn group_wise(attribute: AttributeMap, groups: Vec<(i64, Agent)>) -> Result<Self> {
        if groups.is_empty() {
            return Err(IdtError::Invalid("group-wise agent needs at least one group".into()));
        }
        if groups.iter().any(|(_, a)| matches!(a, Agent::GroupWise { .. })) {
            return Err(IdtError::Invalid("group-wise agents do not nest".into()));
        }
        Ok(Self::GroupWise { attribute, groups })
    }

    /// The loss parameter, when the agent has a single one.
    pub fn loss_parameter(&self) -> Option<f64> {
        match self {
            Self::OptimalBayes { c }
            | Self::ClassRestricted { c, .. }
            | Self::FamilyMember { c, .. }
            | Self::SurrogateMinimizer { c, .. }
            | Self::FixedRule { c, .. } => Some(*c),
            Self::GroupWise { .. } => None,
        }
    }

    /// The cached rule of class-based agents.
    pub fn rule(&self) -> Option<&DecisionRule> {
        match self {
            Self::ClassRestricted { rule, .. } | Self::FamilyMember { rule, .. } | Self::FixedRule { rule, .. } => {
                Some(rule)
            }
            _ => None,
        }
    }

    pub fn decide(&self, dist: &PiecewiseDistribution, x: &[f64]) -> Result<u8> {
        Ok(self.decide_attributed(dist, x)?.0)
    }

    fn decide_attributed(&self, dist: &PiecewiseDistribution, x: &[f64]) -> Result<(u8, Option<i64>)> {
        match self {
            Self::OptimalBayes { c } => Ok((u8::from(dist.posterior(x)? >= *c), None)),
            Self::ClassRestricted { rule, .. } | Self::FamilyMember { rule, .. } | Self::FixedRule { rule, .. } => {
                if !dist.pieces().iter().any(|p| p.contains(x)) {
                    return Err(IdtError::OffSupport { point: x.to_vec() });
                }
                Ok((rule.apply(dist, x)?, None))
            }
            Self::SurrogateMinimizer { surrogate, c } => {
                let w = pointwise_surrogate_argmin(dist.posterior(x)?, *c, *surrogate);
                Ok((u8::from(w >= -INDIFFERENCE), None))
            }
            Self::GroupWise { attribute, groups } => {
                let a = attribute.attribute(x)?;
                let agent = groups
                    .iter()
                    .find(|(g, _)| *g == a)
                    .map(|(_, ag)| ag)
                    .ok_or_else(|| IdtError::Invalid(format!("no sub-agent for group {a}")))?;
                Ok((agent.decide(dist, x)?, Some(a)))
            }
        }
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OptimalBayes { c } => write!(f, "optimal_bayes(c={c})"),
            Self::ClassRestricted { rule, c, .. } => {
                write!(f, "class_restricted(c={c}, score={:?}, b={})", rule.score, rule.threshold)
            }
            Self::FamilyMember { class_id, c, .. } => write!(f, "family_member(class={class_id}, c={c})"),
            Self::SurrogateMinimizer { surrogate, c } => write!(f, "surrogate({surrogate:?}, c={c})"),
            Self::GroupWise { attribute, groups } => {
                write!(f, "group_wise({attribute:?}")?;
                for (g, a) in groups {
                    write!(f, ", {g}: {a}")?;
                }
                write!(f, ")")
            }
            Self::FixedRule { rule, c } => {
                write!(f, "fixed_rule(c={c}, score={:?}, b={})", rule.score, rule.threshold)
            }
        }
    }
}

/// One observed decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub x: Vec<f64>,
    pub yhat: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attr: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub distribution_digest: String,
    pub agent: String,
    pub seed: u64,
    pub m: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionLog {
    pub records: Vec<SampleRecord>,
    pub meta: LogMeta,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    #[serde(rename = "_meta")]
    meta: LogMeta,
}

impl DecisionLog {
    /// Wraps records gathered elsewhere.
    pub fn from_records(records: Vec<SampleRecord>) -> Self {
        let m = records.len();
        Self {
            records,
            meta: LogMeta { distribution_digest: String::new(), agent: "external".into(), seed: 0, m },
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// JSON Lines: a `{"_meta": ...}` header then one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&MetaLine { meta: self.meta.clone() }).expect("meta serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Reads what `to_jsonl` writes. The header line is optional.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
        let head = *lines.peek().ok_or(IdtError::EmptyLog)?;
        let meta = if head.trim_start().starts_with("{\"_meta\"") {
            lines.next();
            let m: MetaLine = serde_json::from_str(head).map_err(|e| IdtError::Invalid(format!("log header: {e}")))?;
            Some(m.meta)
        } else {
            None
        };
        let records: Vec<SampleRecord> = lines
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| IdtError::Invalid(format!("log record {i}: {e}"))))
            .collect::<Result<_>>()?;
        if records.iter().any(|r| r.yhat > 1) {
            return Err(IdtError::Invalid("decisions must be 0 or 1".into()));
        }
        match meta {
            Some(meta) if meta.m != records.len() => Err(IdtError::Invalid(format!(
                "log header says m={} but has {} records",
                meta.m,
                records.len()
            ))),
            Some(meta) => Ok(Self { records, meta }),
            None => Ok(Self::from_records(records)),
        }
    }
}

/// Draws `m` observations and records the agent's decision on each.
/// Outcomes are drawn (to keep the random stream identical to `sample`)
/// and then dropped.
pub fn generate_log(agent: &Agent, dist: &PiecewiseDistribution, m: usize, seed: u64) -> Result<DecisionLog> {
    if m == 0 {
        return Err(IdtError::Invalid("m must be at least 1".into()));
    }
    let mut sampler = dist.sampler(seed);
    let mut records = Vec::with_capacity(m);
    for _ in 0..m {
        let (_, x, _y) = sampler.draw();
        let (yhat, attr) = agent.decide_attributed(dist, &x)?;
        records.push(SampleRecord { x, yhat, attr });
    }
    Ok(DecisionLog {
        records,
        meta: LogMeta {
            distribution_digest: crate::schema::distribution_digest(dist),
            agent: agent.to_string(),
            seed,
            m,
        },
    })
}
