//! JSON documents for distributions, classes, families and agents.
//!
//! Reals are written as decimal strings. On input a real may be a JSON
//! number, a decimal string, or a fraction string such as `"2/15"`.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::agents::{Agent, AttributeMap, Surrogate};
use crate::constructions::{by_name, ConstructionBundle};
use crate::harness::{Regime, TrialConfig};
use crate::dist::{AffinePosterior, Piece, PieceKind, PiecewiseDistribution};
use crate::error::{IdtError, Result};
use crate::hypothesis::{ClassFamily, ScoreFunction, ThresholdClass, ThresholdRange};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Real(pub f64);

pub fn parse_real(s: &str) -> Result<f64> {
    let t = s.trim();
    let bad = || IdtError::Invalid(format!("not a real number: {s:?}"));
    let v = match t.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if b == 0.0 {
                return Err(bad());
            }
            a / b
        }
        None => t.parse().map_err(|_| bad())?,
    };
    if v.is_nan() {
        return Err(bad());
    }
    Ok(v)
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Real(v)),
            Raw::Str(s) => parse_real(&s).map(Real).map_err(serde::de::Error::custom),
        }
    }
}

fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().map(|x| Real(*x)).collect()
}

fn floats(v: &[Real]) -> Vec<f64> {
    v.iter().map(|x| x.0).collect()
}

fn pair(v: &[Real], what: &str) -> Result<[f64; 2]> {
    match v {
        [a, b] => Ok([a.0, b.0]),
        _ => Err(IdtError::Geometry(format!("{what} must have two coordinates"))),
    }
}

#[derive(Clone, Serialize, Deserialize)]
struct PosteriorDoc {
    intercept: Real,
    gradient: Vec<Real>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum SegmentGeometry {
    Parametric { base: Vec<Real>, direction: Vec<Real>, length: Real },
    Endpoints { from: Vec<Real>, to: Vec<Real> },
}

#[derive(Clone, Serialize, Deserialize)]
struct PointGeometry {
    location: Vec<Real>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RectGeometry {
    lower: Vec<Real>,
    upper: Vec<Real>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PieceDoc {
    Point { geometry: PointGeometry, weight: Real, posterior: PosteriorDoc },
    Segment { geometry: SegmentGeometry, weight: Real, posterior: PosteriorDoc },
    Rect { geometry: RectGeometry, weight: Real, posterior: PosteriorDoc },
}

#[derive(Clone, Serialize, Deserialize)]
pub struct DistributionDoc {
    ambient_dimension: usize,
    pieces: Vec<PieceDoc>,
}

impl DistributionDoc {
    pub fn build(&self) -> Result<PiecewiseDistribution> {
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let post = |d: &PosteriorDoc| AffinePosterior::new(d.intercept.0, floats(&d.gradient));
                Ok(match p {
                    PieceDoc::Point { geometry, weight, posterior } => {
                        Piece::point(floats(&geometry.location), weight.0, post(posterior))
                    }
                    PieceDoc::Segment { geometry, weight, posterior } => match geometry {
                        SegmentGeometry::Parametric { base, direction, length } => Piece {
                            kind: PieceKind::Segment { base: floats(base), direction: floats(direction), length: length.0 },
                            weight: weight.0,
                            posterior: post(posterior),
                        },
                        SegmentGeometry::Endpoints { from, to } => {
                            Piece::segment(floats(from), floats(to), weight.0, post(posterior))
                        }
                    },
                    PieceDoc::Rect { geometry, weight, posterior } => Piece::rect(
                        pair(&geometry.lower, "rect lower")?,
                        pair(&geometry.upper, "rect upper")?,
                        weight.0,
                        post(posterior),
                    ),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PiecewiseDistribution::new(self.ambient_dimension, pieces)
    }

    pub fn from_distribution(d: &PiecewiseDistribution) -> Self {
        let pieces = d
            .pieces()
            .iter()
            .map(|p| {
                let posterior =
                    PosteriorDoc { intercept: Real(p.posterior.intercept), gradient: reals(&p.posterior.gradient) };
                let weight = Real(p.weight);
                match &p.kind {
                    PieceKind::PointMass { location } => {
                        PieceDoc::Point { geometry: PointGeometry { location: reals(location) }, weight, posterior }
                    }
                    PieceKind::Segment { base, direction, length } => PieceDoc::Segment {
                        geometry: SegmentGeometry::Parametric {
                            base: reals(base),
                            direction: reals(direction),
                            length: Real(*length),
                        },
                        weight,
                        posterior,
                    },
                    PieceKind::Rect { lower, upper } => PieceDoc::Rect {
                        geometry: RectGeometry { lower: reals(lower), upper: reals(upper) },
                        weight,
                        posterior,
                    },
                }
            })
            .collect();
        Self { ambient_dimension: d.ambient_dimension(), pieces }
    }
}

pub fn distribution_from_json(text: &str) -> Result<PiecewiseDistribution> {
    let doc: DistributionDoc =
        serde_json::from_str(text).map_err(|e| IdtError::Invalid(format!("distribution: {e}")))?;
    doc.build()
}

pub fn distribution_to_json(d: &PiecewiseDistribution) -> String {
    serde_json::to_string_pretty(&DistributionDoc::from_distribution(d)).expect("distribution serializes")
}

/// Hex SHA-256 of the compact canonical JSON form.
pub fn distribution_digest(d: &PiecewiseDistribution) -> String {
    let text = serde_json::to_string(&DistributionDoc::from_distribution(d)).expect("distribution serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassDoc {
    Affine {
        weights: Vec<Real>,
        #[serde(default)]
        threshold_range: Option<[Option<Real>; 2]>,
    },
    Subset {
        subset: Vec<usize>,
        #[serde(default)]
        threshold_range: Option<[Option<Real>; 2]>,
    },
}

impl ClassDoc {
    pub fn build(&self) -> Result<ThresholdClass> {
        let (score, range) = match self {
            ClassDoc::Affine { weights, threshold_range } => (ScoreFunction::affine(floats(weights)), threshold_range),
            ClassDoc::Subset { subset, threshold_range } => (ScoreFunction::subset(subset.clone()), threshold_range),
        };
        let range = match range {
            None => ThresholdRange::UNBOUNDED,
            Some([lo, hi]) => ThresholdRange::new(
                lo.map_or(f64::NEG_INFINITY, |r| r.0),
                hi.map_or(f64::INFINITY, |r| r.0),
            )?,
        };
        Ok(ThresholdClass::new(score, range))
    }

    pub fn from_class(c: &ThresholdClass) -> Self {
        let end = |v: f64| v.is_finite().then_some(Real(v));
        let threshold_range = Some([end(c.range.lo), end(c.range.hi)]);
        match &c.score {
            ScoreFunction::Affine { weights } => ClassDoc::Affine { weights: reals(weights), threshold_range },
            ScoreFunction::SubsetPosterior { subset } => ClassDoc::Subset { subset: subset.clone(), threshold_range },
        }
    }
}

#[derive(Clone, Serialize, Deserialize)]
pub struct NamedClassDoc {
    pub id: String,
    pub class: ClassDoc,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyDoc {
    Explicit { classes: Vec<NamedClassDoc> },
    FeatureSubsets { n: usize, s: usize },
}

impl FamilyDoc {
    pub fn build(&self) -> Result<ClassFamily> {
        match self {
            FamilyDoc::Explicit { classes } => ClassFamily::explicit(
                classes.iter().map(|c| Ok((c.id.clone(), c.class.build()?))).collect::<Result<_>>()?,
            ),
            FamilyDoc::FeatureSubsets { n, s } => ClassFamily::feature_subsets(*n, *s),
        }
    }

    pub fn from_family(f: &ClassFamily) -> Self {
        match f {
            ClassFamily::Explicit(v) => FamilyDoc::Explicit {
                classes: v.iter().map(|(id, c)| NamedClassDoc { id: id.clone(), class: ClassDoc::from_class(c) }).collect(),
            },
            ClassFamily::FeatureSubsets { n, s } => FamilyDoc::FeatureSubsets { n: *n, s: *s },
        }
    }
}

#[derive(Clone, Serialize, Deserialize)]
pub struct GroupDoc {
    pub attr: i64,
    pub agent: AgentDoc,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentDoc {
    OptimalBayes { c: Real },
    ClassRestricted { class: ClassDoc, c: Real },
    FamilyMember { family: FamilyDoc, class_id: String, c: Real },
    Surrogate { surrogate: Surrogate, c: Real },
    GroupWise { attribute_coordinate: usize, groups: Vec<GroupDoc> },
}

impl AgentDoc {
    /// Resolves against `dist`, caching optimal rules where needed.
    pub fn build(&self, dist: &PiecewiseDistribution) -> Result<Agent> {
        match self {
            AgentDoc::OptimalBayes { c } => Agent::optimal_bayes(c.0),
            AgentDoc::ClassRestricted { class, c } => Agent::class_restricted(dist, class.build()?, c.0),
            AgentDoc::FamilyMember { family, class_id, c } => Agent::family_member(dist, family.build()?, class_id, c.0),
            AgentDoc::Surrogate { surrogate, c } => Agent::surrogate(*surrogate, c.0),
            AgentDoc::GroupWise { attribute_coordinate, groups } => Agent::group_wise(
                AttributeMap::Coordinate(*attribute_coordinate),
                groups.iter().map(|g| Ok((g.attr, g.agent.build(dist)?))).collect::<Result<_>>()?,
            ),
        }
    }
}

/// Where a decision problem comes from: a named construction or an inline
/// distribution.
#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemDoc {
    Construction {
        construction: String,
        #[serde(default)]
        params: BTreeMap<String, Real>,
    },
    Inline(DistributionDoc),
}

/// A resolved problem; constructions also carry their bundle.
pub struct Problem {
    pub distribution: PiecewiseDistribution,
    pub bundle: Option<ConstructionBundle>,
}

impl ProblemDoc {
    pub fn resolve(&self) -> Result<Problem> {
        match self {
            ProblemDoc::Construction { construction, params } => {
                let params = params.iter().map(|(k, v)| (k.clone(), v.0)).collect();
                let bundle = by_name(construction, &params)?;
                Ok(Problem { distribution: bundle.distribution.clone(), bundle: Some(bundle) })
            }
            ProblemDoc::Inline(doc) => Ok(Problem { distribution: doc.build()?, bundle: None }),
        }
    }
}

/// An agent spelled out, or the `i`-th agent of a construction.
#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentRef {
    Bundled { bundle_agent: usize },
    Doc(AgentDoc),
}

impl AgentRef {
    pub fn resolve(&self, problem: &Problem) -> Result<Agent> {
        match self {
            AgentRef::Bundled { bundle_agent } => problem
                .bundle
                .as_ref()
                .and_then(|b| b.agents.get(*bundle_agent))
                .cloned()
                .ok_or_else(|| IdtError::Invalid(format!("no bundled agent {bundle_agent}"))),
            AgentRef::Doc(doc) => doc.build(&problem.distribution),
        }
    }
}

/// Estimator regime. A missing class or family is taken from the agent or
/// the construction.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegimeDoc {
    Optimal,
    KnownClass {
        #[serde(default)]
        class: Option<ClassDoc>,
    },
    UnknownFamily {
        #[serde(default)]
        family: Option<FamilyDoc>,
    },
}

impl RegimeDoc {
    pub fn resolve(&self, problem: &Problem, agent: Option<&Agent>) -> Result<Regime> {
        match self {
            RegimeDoc::Optimal => Ok(Regime::Optimal),
            RegimeDoc::KnownClass { class: Some(c) } => Ok(Regime::KnownClass(c.build()?)),
            RegimeDoc::KnownClass { class: None } => match agent {
                Some(Agent::ClassRestricted { class, .. }) => Ok(Regime::KnownClass(class.clone())),
                _ => Err(IdtError::Invalid("known_class regime needs a class".into())),
            },
            RegimeDoc::UnknownFamily { family: Some(f) } => Ok(Regime::UnknownFamily(f.build()?)),
            RegimeDoc::UnknownFamily { family: None } => {
                if let Some(f) = problem.bundle.as_ref().and_then(|b| b.family.clone()) {
                    return Ok(Regime::UnknownFamily(f));
                }
                match agent {
                    Some(Agent::FamilyMember { family, .. }) => Ok(Regime::UnknownFamily(family.clone())),
                    _ => Err(IdtError::Invalid("unknown_family regime needs a family".into())),
                }
            }
        }
    }
}

/// JSON form of a trial configuration, as read by `verify-rate`.
#[derive(Clone, Serialize, Deserialize)]
pub struct TrialDoc {
    pub problem: ProblemDoc,
    pub agent: AgentRef,
    pub regime: RegimeDoc,
    pub m: usize,
    pub trials: usize,
    pub eps: Real,
    pub delta: Real,
    #[serde(default)]
    pub base_seed: u64,
    /// Sample sizes for a rate curve; empty means just `m`.
    #[serde(default)]
    pub m_values: Vec<usize>,
}

impl TrialDoc {
    pub fn build(&self) -> Result<TrialConfig> {
        let problem = self.problem.resolve()?;
        let agent = self.agent.resolve(&problem)?;
        let regime = self.regime.resolve(&problem, Some(&agent))?;
        let true_c = agent
            .loss_parameter()
            .ok_or_else(|| IdtError::Invalid("trial agent needs a single loss parameter".into()))?;
        let mut source = serde_json::to_value(self).expect("trial document serializes");
        if let Some(b) = &problem.bundle {
            source["construction_notes"] = serde_json::to_value(&b.notes).expect("notes serialize");
        }
        let config = TrialConfig {
            distribution: problem.distribution,
            agent,
            true_c,
            regime,
            m: self.m,
            trials: self.trials,
            eps: self.eps.0,
            delta: self.delta.0,
            base_seed: self.base_seed,
            source,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_accept_fractions_and_numbers() {
        assert_eq!(parse_real("2/15").unwrap(), 2.0 / 15.0);
        assert_eq!(parse_real(" -0.25 ").unwrap(), -0.25);
        assert!(parse_real("1/0").is_err());
        assert!(parse_real("abc").is_err());
        let v: Vec<Real> = serde_json::from_str(r#"[0.5, "1/4", "3"]"#).unwrap();
        assert_eq!(floats(&v), vec![0.5, 0.25, 3.0]);
    }

    #[test]
    fn distribution_round_trip() {
        let text = r#"{"ambient_dimension": 2, "pieces": [
            {"kind": "rect", "geometry": {"lower": ["-1", "-1"], "upper": ["0", "0"]}, "weight": "1/2",
             "posterior": {"intercept": "2/3", "gradient": ["2/15", "8/15"]}},
            {"kind": "segment", "geometry": {"from": ["0", "0"], "to": ["1", "1"]}, "weight": "1/2",
             "posterior": {"intercept": "0.5", "gradient": ["0", "0"]}}
        ]}"#;
        let d = distribution_from_json(text).unwrap();
        let again = distribution_from_json(&distribution_to_json(&d)).unwrap();
        assert_eq!(d, again);
        assert_eq!(distribution_digest(&d), distribution_digest(&again));
    }

    #[test]
    fn class_range_nulls_mean_unbounded() {
        let c: ClassDoc = serde_json::from_str(r#"{"kind":"affine","weights":[1],"threshold_range":[null,"1/2"]}"#).unwrap();
        let c = c.build().unwrap();
        assert_eq!(c.range.lo, f64::NEG_INFINITY);
        assert_eq!(c.range.hi, 0.5);
    }
}
