//! Loss-parameter estimation from decision logs, and the group-calibration audit.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::agents::{DecisionLog, SampleRecord};
use crate::dist::PiecewiseDistribution;
use crate::error::{IdtError, Result};
use crate::hypothesis::{enumerate_family, ClassFamily, PreparedClass, ThresholdClass};

/// Consistent interval of one class in an unknown-family search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassInterval {
    pub class_id: String,
    pub interval: (f64, f64),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub m: usize,
    /// Records with `ŷ = 0` and `ŷ = 1`.
    pub negatives: usize,
    pub positives: usize,
    /// Every record satisfies `q ≥ ĉ ⇔ ŷ = 1` at the returned `ĉ`.
    pub consistency_verified: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub consistent_classes: Vec<ClassInterval>,
    /// Classes rejected during a family search, with the reason.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rejected_classes: Vec<(String, String)>,
}

/// Half-open interval `(lo, hi]` of consistent loss parameters and its midpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateResult {
    pub interval: (f64, f64),
    pub c_hat: f64,
    #[serde(rename = "selected_class")]
    pub selected_class_id: Option<String>,
    pub diagnostics: Diagnostics,
}

impl EstimateResult {
    pub fn width(&self) -> f64 {
        self.interval.1 - self.interval.0
    }

    pub fn contains(&self, c: f64) -> bool {
        c > self.interval.0 && c <= self.interval.1
    }
}

fn counts(records: &[SampleRecord]) -> (usize, usize) {
    let pos = records.iter().filter(|r| r.yhat == 1).count();
    (records.len() - pos, pos)
}

/// Consistent interval when the agent is Bayes optimal.
pub fn estimate_optimal(dist: &PiecewiseDistribution, log: &DecisionLog) -> Result<EstimateResult> {
    if log.is_empty() {
        return Err(IdtError::EmptyLog);
    }
    let qs: Vec<f64> = log.records.iter().map(|r| dist.posterior(&r.x)).collect::<Result<_>>()?;
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 1.0;
    for (r, &q) in log.records.iter().zip(&qs) {
        if r.yhat == 1 {
            hi = hi.min(q);
        } else {
            lo = lo.max(q);
        }
    }
    if lo >= hi {
        return Err(IdtError::InconsistentLog {
            reason: format!("a declined record has posterior {lo} >= accepted posterior {hi}"),
        });
    }
    let c_hat = 0.5 * (lo + hi);
    let verified = log.records.iter().zip(&qs).all(|(r, &q)| (q >= c_hat) == (r.yhat == 1));
    let (negatives, positives) = counts(&log.records);
    Ok(EstimateResult {
        interval: (lo, hi),
        c_hat,
        selected_class_id: None,
        diagnostics: Diagnostics {
            m: log.len(),
            negatives,
            positives,
            consistency_verified: verified,
            ..Default::default()
        },
    })
}

/// Consistent interval when the agent is optimal within a known class.
pub fn estimate_known_class(
    dist: &PiecewiseDistribution,
    class: &ThresholdClass,
    log: &DecisionLog,
) -> Result<EstimateResult> {
    if log.is_empty() {
        return Err(IdtError::EmptyLog);
    }
    let prepared = PreparedClass::new(dist, class)?;
    estimate_prepared(dist, &prepared, log)
}

/// Default loss-parameter grid for the pre-estimation monotonicity check.
fn check_grid() -> Vec<f64> {
    (0..=16).map(|k| k as f64 / 16.0).collect()
}

pub(crate) fn estimate_prepared(dist: &PiecewiseDistribution, prepared: &PreparedClass, log: &DecisionLog) -> Result<EstimateResult> {
    let score = &prepared.class().score;
    let scores: Vec<f64> = log.records.iter().map(|r| score.eval(dist, &r.x)).collect::<Result<_>>()?;

    let mut probe: Vec<f64> = scores.clone();
    probe.sort_unstable_by(|a, b| a.total_cmp(b));
    let step = (probe.len() / 64).max(1);
    let probe: Vec<f64> = probe.into_iter().step_by(step).collect();
    if !prepared.monotone_on(&check_grid(), &probe).monotone {
        return Err(IdtError::NonMonotone { score: f64::NAN });
    }

    // q_H is non-decreasing in the score, so only the extreme records matter.
    let mut max_neg = f64::NEG_INFINITY;
    let mut min_pos = f64::INFINITY;
    for (r, &s) in log.records.iter().zip(&scores) {
        if r.yhat == 1 {
            min_pos = min_pos.min(s);
        } else {
            max_neg = max_neg.max(s);
        }
    }
    // Outer bisection brackets so the true parameter is never excluded.
    let lo = if max_neg.is_finite() { prepared.flip_bracket(max_neg).0 } else { 0.0 };
    let hi = if min_pos.is_finite() { prepared.flip_bracket(min_pos).1 } else { 1.0 };
    if max_neg >= min_pos || lo >= hi {
        return Err(IdtError::InconsistentLog {
            reason: format!("declined score {max_neg} is not below accepted score {min_pos} under the class"),
        });
    }
    let c_hat = 0.5 * (lo + hi);
    let rule = prepared.optimal(c_hat);
    // Catches logs that only look consistent because a saturated induced
    // posterior squeezed both extremes into one bisection bracket.
    let verified = log.records.iter().zip(&scores).all(|(r, &s)| rule.decide_score(s) == r.yhat);
    if !verified {
        return Err(IdtError::InconsistentLog {
            reason: format!("no loss parameter reproduces every decision (best candidate {c_hat})"),
        });
    }
    let (negatives, positives) = counts(&log.records);
    Ok(EstimateResult {
        interval: (lo, hi),
        c_hat,
        selected_class_id: None,
        diagnostics: Diagnostics {
            m: log.len(),
            negatives,
            positives,
            consistency_verified: verified,
            ..Default::default()
        },
    })
}

/// Tries every class of the family in canonical order and returns the first
/// (least complex) one that explains the log.
pub fn estimate_unknown_family(
    dist: &PiecewiseDistribution,
    family: &ClassFamily,
    log: &DecisionLog,
) -> Result<EstimateResult> {
    let classes = enumerate_family(family)?;
    let prepared: Vec<Result<PreparedClass>> = classes.iter().map(|(_, c)| PreparedClass::new(dist, c)).collect();
    estimate_with_prepared(dist, &classes, &prepared, log)
}

/// Unknown-family estimation with class profiles built once by the caller.
pub(crate) fn estimate_with_prepared(
    dist: &PiecewiseDistribution,
    classes: &[(String, ThresholdClass)],
    prepared: &[Result<PreparedClass>],
    log: &DecisionLog,
) -> Result<EstimateResult> {
    if log.is_empty() {
        return Err(IdtError::EmptyLog);
    }
    let mut selected: Option<EstimateResult> = None;
    let mut consistent = Vec::new();
    let mut rejected = Vec::new();
    for ((id, _), p) in classes.iter().zip(prepared) {
        let outcome = match p {
            Ok(p) => estimate_prepared(dist, p, log),
            Err(e) => Err(e.clone()),
        };
        match outcome {
            Ok(mut r) => {
                consistent.push(ClassInterval { class_id: id.clone(), interval: r.interval });
                if selected.is_none() {
                    r.selected_class_id = Some(id.clone());
                    selected = Some(r);
                }
            }
            Err(e) => rejected.push((id.clone(), e.to_string())),
        }
    }
    let mut result = selected.ok_or(IdtError::NoConsistentClass)?;
    result.diagnostics.consistent_classes = consistent;
    result.diagnostics.rejected_classes = rejected;
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Calibrated,
    NotCalibrated,
    Inconclusive,
}

/// A pair of groups with disjoint intervals and the posterior mass between them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub group_low: i64,
    pub group_high: i64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FairnessReport {
    pub per_group: BTreeMap<i64, EstimateResult>,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// `r(x) = q(x) + ŷ` per record, in log order.
    pub sufficiency_scores: Vec<f64>,
}

/// Group-calibration audit: per-group optimal-regime estimation, then an
/// interval-overlap verdict. Disjoint intervals count as evidence only when
/// the posterior puts more than `eps` mass strictly between them.
pub fn audit_fairness(dist: &PiecewiseDistribution, log: &DecisionLog, eps: f64) -> Result<FairnessReport> {
    if !(eps >= 0.0) {
        return Err(IdtError::ParameterRange { name: "eps", value: eps, allowed: "[0, inf)" });
    }
    if log.is_empty() {
        return Err(IdtError::EmptyLog);
    }
    let mut groups: BTreeMap<i64, Vec<SampleRecord>> = BTreeMap::new();
    for (i, r) in log.records.iter().enumerate() {
        let a = r.attr.ok_or(IdtError::MissingAttribute { record: i })?;
        groups.entry(a).or_default().push(r.clone());
    }
    if groups.len() < 2 {
        // The audit compares groups; a group absent from the log has an empty log.
        return Err(IdtError::EmptyLog);
    }
    let mut per_group = BTreeMap::new();
    for (a, recs) in groups {
        per_group.insert(a, estimate_optimal(dist, &DecisionLog::from_records(recs))?);
    }
    let keys: Vec<i64> = per_group.keys().copied().collect();
    let mut all_overlap = true;
    let mut witness: Option<Witness> = None;
    for (i, &a) in keys.iter().enumerate() {
        for &b in &keys[i + 1..] {
            let (ra, rb) = (&per_group[&a], &per_group[&b]);
            if ra.interval.0.max(rb.interval.0) < ra.interval.1.min(rb.interval.1) {
                continue;
            }
            all_overlap = false;
            let (low, high) = if ra.interval.1 <= rb.interval.0 { (a, b) } else { (b, a) };
            let mass = dist.posterior_mass_between(per_group[&low].interval.1, per_group[&high].interval.0);
            if mass > eps && witness.as_ref().is_none_or(|w| mass > w.mass) {
                witness = Some(Witness { group_low: low, group_high: high, mass });
            }
        }
    }
    let verdict = match (&witness, all_overlap) {
        (_, true) => Verdict::Calibrated,
        (Some(_), false) => Verdict::NotCalibrated,
        (None, false) => Verdict::Inconclusive,
    };
    let sufficiency_scores = log
        .records
        .iter()
        .map(|r| dist.posterior(&r.x).map(|q| q + f64::from(r.yhat)))
        .collect::<Result<_>>()?;
    Ok(FairnessReport { per_group, verdict, witness, sufficiency_scores })
}
