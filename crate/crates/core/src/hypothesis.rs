//! Threshold hypothesis classes: optimal rules, induced posteriors, minimum
//! disagreement and MD-smoothness.

use crate::dist::{check_loss_parameter, PiecewiseDistribution};
use crate::error::{IdtError, Result};
use crate::geometry::Side;
use crate::profile::{self, Profile};

/// Bisection tolerance for induced posteriors.
pub const BISECTION_TOL: f64 = 1e-9;
const BISECTION_MAX_ITERS: usize = 60;
/// Largest family `enumerate_family` will expand.
pub const FAMILY_LIMIT: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub enum ScoreFunction {
    /// `w · x`.
    Affine { weights: Vec<f64> },
    /// `P(Y = 1 | X_S = x_S)` against the bound distribution; indices are 1-based.
    SubsetPosterior { subset: Vec<usize> },
}

impl ScoreFunction {
    pub fn affine(weights: Vec<f64>) -> Self {
        Self::Affine { weights }
    }

    pub fn subset(subset: Vec<usize>) -> Self {
        Self::SubsetPosterior { subset }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::Affine { weights } if weights.len() != dim => Err(IdtError::Invalid(format!(
                "affine score has {} weights in dimension {dim}",
                weights.len()
            ))),
            Self::Affine { weights } if weights.iter().any(|w| !w.is_finite()) => {
                Err(IdtError::Invalid("affine score has non-finite weights".into()))
            }
            Self::SubsetPosterior { subset } => {
                let sorted = subset.windows(2).all(|w| w[0] < w[1]);
                if subset.is_empty() || !sorted || subset[0] < 1 || *subset.last().unwrap() > dim {
                    Err(IdtError::Invalid(format!("subset {subset:?} is not a sorted subset of 1..={dim}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, dist: &PiecewiseDistribution, x: &[f64]) -> Result<f64> {
        match self {
            Self::Affine { weights } => Ok(weights.iter().zip(x).map(|(w, v)| w * v).sum()),
            Self::SubsetPosterior { subset } => {
                let xs: Vec<f64> = subset.iter().map(|&j| x[j - 1]).collect();
                dist.conditional_posterior(subset, &xs).map_err(|_| IdtError::OffSupport { point: x.to_vec() })
            }
        }
    }
}

/// Closed threshold interval; either end may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdRange {
    pub lo: f64,
    pub hi: f64,
}

impl ThresholdRange {
    pub const UNBOUNDED: Self = Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(IdtError::Invalid(format!("threshold range [{lo}, {hi}] is empty")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, b: f64) -> bool {
        b >= self.lo && b <= self.hi
    }
}

/// `{1{f(x) ≥ b} : b ∈ range}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdClass {
    pub score: ScoreFunction,
    pub range: ThresholdRange,
}

impl ThresholdClass {
    pub fn new(score: ScoreFunction, range: ThresholdRange) -> Self {
        Self { score, range }
    }

    pub fn unbounded(score: ScoreFunction) -> Self {
        Self { score, range: ThresholdRange::UNBOUNDED }
    }

    pub fn rule(&self, threshold: f64) -> DecisionRule {
        DecisionRule { score: self.score.clone(), threshold, strict: false }
    }
}

/// `h(x) = 1{f(x) ≥ b}`, or `1{f(x) > b}` when `strict`.
///
/// The strict form only arises as an optimum when the score has an atom at
/// `b`; it is the limit of `1{f ≥ b'}` as `b' ↓ b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRule {
    pub score: ScoreFunction,
    pub threshold: f64,
    pub strict: bool,
}

impl DecisionRule {
    pub fn new(score: ScoreFunction, threshold: f64) -> Self {
        Self { score, threshold, strict: false }
    }

    pub fn decide_score(&self, s: f64) -> u8 {
        u8::from(if self.strict { s > self.threshold } else { s >= self.threshold })
    }

    pub fn apply(&self, dist: &PiecewiseDistribution, x: &[f64]) -> Result<u8> {
        Ok(self.decide_score(self.score.eval(dist, x)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClassFamily {
    Explicit(Vec<(String, ThresholdClass)>),
    /// Every `SubsetPosterior` class over subsets of size `1..=s` of `1..=n`.
    FeatureSubsets { n: usize, s: usize },
}

impl ClassFamily {
    pub fn explicit(classes: Vec<(String, ThresholdClass)>) -> Result<Self> {
        if classes.is_empty() {
            return Err(IdtError::Invalid("explicit family is empty".into()));
        }
        let mut ids: Vec<&str> = classes.iter().map(|(id, _)| id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(IdtError::Invalid("explicit family has duplicate identifiers".into()));
        }
        Ok(Self::Explicit(classes))
    }

    pub fn feature_subsets(n: usize, s: usize) -> Result<Self> {
        if s < 1 || s > n {
            return Err(IdtError::Invalid(format!("feature-subset family needs 1 <= s <= n, got n={n}, s={s}")));
        }
        Ok(Self::FeatureSubsets { n, s })
    }

    /// Looks a class up by identifier without expanding the whole family.
    pub fn class(&self, id: &str) -> Option<ThresholdClass> {
        match self {
            Self::Explicit(v) => v.iter().find(|(i, _)| i == id).map(|(_, c)| c.clone()),
            Self::FeatureSubsets { n, s } => {
                let subset = parse_subset_id(id)?;
                let ok = !subset.is_empty()
                    && subset.len() <= *s
                    && subset.windows(2).all(|w| w[0] < w[1])
                    && subset[0] >= 1
                    && *subset.last().unwrap() <= *n;
                ok.then(|| ThresholdClass::unbounded(ScoreFunction::subset(subset)))
            }
        }
    }
}

/// `{1,3}` style identifier for a feature subset.
pub fn subset_id(subset: &[usize]) -> String {
    let inner: Vec<String> = subset.iter().map(|j| j.to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

fn parse_subset_id(id: &str) -> Option<Vec<usize>> {
    let inner = id.trim().strip_prefix('{')?.strip_suffix('}')?;
    inner.split(',').map(|t| t.trim().parse().ok()).collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Lists the family's classes in their canonical order.
pub fn enumerate_family(family: &ClassFamily) -> Result<Vec<(String, ThresholdClass)>> {
    match family {
        ClassFamily::Explicit(v) => Ok(v.clone()),
        ClassFamily::FeatureSubsets { n, s } => {
            let (n, s) = (*n, *s);
            if s < 1 || s > n {
                return Err(IdtError::Invalid(format!("feature-subset family needs 1 <= s <= n, got n={n}, s={s}")));
            }
            let size: f64 = (1..=s).map(|k| binomial(n, k)).sum();
            if size > FAMILY_LIMIT as f64 {
                return Err(IdtError::FamilyTooLarge { size, limit: FAMILY_LIMIT });
            }
            let mut out = Vec::with_capacity(size as usize);
            for k in 1..=s {
                let mut idx: Vec<usize> = (1..=k).collect();
                loop {
                    out.push((subset_id(&idx), ThresholdClass::unbounded(ScoreFunction::subset(idx.clone()))));
                    // next k-combination of 1..=n in lexicographic order
                    let mut i = k;
                    while i > 0 && idx[i - 1] == n - k + i {
                        i -= 1;
                    }
                    if i == 0 {
                        break;
                    }
                    idx[i - 1] += 1;
                    for j in i..k {
                        idx[j] = idx[j - 1] + 1;
                    }
                }
            }
            Ok(out)
        }
    }
}

/// `⌈1 + 2 s log₂(n + 1)⌉`, the VC-dimension bound for feature-subset families.
pub fn feature_subset_vc_bound(n: usize, s: usize) -> Result<usize> {
    if n < 1 || s < 1 || s > n {
        return Err(IdtError::Invalid(format!("need 1 <= s <= n, got n={n}, s={s}")));
    }
    Ok((1.0 + 2.0 * s as f64 * ((n + 1) as f64).log2()).ceil() as usize)
}

/// A class bound to a distribution with its risk profile precomputed, so
/// repeated optimal-rule queries cost one pass over the breakpoints.
#[derive(Clone, Debug)]
pub struct PreparedClass {
    class: ThresholdClass,
    profile: Profile,
}

impl PreparedClass {
    pub fn new(dist: &PiecewiseDistribution, class: &ThresholdClass) -> Result<Self> {
        let cells = profile::posterior_cells(dist, &class.score)?;
        Ok(Self { class: class.clone(), profile: Profile::new(cells) })
    }

    pub fn class(&self) -> &ThresholdClass {
        &self.class
    }

    /// Risk-minimizing rule in the class for loss parameter `c` (`c` may be
    /// 0 or 1 here; bisection probes the closed interval).
    pub fn optimal(&self, c: f64) -> DecisionRule {
        // R_c(b) = c·P(f ≥ b) − P(f ≥ b, Y = 1) + const
        let ch = self.profile.argmin(c, -1.0, self.class.range.lo, self.class.range.hi);
        DecisionRule { score: self.class.score.clone(), threshold: ch.b, strict: ch.strict }
    }

    /// Bisection bracket `(lower, upper)` of the loss parameter at which the
    /// optimal decision for score value `s` flips from 1 to 0.
    pub fn flip_bracket(&self, s: f64) -> (f64, f64) {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..BISECTION_MAX_ITERS {
            if hi - lo <= BISECTION_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.optimal(mid).decide_score(s) == 1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, hi)
    }

    /// Induced posterior at score value `s`, checking monotonicity of the
    /// decisions on a coarse grid of loss parameters first.
    pub fn induced_posterior_at_score(&self, s: f64) -> Result<f64> {
        let mut prev = 1u8;
        for k in 0..=16 {
            let d = self.optimal(k as f64 / 16.0).decide_score(s);
            if d > prev {
                return Err(IdtError::NonMonotone { score: s });
            }
            prev = d;
        }
        let (lo, hi) = self.flip_bracket(s);
        Ok(0.5 * (lo + hi))
    }
}

/// Risk-minimizing rule within `class` for loss parameter `c`.
pub fn optimal_in_class(dist: &PiecewiseDistribution, class: &ThresholdClass, c: f64) -> Result<DecisionRule> {
    check_loss_parameter(c)?;
    Ok(PreparedClass::new(dist, class)?.optimal(c))
}

/// `q_H(x)`: the loss parameter at which the class-optimal decision at `x` flips.
pub fn induced_posterior(dist: &PiecewiseDistribution, class: &ThresholdClass, x: &[f64]) -> Result<f64> {
    let prepared = PreparedClass::new(dist, class)?;
    let s = class.score.eval(dist, x)?;
    prepared.induced_posterior_at_score(s)
}

/// Outcome of a grid monotonicity check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MonotoneReport {
    pub monotone: bool,
    /// No probe point ever changed decision across the grid.
    pub vacuous: bool,
}

/// Grid check that optimal decisions are non-increasing in `c` at every probe point.
pub fn check_monotone(
    dist: &PiecewiseDistribution,
    class: &ThresholdClass,
    c_grid: &[f64],
    x_grid: &[Vec<f64>],
) -> Result<bool> {
    let r = monotone_report(dist, class, c_grid, x_grid)?;
    if r.monotone && r.vacuous {
        log::warn!("monotonicity holds only vacuously: decisions never change over the c grid");
    }
    Ok(r.monotone)
}

pub fn monotone_report(
    dist: &PiecewiseDistribution,
    class: &ThresholdClass,
    c_grid: &[f64],
    x_grid: &[Vec<f64>],
) -> Result<MonotoneReport> {
    if c_grid.is_empty() || x_grid.is_empty() {
        return Err(IdtError::Invalid("monotonicity grids must be non-empty".into()));
    }
    let prepared = PreparedClass::new(dist, class)?;
    let scores: Vec<f64> = x_grid.iter().map(|x| class.score.eval(dist, x)).collect::<Result<_>>()?;
    Ok(prepared.monotone_on(c_grid, &scores))
}

impl PreparedClass {
    pub(crate) fn monotone_on(&self, c_grid: &[f64], scores: &[f64]) -> MonotoneReport {
        let mut cs = c_grid.to_vec();
        cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rules: Vec<DecisionRule> = cs.iter().map(|&c| self.optimal(c)).collect();
        let mut monotone = true;
        let mut changed = false;
        for &s in scores {
            let d: Vec<u8> = rules.iter().map(|r| r.decide_score(s)).collect();
            monotone &= d.windows(2).all(|w| w[1] <= w[0]);
            changed |= d.windows(2).any(|w| w[1] != w[0]);
        }
        MonotoneReport { monotone, vacuous: !changed }
    }
}

/// `P(h_a(X) ≠ h_b(X))`.
pub fn disagreement(dist: &PiecewiseDistribution, a: &DecisionRule, b: &DecisionRule) -> Result<f64> {
    let ya = Side::above(a.threshold, a.strict);
    let na = Side::below(a.threshold, a.strict);
    let yb = Side::above(b.threshold, b.strict);
    let nb = Side::below(b.threshold, b.strict);
    let (m1, _) = profile::region_mass(dist, &[(&a.score, ya), (&b.score, nb)])?;
    let (m2, _) = profile::region_mass(dist, &[(&a.score, na), (&b.score, yb)])?;
    Ok(m1 + m2)
}

/// `(P(h_a = 1 ∧ h_b = 0), P(Y = 1 ∧ h_a = 1 ∧ h_b = 0))`.
pub fn mass_between(dist: &PiecewiseDistribution, a: &DecisionRule, b: &DecisionRule) -> Result<(f64, f64)> {
    profile::region_mass(
        dist,
        &[(&a.score, Side::above(a.threshold, a.strict)), (&b.score, Side::below(b.threshold, b.strict))],
    )
}

/// `MD(h, H̃) = inf_b P(1{f̃(X) ≥ b} ≠ h(X))` over the class's threshold range.
pub fn min_disagreement(dist: &PiecewiseDistribution, rule: &DecisionRule, class: &ThresholdClass) -> Result<f64> {
    let cells = profile::rule_marked_cells(dist, rule, &class.score)?;
    let p = Profile::new(cells);
    let positive = p.total().1;
    // P(f̃ ≥ b) − 2 P(f̃ ≥ b, h = 1) + P(h = 1)
    let ch = p.argmin(1.0, -2.0, class.range.lo, class.range.hi);
    let v = ch.value + positive;
    Ok(if v < 1e-13 { 0.0 } else { v.min(1.0) })
}

/// Estimated MD-smoothness constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Alpha {
    Finite(f64),
    /// Some foreign class agrees exactly with the home rule at `c` but not nearby.
    Unbounded,
}

/// Default grid of 512 loss parameters at cell midpoints of (0, 1).
pub fn default_c_grid() -> Vec<f64> {
    (0..512).map(|k| (k as f64 + 0.5) / 512.0).collect()
}

const MD_ZERO: f64 = 1e-12;

/// Smallest `α` with `MD(h_{c'}, H̃) ≤ (1 + α|c' − c|)·MD(h_c, H̃)` for every
/// grid point `c'` and every class `H̃` other than the home class.
pub fn md_smoothness_alpha(
    dist: &PiecewiseDistribution,
    family: &ClassFamily,
    home_class_id: &str,
    c: f64,
    c_grid: &[f64],
) -> Result<Alpha> {
    check_loss_parameter(c)?;
    let classes = enumerate_family(family)?;
    let home = classes
        .iter()
        .find(|(id, _)| id == home_class_id)
        .map(|(_, cl)| cl.clone())
        .ok_or_else(|| IdtError::Invalid(format!("class {home_class_id} not in family")))?;
    let prepared = PreparedClass::new(dist, &home)?;
    let h_c = prepared.optimal(c);
    let grid_rules: Vec<(f64, DecisionRule)> = c_grid.iter().map(|&cp| (cp, prepared.optimal(cp))).collect();
    let mut alpha: f64 = 0.0;
    for (id, other) in classes.iter().filter(|(id, _)| id != home_class_id) {
        let base = min_disagreement(dist, &h_c, other)?;
        for (cp, rule) in &grid_rules {
            let md = if *rule == h_c { base } else { min_disagreement(dist, rule, other)? };
            if base <= MD_ZERO {
                if md > 1e-10 {
                    log::debug!("class {id}: MD vanishes at c={c} but is {md} at c'={cp}");
                    return Ok(Alpha::Unbounded);
                }
                continue;
            }
            let gap = (cp - c).abs();
            if gap > 0.0 {
                alpha = alpha.max((md / base - 1.0) / gap);
            }
        }
    }
    Ok(Alpha::Finite(alpha))
}
