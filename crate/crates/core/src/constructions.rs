//! Named problem instances: the lower-bound and counterexample constructions
//! plus a few plain problems used by the harness and demos.

use std::collections::BTreeMap;

use crate::agents::{AttributeMap, Agent};
use crate::dist::{AffinePosterior, Piece, PiecewiseDistribution};
use crate::error::{IdtError, Result};
use crate::hypothesis::{
    disagreement, ClassFamily, DecisionRule, ScoreFunction, ThresholdClass, ThresholdRange,
};

/// Number of uniform sub-segments approximating the linearly increasing
/// density in [`nodim_lower`].
pub const NODIM_SUBSEGMENTS: usize = 64;

/// A ready-to-run instance: distribution, agents, their true parameters,
/// an optional class family and the constants used to build it.
#[derive(Clone, Debug)]
pub struct ConstructionBundle {
    pub name: String,
    pub distribution: PiecewiseDistribution,
    pub agents: Vec<Agent>,
    /// `agents[i]`'s loss parameter.
    pub candidates: Vec<f64>,
    pub family: Option<ClassFamily>,
    /// Present for instances whose family is too large to enumerate.
    pub sigma_family: Option<SigmaFamily>,
    pub notes: BTreeMap<String, f64>,
}

fn range_err(name: &'static str, value: f64, allowed: &'static str) -> IdtError {
    IdtError::ParameterRange { name, value, allowed }
}

fn notes(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn bundle(
    name: &str,
    distribution: PiecewiseDistribution,
    agents: Vec<Agent>,
    family: Option<ClassFamily>,
    notes: BTreeMap<String, f64>,
) -> ConstructionBundle {
    let candidates = agents.iter().map(|a| a.loss_parameter().unwrap_or(f64::NAN)).collect();
    ConstructionBundle { name: name.into(), distribution, agents, candidates, family, sigma_family: None, notes }
}

/// Atoms at 0 and 1 (posteriors 0 and 1) around a band `(½ − 2ε, ½ + 2ε)`
/// of density `density` with `q(x) = x`.
fn banded_line(eps: f64, density: f64) -> Result<PiecewiseDistribution> {
    let atom = 0.5 - 2.0 * density * eps;
    PiecewiseDistribution::new(
        1,
        vec![
            Piece::point(vec![0.0], atom, AffinePosterior::constant(0.0, 1)),
            Piece::segment(vec![0.5 - 2.0 * eps], vec![0.5 + 2.0 * eps], 4.0 * eps * density, AffinePosterior::new(0.0, vec![1.0])),
            Piece::point(vec![1.0], atom, AffinePosterior::constant(1.0, 1)),
        ],
    )
}

/// Two optimal agents at `½ ∓ ε` that a sample of size below
/// `ln(1/(2δ)) / (8 p_c ε)` cannot tell apart.
pub fn band_lower(eps: f64, p_c: f64) -> Result<ConstructionBundle> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(range_err("eps", eps, "(0, 1/4)"));
    }
    if !(p_c > 0.0 && p_c <= 1.0 / (8.0 * eps)) {
        return Err(range_err("p_c", p_c, "(0, 1/(8 eps)]"));
    }
    let dist = banded_line(eps, p_c)?;
    let (c1, c2) = (0.5 - eps, 0.5 + eps);
    Ok(bundle(
        "band_lower",
        dist,
        vec![Agent::optimal_bayes(c1)?, Agent::optimal_bayes(c2)?],
        None,
        notes(&[
            ("eps", eps),
            ("p_c", p_c),
            ("c1", c1),
            ("c2", c2),
            ("atom_weight", 0.5 - 2.0 * p_c * eps),
            ("band_weight", 4.0 * eps * p_c),
        ]),
    ))
}

/// Posteriors 0 and 1 only: every interior loss parameter yields the same decisions.
pub fn no_uncertainty_instance() -> Result<ConstructionBundle> {
    let dist = PiecewiseDistribution::new(
        1,
        vec![
            Piece::point(vec![0.0], 0.5, AffinePosterior::constant(0.0, 1)),
            Piece::point(vec![1.0], 0.5, AffinePosterior::constant(1.0, 1)),
        ],
    )?;
    Ok(bundle(
        "no_uncertainty",
        dist,
        vec![Agent::optimal_bayes(0.25)?, Agent::optimal_bayes(0.75)?],
        None,
        notes(&[("c1", 0.25), ("c2", 0.75)]),
    ))
}

/// One rule, near-optimal for two loss parameters `½ ∓ ε`: the first
/// agent is exactly optimal, the second within `4εΔ` of optimal.
pub fn near_optimal_counterexample(delta_slack: f64, eps: f64) -> Result<ConstructionBundle> {
    if !(delta_slack > 0.0 && delta_slack <= 1.0) {
        return Err(range_err("delta_slack", delta_slack, "(0, 1]"));
    }
    if !(eps > 0.0 && eps < 0.25) {
        return Err(range_err("eps", eps, "(0, 1/4)"));
    }
    let dist = banded_line(eps, delta_slack)?;
    let (c1, c2) = (0.5 - eps, 0.5 + eps);
    let x = ScoreFunction::affine(vec![1.0]);
    let shared = DecisionRule::new(x.clone(), c1);
    let excess = dist.risk(c2, &shared)? - dist.risk(c2, &DecisionRule::new(x, c2))?;
    Ok(bundle(
        "near_optimal",
        dist,
        vec![Agent::FixedRule { rule: shared.clone(), c: c1 }, Agent::FixedRule { rule: shared, c: c2 }],
        None,
        notes(&[
            ("delta_slack", delta_slack),
            ("eps", eps),
            ("c1", c1),
            ("c2", c2),
            ("excess_risk_c2", excess),
            ("excess_risk_bound", 4.0 * eps * delta_slack),
        ]),
    ))
}

/// Loss parameter of the second agent in [`nodim_lower`].
pub fn nodim_c2(eps: f64) -> f64 {
    (1.0 + 16.0 * eps) / (2.0 + 16.0 * eps)
}

/// Two suboptimal agents on different linear classes whose rules differ
/// only on a set of mass `20 p_c ε²`.
///
/// The class threshold ranges are `[-¼, ¼]`; both agents' optimal rules sit
/// at threshold 0, which must lie inside the class for the agents to be
/// class-optimal at all.
pub fn nodim_lower(eps: f64, p_c: f64) -> Result<ConstructionBundle> {
    if !(eps > 0.0 && eps <= 0.125) {
        return Err(range_err("eps", eps, "(0, 1/8]"));
    }
    if !(p_c > 0.0 && p_c <= 0.1) {
        return Err(range_err("p_c", p_c, "(0, 1/10]"));
    }
    let mut pieces = vec![
        Piece::point(vec![-1.0, 0.0], 1.0 - 10.0 * p_c, AffinePosterior::constant(0.0, 2)),
        Piece::segment(vec![-1.0, 0.0], vec![1.0, 0.0], 5.0 * p_c, AffinePosterior::new(0.5, vec![0.5, 0.0])),
    ];
    // density 10 p_c x₁ on x₂ = 1, integrated exactly over each sub-segment
    let k_total = NODIM_SUBSEGMENTS as f64;
    for k in 0..NODIM_SUBSEGMENTS {
        let (a, b) = (k as f64 / k_total, (k + 1) as f64 / k_total);
        let w = 5.0 * p_c * (b * b - a * a);
        pieces.push(Piece::segment(vec![a, 1.0], vec![b, 1.0], w, AffinePosterior::constant(1.0, 2)));
    }
    let dist = PiecewiseDistribution::new(2, pieces)?;
    let range = ThresholdRange::new(-0.25, 0.25)?;
    let h1 = ThresholdClass::new(ScoreFunction::affine(vec![1.0, 0.0]), range);
    let h2 = ThresholdClass::new(ScoreFunction::affine(vec![1.0, -2.0 * eps]), range);
    let family = ClassFamily::explicit(vec![("H1".into(), h1.clone()), ("H2".into(), h2.clone())])?;
    let c2 = nodim_c2(eps);
    let a1 = Agent::family_member(&dist, family.clone(), "H1", 0.5)?;
    let a2 = Agent::family_member(&dist, family.clone(), "H2", c2)?;
    let mass = disagreement(&dist, a1.rule().unwrap(), a2.rule().unwrap())?;
    let exact = 20.0 * p_c * eps * eps;
    let b2 = a2.rule().unwrap().threshold;
    Ok(bundle(
        "nodim_lower",
        dist,
        vec![a1, a2],
        Some(family),
        notes(&[
            ("eps", eps),
            ("p_c", p_c),
            ("c1", 0.5),
            ("c2", c2),
            ("subsegments", k_total),
            ("disagreement_mass", mass),
            ("disagreement_mass_exact", exact),
            ("disagreement_rel_error", (mass - exact).abs() / exact),
            ("h2_threshold", b2),
            ("h2_threshold_error", b2.abs()),
        ]),
    ))
}

/// The `2ⁿ` classes of the second suboptimal lower bound, indexed by sign
/// vectors instead of being enumerated.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaFamily {
    pub n: usize,
    pub eps: f64,
}

impl SigmaFamily {
    fn shift(&self) -> f64 {
        8.0 * self.eps * (self.n as f64).sqrt()
    }

    fn check(&self, sigma: &[i8]) -> Result<()> {
        if sigma.len() != self.n || sigma.iter().any(|s| *s != 1 && *s != -1) {
            return Err(IdtError::Invalid(format!("sigma must be a ±1 vector of length {}", self.n)));
        }
        Ok(())
    }

    /// Thresholds of `x_{n+1} − 8ε√n σ·x_{1:n}` over `[¼, ¾]`.
    pub fn class(&self, sigma: &[i8]) -> Result<ThresholdClass> {
        self.check(sigma)?;
        let k = self.shift();
        let mut w: Vec<f64> = sigma.iter().map(|&s| -k * f64::from(s)).collect();
        w.push(1.0);
        Ok(ThresholdClass::new(ScoreFunction::affine(w), ThresholdRange::new(0.25, 0.75)?))
    }

    /// `½ + 8ε√n (1·σ)/n`.
    pub fn loss_parameter(&self, sigma: &[i8]) -> Result<f64> {
        self.check(sigma)?;
        let sum: i64 = sigma.iter().map(|&s| i64::from(s)).sum();
        Ok(0.5 + self.shift() * sum as f64 / self.n as f64)
    }
}

/// `n = d − 2` unit segments rising from the basis vectors, plus an atom at
/// the origin; one agent per sign vector `σ`.
pub fn dim_lower(d: usize, eps: f64, p_c: f64, sigma: &[i8]) -> Result<ConstructionBundle> {
    if d < 6 || d % 4 != 2 {
        return Err(range_err("d", d as f64, "d >= 6 and d = 2 mod 4"));
    }
    let n = d - 2;
    let cap = 1.0 / (64.0 * (n as f64).sqrt());
    if !(eps > 0.0 && eps <= cap) {
        return Err(range_err("eps", eps, "(0, 1/(64 sqrt(d-2))]"));
    }
    if !(p_c > 0.0 && p_c <= 1.0) {
        return Err(range_err("p_c", p_c, "(0, 1]"));
    }
    let fam = SigmaFamily { n, eps };
    fam.check(sigma)?;
    let dim = n + 1;
    let mut grad = vec![0.0; dim];
    grad[n] = 1.0;
    let mut pieces = Vec::with_capacity(n + 1);
    if p_c < 1.0 {
        pieces.push(Piece::point(vec![0.0; dim], 1.0 - p_c, AffinePosterior::constant(0.0, dim)));
    }
    for j in 0..n {
        let mut a = vec![0.0; dim];
        a[j] = 1.0;
        let mut b = a.clone();
        b[n] = 1.0;
        pieces.push(Piece::segment(a, b, p_c / n as f64, AffinePosterior::new(0.0, grad.clone())));
    }
    let dist = PiecewiseDistribution::new(dim, pieces)?;
    let class = fam.class(sigma)?;
    let c = fam.loss_parameter(sigma)?;
    let agent = Agent::class_restricted(&dist, class, c)?;
    let sum: i64 = sigma.iter().map(|&s| i64::from(s)).sum();
    let b = agent.rule().unwrap().threshold;
    let mut out = bundle(
        "dim_lower",
        dist,
        vec![agent],
        None,
        notes(&[
            ("d", d as f64),
            ("n", n as f64),
            ("eps", eps),
            ("p_c", p_c),
            ("sigma_sum", sum as f64),
            ("c_sigma", c),
            ("band_halfwidth", fam.shift()),
            ("rule_threshold", b),
        ]),
    );
    out.sigma_family = Some(fam);
    Ok(out)
}

/// Two square patches where thresholds on `x₁` at `c = 2/5` and thresholds
/// on `x₂` at `c = 3/5` produce the same decisions.
pub fn no_md_smooth_instance(eps: f64) -> Result<ConstructionBundle> {
    if !(eps > 0.0 && eps < 0.1) {
        return Err(range_err("eps", eps, "(0, 1/10)"));
    }
    let dist = PiecewiseDistribution::new(
        2,
        vec![
            Piece::rect([-1.0, -1.0], [0.0, 0.0], 0.5, AffinePosterior::new(2.0 / 3.0, vec![2.0 / 15.0, 8.0 / 15.0])),
            Piece::rect([0.0, 0.0], [1.0, 1.0], 0.5, AffinePosterior::new(1.0 / 3.0, vec![8.0 / 15.0, 2.0 / 15.0])),
        ],
    )?;
    let range = ThresholdRange::new(-1.0, 1.0)?;
    let family = ClassFamily::explicit(vec![
        ("H1".into(), ThresholdClass::new(ScoreFunction::affine(vec![1.0, 0.0]), range)),
        ("H2".into(), ThresholdClass::new(ScoreFunction::affine(vec![0.0, 1.0]), range)),
    ])?;
    let a1 = Agent::family_member(&dist, family.clone(), "H1", 0.4)?;
    let a2 = Agent::family_member(&dist, family.clone(), "H2", 0.6)?;
    Ok(bundle(
        "no_md_smooth",
        dist,
        vec![a1, a2],
        Some(family),
        notes(&[("eps", eps), ("c1", 0.4), ("c2", 0.6)]),
    ))
}

/// `X ~ Uniform[0, 1]` with `q(x) = x`, so `q(X)` is uniform and `p_c = 1`.
pub fn uniform_instance(c: f64) -> Result<ConstructionBundle> {
    let dist = PiecewiseDistribution::new(
        1,
        vec![Piece::segment(vec![0.0], vec![1.0], 1.0, AffinePosterior::new(0.0, vec![1.0]))],
    )?;
    Ok(bundle("uniform", dist, vec![Agent::optimal_bayes(c)?], None, notes(&[("c", c), ("p_c", 1.0)])))
}

/// Two groups (read from coordinate 2) sharing a uniform posterior on
/// coordinate 1, decided with loss parameters `c_a` and `c_b`.
pub fn two_group_instance(c_a: f64, c_b: f64) -> Result<ConstructionBundle> {
    let q = AffinePosterior::new(0.0, vec![1.0, 0.0]);
    let dist = PiecewiseDistribution::new(
        2,
        vec![
            Piece::segment(vec![0.0, 0.0], vec![1.0, 0.0], 0.5, q.clone()),
            Piece::segment(vec![0.0, 1.0], vec![1.0, 1.0], 0.5, q),
        ],
    )?;
    let agent = Agent::group_wise(
        AttributeMap::Coordinate(2),
        vec![(0, Agent::optimal_bayes(c_a)?), (1, Agent::optimal_bayes(c_b)?)],
    )?;
    let mut b = bundle("two_groups", dist, vec![agent], None, notes(&[("c_a", c_a), ("c_b", c_b)]));
    b.candidates = vec![c_a, c_b];
    Ok(b)
}

/// Nine vertical unit segments in ℝ³ at `x₁, x₃ ∈ {0, ½, 1}` with
/// `q = 0.1 + 0.8 x₂ + 0.05 (x₁ − ½)`. Coordinate 2 carries almost all the
/// signal; the agent thresholds `P(Y=1 | X₂)` at `c`.
pub fn subset_grid_instance(c: f64) -> Result<ConstructionBundle> {
    let q = AffinePosterior::new(0.1 - 0.025, vec![0.05, 0.8, 0.0]);
    let mut pieces = Vec::with_capacity(9);
    for x1 in [0.0, 0.5, 1.0] {
        for x3 in [0.0, 0.5, 1.0] {
            pieces.push(Piece::segment(vec![x1, 0.0, x3], vec![x1, 1.0, x3], 1.0 / 9.0, q.clone()));
        }
    }
    let dist = PiecewiseDistribution::new(3, pieces)?;
    let family = ClassFamily::feature_subsets(3, 2)?;
    let agent = Agent::family_member(&dist, family.clone(), "{2}", c)?;
    Ok(bundle("subset_grid", dist, vec![agent], Some(family), notes(&[("c", c)])))
}

/// Builds a construction by CLI name; missing parameters take the values
/// used in the documentation examples.
pub fn by_name(name: &str, params: &BTreeMap<String, f64>) -> Result<ConstructionBundle> {
    let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
    match name {
        "band_lower" => band_lower(get("eps", 0.05), get("p_c", 1.0)),
        "no_uncertainty" => no_uncertainty_instance(),
        "near_optimal" => near_optimal_counterexample(get("delta_slack", 1.0), get("eps", 0.05)),
        "nodim_lower" => nodim_lower(get("eps", 1.0 / 16.0), get("p_c", 0.1)),
        "dim_lower" => {
            let d = get("d", 6.0);
            if d.fract() != 0.0 || d < 0.0 {
                return Err(range_err("d", d, "d >= 6 and d = 2 mod 4"));
            }
            let n = (d as usize).saturating_sub(2);
            let sigma: Vec<i8> = (0..n)
                .map(|j| if get(&format!("sigma{}", j + 1), 1.0) < 0.0 { -1 } else { 1 })
                .collect();
            dim_lower(d as usize, get("eps", 1.0 / 128.0), get("p_c", 1.0), &sigma)
        }
        "no_md_smooth" => no_md_smooth_instance(get("eps", 0.05)),
        "uniform" => uniform_instance(get("c", 0.3)),
        "two_groups" => two_group_instance(get("c_a", 0.4), get("c_b", 0.6)),
        "subset_grid" => subset_grid_instance(get("c", 0.505)),
        other => Err(IdtError::Invalid(format!("unknown construction {other}"))),
    }
}

/// Names accepted by [`by_name`].
pub const NAMES: &[&str] = &[
    "band_lower",
    "no_uncertainty",
    "near_optimal",
    "nodim_lower",
    "dim_lower",
    "no_md_smooth",
    "uniform",
    "two_groups",
    "subset_grid",
];
