//! Monte Carlo trial runner, rate curves and lower-bound demonstrations.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::agents::{generate_log, Agent};
use crate::constructions::ConstructionBundle;
use crate::dist::PiecewiseDistribution;
use crate::error::{IdtError, Result};
use crate::estimators::{estimate_optimal, estimate_prepared, estimate_with_prepared, EstimateResult};
use crate::hypothesis::{enumerate_family, ClassFamily, PreparedClass, ThresholdClass};

/// Which estimator a trial runs.
#[derive(Clone, Debug, PartialEq)]
pub enum Regime {
    Optimal,
    KnownClass(ThresholdClass),
    UnknownFamily(ClassFamily),
}

impl Regime {
    fn label(&self) -> &'static str {
        match self {
            Regime::Optimal => "optimal",
            Regime::KnownClass(_) => "known_class",
            Regime::UnknownFamily(_) => "unknown_family",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrialConfig {
    pub distribution: PiecewiseDistribution,
    pub agent: Agent,
    /// The agent's loss parameter, against which errors are measured.
    pub true_c: f64,
    pub regime: Regime,
    pub m: usize,
    pub trials: usize,
    pub eps: f64,
    pub delta: f64,
    pub base_seed: u64,
    /// Echoed into reports so a run can be reproduced from its output alone.
    pub source: serde_json::Value,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(IdtError::ParameterRange { name, value: v, allowed: "(0, 1)" })
            }
        };
        unit("eps", self.eps)?;
        unit("delta", self.delta)?;
        unit("c", self.true_c)?;
        if self.trials == 0 || self.m == 0 {
            return Err(IdtError::Invalid("m and trials must be at least 1".into()));
        }
        if matches!(self.agent, Agent::GroupWise { .. }) {
            return Err(IdtError::Invalid("group-wise agents belong to the fairness audit, not trial runs".into()));
        }
        Ok(())
    }
}

/// Summary of one trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub c_hat: Option<f64>,
    pub abs_error: Option<f64>,
    pub width: Option<f64>,
    pub selected_class: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub standard_error: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    fn of(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Some(Self {
            mean,
            standard_error: (var / n).sqrt(),
            min: v.iter().cloned().fold(f64::INFINITY, f64::min),
            max: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialReport {
    pub regime: &'static str,
    pub agent: String,
    pub true_c: f64,
    pub m: usize,
    pub trials: usize,
    pub eps: f64,
    pub delta: f64,
    pub base_seed: u64,
    pub outcomes: Vec<TrialOutcome>,
    /// Trials with `|ĉ − c| > ε`; errored trials count as failures.
    pub failures: usize,
    pub failure_frequency: f64,
    /// Binomial standard error of `failure_frequency`.
    pub standard_error: f64,
    /// Trials with `|ĉ − c| ≥ ε` (the event lower bounds talk about).
    pub failures_inclusive: usize,
    pub failure_frequency_inclusive: f64,
    pub abs_error: Option<Stats>,
    pub width: Option<Stats>,
    pub error_categories: BTreeMap<String, usize>,
    pub selected_classes: BTreeMap<String, usize>,
    pub config: serde_json::Value,
    pub code_version: &'static str,
}

fn error_kind(e: &IdtError) -> &'static str {
    match e {
        IdtError::WeightSum { .. } => "weight_sum",
        IdtError::PosteriorRange { .. } => "posterior_range",
        IdtError::Geometry(_) => "geometry",
        IdtError::OffSupport { .. } => "off_support",
        IdtError::UnsupportedScore { .. } => "unsupported_score",
        IdtError::DegenerateCost { .. } => "degenerate_cost",
        IdtError::NonMonotone { .. } => "non_monotone",
        IdtError::FamilyTooLarge { .. } => "family_too_large",
        IdtError::InconsistentLog { .. } => "inconsistent_log",
        IdtError::EmptyLog => "empty_log",
        IdtError::NoConsistentClass => "no_consistent_class",
        IdtError::MissingAttribute { .. } => "missing_attribute",
        IdtError::ParameterRange { .. } => "parameter_range",
        IdtError::Invalid(_) => "invalid",
    }
}

/// Estimator with per-class work done once for all trials.
enum Prepared {
    Optimal,
    Known(Box<PreparedClass>),
    Family(Vec<(String, ThresholdClass)>, Vec<Result<PreparedClass>>),
}

impl Prepared {
    fn new(dist: &PiecewiseDistribution, regime: &Regime) -> Result<Self> {
        Ok(match regime {
            Regime::Optimal => Prepared::Optimal,
            Regime::KnownClass(c) => Prepared::Known(Box::new(PreparedClass::new(dist, c)?)),
            Regime::UnknownFamily(f) => {
                let classes = enumerate_family(f)?;
                let prepared = classes.iter().map(|(_, c)| PreparedClass::new(dist, c)).collect();
                Prepared::Family(classes, prepared)
            }
        })
    }

    fn estimate(&self, dist: &PiecewiseDistribution, log: &crate::agents::DecisionLog) -> Result<EstimateResult> {
        match self {
            Prepared::Optimal => estimate_optimal(dist, log),
            Prepared::Known(p) => estimate_prepared(dist, p, log),
            Prepared::Family(classes, prepared) => estimate_with_prepared(dist, classes, prepared, log),
        }
    }
}

fn run_indexed(config: &TrialConfig, seeds: &[u64]) -> Result<Vec<(TrialOutcome, Option<IdtError>)>> {
    let prepared = Prepared::new(&config.distribution, &config.regime)?;
    let one = |&seed: &u64| {
        let res = generate_log(&config.agent, &config.distribution, config.m, seed)
            .and_then(|log| prepared.estimate(&config.distribution, &log));
        match res {
            Ok(r) => (
                TrialOutcome {
                    seed,
                    c_hat: Some(r.c_hat),
                    abs_error: Some((r.c_hat - config.true_c).abs()),
                    width: Some(r.width()),
                    selected_class: r.selected_class_id,
                    error: None,
                },
                None,
            ),
            Err(e) => (
                TrialOutcome { seed, c_hat: None, abs_error: None, width: None, selected_class: None, error: Some(e.to_string()) },
                Some(e),
            ),
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok(seeds.par_iter().map(one).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(seeds.iter().map(one).collect())
    }
}

/// `T` independent trials with seeds `base_seed + t`.
pub fn run_trials(config: &TrialConfig) -> Result<TrialReport> {
    run_with_seed_offset(config, 0)
}

fn run_with_seed_offset(config: &TrialConfig, offset: u64) -> Result<TrialReport> {
    config.validate()?;
    let seeds: Vec<u64> =
        (0..config.trials as u64).map(|t| config.base_seed.wrapping_add(offset).wrapping_add(t)).collect();
    let results = run_indexed(config, &seeds)?;
    if results.iter().all(|(_, e)| e.is_some()) {
        return Err(results.into_iter().next().and_then(|(_, e)| e).expect("at least one trial"));
    }
    let mut error_categories = BTreeMap::new();
    let mut selected_classes = BTreeMap::new();
    let (mut failures, mut failures_inclusive) = (0, 0);
    let mut errs = Vec::new();
    let mut widths = Vec::new();
    for (o, e) in &results {
        if let Some(e) = e {
            *error_categories.entry(error_kind(e).to_string()).or_insert(0) += 1;
        }
        if let Some(id) = &o.selected_class {
            *selected_classes.entry(id.clone()).or_insert(0) += 1;
        }
        match o.abs_error {
            Some(a) => {
                failures += usize::from(a > config.eps);
                failures_inclusive += usize::from(a >= config.eps);
                errs.push(a);
                widths.push(o.width.unwrap());
            }
            None => {
                failures += 1;
                failures_inclusive += 1;
            }
        }
    }
    let t = config.trials as f64;
    let freq = failures as f64 / t;
    Ok(TrialReport {
        regime: config.regime.label(),
        agent: config.agent.to_string(),
        true_c: config.true_c,
        m: config.m,
        trials: config.trials,
        eps: config.eps,
        delta: config.delta,
        base_seed: config.base_seed.wrapping_add(offset),
        outcomes: results.into_iter().map(|(o, _)| o).collect(),
        failures,
        failure_frequency: freq,
        standard_error: (freq * (1.0 - freq) / t).sqrt(),
        failures_inclusive,
        failure_frequency_inclusive: failures_inclusive as f64 / t,
        abs_error: Stats::of(&errs),
        width: Stats::of(&widths),
        error_categories,
        selected_classes,
        config: config.source.clone(),
        code_version: env!("CARGO_PKG_VERSION"),
    })
}

/// One row of a sample-size curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub m: usize,
    pub failure_frequency: f64,
    pub mean_abs_error: f64,
    pub abs_error_se: f64,
    pub mean_width: f64,
    pub width_se: f64,
}

/// `run_trials` at each sample size; the `i`-th size uses seeds offset by `i << 32`.
pub fn rate_curve(config: &TrialConfig, m_values: &[usize]) -> Result<Vec<RateRow>> {
    if m_values.is_empty() {
        return Err(IdtError::Invalid("rate curve needs at least one sample size".into()));
    }
    if m_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(IdtError::Invalid("sample sizes must be strictly ascending".into()));
    }
    m_values
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let cfg = TrialConfig { m, ..config.clone() };
            let r = run_with_seed_offset(&cfg, (i as u64) << 32)?;
            let nan = Stats { mean: f64::NAN, standard_error: f64::NAN, min: f64::NAN, max: f64::NAN };
            let e = r.abs_error.unwrap_or(nan.clone());
            let w = r.width.unwrap_or(nan);
            Ok(RateRow {
                m,
                failure_frequency: r.failure_frequency,
                mean_abs_error: e.mean,
                abs_error_se: e.standard_error,
                mean_width: w.mean,
                width_se: w.standard_error,
            })
        })
        .collect()
}

pub fn rate_csv(rows: &[RateRow]) -> String {
    let mut s = String::from("m,failure_frequency,mean_abs_error,abs_error_se,mean_width,width_se\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.m, r.failure_frequency, r.mean_abs_error, r.abs_error_se, r.mean_width, r.width_se
        ));
    }
    s
}

/// `P(X ≥ k)` for `X ~ Binomial(n, p)`.
pub fn binomial_upper_tail(k: usize, n: usize, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let b = Binomial::new(p, n as u64).expect("valid binomial parameters");
    b.sf(k as u64 - 1)
}

#[derive(Clone, Debug, Serialize)]
pub struct AgentDemo {
    pub agent: String,
    pub c: f64,
    pub failures_inclusive: usize,
    pub failure_frequency_inclusive: f64,
    /// One-sided test of `failure probability ≤ δ`.
    pub p_value: f64,
    pub report: TrialReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundReport {
    pub construction: String,
    pub notes: BTreeMap<String, f64>,
    pub m: usize,
    pub trials: usize,
    pub eps: f64,
    pub delta: f64,
    pub agents: Vec<AgentDemo>,
    /// Smallest p-value across agents.
    pub min_p_value: f64,
}

/// Runs every bundled agent through the estimator matching its kind and
/// tests whether some agent fails (`|ĉ − c| ≥ ε`) more often than `δ`.
pub fn lower_bound_demo(
    bundle: &ConstructionBundle,
    m: usize,
    trials: usize,
    eps: f64,
    delta: f64,
    base_seed: u64,
) -> Result<LowerBoundReport> {
    let mut agents = Vec::new();
    for (i, agent) in bundle.agents.iter().enumerate() {
        let regime = match (&bundle.family, agent) {
            (Some(f), _) => Regime::UnknownFamily(f.clone()),
            (None, Agent::ClassRestricted { class, .. }) => Regime::KnownClass(class.clone()),
            _ => Regime::Optimal,
        };
        let cfg = TrialConfig {
            distribution: bundle.distribution.clone(),
            agent: agent.clone(),
            true_c: bundle.candidates[i],
            regime,
            m,
            trials,
            eps,
            delta,
            base_seed,
            source: serde_json::json!({ "construction": bundle.name, "agent_index": i }),
        };
        let report = run_trials(&cfg)?;
        agents.push(AgentDemo {
            agent: agent.to_string(),
            c: bundle.candidates[i],
            failures_inclusive: report.failures_inclusive,
            failure_frequency_inclusive: report.failure_frequency_inclusive,
            p_value: binomial_upper_tail(report.failures_inclusive, trials, delta),
            report,
        });
    }
    let min_p_value = agents.iter().map(|a| a.p_value).fold(1.0, f64::min);
    Ok(LowerBoundReport {
        construction: bundle.name.clone(),
        notes: bundle.notes.clone(),
        m,
        trials,
        eps,
        delta,
        agents,
        min_p_value,
    })
}
