//! Browser bindings for the demo page in `www/`. Every export returns a JSON
//! string; the page parses it and draws on a canvas.

use idt::constructions::{no_md_smooth_instance, uniform_instance};
use idt::harness::{rate_curve, Regime, TrialConfig};
use idt::hypothesis::PreparedClass;
use idt::{estimate_optimal, generate_log};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

type Out = Result<String, String>;

fn text<T: Serialize>(v: &T) -> Out {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Point {
    x: f64,
    yhat: u8,
}

/// Samples `m` decisions from a Bayes-optimal agent on the uniform problem
/// and returns the decisions with the consistent interval.
pub fn uniform_estimate(c: f64, m: usize, seed: u64) -> Out {
    let b = uniform_instance(c).map_err(|e| e.to_string())?;
    let log = generate_log(&b.agents[0], &b.distribution, m, seed).map_err(|e| e.to_string())?;
    let r = estimate_optimal(&b.distribution, &log).map_err(|e| e.to_string())?;
    let points: Vec<Point> = log.records.iter().map(|r| Point { x: r.x[0], yhat: r.yhat }).collect();
    text(&json!({ "points": points, "interval": r.interval, "c_hat": r.c_hat, "c": c }))
}

/// Failure frequency, mean error and mean interval width against `m` on
/// the uniform problem.
pub fn uniform_rate(c: f64, eps: f64, delta: f64, trials: usize, m_values: &[usize], seed: u64) -> Out {
    let b = uniform_instance(c).map_err(|e| e.to_string())?;
    let cfg = TrialConfig {
        distribution: b.distribution,
        agent: b.agents[0].clone(),
        true_c: c,
        regime: Regime::Optimal,
        m: m_values.first().copied().unwrap_or(1),
        trials,
        eps,
        delta,
        base_seed: seed,
        source: serde_json::Value::Null,
    };
    let rows = rate_curve(&cfg, m_values).map_err(|e| e.to_string())?;
    let bound = (2.0 / delta).ln() / eps;
    text(&json!({ "rows": rows, "bound_m": bound }))
}

/// The two-square instance where thresholds on either coordinate give the
/// same decisions. For loss parameter `c` returns each class's optimal
/// threshold, and the induced posteriors of both classes at `(x1, x2)`.
pub fn twin_squares(c: f64, x1: f64, x2: f64) -> Out {
    let b = no_md_smooth_instance(0.05).map_err(|e| e.to_string())?;
    let dist = &b.distribution;
    let classes = idt::enumerate_family(b.family.as_ref().expect("instance has a family")).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for (id, class) in &classes {
        let p = PreparedClass::new(dist, class).map_err(|e| e.to_string())?;
        let rule = p.optimal(c);
        let x = [x1, x2];
        let induced = match class.score.eval(dist, &x) {
            Ok(s) => p.induced_posterior_at_score(s).ok(),
            Err(_) => None,
        };
        out.push(json!({ "class": id, "threshold": rule.threshold, "induced": induced }));
    }
    let q = dist.posterior(&[x1, x2]).ok();
    text(&json!({ "classes": out, "posterior": q }))
}

fn js(r: Out) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = uniformEstimate)]
pub fn uniform_estimate_js(c: f64, m: usize, seed: u32) -> Result<String, JsError> {
    js(uniform_estimate(c, m, u64::from(seed)))
}

#[wasm_bindgen(js_name = uniformRate)]
pub fn uniform_rate_js(c: f64, eps: f64, delta: f64, trials: usize, m_values: Vec<u32>, seed: u32) -> Result<String, JsError> {
    let m: Vec<usize> = m_values.into_iter().map(|v| v as usize).collect();
    js(uniform_rate(c, eps, delta, trials, &m, u64::from(seed)))
}

#[wasm_bindgen(js_name = twinSquares)]
pub fn twin_squares_js(c: f64, x1: f64, x2: f64) -> Result<String, JsError> {
    js(twin_squares(c, x1, x2))
}
