#![allow(dead_code)]

use idt::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random 2-D mixture of atoms, segments and rectangles with affine
/// posteriors kept inside [0, 1].
pub fn random_distribution(rng: &mut ChaCha8Rng) -> PiecewiseDistribution {
    let k = rng.gen_range(1..=4);
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let pieces = raw
        .into_iter()
        .map(|w| {
            let w = w / total;
            let lo = [rng.gen_range(-1.0..0.5), rng.gen_range(-1.0..0.5)];
            let hi = [lo[0] + rng.gen_range(0.1..1.0), lo[1] + rng.gen_range(0.1..1.0)];
            let post = random_posterior(rng, lo, hi);
            match rng.gen_range(0..3) {
                0 => Piece::point(vec![lo[0], lo[1]], w, post),
                1 => Piece::segment(vec![lo[0], lo[1]], vec![hi[0], hi[1]], w, post),
                _ => Piece::rect(lo, hi, w, post),
            }
        })
        .collect();
    PiecewiseDistribution::new(2, pieces).unwrap()
}

/// Posterior with values in [0, 1] over the box `[lo, hi]`.
pub fn random_posterior(rng: &mut ChaCha8Rng, lo: [f64; 2], hi: [f64; 2]) -> AffinePosterior {
    let grad = vec![rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)];
    let vals: Vec<f64> =
        [[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]].iter().map(|v| grad[0] * v[0] + grad[1] * v[1]).collect();
    let vmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    AffinePosterior::new(rng.gen_range(-vmin..=(1.0 - vmax)), grad)
}

pub fn random_score(rng: &mut ChaCha8Rng) -> ScoreFunction {
    ScoreFunction::affine(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
}

pub fn random_rule(rng: &mut ChaCha8Rng) -> DecisionRule {
    DecisionRule { score: random_score(rng), threshold: rng.gen_range(-1.5..1.5), strict: rng.gen_bool(0.5) }
}

/// `X ~ Uniform[0, 1]`, `q(x) = x`.
pub fn uniform() -> PiecewiseDistribution {
    PiecewiseDistribution::new(1, vec![Piece::segment(vec![0.0], vec![1.0], 1.0, AffinePosterior::new(0.0, vec![1.0]))])
        .unwrap()
}

/// Golden-section minimizer on `[a, b]`; test oracle for convex 1-D problems.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-12 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}
