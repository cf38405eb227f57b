//! Cell decompositions and exact threshold optimization.
//!
//! A distribution is cut into cells on which every requested score is
//! affine. The probability that the score clears a threshold `b` (and the
//! posterior-weighted version of the same) is then a piecewise cubic in `b`
//! whose breakpoints are the score values at cell vertices. Minimizing any
//! linear combination of the two functions only needs the breakpoints, their
//! right-limits, and the stationary points of each cubic piece.

use crate::dist::{Piece, PieceKind, PiecewiseDistribution, GEOMETRIC_TOL};
use crate::error::{IdtError, Result};
use crate::geometry::{dot, norm, AffineFn, MassCell, Shape, Side};
use crate::hypothesis::{DecisionRule, ScoreFunction};

/// Interior probe fractions for affinity fits; chosen away from simple
/// rationals so they never land on a symmetric construction's kink.
const PROBES: [f64; 3] = [0.309_016_994_374_947_4, 0.577_215_664_901_532_9, 0.809_016_994_374_947_5];
const FIT_TOL: f64 = 1e-9;

/// A cell with every requested score fitted as an affine function.
#[derive(Clone, Debug)]
pub(crate) struct MultiCell {
    pub shape: Shape,
    pub mass: f64,
    pub posterior: AffineFn,
    pub scores: Vec<AffineFn>,
}

/// Cuts every positive-weight piece so that each score is affine per cell.
pub(crate) fn decompose(dist: &PiecewiseDistribution, scores: &[&ScoreFunction]) -> Result<Vec<MultiCell>> {
    let dim = dist.ambient_dimension();
    for s in scores {
        s.validate(dim)?;
    }
    let mut out = Vec::new();
    let live: Vec<&Piece> = dist.pieces().iter().filter(|p| p.weight > 0.0).collect();
    for (idx, piece) in dist.pieces().iter().enumerate() {
        if piece.weight <= 0.0 {
            continue;
        }
        let posterior = piece.posterior.as_fn();
        let subsets: Vec<&[usize]> = scores
            .iter()
            .filter_map(|s| match s {
                ScoreFunction::SubsetPosterior { subset } => Some(subset.as_slice()),
                _ => None,
            })
            .collect();
        let shapes = split_piece(piece, &subsets, &live);
        let total_measure = piece.shape().measure();
        for shape in shapes {
            let mass = match piece.kind {
                PieceKind::PointMass { .. } => piece.weight,
                _ => piece.weight * shape.measure() / total_measure,
            };
            if mass <= 0.0 {
                continue;
            }
            let mut fitted = Vec::with_capacity(scores.len());
            for s in scores {
                fitted.push(fit_score(dist, s, &shape, idx)?);
            }
            out.push(MultiCell { shape, mass, posterior: posterior.clone(), scores: fitted });
        }
    }
    Ok(out)
}

/// Cells with `mark = posterior` for a single score.
pub(crate) fn posterior_cells(dist: &PiecewiseDistribution, score: &ScoreFunction) -> Result<Vec<MassCell>> {
    Ok(decompose(dist, &[score])?
        .into_iter()
        .map(|c| MassCell { shape: c.shape, mass: c.mass, mark: c.posterior, score: c.scores[0].clone() })
        .collect())
}

/// `(mass, posterior-weighted mass)` of the region where every constraint holds.
pub(crate) fn region_mass(dist: &PiecewiseDistribution, constraints: &[(&ScoreFunction, Side)]) -> Result<(f64, f64)> {
    let scores: Vec<&ScoreFunction> = constraints.iter().map(|(s, _)| *s).collect();
    let cells = decompose(dist, &scores)?;
    let (mut m, mut q) = (0.0, 0.0);
    'cells: for c in cells {
        let mut shape = c.shape.clone();
        for (i, (_, side)) in constraints.iter().enumerate() {
            match shape.clip(&c.scores[i], *side) {
                Some(s) => shape = s,
                None => continue 'cells,
            }
        }
        let frac = match &c.shape {
            Shape::Point(_) => 1.0,
            _ => shape.measure() / c.shape.measure(),
        };
        m += c.mass * frac;
        q += c.mass * frac * c.posterior.eval(&shape.centroid());
    }
    Ok((m, q))
}

/// Cells for the disagreement objective against `rule`: the score is the
/// candidate class's score and the mark is the indicator of `rule(x) = 1`.
pub(crate) fn rule_marked_cells(
    dist: &PiecewiseDistribution,
    rule: &DecisionRule,
    class_score: &ScoreFunction,
) -> Result<Vec<MassCell>> {
    let cells = decompose(dist, &[&rule.score, class_score])?;
    let dim = dist.ambient_dimension();
    let mut out = Vec::with_capacity(cells.len() * 2);
    for c in cells {
        let yes = Side::above(rule.threshold, rule.strict);
        let no = Side::below(rule.threshold, rule.strict);
        for (side, mark) in [(yes, 1.0), (no, 0.0)] {
            if let Some(sub) = c.shape.clip(&c.scores[0], side) {
                let mass = match &c.shape {
                    Shape::Point(_) => c.mass,
                    _ => c.mass * sub.measure() / c.shape.measure(),
                };
                if mass > 0.0 {
                    out.push(MassCell {
                        shape: sub,
                        mass,
                        mark: AffineFn::constant(mark, dim),
                        score: c.scores[1].clone(),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn split_piece(piece: &Piece, subsets: &[&[usize]], live: &[&Piece]) -> Vec<Shape> {
    match &piece.kind {
        PieceKind::PointMass { location } => vec![Shape::Point(location.clone())],
        PieceKind::Segment { base, direction, length } => {
            let mut cuts = vec![0.0, *length];
            for s in subsets {
                let b: Vec<f64> = s.iter().map(|&j| base[j - 1]).collect();
                let d: Vec<f64> = s.iter().map(|&j| direction[j - 1]).collect();
                let dn2 = dot(&d, &d);
                if dn2.sqrt() <= 1e-12 {
                    continue;
                }
                for other in live {
                    for v in other.extreme_points() {
                        let vs: Vec<f64> = s.iter().map(|&j| v[j - 1]).collect();
                        let rel: Vec<f64> = vs.iter().zip(&b).map(|(a, b)| a - b).collect();
                        let t = dot(&rel, &d) / dn2;
                        let off: Vec<f64> = rel.iter().zip(&d).map(|(r, d)| r - t * d).collect();
                        if norm(&off) <= GEOMETRIC_TOL && t > GEOMETRIC_TOL && t < length - GEOMETRIC_TOL {
                            cuts.push(t);
                        }
                    }
                }
            }
            let cuts = sorted_unique(cuts);
            let at = |t: f64| -> Vec<f64> { base.iter().zip(direction).map(|(b, d)| b + t * d).collect() };
            cuts.windows(2).map(|w| Shape::Segment(at(w[0]), at(w[1]))).collect()
        }
        PieceKind::Rect { lower, upper } => {
            let mut xs = vec![lower[0], upper[0]];
            let mut ys = vec![lower[1], upper[1]];
            for s in subsets {
                for other in live {
                    for v in other.extreme_points() {
                        for &j in s.iter() {
                            let (axis, cuts) = if j == 1 { (0, &mut xs) } else { (1, &mut ys) };
                            if v[axis] > lower[axis] + GEOMETRIC_TOL && v[axis] < upper[axis] - GEOMETRIC_TOL {
                                cuts.push(v[axis]);
                            }
                        }
                    }
                }
            }
            let xs = sorted_unique(xs);
            let ys = sorted_unique(ys);
            let mut out = Vec::new();
            for wx in xs.windows(2) {
                for wy in ys.windows(2) {
                    out.push(Shape::Polygon(crate::geometry::rect_polygon([wx[0], wy[0]], [wx[1], wy[1]])));
                }
            }
            out
        }
    }
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() <= GEOMETRIC_TOL);
    v
}

fn fit_score(dist: &PiecewiseDistribution, score: &ScoreFunction, shape: &Shape, piece: usize) -> Result<AffineFn> {
    let dim = dist.ambient_dimension();
    let subset = match score {
        ScoreFunction::Affine { weights } => return Ok(AffineFn::new(0.0, weights.clone())),
        ScoreFunction::SubsetPosterior { subset } => subset,
    };
    let g = |x: &[f64]| -> Result<f64> {
        let xs: Vec<f64> = subset.iter().map(|&j| x[j - 1]).collect();
        dist.conditional_posterior(subset, &xs).map_err(|_| IdtError::UnsupportedScore { piece })
    };
    let bad = || IdtError::UnsupportedScore { piece };
    match shape {
        Shape::Point(p) => Ok(AffineFn::constant(g(p)?, dim)),
        Shape::Segment(a, b) => {
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
            let ds: Vec<f64> = subset.iter().map(|&j| d[j - 1]).collect();
            let at = |t: f64| -> Vec<f64> { a.iter().zip(&d).map(|(x, dx)| x + t * dx).collect() };
            if norm(&ds) <= 1e-12 * norm(&d).max(1.0) {
                return Ok(AffineFn::constant(g(&at(0.5))?, dim));
            }
            let v: Vec<f64> = PROBES.iter().map(|&t| g(&at(t))).collect::<Result<_>>()?;
            let slope = (v[2] - v[0]) / (PROBES[2] - PROBES[0]);
            let mid = v[0] + slope * (PROBES[1] - PROBES[0]);
            if (mid - v[1]).abs() > FIT_TOL * (1.0 + v[1].abs()) {
                return Err(bad());
            }
            // s(x) = v0 + slope * (τ(x) - p0), τ(x) = (x - a)·d / |d|²
            let dd = dot(&d, &d);
            let (slope, v0) = if slope.abs() <= 1e-12 { (0.0, v.iter().sum::<f64>() / 3.0) } else { (slope, v[0]) };
            let grad: Vec<f64> = d.iter().map(|x| slope * x / dd).collect();
            let c0 = v0 - slope * PROBES[0] - dot(&grad, a);
            Ok(AffineFn::new(c0, grad))
        }
        Shape::Polygon(ps) => {
            // Cells from `split_piece` are axis-aligned rectangles.
            let lo = [ps[0][0], ps[0][1]];
            let hi = [ps[2][0], ps[2][1]];
            let at = |u: f64, v: f64| -> Vec<f64> { vec![lo[0] + u * (hi[0] - lo[0]), lo[1] + v * (hi[1] - lo[1])] };
            let (p, q, r) = (PROBES[0], PROBES[1], PROBES[2]);
            let pts = [at(p, p), at(r, p), at(p, r), at(r, r), at(q, q)];
            let v: Vec<f64> = pts.iter().map(|x| g(x)).collect::<Result<_>>()?;
            let gx = (v[1] - v[0]) / (pts[1][0] - pts[0][0]);
            let gy = (v[2] - v[0]) / (pts[2][1] - pts[0][1]);
            let clean = |s: f64| if s.abs() <= 1e-12 { 0.0 } else { s };
            let (gx, gy) = (clean(gx), clean(gy));
            let f = AffineFn::new(v[0] - gx * pts[0][0] - gy * pts[0][1], vec![gx, gy]);
            for k in 3..5 {
                if (f.eval(&pts[k]) - v[k]).abs() > FIT_TOL * (1.0 + v[k].abs()) {
                    return Err(bad());
                }
            }
            Ok(f)
        }
    }
}

/// Optimal threshold found by [`Profile::argmin`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Choice {
    pub b: f64,
    pub strict: bool,
    pub value: f64,
}

/// Upper-tail mass `A(b) = P(f ≥ b)` and marked mass `B(b)` as exact
/// piecewise cubics in `b`.
#[derive(Clone, Debug)]
pub(crate) struct Profile {
    cells: Vec<MassCell>,
    /// Distinct breakpoints (clusters of near-equal vertex values collapse to
    /// their smallest and largest member).
    breaks: Vec<(f64, f64)>,
    /// `[non-strict at cluster min, strict at cluster max]`.
    at_break: Vec<[(f64, f64); 2]>,
    /// Cubic coefficients in the local variable `u ∈ [-1, 1]` between clusters.
    polys: Vec<([f64; 4], [f64; 4])>,
    total: (f64, f64),
}

const BREAK_MERGE: f64 = 1e-12;

impl Profile {
    pub fn new(cells: Vec<MassCell>) -> Self {
        let mut vals: Vec<f64> = cells
            .iter()
            .flat_map(|c| c.shape.vertices().into_iter().map(move |v| c.score.eval(&v)))
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut breaks: Vec<(f64, f64)> = Vec::new();
        for v in vals {
            match breaks.last_mut() {
                Some(last) if v - last.1 <= BREAK_MERGE * (1.0 + v.abs()) => last.1 = v,
                _ => breaks.push((v, v)),
            }
        }
        let total = cells.iter().fold((0.0, 0.0), |acc, c| {
            let t = c.total();
            (acc.0 + t.0, acc.1 + t.1)
        });
        let mut p = Self { cells, breaks, at_break: Vec::new(), polys: Vec::new(), total };
        p.at_break = p.breaks.iter().map(|&(lo, hi)| [p.above(lo, false), p.above(hi, true)]).collect();
        p.polys = p
            .breaks
            .windows(2)
            .map(|w| {
                let (l, r) = (w[0].1, w[1].0);
                let mut ma = [0.0; 4];
                let mut mb = [0.0; 4];
                for (i, u) in cheb_nodes().iter().enumerate() {
                    let b = 0.5 * (l + r) + 0.5 * (r - l) * u;
                    let (x, y) = p.above(b, false);
                    ma[i] = x;
                    mb[i] = y;
                }
                (fit_cubic(&ma), fit_cubic(&mb))
            })
            .collect();
        p
    }

    /// Exact `(P(f ≥ b), marked mass of the same event)`; strict uses `>`.
    pub fn above(&self, b: f64, strict: bool) -> (f64, f64) {
        let side = Side::above(b, strict);
        self.cells.iter().fold((0.0, 0.0), |acc, c| {
            let (m, q) = c.side_mass(side);
            (acc.0 + m, acc.1 + q)
        })
    }

    pub fn total(&self) -> (f64, f64) {
        self.total
    }

    /// `above` through the precomputed representation (cheap).
    fn eval(&self, b: f64, strict: bool) -> (f64, f64) {
        let n = self.breaks.len();
        if n == 0 {
            return (0.0, 0.0);
        }
        if b < self.breaks[0].0 {
            return self.total;
        }
        if b > self.breaks[n - 1].1 {
            return (0.0, 0.0);
        }
        // index of the last cluster whose min is <= b
        let k = self.breaks.partition_point(|c| c.0 <= b) - 1;
        let (lo, hi) = self.breaks[k];
        if b == lo && !strict {
            return self.at_break[k][0];
        }
        if b <= hi {
            // inside a merged cluster: treat as its right-limit
            return self.at_break[k][1];
        }
        let (l, r) = (hi, self.breaks[k + 1].0);
        let u = ((2.0 * b - l - r) / (r - l)).clamp(-1.0, 1.0);
        let (ca, cb) = &self.polys[k];
        (horner(ca, u), horner(cb, u))
    }

    /// Minimizes `alpha·A(b) + beta·B(b)` over `b ∈ [lo, hi]` (infinite
    /// ends allowed). Ties within 1e-12 go to the smallest threshold, with a
    /// non-strict rule ordered before the strict rule at the same `b`.
    pub fn argmin(&self, alpha: f64, beta: f64, lo: f64, hi: f64) -> Choice {
        let obj = |v: (f64, f64)| alpha * v.0 + beta * v.1;
        let mut cands: Vec<Choice> = Vec::new();
        let mut push = |b: f64, strict: bool, value: f64| cands.push(Choice { b, strict, value });
        if lo.is_finite() {
            push(lo, false, obj(self.eval(lo, false)));
        }
        if hi.is_finite() && hi > lo {
            push(hi, false, obj(self.eval(hi, false)));
        }
        for (k, &(bl, bh)) in self.breaks.iter().enumerate() {
            if bl >= lo && bl <= hi {
                push(bl, false, obj(self.at_break[k][0]));
            }
            if bh >= lo && bh < hi {
                push(bh, true, obj(self.at_break[k][1]));
            }
        }
        if cands.is_empty() {
            // no mass at all and an unbounded range
            cands.push(Choice { b: 0.0, strict: false, value: 0.0 });
        }
        for (k, w) in self.breaks.windows(2).enumerate() {
            let (l, r) = (w[0].1, w[1].0);
            if r <= lo || l >= hi {
                continue;
            }
            let (ca, cb) = &self.polys[k];
            let c: Vec<f64> = (0..4).map(|i| alpha * ca[i] + beta * cb[i]).collect();
            for u in quadratic_roots(3.0 * c[3], 2.0 * c[2], c[1]) {
                if u > -1.0 && u < 1.0 {
                    let b = 0.5 * (l + r) + 0.5 * (r - l) * u;
                    if b > lo && b < hi {
                        let v = horner(&[c[0], c[1], c[2], c[3]], u);
                        cands.push(Choice { b, strict: false, value: v });
                    }
                }
            }
        }
        let best = cands.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
        cands
            .into_iter()
            .filter(|c| c.value <= best + 1e-12)
            .min_by(|a, b| a.b.partial_cmp(&b.b).unwrap().then(a.strict.cmp(&b.strict)))
            .expect("at least one candidate")
    }
}

fn cheb_nodes() -> [f64; 4] {
    let mut u = [0.0; 4];
    for (i, x) in u.iter_mut().enumerate() {
        *x = ((2 * i + 1) as f64 * std::f64::consts::PI / 8.0).cos();
    }
    u
}

fn horner(c: &[f64; 4], u: f64) -> f64 {
    ((c[3] * u + c[2]) * u + c[1]) * u + c[0]
}

/// Monomial coefficients of the cubic through the four Chebyshev nodes.
fn fit_cubic(v: &[f64; 4]) -> [f64; 4] {
    let u = cheb_nodes();
    let mut a = [[0.0; 5]; 4];
    for i in 0..4 {
        let mut p = 1.0;
        for j in 0..4 {
            a[i][j] = p;
            p *= u[i];
        }
        a[i][4] = v[i];
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..4 {
        let piv = (col..4).max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap()).unwrap();
        a.swap(col, piv);
        for row in 0..4 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..5 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    [a[0][4] / a[0][0], a[1][4] / a[1][1], a[2][4] / a[2][2], a[3][4] / a[3][3]]
}

/// Real roots of `a u² + b u + c`, tolerating vanishing leading terms.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 || !scale.is_finite() {
        return vec![];
    }
    let (a, b, c) = (a / scale, b / scale, c / scale);
    if a.abs() <= 1e-12 {
        if b.abs() <= 1e-12 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let s = disc.sqrt();
    let q = -0.5 * (b + b.signum() * s);
    let mut r = vec![q / a];
    if q != 0.0 {
        r.push(c / q);
    } else {
        r.push(-b / (2.0 * a));
    }
    r
}
