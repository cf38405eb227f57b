//! Analytic decision problems: mixtures of point masses, segments and
//! rectangles, each carrying an affine posterior `q(x) = P(Y=1 | X=x)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{IdtError, Result};
use crate::geometry::{dot, norm, rect_polygon, AffineFn, MassCell, Shape, Side};
use crate::hypothesis::DecisionRule;
use crate::profile;

/// Containment tolerance for support queries.
pub const GEOMETRIC_TOL: f64 = 1e-9;
/// Tolerance on probability identities (weight sums, posterior range).
pub const PROBABILITY_TOL: f64 = 1e-12;

/// `q(x) = intercept + gradient · x`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinePosterior {
    pub intercept: f64,
    pub gradient: Vec<f64>,
}

impl AffinePosterior {
    pub fn new(intercept: f64, gradient: Vec<f64>) -> Self {
        Self { intercept, gradient }
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        Self { intercept: value, gradient: vec![0.0; dim] }
    }

    /// Raw affine value, not clamped.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.intercept + dot(&self.gradient, x)
    }

    pub(crate) fn as_fn(&self) -> AffineFn {
        AffineFn::new(self.intercept, self.gradient.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PieceKind {
    PointMass { location: Vec<f64> },
    /// `{base + t·direction : t ∈ [0, length]}` with a unit direction.
    Segment { base: Vec<f64>, direction: Vec<f64>, length: f64 },
    /// Axis-aligned rectangle in the plane.
    Rect { lower: [f64; 2], upper: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub kind: PieceKind,
    pub weight: f64,
    pub posterior: AffinePosterior,
}

impl Piece {
    pub fn point(location: Vec<f64>, weight: f64, posterior: AffinePosterior) -> Self {
        Self { kind: PieceKind::PointMass { location }, weight, posterior }
    }

    /// Segment between two endpoints; direction and length are derived.
    pub fn segment(from: Vec<f64>, to: Vec<f64>, weight: f64, posterior: AffinePosterior) -> Self {
        let d: Vec<f64> = from.iter().zip(&to).map(|(a, b)| b - a).collect();
        let length = norm(&d);
        let direction = if length > 0.0 { d.iter().map(|v| v / length).collect() } else { d };
        Self { kind: PieceKind::Segment { base: from, direction, length }, weight, posterior }
    }

    pub fn rect(lower: [f64; 2], upper: [f64; 2], weight: f64, posterior: AffinePosterior) -> Self {
        Self { kind: PieceKind::Rect { lower, upper }, weight, posterior }
    }

    /// Vertices of the convex hull of the piece.
    pub fn extreme_points(&self) -> Vec<Vec<f64>> {
        match &self.kind {
            PieceKind::PointMass { location } => vec![location.clone()],
            PieceKind::Segment { base, direction, length } => {
                vec![base.clone(), base.iter().zip(direction).map(|(b, d)| b + length * d).collect()]
            }
            PieceKind::Rect { lower, upper } => {
                rect_polygon(*lower, *upper).into_iter().map(|p| p.to_vec()).collect()
            }
        }
    }

    pub(crate) fn shape(&self) -> Shape {
        match &self.kind {
            PieceKind::PointMass { location } => Shape::Point(location.clone()),
            PieceKind::Segment { .. } => {
                let e = self.extreme_points();
                Shape::Segment(e[0].clone(), e[1].clone())
            }
            PieceKind::Rect { lower, upper } => Shape::Polygon(rect_polygon(*lower, *upper)),
        }
    }

    fn dimension(&self) -> Option<usize> {
        match &self.kind {
            PieceKind::PointMass { location } => Some(location.len()),
            PieceKind::Segment { base, direction, .. } => {
                (base.len() == direction.len()).then_some(base.len())
            }
            PieceKind::Rect { .. } => Some(2),
        }
    }

    /// Whether `x` lies on the piece, up to `GEOMETRIC_TOL`.
    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.kind {
            PieceKind::PointMass { location } => {
                let d: Vec<f64> = x.iter().zip(location).map(|(a, b)| a - b).collect();
                norm(&d) <= GEOMETRIC_TOL
            }
            PieceKind::Segment { base, direction, length } => {
                let rel: Vec<f64> = x.iter().zip(base).map(|(a, b)| a - b).collect();
                let t = dot(&rel, direction);
                if t < -GEOMETRIC_TOL || t > length + GEOMETRIC_TOL {
                    return false;
                }
                let off: Vec<f64> = rel.iter().zip(direction).map(|(r, d)| r - t * d).collect();
                norm(&off) <= GEOMETRIC_TOL
            }
            PieceKind::Rect { lower, upper } => (0..2).all(|j| {
                x[j] >= lower[j] - GEOMETRIC_TOL && x[j] <= upper[j] + GEOMETRIC_TOL
            }),
        }
    }

    /// Average posterior over the piece.
    pub fn mean_posterior(&self) -> f64 {
        self.posterior.eval(&self.shape().centroid())
    }
}

/// The joint law of `(X, Y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseDistribution {
    ambient_dimension: usize,
    pieces: Vec<Piece>,
}

/// `(x, y)` draw.
pub type LabeledPoint = (Vec<f64>, u8);

impl PiecewiseDistribution {
    /// Validates every invariant eagerly.
    pub fn new(ambient_dimension: usize, pieces: Vec<Piece>) -> Result<Self> {
        if ambient_dimension == 0 {
            return Err(IdtError::Geometry("ambient dimension must be positive".into()));
        }
        if pieces.is_empty() {
            return Err(IdtError::Geometry("distribution has no pieces".into()));
        }
        for (i, p) in pieces.iter().enumerate() {
            if p.dimension() != Some(ambient_dimension) {
                return Err(IdtError::Geometry(format!(
                    "piece {i} does not live in dimension {ambient_dimension}"
                )));
            }
            if p.posterior.gradient.len() != ambient_dimension {
                return Err(IdtError::Geometry(format!("posterior gradient of piece {i} has wrong length")));
            }
            if !(p.weight >= 0.0 && p.weight.is_finite()) {
                return Err(IdtError::Geometry(format!("piece {i} has weight {}", p.weight)));
            }
            let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
            match &p.kind {
                PieceKind::PointMass { location } if !finite(location) => {
                    return Err(IdtError::Geometry(format!("piece {i} has non-finite location")));
                }
                PieceKind::Segment { base, direction, length } => {
                    if !finite(base) || !finite(direction) {
                        return Err(IdtError::Geometry(format!("piece {i} has non-finite geometry")));
                    }
                    if (norm(direction) - 1.0).abs() > GEOMETRIC_TOL {
                        return Err(IdtError::Geometry(format!("segment {i} direction is not a unit vector")));
                    }
                    if !(*length > 0.0 && length.is_finite()) {
                        return Err(IdtError::Geometry(format!("segment {i} has length {length}")));
                    }
                }
                PieceKind::Rect { lower, upper } => {
                    if !(lower[0] < upper[0] && lower[1] < upper[1]) || !finite(lower) || !finite(upper) {
                        return Err(IdtError::Geometry(format!("rectangle {i} has lower >= upper")));
                    }
                }
                _ => {}
            }
            for v in p.extreme_points() {
                let q = p.posterior.eval(&v);
                if !(-PROBABILITY_TOL..=1.0 + PROBABILITY_TOL).contains(&q) {
                    return Err(IdtError::PosteriorRange { piece: i, value: q });
                }
            }
        }
        let sum: f64 = pieces.iter().map(|p| p.weight).sum();
        if (sum - 1.0).abs() > PROBABILITY_TOL {
            return Err(IdtError::WeightSum { sum });
        }
        Ok(Self { ambient_dimension, pieces })
    }

    pub fn ambient_dimension(&self) -> usize {
        self.ambient_dimension
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// `q(x)`. Overlapping pieces are averaged by weight.
    pub fn posterior(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.ambient_dimension {
            return Err(IdtError::OffSupport { point: x.to_vec() });
        }
        let (mut num, mut den, mut plain, mut hits) = (0.0, 0.0, 0.0, 0usize);
        for p in &self.pieces {
            if p.contains(x) {
                let q = p.posterior.eval(x).clamp(0.0, 1.0);
                num += p.weight * q;
                den += p.weight;
                plain += q;
                hits += 1;
            }
        }
        match hits {
            0 => Err(IdtError::OffSupport { point: x.to_vec() }),
            _ if den > 0.0 => Ok(num / den),
            _ => Ok(plain / hits as f64),
        }
    }

    /// `P(Y = 1)`.
    pub fn positive_rate(&self) -> f64 {
        self.pieces.iter().map(|p| p.weight * p.mean_posterior()).sum()
    }

    /// `m` i.i.d. draws of `(x, y)`, deterministic in `seed`.
    pub fn sample(&self, seed: u64, m: usize) -> Vec<LabeledPoint> {
        let mut sampler = self.sampler(seed);
        (0..m)
            .map(|_| {
                let (_, x, y) = sampler.draw();
                (x, y)
            })
            .collect()
    }

    /// Streaming sampler that also reports which piece produced each draw.
    pub fn sampler(&self, seed: u64) -> Sampler<'_> {
        let mut cumulative = Vec::with_capacity(self.pieces.len());
        let mut acc = 0.0;
        for p in &self.pieces {
            acc += p.weight;
            cumulative.push(acc);
        }
        Sampler { dist: self, rng: ChaCha8Rng::seed_from_u64(seed), cumulative }
    }

    /// Exact `R_c(h)` for the normalized loss (false positive `c`, false negative `1 - c`).
    pub fn risk(&self, c: f64, rule: &DecisionRule) -> Result<f64> {
        let cm = self.confusion(rule)?;
        Ok(c * cm.false_positive + (1.0 - c) * cm.false_negative)
    }

    /// Exact joint probabilities of decisions and outcomes under `rule`.
    pub fn confusion(&self, rule: &DecisionRule) -> Result<Confusion> {
        let cells = profile::posterior_cells(self, &rule.score)?;
        let side = Side::above(rule.threshold, rule.strict);
        let (mut pos, mut pos_y1, mut total_y1) = (0.0, 0.0, 0.0);
        for c in &cells {
            let (m, q) = c.side_mass(side);
            pos += m;
            pos_y1 += q;
            total_y1 += c.total().1;
        }
        Ok(Confusion {
            true_positive: pos_y1,
            false_positive: pos - pos_y1,
            false_negative: total_y1 - pos_y1,
            true_negative: 1.0 - pos - (total_y1 - pos_y1),
        })
    }

    /// `E[C_{h(X), Y}]` for an arbitrary cost matrix.
    pub fn cost_risk(&self, cost: &CostMatrix, rule: &DecisionRule) -> Result<f64> {
        let cm = self.confusion(rule)?;
        let e = cost.entries;
        Ok(e[0][0] * cm.true_negative
            + e[0][1] * cm.false_negative
            + e[1][0] * cm.false_positive
            + e[1][1] * cm.true_positive)
    }

    /// `(P(q(X) ∈ (c, c+eps]), P(q(X) ∈ [c-eps, c)))`.
    pub fn density_floor(&self, c: f64, eps: f64) -> (f64, f64) {
        let cells = self.self_scored_cells();
        let above = |b: f64, strict: bool| -> f64 {
            cells.iter().map(|cell| cell.side_mass(Side::above(b, strict)).0).sum()
        };
        let up = above(c, true) - above(c + eps, true);
        let down = above(c - eps, false) - above(c, false);
        (up.max(0.0), down.max(0.0))
    }

    /// `P(q(X) ∈ (lo, hi))`.
    pub fn posterior_mass_between(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let cells = self.self_scored_cells();
        let a: f64 = cells.iter().map(|c| c.side_mass(Side::above(lo, true)).0).sum();
        let b: f64 = cells.iter().map(|c| c.side_mass(Side::above(hi, false)).0).sum();
        (a - b).max(0.0)
    }

    fn self_scored_cells(&self) -> Vec<MassCell> {
        self.pieces
            .iter()
            .filter(|p| p.weight > 0.0)
            .map(|p| {
                let q = p.posterior.as_fn();
                MassCell { shape: p.shape(), mass: p.weight, mark: q.clone(), score: q }
            })
            .collect()
    }

    /// False iff `q(X) ∈ {0, 1}` almost surely.
    pub fn has_uncertainty(&self) -> bool {
        self.pieces.iter().filter(|p| p.weight > 0.0).any(|p| {
            let vals: Vec<f64> = p.extreme_points().iter().map(|v| p.posterior.eval(v)).collect();
            let all_zero = vals.iter().all(|v| v.abs() <= PROBABILITY_TOL);
            let all_one = vals.iter().all(|v| (v - 1.0).abs() <= PROBABILITY_TOL);
            !(all_zero || all_one)
        })
    }

    /// `P(Y = 1 | X_S = x_S)` for a 1-based coordinate subset `S`.
    ///
    /// The conditional law of `X` given `X_S = z` is taken from the pieces
    /// whose projection onto the `S` coordinates has the lowest dimension at
    /// `z`: atoms beat densities on lines, which beat planar densities.
    pub fn conditional_posterior(&self, subset: &[usize], x_s: &[f64]) -> Result<f64> {
        let mut best_k = usize::MAX;
        let (mut num, mut den) = (0.0, 0.0);
        for p in &self.pieces {
            if p.weight <= 0.0 {
                continue;
            }
            if let Some((k, dens, q)) = fiber_contribution(p, subset, x_s) {
                if k < best_k {
                    best_k = k;
                    num = 0.0;
                    den = 0.0;
                }
                if k == best_k {
                    num += dens * q;
                    den += dens;
                }
            }
        }
        if den > 0.0 {
            Ok((num / den).clamp(0.0, 1.0))
        } else {
            let mut point = vec![f64::NAN; self.ambient_dimension];
            for (&j, &z) in subset.iter().zip(x_s) {
                if j >= 1 && j <= self.ambient_dimension {
                    point[j - 1] = z;
                }
            }
            Err(IdtError::OffSupport { point })
        }
    }
}

/// How piece `p` contributes to the conditional law at `X_S = z`:
/// `(dimension of the projected support, density there, mean posterior on the fibre)`.
fn fiber_contribution(p: &Piece, subset: &[usize], z: &[f64]) -> Option<(usize, f64, f64)> {
    // distance from the projection of `v + t·w` to `z`, without allocating
    let gap = |v: &[f64], w: &[f64], t: f64| -> f64 {
        subset.iter().zip(z).map(|(&j, &zj)| (v[j - 1] + t * w[j - 1] - zj).powi(2)).sum::<f64>().sqrt()
    };
    match &p.kind {
        PieceKind::PointMass { location } => {
            (gap(location, location, 0.0) <= GEOMETRIC_TOL).then(|| (0, p.weight, p.posterior.eval(location)))
        }
        PieceKind::Segment { base, direction, length } => {
            let dn2: f64 = subset.iter().map(|&j| direction[j - 1].powi(2)).sum();
            if dn2.sqrt() <= 1e-12 {
                return (gap(base, direction, 0.0) <= GEOMETRIC_TOL).then(|| (0, p.weight, p.mean_posterior()));
            }
            let t = subset.iter().zip(z).map(|(&j, &zj)| (zj - base[j - 1]) * direction[j - 1]).sum::<f64>() / dn2;
            let tol = GEOMETRIC_TOL / dn2.sqrt();
            if t < -tol || t > length + tol || gap(base, direction, t) > GEOMETRIC_TOL {
                return None;
            }
            let t = t.clamp(0.0, *length);
            let q = p.posterior.intercept
                + p.posterior.gradient.iter().zip(base.iter().zip(direction)).map(|(g, (b, d))| g * (b + t * d)).sum::<f64>();
            Some((1, p.weight / (length * dn2.sqrt()), q))
        }
        PieceKind::Rect { lower, upper } => {
            let inside = |j: usize, v: f64| v >= lower[j] - GEOMETRIC_TOL && v <= upper[j] + GEOMETRIC_TOL;
            match subset {
                [j] => {
                    let j = j - 1;
                    if !inside(j, z[0]) {
                        return None;
                    }
                    let o = 1 - j;
                    let mut x = [0.0; 2];
                    x[j] = z[0].clamp(lower[j], upper[j]);
                    x[o] = 0.5 * (lower[o] + upper[o]);
                    Some((1, p.weight / (upper[j] - lower[j]), p.posterior.eval(&x)))
                }
                _ => {
                    if !(inside(0, z[0]) && inside(1, z[1])) {
                        return None;
                    }
                    let area = (upper[0] - lower[0]) * (upper[1] - lower[1]);
                    let x = [z[0].clamp(lower[0], upper[0]), z[1].clamp(lower[1], upper[1])];
                    Some((2, p.weight / area, p.posterior.eval(&x)))
                }
            }
        }
    }
}

/// Streaming draw of `(piece index, x, y)`.
pub struct Sampler<'a> {
    dist: &'a PiecewiseDistribution,
    rng: ChaCha8Rng,
    cumulative: Vec<f64>,
}

impl Sampler<'_> {
    pub fn draw(&mut self) -> (usize, Vec<f64>, u8) {
        let total = *self.cumulative.last().unwrap();
        let u: f64 = self.rng.gen::<f64>() * total;
        let mut idx = self.cumulative.partition_point(|&c| c <= u);
        // Guard against landing on trailing zero-weight pieces through rounding.
        idx = idx.min(self.cumulative.len() - 1);
        while self.dist.pieces[idx].weight <= 0.0 && idx > 0 {
            idx -= 1;
        }
        let piece = &self.dist.pieces[idx];
        let x = match &piece.kind {
            PieceKind::PointMass { location } => location.clone(),
            PieceKind::Segment { base, direction, length } => {
                let t = self.rng.gen::<f64>() * length;
                base.iter().zip(direction).map(|(b, d)| b + t * d).collect()
            }
            PieceKind::Rect { lower, upper } => {
                let a = self.rng.gen::<f64>();
                let b = self.rng.gen::<f64>();
                vec![lower[0] + a * (upper[0] - lower[0]), lower[1] + b * (upper[1] - lower[1])]
            }
        };
        let q = piece.posterior.eval(&x).clamp(0.0, 1.0);
        let y = u8::from(self.rng.gen::<f64>() < q);
        (idx, x, y)
    }
}

/// Joint probabilities of (decision, outcome).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Confusion {
    pub true_positive: f64,
    pub false_positive: f64,
    pub false_negative: f64,
    pub true_negative: f64,
}

/// A distribution together with the hidden loss parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionProblem {
    pub distribution: PiecewiseDistribution,
    pub loss_parameter: f64,
}

impl DecisionProblem {
    pub fn new(distribution: PiecewiseDistribution, loss_parameter: f64) -> Result<Self> {
        check_loss_parameter(loss_parameter)?;
        Ok(Self { distribution, loss_parameter })
    }
}

pub(crate) fn check_loss_parameter(c: f64) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(IdtError::ParameterRange { name: "c", value: c, allowed: "(0, 1)" })
    }
}

/// `entries[ŷ][y]` is the cost of deciding `ŷ` when the truth is `y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostMatrix {
    pub entries: [[f64; 2]; 2],
}

/// Result of reducing a cost matrix to a single loss parameter:
/// `R_C(h) = a · R_c(h) + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedCost {
    pub c: f64,
    pub a: f64,
    /// Depends on `P(Y=1)`; `None` when no distribution was supplied.
    pub b: Option<f64>,
}

impl CostMatrix {
    pub fn new(entries: [[f64; 2]; 2]) -> Self {
        Self { entries }
    }

    pub fn normalize(&self, dist: Option<&PiecewiseDistribution>) -> Result<NormalizedCost> {
        let [[c00, c01], [c10, c11]] = self.entries;
        let a = c10 + c01 - c00 - c11;
        if !(c00 < c10 && c11 < c01) || !a.is_finite() {
            return Err(IdtError::DegenerateCost { denominator: a });
        }
        let b = dist.map(|d| {
            let p1 = d.positive_rate();
            (1.0 - p1) * c00 + p1 * c11
        });
        Ok(NormalizedCost { c: (c10 - c00) / a, a, b })
    }
}
