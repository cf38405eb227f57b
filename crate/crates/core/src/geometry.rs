//! Shapes, half-space clipping and closed-form integrals of affine functions.
//!
//! Everything the analytic risk machinery needs reduces to "how much mass of
//! this cell lies on one side of an affine level set, and what is the integral
//! of another affine function over that part". Cells are points, segments or
//! convex polygons (2-D only), each carrying a uniform mass.

/// `c0 + grad · x` in ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct AffineFn {
    pub c0: f64,
    pub grad: Vec<f64>,
}

impl AffineFn {
    pub fn new(c0: f64, grad: Vec<f64>) -> Self {
        Self { c0, grad }
    }

    pub fn constant(c0: f64, dim: usize) -> Self {
        Self { c0, grad: vec![0.0; dim] }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.c0 + dot(&self.grad, x)
    }

    pub fn eval2(&self, p: [f64; 2]) -> f64 {
        self.c0 + self.grad[0] * p[0] + self.grad[1] * p[1]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Support of a cell.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Shape {
    Point(Vec<f64>),
    Segment(Vec<f64>, Vec<f64>),
    /// Counter-clockwise convex polygon in the plane.
    Polygon(Vec<[f64; 2]>),
}

/// One side of the level set `f = b`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Side {
    pub b: f64,
    /// `true`: keep `f >= b` (or `f > b` when strict). `false`: keep `f < b` (or `f <= b` when not strict).
    pub above: bool,
    pub strict: bool,
}

impl Side {
    pub fn above(b: f64, strict: bool) -> Self {
        Self { b, above: true, strict }
    }

    /// Complement of `above(b, strict)`.
    pub fn below(b: f64, strict: bool) -> Self {
        Self { b, above: false, strict: !strict }
    }

    pub fn holds(&self, v: f64) -> bool {
        match (self.above, self.strict) {
            (true, false) => v >= self.b,
            (true, true) => v > self.b,
            (false, true) => v < self.b,
            (false, false) => v <= self.b,
        }
    }
}

fn is_flat(values: &[f64]) -> bool {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = 1.0 + lo.abs().max(hi.abs());
    hi - lo <= 1e-14 * scale
}

impl Shape {
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        match self {
            Shape::Point(p) => vec![p.clone()],
            Shape::Segment(a, b) => vec![a.clone(), b.clone()],
            Shape::Polygon(ps) => ps.iter().map(|p| p.to_vec()).collect(),
        }
    }

    /// Lebesgue measure in the shape's own dimension (1 for points).
    pub fn measure(&self) -> f64 {
        match self {
            Shape::Point(_) => 1.0,
            Shape::Segment(a, b) => {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
                norm(&d)
            }
            Shape::Polygon(ps) => polygon_area(ps),
        }
    }

    /// Centroid under the uniform measure.
    pub fn centroid(&self) -> Vec<f64> {
        match self {
            Shape::Point(p) => p.clone(),
            Shape::Segment(a, b) => a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect(),
            Shape::Polygon(ps) => polygon_centroid(ps).to_vec(),
        }
    }

    /// Intersection with one side of `f = b`. Returns `None` when the
    /// intersection is empty or has zero measure.
    pub fn clip(&self, f: &AffineFn, side: Side) -> Option<Shape> {
        match self {
            Shape::Point(p) => side.holds(f.eval(p)).then(|| self.clone()),
            Shape::Segment(a, b) => {
                let fa = f.eval(a);
                let fb = f.eval(b);
                if is_flat(&[fa, fb]) {
                    return side.holds(0.5 * (fa + fb)).then(|| self.clone());
                }
                // f(t) = fa + (fb - fa) t on [0,1]
                let t_star = (side.b - fa) / (fb - fa);
                let keep_high = (fb > fa) == side.above;
                let (t0, t1) = if keep_high { (t_star.max(0.0), 1.0) } else { (0.0, t_star.min(1.0)) };
                if t1 - t0 <= 0.0 {
                    return None;
                }
                let lerp = |t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + (y - x) * t).collect() };
                Some(Shape::Segment(lerp(t0), lerp(t1)))
            }
            Shape::Polygon(ps) => {
                let vals: Vec<f64> = ps.iter().map(|p| f.eval2(*p)).collect();
                if is_flat(&vals) {
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    return side.holds(mean).then(|| self.clone());
                }
                let sign = if side.above { 1.0 } else { -1.0 };
                let g: Vec<f64> = vals.iter().map(|v| sign * (v - side.b)).collect();
                let out = clip_polygon(ps, &g);
                (out.len() >= 3 && polygon_area(&out) > 0.0).then_some(Shape::Polygon(out))
            }
        }
    }
}

/// Sutherland-Hodgman against a single half-plane `g >= 0`, where `g` holds
/// the (affine) function value at each vertex.
fn clip_polygon(ps: &[[f64; 2]], g: &[f64]) -> Vec<[f64; 2]> {
    let n = ps.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let j = (i + 1) % n;
        let (p, q) = (ps[i], ps[j]);
        let (gp, gq) = (g[i], g[j]);
        if gp >= 0.0 {
            out.push(p);
        }
        if (gp >= 0.0) != (gq >= 0.0) {
            let t = gp / (gp - gq);
            out.push([p[0] + (q[0] - p[0]) * t, p[1] + (q[1] - p[1]) * t]);
        }
    }
    out
}

pub(crate) fn polygon_area(ps: &[[f64; 2]]) -> f64 {
    let n = ps.len();
    let mut s = 0.0;
    for i in 0..n {
        let (p, q) = (ps[i], ps[(i + 1) % n]);
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s.abs()
}

fn polygon_centroid(ps: &[[f64; 2]]) -> [f64; 2] {
    // Shift to the first vertex for numerical stability.
    let o = ps[0];
    let n = ps.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = [ps[i][0] - o[0], ps[i][1] - o[1]];
        let q = [ps[(i + 1) % n][0] - o[0], ps[(i + 1) % n][1] - o[1]];
        let cr = p[0] * q[1] - q[0] * p[1];
        a += cr;
        cx += (p[0] + q[0]) * cr;
        cy += (p[1] + q[1]) * cr;
    }
    if a == 0.0 {
        let m = ps.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
        return [m[0] / n as f64, m[1] / n as f64];
    }
    [o[0] + cx / (3.0 * a), o[1] + cy / (3.0 * a)]
}

pub(crate) fn rect_polygon(lo: [f64; 2], hi: [f64; 2]) -> Vec<[f64; 2]> {
    vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
}

/// A piece of probability mass spread uniformly over `shape`.
#[derive(Clone, Debug)]
pub(crate) struct MassCell {
    pub shape: Shape,
    pub mass: f64,
    /// Integrand of the "marked" mass: the posterior for risk computations,
    /// a constant indicator for disagreement computations.
    pub mark: AffineFn,
    pub score: AffineFn,
}

impl MassCell {
    /// `(mass, marked mass)` of the part where `score` lies on `side`.
    pub fn side_mass(&self, side: Side) -> (f64, f64) {
        match self.shape.clip(&self.score, side) {
            None => (0.0, 0.0),
            Some(sub) => {
                let frac = match &self.shape {
                    Shape::Point(_) => 1.0,
                    _ => (sub.measure() / self.shape.measure()).min(1.0),
                };
                let m = self.mass * frac;
                (m, m * self.mark.eval(&sub.centroid()))
            }
        }
    }

    pub fn total(&self) -> (f64, f64) {
        (self.mass, self.mass * self.mark.eval(&self.shape.centroid()))
    }
}
