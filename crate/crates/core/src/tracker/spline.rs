use serde::Serialize;

use super::TrackError;
use crate::env::Point2;

/// Five-point Gauss–Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

const ARC_REL_TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 40;

fn gauss5(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(&x, w)| w * f(m + h * x))
        .sum::<f64>()
        * h
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (l, r) = (gauss5(f, a, m), gauss5(f, m, b));
    if depth >= MAX_DEPTH || (l + r - whole).abs() <= tol {
        l + r
    } else {
        adaptive(f, a, m, l, 0.5 * tol, depth + 1) + adaptive(f, m, b, r, 0.5 * tol, depth + 1)
    }
}

/// Adaptive Gauss–Legendre quadrature of `f` over [a, b].
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = gauss5(&f, a, b);
    let tol = ARC_REL_TOL * whole.abs().max(1e-300);
    adaptive(&f, a, b, whole, tol, 0)
}

/// One cubic Hermite piece, parameterized on u ∈ [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    p1: Point2,
    p2: Point2,
    m1: Point2,
    m2: Point2,
}

impl Segment {
    /// Centripetal Catmull–Rom piece between `p1` and `p2`.
    fn centripetal(p0: Point2, p1: Point2, p2: Point2, p3: Point2) -> Self {
        let knot = |a: Point2, b: Point2| a.dist(b).sqrt();
        let (t01, t12, t23) = (knot(p0, p1), knot(p1, p2), knot(p2, p3));
        let m1 = ((p1 - p0) * (1.0 / t01) - (p2 - p0) * (1.0 / (t01 + t12)) + (p2 - p1) * (1.0 / t12)) * t12;
        let m2 = ((p2 - p1) * (1.0 / t12) - (p3 - p1) * (1.0 / (t12 + t23)) + (p3 - p2) * (1.0 / t23)) * t12;
        Segment { p1, p2, m1, m2 }
    }

    fn eval(&self, u: f64) -> Point2 {
        let (u2, u3) = (u * u, u * u * u);
        self.p1 * (2.0 * u3 - 3.0 * u2 + 1.0)
            + self.m1 * (u3 - 2.0 * u2 + u)
            + self.p2 * (-2.0 * u3 + 3.0 * u2)
            + self.m2 * (u3 - u2)
    }

    fn speed(&self, u: f64) -> f64 {
        let u2 = u * u;
        (self.p1 * (6.0 * u2 - 6.0 * u)
            + self.m1 * (3.0 * u2 - 4.0 * u + 1.0)
            + self.p2 * (-6.0 * u2 + 6.0 * u)
            + self.m2 * (3.0 * u2 - 2.0 * u))
            .norm()
    }

    fn length(&self, u: f64) -> f64 {
        integrate(|s| self.speed(s), 0.0, u)
    }
}

/// Planner waypoints turned into an interpolating curve plus its equal-arc
/// resampling, which is what the tracker follows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferencePath {
    pub control_points: Vec<Point2>,
    pub total_arc_length: f64,
    pub samples: Vec<Point2>,
    #[serde(skip)]
    segments: Vec<Segment>,
    /// Arc length at the start of each segment, plus the total at the end.
    #[serde(skip)]
    cumulative: Vec<f64>,
}

/// `ceil(2.5 ℓ)` for a path of ℓ points.
pub fn horizon_for(points: usize) -> usize {
    (5 * points).div_ceil(2)
}

/// Interpolating spline through `path` with `horizon_for(path.len())` samples.
pub fn fit_reference(path: &[Point2]) -> Result<ReferencePath, TrackError> {
    fit_reference_with_horizon(path, horizon_for(path.len()))
}

pub fn fit_reference_with_horizon(path: &[Point2], samples: usize) -> Result<ReferencePath, TrackError> {
    if path.len() < 2 {
        return Err(TrackError::DegeneratePath { points: path.len() });
    }
    if let Some(i) = path.windows(2).position(|w| w[0] == w[1]) {
        return Err(TrackError::DuplicatePoint { index: i + 1 });
    }
    let n = path.len();
    let at = |i: isize| -> Point2 {
        if i < 0 {
            path[0] * 2.0 - path[1]
        } else if i as usize >= n {
            path[n - 1] * 2.0 - path[n - 2]
        } else {
            path[i as usize]
        }
    };
    let segments: Vec<Segment> = (0..n as isize - 1)
        .map(|i| Segment::centripetal(at(i - 1), at(i), at(i + 1), at(i + 2)))
        .collect();
    let mut cumulative = vec![0.0];
    for s in &segments {
        cumulative.push(cumulative.last().unwrap() + s.length(1.0));
    }
    let total = *cumulative.last().unwrap();
    let mut r = ReferencePath {
        control_points: path.to_vec(),
        total_arc_length: total,
        samples: Vec::new(),
        segments,
        cumulative,
    };
    let samples = samples.max(2);
    r.samples = (0..samples)
        .map(|k| r.point_at_arc(total * k as f64 / (samples - 1) as f64))
        .collect();
    Ok(r)
}

impl ReferencePath {
    /// A reference that stays at `p` for `samples` steps.
    pub fn constant(p: Point2, samples: usize) -> Self {
        ReferencePath {
            control_points: vec![p],
            total_arc_length: 0.0,
            samples: vec![p; samples],
            segments: Vec::new(),
            cumulative: vec![0.0],
        }
    }

    pub fn horizon(&self) -> usize {
        self.samples.len()
    }

    /// Curve point at global parameter `s` ∈ [0, segments]: segment ⌊s⌋, local u = s − ⌊s⌋.
    pub fn eval(&self, s: f64) -> Point2 {
        if self.segments.is_empty() {
            return self.control_points[0];
        }
        let k = (s.max(0.0).floor() as usize).min(self.segments.len() - 1);
        self.segments[k].eval((s - k as f64).clamp(0.0, 1.0))
    }

    /// Point at arc length `s` from the start, found by bisection.
    pub fn point_at_arc(&self, s: f64) -> Point2 {
        if self.segments.is_empty() {
            return self.control_points[0];
        }
        let s = s.clamp(0.0, self.total_arc_length);
        let k = match self.cumulative[1..].iter().position(|&c| s <= c) {
            Some(k) => k,
            None => self.segments.len() - 1,
        };
        let seg = &self.segments[k];
        let target = s - self.cumulative[k];
        let seg_len = self.cumulative[k + 1] - self.cumulative[k];
        if target <= 0.0 {
            return seg.p1;
        }
        if target >= seg_len {
            return seg.p2;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if seg.length(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        seg.eval(0.5 * (lo + hi))
    }
}
