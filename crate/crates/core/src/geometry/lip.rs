//! Planar regions between two Lipschitz graphs meeting at their endpoints.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::linalg::Vector;

use super::GeometryError;

/// Number of boundary samples per graph used for the closest-point search.
pub const GRAPH_SAMPLES: usize = 4096;
/// Bisection steps used to refine a sampled closest point.
pub const REFINE_STEPS: usize = 40;

/// A scalar function `x -> f(x)` describing one wall of a lip domain.
pub trait BoundaryGraph: Send + Sync + fmt::Debug {
    fn value(&self, x: f64) -> f64;
    fn slope(&self, x: f64) -> f64;

    fn second_derivative(&self, x: f64) -> f64 {
        let h = 1e-5;
        (self.value(x + h) - 2.0 * self.value(x) + self.value(x - h)) / (h * h)
    }
}

/// `sign * slope * L / pi * sin(pi (x - a) / L)` on `[a, a + L]`.
///
/// Vanishes at both ends and has maximal slope `slope` there.
#[derive(Debug, Clone, Copy)]
pub struct SineArch {
    pub a: f64,
    pub b: f64,
    pub slope: f64,
    pub sign: f64,
}

impl SineArch {
    fn width(&self) -> f64 {
        self.b - self.a
    }
}

impl BoundaryGraph for SineArch {
    fn value(&self, x: f64) -> f64 {
        let l = self.width();
        self.sign * self.slope * l / PI * (PI * (x - self.a) / l).sin()
    }

    fn slope(&self, x: f64) -> f64 {
        let l = self.width();
        self.sign * self.slope * (PI * (x - self.a) / l).cos()
    }

    fn second_derivative(&self, x: f64) -> f64 {
        let l = self.width();
        -self.sign * self.slope * PI / l * (PI * (x - self.a) / l).sin()
    }
}

/// Nearest point on one graph.
#[derive(Debug, Clone, Copy)]
pub struct GraphHit {
    pub param: f64,
    pub point: Vector,
    pub distance: f64,
}

#[derive(Clone)]
struct SampledGraph {
    graph: Arc<dyn BoundaryGraph>,
    points: Vec<Vector>,
}

impl SampledGraph {
    fn new(graph: Arc<dyn BoundaryGraph>, a: f64, b: f64) -> Self {
        let dx = (b - a) / (GRAPH_SAMPLES - 1) as f64;
        let points = (0..GRAPH_SAMPLES)
            .map(|i| {
                let x = if i == GRAPH_SAMPLES - 1 { b } else { a + i as f64 * dx };
                Vector::xy(x, graph.value(x))
            })
            .collect();
        Self { graph, points }
    }

    fn point_at(&self, x: f64) -> Vector {
        Vector::xy(x, self.graph.value(x))
    }

    /// Closest point on the graph: exact minimum over the samples (pruned to
    /// the abscissa window that can beat the nearest-abscissa sample), then
    /// bisection on the derivative of the squared distance.
    fn nearest(&self, z: &Vector, a: f64, b: f64) -> GraphHit {
        let n = self.points.len();
        let dx = (b - a) / (n - 1) as f64;
        let to_index = |x: f64| ((x - a) / dx).clamp(0.0, (n - 1) as f64);
        let i0 = to_index(z[0]).round() as usize;
        let bound = self.points[i0].dist(z);
        let lo = to_index(z[0] - bound).floor() as usize;
        let hi = to_index(z[0] + bound).ceil() as usize;

        let mut best = i0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate().take(hi + 1).skip(lo) {
            let d = (*p - *z).norm_sq();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }

        let left = self.points[best.saturating_sub(1)][0];
        let right = self.points[(best + 1).min(n - 1)][0];
        let half_grad = |x: f64| {
            let fx = self.graph.value(x);
            (x - z[0]) + self.graph.slope(x) * (fx - z[1])
        };
        let param = if half_grad(left) < 0.0 && half_grad(right) > 0.0 {
            let (mut l, mut r) = (left, right);
            for _ in 0..REFINE_STEPS {
                let mid = 0.5 * (l + r);
                if half_grad(mid) < 0.0 {
                    l = mid;
                } else {
                    r = mid;
                }
            }
            0.5 * (l + r)
        } else {
            // Monotone on the bracket: the minimum sits at a bracket end or at
            // the sample itself.
            [left, self.points[best][0], right]
                .into_iter()
                .min_by(|&p, &q| {
                    let dp = (self.point_at(p) - *z).norm_sq();
                    let dq = (self.point_at(q) - *z).norm_sq();
                    dp.total_cmp(&dq)
                })
                .unwrap_or(left)
        };
        let point = self.point_at(param);
        GraphHit {
            param,
            point,
            distance: point.dist(z),
        }
    }
}

/// `{(x, y) : a <= x <= b, lower(x) <= y <= upper(x)}` with
/// `lower(a) = upper(a)`, `lower(b) = upper(b)` and both slopes bounded by
/// `lambda_lip < 1`.
#[derive(Clone)]
pub struct LipDomain {
    a: f64,
    b: f64,
    lambda_lip: f64,
    upper: SampledGraph,
    lower: SampledGraph,
}

impl fmt::Debug for LipDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipDomain")
            .field("a", &self.a)
            .field("b", &self.b)
            .field("lambda_lip", &self.lambda_lip)
            .field("upper", &self.upper.graph)
            .field("lower", &self.lower.graph)
            .finish()
    }
}

impl LipDomain {
    pub fn new(
        a: f64,
        b: f64,
        lower: Arc<dyn BoundaryGraph>,
        upper: Arc<dyn BoundaryGraph>,
        lambda_lip: f64,
    ) -> Result<Self, GeometryError> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(GeometryError::InvalidShape(format!(
                "lip domain needs finite a < b, got [{a}, {b}]"
            )));
        }
        if !(0.0..1.0).contains(&lambda_lip) {
            return Err(GeometryError::InvalidShape(format!(
                "lip slope bound must lie in [0, 1), got {lambda_lip}"
            )));
        }
        let tip_tol = 1e-12 * (b - a);
        for x in [a, b] {
            if (upper.value(x) - lower.value(x)).abs() > tip_tol {
                return Err(GeometryError::InvalidShape(format!(
                    "walls must meet at x = {x}"
                )));
            }
        }
        let upper = SampledGraph::new(upper, a, b);
        let lower = SampledGraph::new(lower, a, b);
        for (i, (pu, pl)) in upper.points.iter().zip(&lower.points).enumerate() {
            if pl[1] > pu[1] + tip_tol {
                return Err(GeometryError::InvalidShape(format!(
                    "lower wall above upper wall at x = {}",
                    pu[0]
                )));
            }
            // Sampled slope bound, via secants and the analytic slope.
            if i > 0 {
                for g in [&upper, &lower] {
                    let p = g.points[i];
                    let q = g.points[i - 1];
                    let secant = ((p[1] - q[1]) / (p[0] - q[0])).abs();
                    let analytic = g.graph.slope(p[0]).abs();
                    if secant.max(analytic) > lambda_lip + 1e-12 {
                        return Err(GeometryError::InvalidShape(format!(
                            "wall slope {} exceeds the bound {lambda_lip} near x = {}",
                            secant.max(analytic),
                            p[0]
                        )));
                    }
                }
            }
        }
        Ok(Self {
            a,
            b,
            lambda_lip,
            upper,
            lower,
        })
    }

    /// Symmetric sine lip `|y| <= slope * L / pi * sin(pi (x - a) / L)`.
    pub fn sine(a: f64, b: f64, slope: f64) -> Result<Self, GeometryError> {
        let upper = SineArch {
            a,
            b,
            slope,
            sign: 1.0,
        };
        let lower = SineArch { sign: -1.0, ..upper };
        Self::new(a, b, Arc::new(lower), Arc::new(upper), slope)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn lambda_lip(&self) -> f64 {
        self.lambda_lip
    }

    pub fn upper_graph(&self) -> &dyn BoundaryGraph {
        self.upper.graph.as_ref()
    }

    pub fn lower_graph(&self) -> &dyn BoundaryGraph {
        self.lower.graph.as_ref()
    }

    pub fn contains(&self, z: &Vector) -> bool {
        let x = z[0];
        x >= self.a
            && x <= self.b
            && z[1] <= self.upper.graph.value(x)
            && z[1] >= self.lower.graph.value(x)
    }

    pub fn nearest_upper(&self, z: &Vector) -> GraphHit {
        self.upper.nearest(z, self.a, self.b)
    }

    pub fn nearest_lower(&self, z: &Vector) -> GraphHit {
        self.lower.nearest(z, self.a, self.b)
    }

    /// Distances from `z` to the upper and lower walls.
    pub fn wall_distances(&self, z: &Vector) -> (f64, f64) {
        (self.nearest_upper(z).distance, self.nearest_lower(z).distance)
    }

    pub fn closest_boundary_point(&self, z: &Vector) -> (Vector, f64) {
        let up = self.nearest_upper(z);
        let low = self.nearest_lower(z);
        if up.distance <= low.distance {
            (up.point, up.distance)
        } else {
            (low.point, low.distance)
        }
    }

    pub fn signed_distance(&self, z: &Vector) -> f64 {
        let d = self.closest_boundary_point(z).1;
        if self.contains(z) {
            d
        } else {
            -d
        }
    }

    /// Inward unit normals of the walls passing within `eps` of `x`.
    pub fn active_normals(&self, x: &Vector, eps: f64) -> Vec<Vector> {
        let mut out = Vec::with_capacity(2);
        let up = self.nearest_upper(x);
        if up.distance <= eps {
            let s = self.upper.graph.slope(up.param);
            out.push(Vector::xy(s, -1.0) * (1.0 / (1.0 + s * s).sqrt()));
        }
        let low = self.nearest_lower(x);
        if low.distance <= eps {
            let s = self.lower.graph.slope(low.param);
            out.push(Vector::xy(-s, 1.0) * (1.0 / (1.0 + s * s).sqrt()));
        }
        out
    }

    /// Upper bound on wall curvature, from second differences on the sample grid.
    pub fn max_curvature(&self) -> f64 {
        let mut kappa: f64 = 0.0;
        for g in [&self.upper, &self.lower] {
            for w in g.points.windows(3) {
                let h = w[1][0] - w[0][0];
                let second = (w[2][1] - 2.0 * w[1][1] + w[0][1]) / (h * h);
                let slope = (w[2][1] - w[0][1]) / (2.0 * h);
                kappa = kappa.max(second.abs() / (1.0 + slope * slope).powf(1.5));
            }
        }
        kappa
    }

    /// Boundary samples of both walls (abscissa order, upper wall first).
    pub(crate) fn wall_samples(&self) -> impl Iterator<Item = (Vector, bool)> + '_ {
        self.upper
            .points
            .iter()
            .map(|p| (*p, true))
            .chain(self.lower.points.iter().map(|p| (*p, false)))
    }

    pub fn point_on_upper(&self, x: f64) -> Vector {
        self.upper.point_at(x)
    }

    pub fn point_on_lower(&self, x: f64) -> Vector {
        self.lower.point_at(x)
    }
}
