//! Admissibility certificates: the exterior-ball constant, the auxiliary
//! function `phi` with `grad phi . nu >= alpha`, and the boundary covering
//! with uniformly aligned normals.

use crate::linalg::Vector;

/// Smooth scalar function used by the second admissibility condition.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiSpec {
    /// `offset - |x - center|^2`.
    Radial { center: Vector, offset: f64 },
    /// `(phi_1(x) + shift_first) * (phi_2(y) + shift_second)` on `(x, y)`,
    /// with shifts chosen so that both factors are at least one on the closure.
    Product {
        first: Box<PhiSpec>,
        second: Box<PhiSpec>,
        split: usize,
        shift_first: f64,
        shift_second: f64,
    },
}

impl PhiSpec {
    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            PhiSpec::Radial { center, offset } => offset - (*x - *center).norm_sq(),
            PhiSpec::Product {
                first,
                second,
                split,
                shift_first,
                shift_second,
            } => {
                let (a, b) = x.split(*split);
                (first.value(&a) + shift_first) * (second.value(&b) + shift_second)
            }
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        match self {
            PhiSpec::Radial { center, .. } => (*center - *x) * 2.0,
            PhiSpec::Product {
                first,
                second,
                split,
                shift_first,
                shift_second,
            } => {
                let (a, b) = x.split(*split);
                let fa = first.value(&a) + shift_first;
                let fb = second.value(&b) + shift_second;
                Vector::concat(&(first.gradient(&a) * fb), &(second.gradient(&b) * fa))
            }
        }
    }
}

/// One ball of the boundary covering: every proximal normal at a boundary
/// point inside `B(center, 2 * radius)` has `nu . direction >= lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverBall {
    pub center: Vector,
    pub radius: f64,
    pub direction: Vector,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covering {
    Balls(Vec<CoverBall>),
    /// For bounded domains the covering condition follows from the `phi`
    /// condition; product domains rely on this instead of an explicit cover.
    ImpliedByPhi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityCertificate {
    pub c0: f64,
    pub phi: PhiSpec,
    pub alpha: f64,
    pub covering: Covering,
}

impl AdmissibilityCertificate {
    /// Radius `1 / (2 C0)` within which closest points are unique.
    pub fn reach(&self) -> f64 {
        if self.c0 == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (2.0 * self.c0)
        }
    }

    /// Smallest alignment constant over the covering, if explicit.
    pub fn lambda(&self) -> Option<f64> {
        match &self.covering {
            Covering::Balls(balls) => balls.iter().map(|b| b.lambda).reduce(f64::min),
            Covering::ImpliedByPhi => None,
        }
    }

    /// Covering radius `R`, if explicit.
    pub fn covering_radius(&self) -> Option<f64> {
        match &self.covering {
            Covering::Balls(balls) => balls.first().map(|b| b.radius),
            Covering::ImpliedByPhi => None,
        }
    }
}

/// Safety factor applied to sampled lower bounds (alpha, lambda) so that the
/// certificate holds between construction samples.
pub(crate) const SAMPLED_BOUND_MARGIN: f64 = 0.99;

/// Planar generators: midpoint of the smallest arc holding every direction.
/// Otherwise the normalized sum.
fn central_direction(gens: &[&Vector]) -> Option<Vector> {
    if gens.is_empty() {
        return None;
    }
    if gens[0].dim() != 2 {
        let mut sum = Vector::zeros(gens[0].dim());
        for g in gens {
            sum += **g;
        }
        return sum.normalized();
    }
    let mut angles: Vec<f64> = gens.iter().map(|g| g[1].atan2(g[0])).collect();
    angles.sort_by(f64::total_cmp);
    let n = angles.len();
    // The arc starts just after the widest gap between consecutive angles.
    let mut start = 0;
    let mut widest = angles[0] + std::f64::consts::TAU - angles[n - 1];
    for i in 1..n {
        let gap = angles[i] - angles[i - 1];
        if gap > widest {
            widest = gap;
            start = i;
        }
    }
    let end = if start == 0 { n - 1 } else { start - 1 };
    let mut span = angles[end] - angles[start];
    if span < 0.0 {
        span += std::f64::consts::TAU;
    }
    let mid = angles[start] + 0.5 * span;
    Some(Vector::xy(mid.cos(), mid.sin()))
}

/// Builds a covering from dense boundary samples `(point, generators)`.
///
/// Centers are taken every `stride` samples along each boundary piece so
/// consecutive centers are at most `radius` apart; the direction of each ball
/// is the central direction of the generators met within `2.2 * radius`.
pub(crate) fn build_covering(
    samples: &[(Vector, Vec<Vector>)],
    centers: &[Vector],
    radius: f64,
) -> Option<Vec<CoverBall>> {
    let mut balls = Vec::with_capacity(centers.len());
    for c in centers {
        let nearby: Vec<&Vector> = samples
            .iter()
            .filter(|(p, _)| p.dist(c) <= 2.2 * radius)
            .flat_map(|(_, gens)| gens.iter())
            .collect();
        let direction = central_direction(&nearby)?;
        let lambda = nearby
            .iter()
            .map(|g| g.dot(&direction))
            .fold(f64::INFINITY, f64::min);
        if !(lambda > 0.0) {
            return None;
        }
        balls.push(CoverBall {
            center: *c,
            radius,
            direction,
            lambda: SAMPLED_BOUND_MARGIN * lambda,
        });
    }
    let lambda = balls.iter().map(|b| b.lambda).fold(f64::INFINITY, f64::min);
    for b in &mut balls {
        b.lambda = lambda;
    }
    Some(balls)
}
