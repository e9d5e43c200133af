//! Admissible domains: membership, closest-point projection onto the
//! closure, inward proximal normals and product domains.
//!
//! Every domain carries an [`AdmissibilityCertificate`] built at construction
//! time. The certificate values are constructed (the exterior-ball constant,
//! an auxiliary `phi`, a boundary covering) and then checked by sampling in
//! the tests; construction fails with [`GeometryError::NotAdmissible`] when
//! the sampled bounds come out non-positive.

mod certificate;
mod lip;
mod polygon;

use rand::{Rng, RngExt};
use thiserror::Error;

use crate::linalg::Vector;

pub use certificate::{AdmissibilityCertificate, CoverBall, Covering, PhiSpec};
pub use lip::{BoundaryGraph, GraphHit, LipDomain, SineArch, GRAPH_SAMPLES, REFINE_STEPS};
pub use polygon::ConvexPolygon;

use certificate::{build_covering, SAMPLED_BOUND_MARGIN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point at distance {distance} outside the domain is beyond half the reach {reach}")]
    OutOfReach { distance: f64, reach: f64 },
    #[error("point is not within eps_bdry of the boundary")]
    NotOnBoundary,
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("domain is not admissible: {0}")]
    NotAdmissible(String),
    #[error("expected a point of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Relative boundary tolerance: `eps_bdry = 1e-9 * diameter`.
pub const DEFAULT_EPS_REL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Interval,
    ConvexPolygon,
    Disc,
    LipDomain,
    Product,
}

#[derive(Debug, Clone)]
pub enum Shape {
    /// `[lo, hi]`; `hi` may be `+inf` for a half-line.
    Interval { lo: f64, hi: f64 },
    Polygon(ConvexPolygon),
    Disc { center: Vector, radius: f64 },
    Lip(LipDomain),
    Product(Box<Domain>, Box<Domain>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointTag {
    Interior,
    Boundary,
    ExteriorNear,
    ExteriorFar,
}

/// Classification of a point relative to a domain.
///
/// `signed_distance` is the distance to the boundary, positive inside and
/// negative outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointClass {
    pub tag: PointTag,
    pub signed_distance: f64,
}

/// An admissible closed region with its certificate.
#[derive(Debug, Clone)]
pub struct Domain {
    shape: Shape,
    certificate: AdmissibilityCertificate,
    diameter: f64,
    eps_bdry: f64,
}

impl Domain {
    fn build(shape: Shape) -> Result<Self, GeometryError> {
        let diameter = shape_diameter(&shape);
        let scale = if diameter.is_finite() { diameter } else { 1.0 };
        let eps_bdry = DEFAULT_EPS_REL * scale;
        let certificate = certify(&shape, eps_bdry)?;
        Ok(Self {
            shape,
            certificate,
            diameter,
            eps_bdry,
        })
    }

    /// `[lo, hi]`, with `hi = f64::INFINITY` allowed.
    pub fn interval(lo: f64, hi: f64) -> Result<Self, GeometryError> {
        if !lo.is_finite() || !(lo < hi) {
            return Err(GeometryError::InvalidShape(format!(
                "interval needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        Self::build(Shape::Interval { lo, hi })
    }

    /// `[lo, +inf)`.
    pub fn half_line(lo: f64) -> Result<Self, GeometryError> {
        Self::interval(lo, f64::INFINITY)
    }

    pub fn polygon(vertices: Vec<Vector>) -> Result<Self, GeometryError> {
        Self::build(Shape::Polygon(ConvexPolygon::new(vertices)?))
    }

    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::build(Shape::Polygon(ConvexPolygon::rectangle(x0, x1, y0, y1)?))
    }

    /// The obtuse triangle `(0,0), (4,0), (1,1)`.
    pub fn default_triangle() -> Self {
        Self::polygon(vec![
            Vector::xy(0.0, 0.0),
            Vector::xy(4.0, 0.0),
            Vector::xy(1.0, 1.0),
        ])
        .expect("default triangle is admissible")
    }

    pub fn disc(center: Vector, radius: f64) -> Result<Self, GeometryError> {
        if center.dim() != 2 || !center.is_finite() || !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::InvalidShape(format!(
                "disc needs a planar center and a positive radius, got {center} and {radius}"
            )));
        }
        Self::build(Shape::Disc { center, radius })
    }

    pub fn lip(lip: LipDomain) -> Result<Self, GeometryError> {
        Self::build(Shape::Lip(lip))
    }

    /// Lip domain between `-0.5 sin(pi x)/pi` and `0.5 sin(pi x)/pi` on `[0, 1]`.
    pub fn default_lip() -> Self {
        Self::lip(LipDomain::sine(0.0, 1.0, 0.5).expect("default lip walls"))
            .expect("default lip domain is admissible")
    }

    /// Product `first x second` with the certificate assembled from the factors.
    pub fn product(first: Domain, second: Domain) -> Result<Self, GeometryError> {
        if first.dim() + second.dim() > crate::linalg::MAX_DIM {
            return Err(GeometryError::InvalidShape(format!(
                "product dimension {} exceeds {}",
                first.dim() + second.dim(),
                crate::linalg::MAX_DIM
            )));
        }
        if !first.diameter.is_finite() || !second.diameter.is_finite() {
            return Err(GeometryError::NotAdmissible(
                "product factors must be bounded".into(),
            ));
        }
        let certificate = product_certificate(&first, &second)?;
        let diameter = first.diameter.hypot(second.diameter);
        let eps_bdry = first.eps_bdry.min(second.eps_bdry);
        Ok(Self {
            shape: Shape::Product(Box::new(first), Box::new(second)),
            certificate,
            diameter,
            eps_bdry,
        })
    }

    pub fn kind(&self) -> DomainKind {
        match self.shape {
            Shape::Interval { .. } => DomainKind::Interval,
            Shape::Polygon(_) => DomainKind::ConvexPolygon,
            Shape::Disc { .. } => DomainKind::Disc,
            Shape::Lip(_) => DomainKind::LipDomain,
            Shape::Product(..) => DomainKind::Product,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn certificate(&self) -> &AdmissibilityCertificate {
        &self.certificate
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Interval { .. } => 1,
            Shape::Polygon(_) | Shape::Disc { .. } | Shape::Lip(_) => 2,
            Shape::Product(a, b) => a.dim() + b.dim(),
        }
    }

    /// Diameter of the closure (`inf` for the half-line).
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Length scale: the diameter when finite, one otherwise.
    pub fn scale(&self) -> f64 {
        if self.diameter.is_finite() {
            self.diameter
        } else {
            1.0
        }
    }

    pub fn eps_bdry(&self) -> f64 {
        self.eps_bdry
    }

    pub fn reach(&self) -> f64 {
        self.certificate.reach()
    }

    pub fn as_lip(&self) -> Option<&LipDomain> {
        match &self.shape {
            Shape::Lip(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_polygon(&self) -> Option<&ConvexPolygon> {
        match &self.shape {
            Shape::Polygon(p) => Some(p),
            _ => None,
        }
    }

    pub fn factors(&self) -> Option<(&Domain, &Domain)> {
        match &self.shape {
            Shape::Product(a, b) => Some((a, b)),
            _ => None,
        }
    }

    fn check_dim(&self, z: &Vector) -> Result<(), GeometryError> {
        if z.dim() == self.dim() {
            Ok(())
        } else {
            Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: z.dim(),
            })
        }
    }

    /// Exact membership in the closure.
    pub fn contains(&self, z: &Vector) -> bool {
        match &self.shape {
            Shape::Interval { lo, hi } => z[0] >= *lo && z[0] <= *hi,
            Shape::Polygon(p) => p.contains(z),
            Shape::Disc { center, radius } => (*z - *center).norm_sq() <= radius * radius,
            Shape::Lip(l) => l.contains(z),
            Shape::Product(a, b) => {
                let (x, y) = z.split(a.dim());
                a.contains(&x) && b.contains(&y)
            }
        }
    }

    /// Distance to the boundary, positive inside and negative outside.
    pub fn signed_distance(&self, z: &Vector) -> f64 {
        match &self.shape {
            Shape::Interval { lo, hi } => (z[0] - lo).min(hi - z[0]),
            Shape::Polygon(p) => p.signed_distance(z),
            Shape::Disc { center, radius } => radius - z.dist(center),
            Shape::Lip(l) => l.signed_distance(z),
            Shape::Product(a, b) => {
                let (x, y) = z.split(a.dim());
                let sa = a.signed_distance(&x);
                let sb = b.signed_distance(&y);
                if sa >= 0.0 && sb >= 0.0 {
                    sa.min(sb)
                } else {
                    -(sa.min(0.0).powi(2) + sb.min(0.0).powi(2)).sqrt()
                }
            }
        }
    }

    /// Classifies `z` with boundary tolerance `eps_bdry > 0`.
    pub fn classify_point(&self, z: &Vector, eps_bdry: f64) -> PointClass {
        assert!(eps_bdry > 0.0, "eps_bdry must be positive");
        let s = self.signed_distance(z);
        let tag = if s.abs() <= eps_bdry {
            PointTag::Boundary
        } else if s > 0.0 {
            PointTag::Interior
        } else if -s > 0.5 * self.reach() {
            PointTag::ExteriorFar
        } else {
            PointTag::ExteriorNear
        };
        PointClass {
            tag,
            signed_distance: s,
        }
    }

    /// Closest point of the closure. Product domains project componentwise.
    pub fn project_to_closure(&self, z: &Vector) -> Result<Vector, GeometryError> {
        self.check_dim(z)?;
        self.project_unchecked(z)
    }

    pub(crate) fn project_unchecked(&self, z: &Vector) -> Result<Vector, GeometryError> {
        match &self.shape {
            Shape::Interval { lo, hi } => Ok(Vector::scalar(z[0].clamp(*lo, *hi))),
            Shape::Polygon(p) => Ok(p.project(z)),
            Shape::Disc { center, radius } => {
                let r = *z - *center;
                let n = r.norm();
                if n <= *radius {
                    Ok(*z)
                } else {
                    Ok(*center + r * (radius / n))
                }
            }
            Shape::Lip(l) => {
                if l.contains(z) {
                    return Ok(*z);
                }
                let (p, d) = l.closest_boundary_point(z);
                let reach = self.certificate.reach();
                if d > 0.5 * reach {
                    return Err(GeometryError::OutOfReach { distance: d, reach });
                }
                Ok(p)
            }
            Shape::Product(a, b) => {
                let (x, y) = z.split(a.dim());
                Ok(Vector::concat(
                    &a.project_unchecked(&x)?,
                    &b.project_unchecked(&y)?,
                ))
            }
        }
    }

    /// Extreme generators of the inward proximal normal cone at a boundary
    /// point: one per smooth boundary piece within `eps_bdry` of `x`.
    pub fn proximal_normal_generators(
        &self,
        x: &Vector,
        eps_bdry: f64,
    ) -> Result<Vec<Vector>, GeometryError> {
        self.check_dim(x)?;
        let class = self.classify_point(x, eps_bdry);
        if class.tag != PointTag::Boundary {
            return Err(GeometryError::NotOnBoundary);
        }
        Ok(self.active_normals(x, eps_bdry))
    }

    /// Generators of every boundary piece within `eps` of `x` (empty when none).
    pub(crate) fn active_normals(&self, x: &Vector, eps: f64) -> Vec<Vector> {
        match &self.shape {
            Shape::Interval { lo, hi } => {
                let mut out = Vec::new();
                if (x[0] - lo).abs() <= eps {
                    out.push(Vector::scalar(1.0));
                }
                if (hi - x[0]).abs() <= eps {
                    out.push(Vector::scalar(-1.0));
                }
                out
            }
            Shape::Polygon(p) => p.active_normals(x, eps),
            Shape::Disc { center, radius } => {
                let r = *center - *x;
                match r.normalized() {
                    Some(n) if (radius - r.norm()).abs() <= eps => vec![n],
                    _ => Vec::new(),
                }
            }
            Shape::Lip(l) => l.active_normals(x, eps),
            Shape::Product(a, b) => {
                let (px, py) = x.split(a.dim());
                let mut out: Vec<Vector> = a
                    .active_normals(&px, eps)
                    .iter()
                    .map(|n| Vector::embed_first(n, b.dim()))
                    .collect();
                out.extend(
                    b.active_normals(&py, eps)
                        .iter()
                        .map(|n| Vector::embed_second(a.dim(), n)),
                );
                out
            }
        }
    }

    /// Axis-aligned bounding box. The half-line is truncated to length ten.
    pub fn bounding_box(&self) -> (Vector, Vector) {
        match &self.shape {
            Shape::Interval { lo, hi } => (
                Vector::scalar(*lo),
                Vector::scalar(if hi.is_finite() { *hi } else { lo + 10.0 }),
            ),
            Shape::Polygon(p) => {
                let mut lo = Vector::xy(f64::INFINITY, f64::INFINITY);
                let mut hi = Vector::xy(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for v in p.vertices() {
                    for i in 0..2 {
                        lo[i] = lo[i].min(v[i]);
                        hi[i] = hi[i].max(v[i]);
                    }
                }
                (lo, hi)
            }
            Shape::Disc { center, radius } => (
                *center - Vector::xy(*radius, *radius),
                *center + Vector::xy(*radius, *radius),
            ),
            Shape::Lip(l) => {
                let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
                for (p, _) in l.wall_samples() {
                    ymin = ymin.min(p[1]);
                    ymax = ymax.max(p[1]);
                }
                (Vector::xy(l.a(), ymin), Vector::xy(l.b(), ymax))
            }
            Shape::Product(a, b) => {
                let (alo, ahi) = a.bounding_box();
                let (blo, bhi) = b.bounding_box();
                (Vector::concat(&alo, &blo), Vector::concat(&ahi, &bhi))
            }
        }
    }

    /// Uniform sample from the closure (truncated for the half-line), by
    /// rejection from the bounding box.
    pub fn sample_closure<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let (lo, hi) = self.bounding_box();
        loop {
            let mut z = Vector::zeros(self.dim());
            for i in 0..z.dim() {
                z[i] = lo[i] + (hi[i] - lo[i]) * rng.random::<f64>();
            }
            if self.contains(&z) {
                return z;
            }
        }
    }

    /// Boundary points paired with their proximal normal generators, roughly
    /// `per_piece` per smooth boundary piece.
    pub fn boundary_samples(&self, per_piece: usize) -> Vec<(Vector, Vec<Vector>)> {
        let per_piece = per_piece.max(2);
        match &self.shape {
            Shape::Interval { lo, hi } => {
                let mut out = vec![(Vector::scalar(*lo), vec![Vector::scalar(1.0)])];
                if hi.is_finite() {
                    out.push((Vector::scalar(*hi), vec![Vector::scalar(-1.0)]));
                }
                out
            }
            Shape::Polygon(p) => {
                let n = p.vertices().len();
                let mut out = Vec::with_capacity(n * per_piece);
                for i in 0..n {
                    let (a, b) = p.edge(i);
                    let prev = p.edge_normals()[(i + n - 1) % n];
                    out.push((a, vec![prev, p.edge_normals()[i]]));
                    for k in 1..per_piece {
                        let t = k as f64 / per_piece as f64;
                        out.push((a + (b - a) * t, vec![p.edge_normals()[i]]));
                    }
                }
                out
            }
            Shape::Disc { center, radius } => (0..per_piece)
                .map(|k| {
                    let th = std::f64::consts::TAU * k as f64 / per_piece as f64;
                    let u = Vector::xy(th.cos(), th.sin());
                    (*center + u * *radius, vec![-u])
                })
                .collect(),
            Shape::Lip(l) => {
                let stride = (GRAPH_SAMPLES / per_piece).max(1);
                l.wall_samples()
                    .enumerate()
                    .filter(|(i, _)| (i % GRAPH_SAMPLES) % stride == 0 || (i + 1) % GRAPH_SAMPLES == 0)
                    .map(|(_, (p, _))| (p, l.active_normals(&p, self.eps_bdry)))
                    .collect()
            }
            Shape::Product(a, b) => {
                let ca = a.chebyshev_center();
                let cb = b.chebyshev_center();
                let sa = a.boundary_samples(per_piece);
                let sb = b.boundary_samples(per_piece);
                let mut out = Vec::new();
                for (p, g) in &sa {
                    out.push((
                        Vector::concat(p, &cb),
                        g.iter().map(|n| Vector::embed_first(n, b.dim())).collect(),
                    ));
                }
                for (q, g) in &sb {
                    out.push((
                        Vector::concat(&ca, q),
                        g.iter().map(|n| Vector::embed_second(a.dim(), n)).collect(),
                    ));
                }
                for ((p, ga), (q, gb)) in sa.iter().zip(sb.iter().rev()) {
                    let mut gens: Vec<Vector> =
                        ga.iter().map(|n| Vector::embed_first(n, b.dim())).collect();
                    gens.extend(gb.iter().map(|n| Vector::embed_second(a.dim(), n)));
                    out.push((Vector::concat(p, q), gens));
                }
                out
            }
        }
    }

    /// Interior reference point used as the center of the radial `phi`.
    pub fn chebyshev_center(&self) -> Vector {
        match &self.shape {
            Shape::Interval { lo, hi } => {
                Vector::scalar(if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 })
            }
            Shape::Polygon(p) => p.centroid(),
            Shape::Disc { center, .. } => *center,
            Shape::Lip(l) => {
                let mid = 0.5 * (l.a() + l.b());
                let y = 0.5 * (l.upper_graph().value(mid) + l.lower_graph().value(mid));
                Vector::xy(mid, y)
            }
            Shape::Product(a, b) => Vector::concat(&a.chebyshev_center(), &b.chebyshev_center()),
        }
    }
}

fn shape_diameter(shape: &Shape) -> f64 {
    match shape {
        Shape::Interval { lo, hi } => hi - lo,
        Shape::Polygon(p) => p.diameter(),
        Shape::Disc { radius, .. } => 2.0 * radius,
        Shape::Lip(l) => {
            let pts: Vec<Vector> = l.wall_samples().step_by(16).map(|(p, _)| p).collect();
            let mut d: f64 = 0.0;
            for (i, a) in pts.iter().enumerate() {
                for b in &pts[i + 1..] {
                    d = d.max(a.dist(b));
                }
            }
            d
        }
        Shape::Product(a, b) => a.diameter().hypot(b.diameter()),
    }
}

/// Builds the certificate of a non-product shape.
fn certify(shape: &Shape, eps_bdry: f64) -> Result<AdmissibilityCertificate, GeometryError> {
    // A throwaway domain gives access to sampling helpers; the certificate
    // field is a placeholder until it is replaced below.
    let placeholder = AdmissibilityCertificate {
        c0: 0.0,
        phi: PhiSpec::Radial {
            center: Vector::zeros(1),
            offset: 0.0,
        },
        alpha: 1.0,
        covering: Covering::ImpliedByPhi,
    };
    let probe = Domain {
        shape: shape.clone(),
        certificate: placeholder,
        diameter: shape_diameter(shape),
        eps_bdry,
    };
    let center = probe.chebyshev_center();
    let phi = PhiSpec::Radial { center, offset: 0.0 };

    let (c0, radius, per_piece) = match shape {
        Shape::Interval { lo, hi } => {
            let r = if hi.is_finite() { 0.25 * (hi - lo) } else { 1.0 };
            (0.0, r, 2)
        }
        Shape::Polygon(p) => (0.0, p.min_edge_length() / 8.0, 256),
        Shape::Disc { radius, .. } => (0.0, radius / 8.0, 1024),
        Shape::Lip(l) => (1.01 * l.max_curvature(), (l.b() - l.a()) / 64.0, GRAPH_SAMPLES),
        Shape::Product(..) => unreachable!("product certificates are assembled from factors"),
    };
    let samples = probe.boundary_samples(per_piece);

    let mut alpha = f64::INFINITY;
    for (x, gens) in &samples {
        if gens.is_empty() {
            return Err(GeometryError::NotAdmissible(format!(
                "no proximal normal found at boundary sample {x}"
            )));
        }
        let g = phi.gradient(x);
        for n in gens {
            alpha = alpha.min(g.dot(n));
        }
    }
    if !(alpha > 0.0) {
        return Err(GeometryError::NotAdmissible(format!(
            "radial phi gives grad(phi).nu >= {alpha}, not positive"
        )));
    }

    let centers = covering_centers(&samples, radius);
    let balls = build_covering(&samples, &centers, radius).ok_or_else(|| {
        GeometryError::NotAdmissible("no covering with uniformly aligned normals".into())
    })?;

    Ok(AdmissibilityCertificate {
        c0,
        phi,
        alpha: SAMPLED_BOUND_MARGIN * alpha,
        covering: Covering::Balls(balls),
    })
}

/// Greedy subsequence of boundary samples, consecutive picks at most
/// `radius / 2` apart, so balls of radius `radius` cover every sample.
fn covering_centers(samples: &[(Vector, Vec<Vector>)], radius: f64) -> Vec<Vector> {
    let mut centers: Vec<Vector> = Vec::new();
    for (p, _) in samples {
        if centers.iter().all(|c| c.dist(p) > 0.5 * radius) {
            centers.push(*p);
        }
    }
    centers
}

fn product_certificate(
    first: &Domain,
    second: &Domain,
) -> Result<AdmissibilityCertificate, GeometryError> {
    let shift = |d: &Domain| {
        // phi >= 1 on the closure; the minimum of a radial phi over a bounded
        // closure is attained on the boundary.
        let min_phi = d
            .boundary_samples(256)
            .iter()
            .map(|(p, _)| d.certificate.phi.value(p))
            .fold(f64::INFINITY, f64::min);
        let margin = 0.01 * (min_phi.abs() + 1.0);
        1.0 - min_phi + margin
    };
    let phi = PhiSpec::Product {
        first: Box::new(first.certificate.phi.clone()),
        second: Box::new(second.certificate.phi.clone()),
        split: first.dim(),
        shift_first: shift(first),
        shift_second: shift(second),
    };
    let alpha = first.certificate.alpha.min(second.certificate.alpha);
    if !(alpha > 0.0) {
        return Err(GeometryError::NotAdmissible(
            "factor certificates must have positive alpha".into(),
        ));
    }
    Ok(AdmissibilityCertificate {
        c0: first.certificate.c0.max(second.certificate.c0),
        phi,
        alpha,
        covering: Covering::ImpliedByPhi,
    })
}

/// Same as [`Domain::product`].
pub fn make_product(first: Domain, second: Domain) -> Result<Domain, GeometryError> {
    Domain::product(first, second)
}
