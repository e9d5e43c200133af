use crate::linalg::Vector;

use super::GeometryError;

/// A closed convex polygon given by counter-clockwise vertices.
#[derive(Debug, Clone)]
pub struct ConvexPolygon {
    vertices: Vec<Vector>,
    /// Inward unit normal of edge `i` (from vertex `i` to vertex `i + 1`).
    normals: Vec<Vector>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Vector>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidShape(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| v.dim() != 2 || !v.is_finite()) {
            return Err(GeometryError::InvalidShape(
                "polygon vertices must be finite planar points".into(),
            ));
        }
        let n = vertices.len();
        let mut normals = Vec::with_capacity(n);
        for i in 0..n {
            let e = vertices[(i + 1) % n] - vertices[i];
            let normal = e.perp().normalized().ok_or_else(|| {
                GeometryError::InvalidShape(format!("repeated vertex at index {i}"))
            })?;
            normals.push(normal);
        }
        // Strict left turns at every vertex: counter-clockwise, convex, simple
        // once the winding number is one.
        let mut total_turn = 0.0;
        for i in 0..n {
            let e0 = vertices[(i + 1) % n] - vertices[i];
            let e1 = vertices[(i + 2) % n] - vertices[(i + 1) % n];
            let cross = e0.cross(&e1);
            if cross <= 0.0 {
                return Err(GeometryError::InvalidShape(format!(
                    "vertex {} is not a strict counter-clockwise convex turn",
                    (i + 1) % n
                )));
            }
            total_turn += cross.atan2(e0.dot(&e1));
        }
        if (total_turn - std::f64::consts::TAU).abs() > 1e-6 {
            return Err(GeometryError::InvalidShape(
                "polygon winds more than once (not simple)".into(),
            ));
        }
        Ok(Self { vertices, normals })
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new(vec![
            Vector::xy(x0, y0),
            Vector::xy(x1, y0),
            Vector::xy(x1, y1),
            Vector::xy(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Vector] {
        &self.vertices
    }

    pub fn edge_normals(&self) -> &[Vector] {
        &self.normals
    }

    pub fn edge(&self, i: usize) -> (Vector, Vector) {
        (self.vertices[i], self.vertices[(i + 1) % self.vertices.len()])
    }

    /// Interior angle at vertex `i`, in radians.
    pub fn interior_angle(&self, i: usize) -> f64 {
        let n = self.vertices.len();
        let to_next = self.vertices[(i + 1) % n] - self.vertices[i];
        let to_prev = self.vertices[(i + n - 1) % n] - self.vertices[i];
        to_prev.cross(&to_next).abs().atan2(to_prev.dot(&to_next))
    }

    pub fn contains(&self, z: &Vector) -> bool {
        self.vertices
            .iter()
            .zip(&self.normals)
            .all(|(v, n)| (*z - *v).dot(n) >= 0.0)
    }

    /// Positive inside (distance to the boundary), negative outside (minus the
    /// distance to the polygon).
    pub fn signed_distance(&self, z: &Vector) -> f64 {
        let inside = self.min_line_distance(z);
        if inside >= 0.0 {
            inside
        } else {
            -self.closest_boundary_point(z).1
        }
    }

    fn min_line_distance(&self, z: &Vector) -> f64 {
        self.vertices
            .iter()
            .zip(&self.normals)
            .map(|(v, n)| (*z - *v).dot(n))
            .fold(f64::INFINITY, f64::min)
    }

    /// Nearest boundary point and its distance.
    pub fn closest_boundary_point(&self, z: &Vector) -> (Vector, f64) {
        let mut best = (self.vertices[0], f64::INFINITY);
        for i in 0..self.vertices.len() {
            let (a, b) = self.edge(i);
            let p = closest_on_segment(&a, &b, z);
            let d = p.dist(z);
            if d < best.1 {
                best = (p, d);
            }
        }
        best
    }

    pub fn project(&self, z: &Vector) -> Vector {
        if self.contains(z) {
            *z
        } else {
            self.closest_boundary_point(z).0
        }
    }

    /// Inward normals of every edge whose segment lies within `eps` of `x`.
    pub fn active_normals(&self, x: &Vector, eps: f64) -> Vec<Vector> {
        (0..self.vertices.len())
            .filter(|&i| {
                let (a, b) = self.edge(i);
                closest_on_segment(&a, &b, x).dist(x) <= eps
            })
            .map(|i| self.normals[i])
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(a.dist(b));
            }
        }
        d
    }

    pub fn centroid(&self) -> Vector {
        let mut c = Vector::zeros(2);
        for v in &self.vertices {
            c += *v;
        }
        c * (1.0 / self.vertices.len() as f64)
    }

    pub fn min_edge_length(&self) -> f64 {
        (0..self.vertices.len())
            .map(|i| {
                let (a, b) = self.edge(i);
                a.dist(&b)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn closest_on_segment(a: &Vector, b: &Vector, z: &Vector) -> Vector {
    let ab = *b - *a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return *a;
    }
    let t = ((*z - *a).dot(&ab) / len_sq).clamp(0.0, 1.0);
    *a + ab * t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_clockwise_and_degenerate_input() {
        let cw = vec![Vector::xy(0.0, 0.0), Vector::xy(0.0, 1.0), Vector::xy(1.0, 0.0)];
        assert!(ConvexPolygon::new(cw).is_err());
        let two = vec![Vector::xy(0.0, 0.0), Vector::xy(1.0, 0.0)];
        assert!(ConvexPolygon::new(two).is_err());
        let collinear = vec![
            Vector::xy(0.0, 0.0),
            Vector::xy(1.0, 0.0),
            Vector::xy(2.0, 0.0),
            Vector::xy(1.0, 1.0),
        ];
        assert!(ConvexPolygon::new(collinear).is_err());
    }

    #[test]
    fn rejects_self_overlapping_star() {
        // Pentagram: every turn is a left turn but it winds twice.
        let star: Vec<Vector> = (0..5)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_2 + k as f64 * 4.0 * std::f64::consts::PI / 5.0;
                Vector::xy(a.cos(), a.sin())
            })
            .collect();
        assert!(ConvexPolygon::new(star).is_err());
    }

    #[test]
    fn triangle_angles() {
        let t = ConvexPolygon::new(vec![
            Vector::xy(0.0, 0.0),
            Vector::xy(4.0, 0.0),
            Vector::xy(1.0, 1.0),
        ])
        .unwrap();
        assert!((t.interior_angle(0) - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((t.interior_angle(1) - (1.0f64 / 3.0).atan()).abs() < 1e-15);
    }

    #[test]
    fn signed_distance_inside_and_outside() {
        let r = ConvexPolygon::rectangle(-1.0, 1.0, 0.0, 2.0).unwrap();
        assert!((r.signed_distance(&Vector::xy(0.0, 1.0)) - 1.0).abs() < 1e-15);
        assert!((r.signed_distance(&Vector::xy(2.0, 3.0)) + 2f64.sqrt()).abs() < 1e-15);
    }
}
