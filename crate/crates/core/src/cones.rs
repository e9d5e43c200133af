//! Tangent cones `{u : u . n_i >= 0}` and exact projection onto them by
//! active-set enumeration.

use thiserror::Error;

use crate::geometry::Domain;
use crate::linalg::Vector;

/// Normals `n_i . n_j <= -1 + ANTIPODAL_TOL` make the cone degenerate.
pub const ANTIPODAL_TOL: f64 = 1e-9;
pub const MAX_CONSTRAINTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("point is farther than eps_bdry from the closure (signed distance {0})")]
    OutsideDomain(f64),
    #[error("normals {0} and {1} are antipodal: the cone has empty interior")]
    DegenerateCone(usize, usize),
    #[error("vector of dimension {got} does not match cone dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("too many constraints: {0} > {MAX_CONSTRAINTS}")]
    TooManyConstraints(usize),
    #[error("normal {0} is not a unit vector")]
    NotUnit(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec {
    base: Vector,
    normals: Vec<Vector>,
}

impl ConeSpec {
    pub fn new(base: Vector, normals: Vec<Vector>) -> Result<Self, ConeError> {
        if normals.len() > MAX_CONSTRAINTS {
            return Err(ConeError::TooManyConstraints(normals.len()));
        }
        for (i, n) in normals.iter().enumerate() {
            if n.dim() != base.dim() {
                return Err(ConeError::DimensionMismatch {
                    expected: base.dim(),
                    got: n.dim(),
                });
            }
            if (n.norm() - 1.0).abs() > 1e-9 {
                return Err(ConeError::NotUnit(i));
            }
        }
        Ok(Self { base, normals })
    }

    /// The whole space, i.e. the tangent cone at an interior point.
    pub fn whole(base: Vector) -> Self {
        Self {
            base,
            normals: Vec::new(),
        }
    }

    pub fn base(&self) -> &Vector {
        &self.base
    }

    pub fn normals(&self) -> &[Vector] {
        &self.normals
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn is_whole_space(&self) -> bool {
        self.normals.is_empty()
    }

    pub fn contains(&self, u: &Vector, tol: f64) -> bool {
        self.normals.iter().all(|n| u.dot(n) >= -tol)
    }

    fn check_degenerate(&self) -> Result<(), ConeError> {
        for i in 0..self.normals.len() {
            for j in i + 1..self.normals.len() {
                if self.normals[i].dot(&self.normals[j]) <= -1.0 + ANTIPODAL_TOL {
                    return Err(ConeError::DegenerateCone(i, j));
                }
            }
        }
        Ok(())
    }
}

/// Tangent cone at `x`: the half-spaces of every proximal normal generator
/// of a boundary piece within `eps_bdry` of `x`.
pub fn tangent_cone(domain: &Domain, x: &Vector, eps_bdry: f64) -> Result<ConeSpec, ConeError> {
    if x.dim() != domain.dim() {
        return Err(ConeError::DimensionMismatch {
            expected: domain.dim(),
            got: x.dim(),
        });
    }
    let s = domain.signed_distance(x);
    if s < -eps_bdry {
        return Err(ConeError::OutsideDomain(s));
    }
    if s > eps_bdry {
        return Ok(ConeSpec::whole(*x));
    }
    ConeSpec::new(*x, domain.active_normals(x, eps_bdry))
}

/// Nearest point of the cone to `v`.
///
/// Every subset of constraints is tried as the active set: `v` is projected
/// onto the orthogonal complement of the selected normals, infeasible
/// candidates are dropped and the nearest survivor wins. Equal distances go
/// to the lexicographically smallest index set.
pub fn project_onto_cone(cone: &ConeSpec, v: &Vector) -> Result<Vector, ConeError> {
    if v.dim() != cone.dim() {
        return Err(ConeError::DimensionMismatch {
            expected: cone.dim(),
            got: v.dim(),
        });
    }
    if cone.normals.is_empty() {
        return Ok(*v);
    }
    cone.check_degenerate()?;
    if cone.contains(v, 0.0) {
        return Ok(*v);
    }
    let k = cone.normals.len();
    let tol = 1e-12 * (1.0 + v.norm());
    let mut best: Option<(f64, Vec<usize>, Vector)> = None;
    for mask in 0u32..(1 << k) {
        let active: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let u = project_out(v, active.iter().map(|&i| &cone.normals[i]));
        if !cone.contains(&u, tol) {
            continue;
        }
        let d = u.dist(v);
        let better = match &best {
            None => true,
            Some((bd, bset, _)) => d < *bd || (d == *bd && active < *bset),
        };
        if better {
            best = Some((d, active, u));
        }
    }
    // The apex (all constraints active) is always feasible.
    let (_, _, u) = best.expect("apex candidate is feasible");
    Ok(u)
}

/// Removes from `v` its component in the span of `normals`.
fn project_out<'a>(v: &Vector, normals: impl Iterator<Item = &'a Vector>) -> Vector {
    let mut basis: Vec<Vector> = Vec::with_capacity(MAX_CONSTRAINTS);
    for n in normals {
        let mut q = *n;
        for b in &basis {
            q -= *b * q.dot(b);
        }
        if let Some(q) = q.normalized().filter(|_| q.norm() > 1e-10) {
            basis.push(q);
        }
    }
    let mut u = *v;
    for b in &basis {
        u -= *b * u.dot(b);
    }
    u
}

/// Blockwise projection onto `cone_a x cone_b`.
pub fn project_product(
    cone_a: &ConeSpec,
    cone_b: &ConeSpec,
    v: &Vector,
) -> Result<Vector, ConeError> {
    let expected = cone_a.dim() + cone_b.dim();
    if v.dim() != expected {
        return Err(ConeError::DimensionMismatch {
            expected,
            got: v.dim(),
        });
    }
    let (xi, eta) = v.split(cone_a.dim());
    Ok(Vector::concat(
        &project_onto_cone(cone_a, &xi)?,
        &project_onto_cone(cone_b, &eta)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Vector, b: &Vector) -> bool {
        a.dist(b) < 1e-12
    }

    #[test]
    fn whole_space_is_identity() {
        let c = ConeSpec::whole(Vector::xy(0.0, 0.0));
        assert_eq!(project_onto_cone(&c, &Vector::xy(3.0, -1.0)).unwrap(), Vector::xy(3.0, -1.0));
    }

    #[test]
    fn half_space() {
        let c = ConeSpec::new(Vector::xy(0.0, 0.0), vec![Vector::xy(0.0, 1.0)]).unwrap();
        assert!(close(&project_onto_cone(&c, &Vector::xy(1.0, -2.0)).unwrap(), &Vector::xy(1.0, 0.0)));
    }

    #[test]
    fn wedge_apex() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = ConeSpec::new(
            Vector::xy(0.0, 0.0),
            vec![Vector::xy(0.0, 1.0), Vector::xy(-s, s)],
        )
        .unwrap();
        assert!(close(&project_onto_cone(&c, &Vector::xy(1.0, -1.0)).unwrap(), &Vector::xy(0.0, 0.0)));
    }

    #[test]
    fn antipodal_normals_are_degenerate() {
        let c = ConeSpec::new(
            Vector::xy(0.0, 0.0),
            vec![Vector::xy(0.0, 1.0), Vector::xy(0.0, -1.0)],
        )
        .unwrap();
        assert_eq!(
            project_onto_cone(&c, &Vector::xy(1.0, -1.0)),
            Err(ConeError::DegenerateCone(0, 1))
        );
    }

    #[test]
    fn rectangle_tangent_cones() {
        let r = Domain::rectangle(-1.0, 1.0, 0.0, 2.0).unwrap();
        assert!(tangent_cone(&r, &Vector::xy(0.0, 1.0), 1e-9).unwrap().is_whole_space());
        let corner = tangent_cone(&r, &Vector::xy(1.0, 0.0), 1e-9).unwrap();
        assert_eq!(corner.normals().len(), 2);
        assert!(corner.normals().contains(&Vector::xy(-1.0, 0.0)));
        assert!(corner.normals().contains(&Vector::xy(0.0, 1.0)));
        assert!(matches!(
            tangent_cone(&r, &Vector::xy(3.0, 1.0), 1e-9),
            Err(ConeError::OutsideDomain(_))
        ));
    }

    #[test]
    fn product_cone_blocks() {
        let r = Domain::rectangle(-1.0, 1.0, 0.0, 2.0).unwrap();
        let p = Domain::product(r.clone(), r).unwrap();
        let c = tangent_cone(&p, &Vector::from_slice(&[1.0, 0.0, 0.0, 1.0]), 1e-9).unwrap();
        assert_eq!(c.normals().len(), 2);
        for n in c.normals() {
            assert_eq!(n[2], 0.0);
            assert_eq!(n[3], 0.0);
        }
    }

    #[test]
    fn product_projection_is_blockwise() {
        let a = ConeSpec::new(Vector::xy(0.0, 0.0), vec![Vector::xy(0.0, 1.0)]).unwrap();
        let b = ConeSpec::whole(Vector::xy(0.0, 0.0));
        let v = Vector::from_slice(&[1.0, -2.0, 5.0, 5.0]);
        assert!(close(
            &project_product(&a, &b, &v).unwrap(),
            &Vector::from_slice(&[1.0, 0.0, 5.0, 5.0])
        ));
        let both = project_product(&b, &b, &v).unwrap();
        assert_eq!(both, v);
    }
}
