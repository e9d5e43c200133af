use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rsde::cones::tangent_cone;
use rsde::geometry::{Domain, PointTag};
use rsde::Vector;

fn planar_domains() -> Vec<Domain> {
    vec![
        Domain::rectangle(-1.0, 1.0, 0.0, 2.0).unwrap(),
        Domain::default_triangle(),
        Domain::disc(Vector::xy(0.5, -0.5), 2.0).unwrap(),
        Domain::default_lip(),
    ]
}

#[test]
fn certificates_hold_on_boundary_samples() {
    for d in planar_domains() {
        let cert = d.certificate().clone();
        assert!(cert.alpha > 0.0 && cert.c0 >= 0.0);
        for (z, normals) in d.boundary_samples(64) {
            assert!(!normals.is_empty(), "{z}");
            let g = cert.phi.gradient(&z);
            for n in &normals {
                assert!((n.norm() - 1.0).abs() < 1e-9);
                assert!(g.dot(n) >= cert.alpha - 1e-9, "{:?} at {z}: {} < {}", d.kind(), g.dot(n), cert.alpha);
            }
        }
    }
}

#[test]
fn projection_lands_on_the_closure_and_is_nearest() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in planar_domains() {
        let (lo, hi) = d.bounding_box();
        let reach = d.reach().min(1.0);
        for _ in 0..500 {
            let inside = d.sample_closure(&mut rng);
            let dir = Vector::xy(rand::RngExt::random_range(&mut rng, -1.0..1.0), rand::RngExt::random_range(&mut rng, -1.0..1.0));
            let z = inside + dir * (0.4 * reach);
            let Ok(p) = d.project_to_closure(&z) else { continue };
            assert!(d.signed_distance(&p) >= -d.eps_bdry());
            assert!(p.dist(&z) <= z.dist(&inside) + 1e-9);
            if d.contains(&z) {
                assert!(p.dist(&z) < 1e-12);
            }
            for k in 0..2 {
                assert!(p[k] >= lo[k] - 1e-9 && p[k] <= hi[k] + 1e-9);
            }
        }
    }
}

#[test]
fn classification_matches_signed_distance() {
    let d = Domain::rectangle(-1.0, 1.0, 0.0, 2.0).unwrap();
    assert_eq!(d.classify_point(&Vector::xy(0.0, 1.0), 1e-9).tag, PointTag::Interior);
    assert_eq!(d.classify_point(&Vector::xy(1.0, 0.0), 1e-9).tag, PointTag::Boundary);
    assert!(matches!(d.classify_point(&Vector::xy(3.0, 1.0), 1e-9).tag, PointTag::ExteriorNear | PointTag::ExteriorFar));
}

#[test]
fn proximal_normals_are_polar_to_the_tangent_cone() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in planar_domains() {
        for (z, normals) in d.boundary_samples(16) {
            let cone = tangent_cone(&d, &z, 1e-7).unwrap();
            for _ in 0..20 {
                let v = Vector::xy(rand::RngExt::random_range(&mut rng, -1.0..1.0), rand::RngExt::random_range(&mut rng, -1.0..1.0));
                if cone.contains(&v, 0.0) {
                    for n in &normals {
                        assert!(v.dot(n) >= -1e-6, "{z}: tangent {v} against normal {n}");
                    }
                }
            }
        }
    }
}

#[test]
fn product_domains_split_into_factors() {
    let d = Domain::product(Domain::rectangle(0.0, 1.0, 0.0, 1.0).unwrap(), Domain::rectangle(0.0, 1.0, 0.0, 1.0).unwrap()).unwrap();
    assert_eq!(d.dim(), 4);
    let z = Vector::from_slice(&[0.5, 0.0, 0.5, 0.5]);
    let gens = d.proximal_normal_generators(&z, 1e-9).unwrap();
    assert_eq!(gens, vec![Vector::from_slice(&[0.0, 1.0, 0.0, 0.0])]);
    let p = d.project_to_closure(&Vector::from_slice(&[2.0, 0.5, 0.5, -1.0])).unwrap();
    assert_eq!(p, Vector::from_slice(&[1.0, 0.5, 0.5, 0.0]));
}
