use std::f64::consts::FRAC_PI_4;

use rsde::coupling::{angle, run_coupling, run_mirror, run_synchronous, Angle, CouplingKind, CouplingOptions};
use rsde::geometry::Domain;
use rsde::wiener::{path_seed, sample_path, DyadicPath};
use rsde::Vector;

#[test]
fn mirror_steps_reflect_the_increment() {
    let d = Domain::default_lip();
    for i in 0..20u64 {
        let p = sample_path(2, 6, 1.0, path_seed(1, i)).unwrap();
        let opts = CouplingOptions::new(16);
        run_coupling(&d, &p, CouplingKind::Mirror, &Vector::xy(0.2, 0.05), &Vector::xy(0.6, 0.05), &opts, &mut |s| {
            if s.coalesced {
                return;
            }
            // The mirror is an involution flipping the pair's direction.
            let (dx, dy) = (s.x_pre - s.x_old, s.y_pre - s.y_old);
            assert!((dx.norm() - dy.norm()).abs() < 1e-12);
            let e = (s.y_old - s.x_old).normalized().unwrap();
            assert!((s.mirror.mul_vec(&e) + e).norm() < 1e-12);
            let probe = Vector::xy(0.3, -0.7);
            assert!(s.mirror.mul_vec(&s.mirror.mul_vec(&probe)).dist(&probe) < 1e-12);
            // The pair moves symmetrically about the bisector.
            assert!((dx.dot(&e) + dy.dot(&e)).abs() < 1e-12);
        })
        .unwrap();
    }
}

#[test]
fn synchronous_pair_keeps_its_offset_in_the_interior() {
    let d = Domain::rectangle(-10.0, 10.0, -10.0, 10.0).unwrap();
    let p = DyadicPath::from_fn(4, 1.0, |t| Vector::xy(t.sin(), t)).unwrap();
    let run = run_synchronous(&d, &p, &Vector::xy(0.0, 0.0), &Vector::xy(1.0, 1.0), 8).unwrap();
    for (x, y) in run.x.iter().zip(&run.y) {
        assert!((*y - *x).dist(&Vector::xy(1.0, 1.0)) < 1e-12);
    }
    assert!((run.theta.last().unwrap().radians().unwrap() - FRAC_PI_4).abs() < 1e-12);
    assert!(run.tau.is_none());
}

#[test]
fn mirror_pair_freezes_after_coalescence() {
    let d = Domain::rectangle(-10.0, 10.0, -10.0, 10.0).unwrap();
    // Drives X towards Y; the mirrored Y comes the other way and they meet at 0.
    let p = DyadicPath::from_fn(3, 1.0, |t| Vector::xy(2.0 * t, 0.0)).unwrap();
    let run = run_mirror(&d, &p, &Vector::xy(-0.5, 0.0), &Vector::xy(0.5, 0.0), 8, 1e-8).unwrap();
    let tau = run.tau.expect("pair meets");
    assert!((tau - 0.25).abs() < 1e-9, "tau = {tau}");
    let last = run.x.len() - 1;
    assert!(run.x[last].norm() < 1e-9 && run.y[last] == run.x[last]);
    assert_eq!(run.theta[last], Angle::Coalesced);
}

#[test]
fn starting_together_is_coalesced_at_zero() {
    let d = Domain::default_triangle();
    let p = sample_path(2, 4, 1.0, 0).unwrap();
    let x0 = Vector::xy(1.0, 0.2);
    let run = run_synchronous(&d, &p, &x0, &x0, 8).unwrap();
    assert_eq!(run.tau, Some(0.0));
    assert!(run.x.iter().zip(&run.y).all(|(x, y)| x == y));
    assert_eq!(angle(&x0, &x0, 1e-8), Angle::Coalesced);
}

#[test]
fn coupling_csv_header() {
    let d = Domain::default_triangle();
    let p = sample_path(2, 2, 1.0, 0).unwrap();
    let run = run_synchronous(&d, &p, &Vector::xy(1.0, 0.2), &Vector::xy(2.0, 0.2), 2).unwrap();
    let mut out = Vec::new();
    run.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("t,x1,x2,y1,y2,theta,coalesced\n"));
    assert_eq!(text.lines().count(), run.x.len() + 1);
}
