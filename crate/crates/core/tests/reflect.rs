use rsde::geometry::Domain;
use rsde::reflect::{
    integrate_reflected, integrate_reflected_observed, integrate_tangent_form, skorohod_map_1d, solve_picard,
    stratonovich_correction, FieldSpec,
};
use rsde::wiener::{path_seed, sample_path, DyadicPath};
use rsde::Vector;

fn domains() -> Vec<Domain> {
    vec![
        Domain::rectangle(-1.0, 1.0, 0.0, 2.0).unwrap(),
        Domain::default_triangle(),
        Domain::disc(Vector::xy(0.0, 0.0), 1.0).unwrap(),
        Domain::default_lip(),
    ]
}

#[test]
fn trajectories_stay_in_the_closure_and_decompose() {
    for (k, d) in domains().into_iter().enumerate() {
        let x0 = d.chebyshev_center();
        for i in 0..10u64 {
            let p = sample_path(2, 6, 1.0, path_seed(k as u64, i)).unwrap();
            let tr = integrate_reflected(&d, &FieldSpec::Identity(2), &p, &x0, 32).unwrap();
            for x in &tr.x {
                assert!(d.signed_distance(x) >= -d.eps_bdry(), "{:?} left at {x}", d.kind());
            }
            assert!(tr.decomposition_error() < 1e-9);
            assert!(tr.final_lvar() <= tr.input_variation + 1e-9);
            assert!(tr.lvar.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}

#[test]
fn pushing_happens_only_on_the_boundary_along_inward_normals() {
    let d = Domain::default_triangle();
    let p = sample_path(2, 7, 1.0, 42).unwrap();
    let mut checked = 0;
    integrate_reflected_observed(&d, &FieldSpec::Identity(2), &p, &Vector::xy(1.0, 0.2), 16, 1, &mut |s| {
        if s.dl.norm() > 0.0 {
            checked += 1;
            assert!(d.signed_distance(&s.x_new) <= d.eps_bdry() * 10.0);
            let gens = d.proximal_normal_generators(&s.x_new, 1e-7).unwrap();
            // dL lies in the cone spanned by the active inward normals: it
            // pairs nonnegatively with every tangent direction.
            let cone = rsde::cones::tangent_cone(&d, &s.x_new, 1e-7).unwrap();
            for g in &gens {
                assert!(s.dl.dot(g) >= -1e-12);
            }
            let probe = rsde::cones::project_onto_cone(&cone, &(s.dl * -1.0)).unwrap();
            assert!(probe.norm() <= 1e-9 * (1.0 + s.dl.norm()));
        } else {
            assert_eq!(s.x_new, s.x_pre);
        }
    })
    .unwrap();
    assert!(checked > 0);
}

#[test]
fn interior_paths_are_unreflected() {
    // A small ramp from the centre of a big rectangle never reaches the walls.
    let d = Domain::rectangle(-10.0, 10.0, -10.0, 10.0).unwrap();
    let p = DyadicPath::from_fn(4, 1.0, |t| Vector::xy(t, -2.0 * t)).unwrap();
    let tr = integrate_reflected(&d, &FieldSpec::Identity(2), &p, &Vector::xy(0.0, 0.0), 8).unwrap();
    assert_eq!(tr.final_lvar(), 0.0);
    assert!(tr.final_x().dist(&Vector::xy(1.0, -2.0)) < 1e-12);
}

#[test]
fn solvers_agree_on_a_short_path() {
    let d = Domain::rectangle(-1.0, 1.0, 0.0, 2.0).unwrap();
    let p = sample_path(1, 6, 1.0, 5).unwrap();
    let x0 = Vector::xy(0.5, 0.5);
    let a = integrate_reflected(&d, &FieldSpec::Rotation, &p, &x0, 64).unwrap();
    let b = integrate_tangent_form(&d, &FieldSpec::Rotation, &p, &x0, 64).unwrap();
    let c = solve_picard(&d, &FieldSpec::Rotation, &p, &x0, 64, 1e-8, 200).unwrap();
    assert!(a.sup_distance(&c) < 1e-4);
    assert!(a.sup_distance(&b) < 1e-2);
}

#[test]
fn half_line_reflection_is_the_skorohod_map() {
    let d = Domain::half_line(0.0).unwrap();
    let p = DyadicPath::from_values(2, 1.0, [0.0, -1.0, 0.5, -2.0, 1.0].map(Vector::scalar).to_vec()).unwrap();
    let tr = integrate_reflected(&d, &FieldSpec::Identity(1), &p, &Vector::scalar(0.25), 1).unwrap();
    let (x, l) = skorohod_map_1d(&[0.0, -1.0, 0.5, -2.0, 1.0], 0.25).unwrap();
    let got: Vec<f64> = tr.x.iter().map(|v| v[0]).collect();
    assert_eq!(got, x);
    assert_eq!(x, vec![0.25, 0.0, 1.5, 0.0, 3.0]);
    assert_eq!(l, vec![0.0, 0.75, 0.75, 1.75, 1.75]);
}

#[test]
fn mirror_correction_vanishes_off_the_diagonal() {
    let z = Vector::from_slice(&[0.1, 0.2, 0.7, -0.3]);
    let c = stratonovich_correction(&FieldSpec::MirrorPair, &z, 1e-5).unwrap();
    assert!(c.norm() < 1e-6);
    let near = Vector::from_slice(&[0.1, 0.2, 0.1, 0.2 + 1e-6]);
    assert!(stratonovich_correction(&FieldSpec::MirrorPair, &near, 1e-5).is_err());
}
