use rsde::diagnostics::Stat;
use rsde::wiener::{holder_norm, path_seed, sample_path, total_variation, DyadicPath};
use rsde::Vector;

#[test]
fn refinement_is_consistent_with_direct_sampling() {
    for seed in 0..20 {
        let coarse = sample_path(2, 3, 2.0, seed).unwrap();
        let fine = sample_path(2, 7, 2.0, seed).unwrap();
        assert_eq!(coarse.refine_to(7).values(), fine.values());
        // Coarse grid values survive refinement.
        for m in 0..=coarse.cells() {
            assert_eq!(fine.values()[m * 16], coarse.values()[m]);
        }
    }
}

#[test]
fn increments_have_brownian_moments() {
    // 4000 paths, unit-variance normalized increments at level 6.
    let mut z = Vec::new();
    for i in 0..4000u64 {
        let p = sample_path(1, 6, 1.0, path_seed(3, i)).unwrap();
        let s = p.dt().sqrt();
        z.extend(p.values().windows(2).map(|w| (w[1][0] - w[0][0]) / s));
    }
    let st = Stat::from_samples(&z);
    assert!(st.mean.abs() < 4.0 * st.std_err, "mean {}", st.mean);
    assert!((st.variance - 1.0).abs() < 0.01, "variance {}", st.variance);
    let fourth: f64 = z.iter().map(|v| v.powi(4)).sum::<f64>() / z.len() as f64;
    assert!((fourth - 3.0).abs() < 0.06, "fourth moment {fourth}");
    // Independence of neighbouring increments within a path.
    let pairs: Vec<f64> = z.chunks(64).flat_map(|c| c.windows(2).map(|w| w[0] * w[1]).collect::<Vec<_>>()).collect();
    let cov = Stat::from_samples(&pairs);
    assert!(cov.mean.abs() < 4.0 * cov.std_err, "lag-one covariance {}", cov.mean);
}

#[test]
fn terminal_value_is_standard_normal() {
    let w: Vec<f64> = (0..20_000u64).map(|i| sample_path(1, 4, 1.0, path_seed(9, i)).unwrap().values()[16][0]).collect();
    let st = Stat::from_samples(&w);
    assert!(st.mean.abs() < 0.03);
    assert!((st.variance - 1.0).abs() < 0.04);
}

#[test]
fn deterministic_paths_refine_linearly() {
    let p = DyadicPath::from_fn(2, 1.0, |t| Vector::scalar(t * t)).unwrap();
    let r = p.refine();
    assert_eq!(r.level(), 3);
    assert_eq!(r.values()[1][0], 0.5 * (0.0 + 0.0625));
    assert!(r.seed().is_none());
}

#[test]
fn norms_of_a_linear_path() {
    let times: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
    let values: Vec<Vector> = times.iter().map(|&t| Vector::xy(3.0 * t, 4.0 * t)).collect();
    assert!((total_variation(&times, &values, 0.0, 1.0).unwrap() - 5.0).abs() < 1e-12);
    // |x_t - x_s| / |t - s|^b = 5 |t - s|^(1 - b) is largest over the whole window.
    let h = holder_norm(&times, &values, 0.25, 0.0, 1.0).unwrap();
    assert!(h.exact && (h.value - 5.0).abs() < 1e-12);
    let h = holder_norm(&times, &values, 0.25, 0.0, 0.5).unwrap();
    assert!((h.value - 5.0 * 0.5f64.powf(0.75)).abs() < 1e-12);
}

#[test]
fn out_of_horizon_evaluation_fails() {
    let p = sample_path(1, 2, 1.0, 0).unwrap();
    assert!(p.evaluate(1.5).is_err());
    assert!(sample_path(1, 2, 0.3, 0).is_err());
}
