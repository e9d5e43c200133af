//! Monte-Carlo diagnostics: moment scaling, Hoelder tails, variation growth,
//! the weak-convergence ladder and the Kolmogorov-Smirnov distance.
//!
//! Per-path work runs in parallel; every reduction happens afterwards in path
//! order with pairwise summation, so results do not depend on thread count.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use statrs::function::erf::erf;
use thiserror::Error;

use crate::geometry::Domain;
use crate::linalg::Vector;
use crate::reflect::{integrate_reflected_observed, FieldSpec, ReflectError, ReflectedTrajectory};
use crate::wiener::{holder_norm, path_seed, sample_path, sup_norm, WienerError};

/// Fewest paths accepted by the ensemble statistics.
pub const MIN_PATHS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("window [{s}, {t}] has boundary pushing but zero sup-norm of L")]
    DegenerateWindow { s: f64, t: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Reflect(#[from] ReflectError),
    #[error(transparent)]
    Wiener(#[from] WienerError),
}

/// Sum by recursive halving; the split points depend only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Sample mean, unbiased variance and standard error `std / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_err: f64,
}

impl Stat {
    pub fn from_samples(xs: &[f64]) -> Stat {
        let n = xs.len();
        if n == 0 {
            return Stat { n, mean: f64::NAN, variance: f64::NAN, std_err: f64::NAN };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
        let variance = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Stat { n, mean, variance, std_err: (variance / n as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// A statistics table with pass/fail checks.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub id: String,
    pub samples: usize,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub checks: Vec<Check>,
}

impl EnsembleSummary {
    pub fn new(id: impl Into<String>, samples: usize, columns: &[&str]) -> Self {
        Self {
            id: id.into(),
            samples,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.into() });
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

impl fmt::Display for EnsembleSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {} ({} samples)", self.id, self.samples)?;
        for c in &self.columns {
            write!(f, "{c:>16}")?;
        }
        writeln!(f)?;
        for row in &self.rows {
            for v in row {
                write!(f, "{v:>16.8}")?;
            }
            writeln!(f)?;
        }
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Integrates `paths` trajectories on drivers `path_seed(master, i)` and maps
/// each through `summarize`; results come back in path order.
#[allow(clippy::too_many_arguments)]
pub fn run_reflected_ensemble<R: Send>(
    domain: &Domain,
    field: &FieldSpec,
    x0: &Vector,
    level: u32,
    horizon: f64,
    master_seed: u64,
    paths: usize,
    substeps: usize,
    stride: usize,
    summarize: impl Fn(usize, ReflectedTrajectory) -> R + Sync,
) -> Result<Vec<R>, DiagnosticsError> {
    (0..paths)
        .into_par_iter()
        .map(|i| {
            let p = sample_path(field.noise_dim(), level, horizon, path_seed(master_seed, i as u64))?;
            let tr = integrate_reflected_observed(domain, field, &p, x0, substeps, stride, &mut |_| {})?;
            Ok(summarize(i, tr))
        })
        .collect()
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = pairwise_sum(xs) / n;
    let my = pairwise_sum(ys) / n;
    let sxy: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let sxx: Vec<f64> = xs.iter().map(|x| (x - mx).powi(2)).collect();
    pairwise_sum(&sxy) / pairwise_sum(&sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub m: u32,
    pub lags: Vec<f64>,
    pub moments: Vec<Stat>,
    /// Fitted log-log slope; NaN when some moment is zero.
    pub slope: f64,
}

impl MomentTable {
    pub fn summary(&self) -> EnsembleSummary {
        let mut s = EnsembleSummary::new(
            format!("moment scaling, exponent {}", 1u32 << (self.m + 1)),
            self.moments.first().map_or(0, |m| m.n),
            &["lag", "moment", "std_err"],
        );
        for (lag, st) in self.lags.iter().zip(&self.moments) {
            s.rows.push(vec![*lag, st.mean, st.std_err]);
        }
        s
    }
}

/// `E |X_t - X_s|^(2^(m+1))` for each lag, averaged over every sample pair
/// `(s, s + lag)` of a uniform grid with spacing `dt`.
pub fn moment_scaling_samples(
    dt: f64,
    ensemble: &[&[Vector]],
    m: u32,
    lags: &[f64],
) -> Result<MomentTable, DiagnosticsError> {
    if ensemble.len() < MIN_PATHS {
        return Err(DiagnosticsError::InsufficientSamples { got: ensemble.len(), need: MIN_PATHS });
    }
    if m > 2 {
        return Err(DiagnosticsError::InvalidArgument(format!("m = {m} not in 0..=2")));
    }
    let p = (1u32 << (m + 1)) as i32;
    let mut steps = Vec::with_capacity(lags.len());
    for &lag in lags {
        let k = lag / dt;
        if !(k >= 1.0) || (k - k.round()).abs() > 1e-9 {
            return Err(DiagnosticsError::InvalidArgument(format!(
                "lag {lag} is not a positive multiple of the sample spacing {dt}"
            )));
        }
        steps.push(k.round() as usize);
    }
    let len = ensemble.iter().map(|v| v.len()).min().unwrap_or(0);
    if let Some(&k) = steps.iter().find(|&&k| k >= len) {
        return Err(DiagnosticsError::InvalidArgument(format!("lag of {k} samples exceeds the horizon")));
    }
    let per_path: Vec<Vec<f64>> = ensemble
        .par_iter()
        .map(|vals| {
            steps
                .iter()
                .map(|&k| {
                    let terms: Vec<f64> = (0..len - k).map(|i| vals[i + k].dist(&vals[i]).powi(p)).collect();
                    pairwise_sum(&terms) / terms.len() as f64
                })
                .collect()
        })
        .collect();
    let moments: Vec<Stat> = (0..steps.len())
        .map(|j| Stat::from_samples(&per_path.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let slope = if moments.iter().all(|s| s.mean > 0.0) && lags.len() > 1 {
        let lx: Vec<f64> = lags.iter().map(|l| l.ln()).collect();
        let ly: Vec<f64> = moments.iter().map(|s| s.mean.ln()).collect();
        fit_slope(&lx, &ly)
    } else {
        f64::NAN
    };
    Ok(MomentTable { m, lags: lags.to_vec(), moments, slope })
}

fn uniform_spacing(times: &[f64]) -> Result<f64, DiagnosticsError> {
    if times.len() < 2 {
        return Err(DiagnosticsError::InvalidArgument("trajectory has fewer than two samples".into()));
    }
    let dt = times[1] - times[0];
    let uniform = times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt);
    if !uniform {
        return Err(DiagnosticsError::InvalidArgument(
            "moment scaling needs uniformly spaced samples (choose a stride dividing the substep count)".into(),
        ));
    }
    Ok(dt)
}

/// [`moment_scaling_samples`] on the `X` samples of reflected trajectories.
pub fn moment_scaling(
    ensemble: &[ReflectedTrajectory],
    m: u32,
    lags: &[f64],
) -> Result<MomentTable, DiagnosticsError> {
    let first = ensemble
        .first()
        .ok_or(DiagnosticsError::InsufficientSamples { got: 0, need: MIN_PATHS })?;
    let dt = uniform_spacing(&first.times)?;
    let views: Vec<&[Vector]> = ensemble.iter().map(|t| t.x.as_slice()).collect();
    moment_scaling_samples(dt, &views, m, lags)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailTable {
    pub beta: f64,
    pub r_grid: Vec<f64>,
    pub probability: Vec<f64>,
    /// `-slope` of `log P` against `log R` over the grid points with `P > 0`.
    pub exponent: f64,
    pub n: usize,
}

/// Largest of the Hoelder norms of the composed input, `X` and `L` (the
/// composed input is `x0 + W` when `sigma = I`).
pub fn max_holder_norm(tr: &ReflectedTrajectory, beta: f64) -> Result<f64, DiagnosticsError> {
    let (s, t) = (0.0, *tr.times.last().unwrap_or(&0.0));
    let mut best: f64 = 0.0;
    for series in [&tr.input, &tr.x, &tr.l] {
        best = best.max(holder_norm(&tr.times, series, beta, s, t)?.value);
    }
    Ok(best)
}

/// Empirical `P(max Hoelder norm >= R)` on the grid of `R` values.
pub fn holder_tail(
    ensemble: &[ReflectedTrajectory],
    beta: f64,
    r_grid: &[f64],
) -> Result<TailTable, DiagnosticsError> {
    if ensemble.len() < MIN_PATHS {
        return Err(DiagnosticsError::InsufficientSamples { got: ensemble.len(), need: MIN_PATHS });
    }
    if !(beta > 0.0 && beta < 0.5) {
        return Err(DiagnosticsError::InvalidArgument(format!("beta = {beta} not in (0, 1/2)")));
    }
    let norms: Vec<f64> = ensemble
        .par_iter()
        .map(|tr| max_holder_norm(tr, beta))
        .collect::<Result<_, _>>()?;
    holder_tail_from_norms(&norms, beta, r_grid)
}

pub fn holder_tail_from_norms(norms: &[f64], beta: f64, r_grid: &[f64]) -> Result<TailTable, DiagnosticsError> {
    let n = norms.len();
    let probability: Vec<f64> = r_grid
        .iter()
        .map(|r| norms.iter().filter(|&&v| v >= *r).count() as f64 / n as f64)
        .collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = r_grid
        .iter()
        .zip(&probability)
        .filter(|(r, p)| **p > 0.0 && **r > 0.0)
        .map(|(r, p)| (r.ln(), p.ln()))
        .unzip();
    let exponent = if lx.len() >= 2 { -fit_slope(&lx, &ly) } else { f64::NAN };
    Ok(TailTable { beta, r_grid: r_grid.to_vec(), probability, exponent, n })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRow {
    pub s: f64,
    pub t: f64,
    /// `|L|_t - |L|_s`.
    pub numerator: f64,
    /// `||X||_{1/4,[s,t]}`.
    pub x_holder: f64,
    /// `sup_{[s,t]} |L|`.
    pub l_sup: f64,
    pub ratio: f64,
}

fn value_at(times: &[f64], values: &[f64], t: f64) -> f64 {
    let i = times.partition_point(|&u| u <= t).saturating_sub(1);
    values[i]
}

/// `(|L|_t - |L|_s) / (((t - s) R^-4 ||X||^4_{1/4,[s,t]} + 1) sup_{[s,t]}|L|)`
/// per window, with `R` the covering radius.
pub fn variation_growth(
    tr: &ReflectedTrajectory,
    windows: &[(f64, f64)],
    covering_radius: f64,
) -> Result<Vec<WindowRow>, DiagnosticsError> {
    if !(covering_radius > 0.0) {
        return Err(DiagnosticsError::InvalidArgument("covering radius must be positive".into()));
    }
    let horizon = *tr.times.last().unwrap_or(&0.0);
    windows
        .iter()
        .map(|&(s, t)| {
            if !(0.0 <= s && s < t && t <= horizon) {
                return Err(DiagnosticsError::InvalidArgument(format!(
                    "window [{s}, {t}] not inside [0, {horizon}]"
                )));
            }
            let numerator = value_at(&tr.times, &tr.lvar, t) - value_at(&tr.times, &tr.lvar, s);
            let x_holder = holder_norm(&tr.times, &tr.x, 0.25, s, t)?.value;
            let l_sup = sup_norm(&tr.times, &tr.l, s, t)?;
            let ratio = if numerator <= 0.0 {
                0.0
            } else if l_sup == 0.0 {
                return Err(DiagnosticsError::DegenerateWindow { s, t });
            } else {
                numerator / (((t - s) * covering_radius.powi(-4) * x_holder.powi(4) + 1.0) * l_sup)
            };
            Ok(WindowRow { s, t, numerator, x_holder, l_sup, ratio })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderTable {
    pub levels: Vec<u32>,
    pub stats: Vec<Stat>,
    /// `|mean_N - mean_{N+1}|` between consecutive levels.
    pub deltas: Vec<f64>,
    /// Standard error of the paired per-path differences.
    pub delta_se: Vec<f64>,
}

impl LadderTable {
    /// True when every consecutive pair of differences starting at level
    /// `min_level` satisfies `delta_{k+1} + k_se * se_comb <= delta_k`.
    pub fn decreasing_beyond(&self, k_se: f64, min_level: u32) -> bool {
        (0..self.deltas.len().saturating_sub(1))
            .filter(|&j| self.levels[j] >= min_level)
            .all(|j| {
                let se = self.delta_se[j].hypot(self.delta_se[j + 1]);
                self.deltas[j + 1] + k_se * se <= self.deltas[j]
            })
    }

    pub fn summary(&self) -> EnsembleSummary {
        let n = self.stats.first().map_or(0, |s| s.n);
        let mut s = EnsembleSummary::new("weak convergence ladder", n, &["level", "mean", "std_err", "delta", "delta_se"]);
        for (j, st) in self.stats.iter().enumerate() {
            let (d, se) = match (self.deltas.get(j), self.delta_se.get(j)) {
                (Some(d), Some(se)) => (*d, *se),
                _ => (f64::NAN, f64::NAN),
            };
            s.rows.push(vec![self.levels[j] as f64, st.mean, st.std_err, d, se]);
        }
        s
    }
}

/// `f(X_T)` across bridge-refined levels of the same Brownian paths.
///
/// Path `i` is sampled at the coarsest level with seed `path_seed(seed, i)`
/// and refined level by level, so every level sees one underlying path.
#[allow(clippy::too_many_arguments)]
pub fn weak_convergence_ladder(
    domain: &Domain,
    field: &FieldSpec,
    f: &(dyn Fn(&Vector) -> f64 + Sync),
    x0: &Vector,
    levels: &[u32],
    horizon: f64,
    paths: usize,
    seed: u64,
    substeps: usize,
) -> Result<LadderTable, DiagnosticsError> {
    if paths < MIN_PATHS {
        return Err(DiagnosticsError::InsufficientSamples { got: paths, need: MIN_PATHS });
    }
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DiagnosticsError::InvalidArgument("levels must be nonempty and increasing".into()));
    }
    let per_path: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut p = sample_path(field.noise_dim(), levels[0], horizon, path_seed(seed, i as u64))?;
            let mut out = Vec::with_capacity(levels.len());
            for &level in levels {
                p = p.refine_to(level);
                let total = p.cells() * substeps;
                let tr = integrate_reflected_observed(domain, field, &p, x0, substeps, total, &mut |_| {})?;
                out.push(f(&tr.final_x()));
            }
            Ok(out)
        })
        .collect::<Result<_, DiagnosticsError>>()?;
    let column = |j: usize| per_path.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let stats: Vec<Stat> = (0..levels.len()).map(|j| Stat::from_samples(&column(j))).collect();
    let mut deltas = Vec::new();
    let mut delta_se = Vec::new();
    for j in 0..levels.len().saturating_sub(1) {
        let diff: Vec<f64> = per_path.iter().map(|r| r[j + 1] - r[j]).collect();
        let st = Stat::from_samples(&diff);
        deltas.push((stats[j].mean - stats[j + 1].mean).abs());
        delta_se.push(st.std_err);
    }
    Ok(LadderTable { levels: levels.to_vec(), stats, deltas, delta_se })
}

/// `sup |F_n - F|` over the sample, taking both one-sided gaps at each
/// distinct value.
pub fn ks_statistic(sample: &[f64], cdf: &dyn Fn(f64) -> f64) -> f64 {
    assert!(!sample.is_empty(), "KS statistic of an empty sample");
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((j + 1) as f64 / n - f).max(f - i as f64 / n);
        i = j + 1;
    }
    d
}

/// `P(|Z| <= x)` for a standard normal `Z`.
pub fn folded_normal_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        erf(x / std::f64::consts::SQRT_2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wiener::DyadicPath;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
    }

    #[test]
    fn stat_standard_error() {
        let s = Stat::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.std_err - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn frozen_trajectories_have_zero_moments() {
        let d = Domain::disc(Vector::xy(0.0, 0.0), 1.0).unwrap();
        let p = DyadicPath::zero(2, 4, 1.0).unwrap();
        let tr = crate::reflect::integrate_reflected(&d, &FieldSpec::Identity(2), &p, &Vector::xy(0.1, 0.0), 4)
            .unwrap();
        let ens = vec![tr; MIN_PATHS];
        let table = moment_scaling(&ens, 0, &[1.0 / 16.0, 1.0 / 8.0]).unwrap();
        assert!(table.moments.iter().all(|m| m.mean == 0.0));
        assert!(table.slope.is_nan());
        assert!(matches!(
            moment_scaling(&ens[..10], 0, &[1.0 / 16.0]),
            Err(DiagnosticsError::InsufficientSamples { got: 10, .. })
        ));
    }

    #[test]
    fn tail_examples() {
        let norms: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let t = holder_tail_from_norms(&norms, 0.25, &[0.5, 50.0, 200.0]).unwrap();
        assert_eq!(t.probability, vec![1.0, 0.51, 0.0]);
    }

    #[test]
    fn ks_examples() {
        let xs = [0.3, 0.1, 0.7, 0.5];
        let ecdf = |x: f64| xs.iter().filter(|&&v| v <= x).count() as f64 / 4.0;
        assert!(ks_statistic(&xs, &ecdf) <= 0.25);
        assert_eq!(ks_statistic(&[0.5], &|x: f64| x), 0.5);
        let f1 = folded_normal_cdf(1.0);
        assert!((f1 - 0.682_689_492_137_086).abs() < 1e-9, "{f1}");
    }

    #[test]
    fn ks_handles_ties() {
        // Half the mass at zero against a continuous cdf starting at zero.
        let xs = [0.0, 0.0, 0.5, 0.9];
        assert_eq!(ks_statistic(&xs, &|x: f64| x.clamp(0.0, 1.0)), 0.5);
    }

    #[test]
    fn window_without_contact_has_zero_ratio() {
        let d = Domain::disc(Vector::xy(0.0, 0.0), 10.0).unwrap();
        let p = crate::wiener::sample_path(2, 4, 1.0, 1).unwrap();
        let tr = crate::reflect::integrate_reflected(&d, &FieldSpec::Identity(2), &p, &Vector::xy(0.0, 0.0), 4)
            .unwrap();
        let rows = variation_growth(&tr, &[(0.0, 0.25), (0.25, 0.5)], 1.0).unwrap();
        assert!(rows.iter().all(|r| r.ratio == 0.0));
    }

    #[test]
    fn constant_f_gives_flat_ladder() {
        let d = Domain::half_line(0.0).unwrap();
        let ladder = weak_convergence_ladder(
            &d,
            &FieldSpec::Identity(1),
            &|_| 1.0,
            &Vector::scalar(0.0),
            &[2, 3, 4],
            1.0,
            MIN_PATHS,
            7,
            2,
        )
        .unwrap();
        assert!(ladder.deltas.iter().all(|&d| d == 0.0));
        assert!(ladder.stats.iter().all(|s| s.mean == 1.0));
    }
}
