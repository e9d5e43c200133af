//! Brownian paths on dyadic grids, bridge refinement and path norms.
//!
//! A path with seed `s` at level `N` is built by the Levy construction: base
//! increments at the coarsest level whose grid contains `T`, then bridge
//! midpoints level by level. The Gaussians of level `l` come from ChaCha
//! stream `l` keyed by `s`, consumed in cell order, so sampling at level
//! `N + 1` and refining a level-`N` sample give the same bits.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use statrs::function::erf::erfc_inv;
use thiserror::Error;

use crate::linalg::{Vector, MAX_DIM};

/// Finest level accepted anywhere.
pub const MAX_LEVEL: u32 = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WienerError {
    #[error("time {t} outside [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("fewer than two samples in [{s}, {t}]")]
    EmptyWindow { s: f64, t: f64 },
    #[error("horizon {0} is not a positive multiple of 2^-{1}")]
    InvalidHorizon(f64, u32),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Piecewise-linear path on the grid `m 2^-N`, `0 <= m <= T 2^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicPath {
    level: u32,
    horizon: f64,
    values: Vec<Vector>,
    /// `None` for deterministic drivers, which refine by interpolation.
    seed: Option<u64>,
}

/// Number of level-`level` cells in `[0, horizon]`, if `horizon` is on that grid.
pub fn cell_count(horizon: f64, level: u32) -> Option<usize> {
    let cells = horizon * (1u64 << level) as f64;
    if horizon > 0.0 && cells.is_finite() && cells.fract() == 0.0 && cells <= (1u64 << 40) as f64 {
        Some(cells as usize)
    } else {
        None
    }
}

fn base_level(horizon: f64) -> Option<u32> {
    (0..=MAX_LEVEL).find(|&l| cell_count(horizon, l).is_some())
}

/// Standard normal by inverse CDF of a 53-bit uniform in `(0, 1)`.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

fn level_rng(seed: u64, level: u32) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(level as u64);
    rng
}

/// Per-path seed for index `index` of an ensemble keyed by `master`.
pub fn path_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair.
    let mut z = master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Brownian path of dimension `r` sampled at level `level` on `[0, horizon]`.
pub fn sample_path(r: usize, level: u32, horizon: f64, seed: u64) -> Result<DyadicPath, WienerError> {
    if r == 0 || r > MAX_DIM {
        return Err(WienerError::InvalidArgument(format!("dimension {r} not in 1..={MAX_DIM}")));
    }
    if level > MAX_LEVEL {
        return Err(WienerError::InvalidArgument(format!("level {level} > {MAX_LEVEL}")));
    }
    cell_count(horizon, level).ok_or(WienerError::InvalidHorizon(horizon, level))?;
    let base = base_level(horizon).expect("horizon is on the level grid");
    let cells = cell_count(horizon, base).unwrap();
    let sd = (0.5f64).powi(base as i32).sqrt();
    let mut rng = level_rng(seed, base);
    let mut values = Vec::with_capacity(cells + 1);
    let mut w = Vector::zeros(r);
    values.push(w);
    for _ in 0..cells {
        for i in 0..r {
            w[i] += sd * gaussian(&mut rng);
        }
        values.push(w);
    }
    let mut path = DyadicPath {
        level: base,
        horizon,
        values,
        seed: Some(seed),
    };
    while path.level < level {
        path = path.refine();
    }
    Ok(path)
}

/// Paths `0..count` of an ensemble, seeded by [`path_seed`].
pub fn sample_ensemble(
    r: usize,
    level: u32,
    horizon: f64,
    master: u64,
    count: usize,
) -> Result<Vec<DyadicPath>, WienerError> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| sample_path(r, level, horizon, path_seed(master, i)))
        .collect()
}

impl DyadicPath {
    /// Deterministic path from grid values.
    pub fn from_values(level: u32, horizon: f64, values: Vec<Vector>) -> Result<Self, WienerError> {
        let cells = cell_count(horizon, level).ok_or(WienerError::InvalidHorizon(horizon, level))?;
        if values.len() != cells + 1 {
            return Err(WienerError::InvalidArgument(format!(
                "expected {} values, got {}",
                cells + 1,
                values.len()
            )));
        }
        let r = values[0].dim();
        if values.iter().any(|v| v.dim() != r) {
            return Err(WienerError::InvalidArgument("mixed value dimensions".into()));
        }
        Ok(Self {
            level,
            horizon,
            values,
            seed: None,
        })
    }

    /// Deterministic path `w(t) = f(t)` sampled on the grid.
    pub fn from_fn(
        level: u32,
        horizon: f64,
        f: impl Fn(f64) -> Vector,
    ) -> Result<Self, WienerError> {
        let cells = cell_count(horizon, level).ok_or(WienerError::InvalidHorizon(horizon, level))?;
        let dt = horizon / cells as f64;
        Self::from_values(level, horizon, (0..=cells).map(|m| f(m as f64 * dt)).collect())
    }

    /// Identically zero path.
    pub fn zero(r: usize, level: u32, horizon: f64) -> Result<Self, WienerError> {
        Self::from_fn(level, horizon, |_| Vector::zeros(r))
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn cells(&self) -> usize {
        self.values.len() - 1
    }

    /// Cell width `2^-N`.
    pub fn dt(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|m| self.time(m)).collect()
    }

    /// Level `N + 1` path through the same grid values.
    pub fn refine(&self) -> DyadicPath {
        let r = self.dim();
        let mut values = Vec::with_capacity(2 * self.values.len() - 1);
        values.push(self.values[0]);
        match self.seed {
            Some(seed) => {
                let sd = 0.5f64.powi(self.level as i32 + 2).sqrt();
                let mut rng = level_rng(seed, self.level + 1);
                for pair in self.values.windows(2) {
                    let mut mid = (pair[0] + pair[1]) * 0.5;
                    for i in 0..r {
                        mid[i] += sd * gaussian(&mut rng);
                    }
                    values.push(mid);
                    values.push(pair[1]);
                }
            }
            None => {
                for pair in self.values.windows(2) {
                    values.push((pair[0] + pair[1]) * 0.5);
                    values.push(pair[1]);
                }
            }
        }
        DyadicPath {
            level: self.level + 1,
            horizon: self.horizon,
            values,
            seed: self.seed,
        }
    }

    /// Refines until the level is at least `level`.
    pub fn refine_to(&self, level: u32) -> DyadicPath {
        let mut p = self.clone();
        while p.level < level {
            p = p.refine();
        }
        p
    }

    fn cell_of(&self, t: f64) -> Result<(usize, f64), WienerError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(WienerError::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        let scaled = t / self.dt();
        let m = (scaled.floor() as usize).min(self.cells() - 1);
        Ok((m, scaled - m as f64))
    }

    pub fn evaluate(&self, t: f64) -> Result<Vector, WienerError> {
        let (m, frac) = self.cell_of(t)?;
        if frac == 0.0 {
            return Ok(self.values[m]);
        }
        if frac == 1.0 {
            return Ok(self.values[m + 1]);
        }
        Ok(self.values[m] + (self.values[m + 1] - self.values[m]) * frac)
    }

    /// Slope on the cell containing `t`, right-limit at grid points and the
    /// last cell at `t = T`.
    pub fn slope(&self, t: f64) -> Result<Vector, WienerError> {
        let (m, _) = self.cell_of(t)?;
        Ok(self.cell_slope(m))
    }

    /// `2^N (w_{m+1} - w_m)`.
    pub fn cell_slope(&self, m: usize) -> Vector {
        (self.values[m + 1] - self.values[m]) * (1u64 << self.level) as f64
    }

    /// CSV with header `t,w1,..,wr`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "t")?;
        for i in 1..=self.dim() {
            write!(out, ",w{i}")?;
        }
        writeln!(out)?;
        for (m, v) in self.values.iter().enumerate() {
            write!(out, "{}", self.time(m))?;
            for x in v.as_slice() {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Result of [`holder_norm`]; `exact` is false when only dyadic-spaced
/// sample pairs were examined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderNorm {
    pub value: f64,
    pub exact: bool,
}

/// Sample counts above this use the dyadic-pair approximation.
pub const HOLDER_EXACT_LIMIT: usize = 10_000;

fn window(times: &[f64], s: f64, t: f64) -> Result<std::ops::Range<usize>, WienerError> {
    let lo = times.partition_point(|&u| u < s);
    let hi = times.partition_point(|&u| u <= t);
    if hi < lo + 2 {
        return Err(WienerError::EmptyWindow { s, t });
    }
    Ok(lo..hi)
}

/// `sup |psi(u2) - psi(u1)| / (u2 - u1)^beta` over sample pairs in `[s, t]`.
/// `times` must be increasing.
pub fn holder_norm(
    times: &[f64],
    values: &[Vector],
    beta: f64,
    s: f64,
    t: f64,
) -> Result<HolderNorm, WienerError> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(WienerError::InvalidArgument(format!("beta = {beta} not in (0, 1]")));
    }
    let w = window(times, s, t)?;
    let (ts, vs) = (&times[w.clone()], &values[w]);
    let n = ts.len();
    let ratio = |i: usize, j: usize| vs[j].dist(&vs[i]) / (ts[j] - ts[i]).powf(beta);
    let mut best: f64 = 0.0;
    if n <= HOLDER_EXACT_LIMIT {
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(ratio(i, j));
            }
        }
        return Ok(HolderNorm { value: best, exact: true });
    }
    let mut gap = 1;
    while gap < n {
        for i in 0..n - gap {
            best = best.max(ratio(i, i + gap));
        }
        gap *= 2;
    }
    Ok(HolderNorm { value: best, exact: false })
}

/// Sum of increment norms over samples in `[s, t]`.
pub fn total_variation(times: &[f64], values: &[Vector], s: f64, t: f64) -> Result<f64, WienerError> {
    let w = window(times, s, t)?;
    Ok(values[w].windows(2).map(|p| p[1].dist(&p[0])).sum())
}

/// Sup-norm `max |psi(u)|` over samples in `[s, t]`.
pub fn sup_norm(times: &[f64], values: &[Vector], s: f64, t: f64) -> Result<f64, WienerError> {
    let w = window(times, s, t)?;
    Ok(values[w].iter().map(Vector::norm).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(xs: &[f64]) -> Vec<Vector> {
        xs.iter().map(|&x| Vector::scalar(x)).collect()
    }

    #[test]
    fn starts_at_zero_and_is_deterministic() {
        let a = sample_path(2, 6, 1.0, 42).unwrap();
        let b = sample_path(2, 6, 1.0, 42).unwrap();
        assert_eq!(a.values()[0], Vector::zeros(2));
        assert_eq!(a, b);
        assert_ne!(a, sample_path(2, 6, 1.0, 43).unwrap());
        assert_eq!(a.cells(), 64);
    }

    #[test]
    fn sampling_finer_equals_refining() {
        let p = sample_path(3, 4, 2.0, 7).unwrap();
        let q = sample_path(3, 6, 2.0, 7).unwrap();
        assert_eq!(p.refine().refine(), q);
    }

    #[test]
    fn refinement_keeps_grid_values() {
        let p = sample_path(2, 3, 1.0, 1).unwrap();
        let q = p.refine().refine();
        assert_eq!(q.level(), 5);
        assert_eq!(q.cells(), 4 * p.cells());
        for m in 0..=p.cells() {
            assert_eq!(q.values()[4 * m], p.values()[m]);
            assert_eq!(q.evaluate(p.time(m)).unwrap(), p.values()[m]);
        }
    }

    #[test]
    fn rejects_non_dyadic_horizon() {
        assert!(matches!(
            sample_path(1, 4, 0.3, 0),
            Err(WienerError::InvalidHorizon(..))
        ));
        assert!(sample_path(1, 0, 0.25, 0).is_err());
        assert_eq!(sample_path(1, 2, 0.25, 0).unwrap().cells(), 1);
    }

    #[test]
    fn evaluate_and_slope() {
        let p = sample_path(2, 3, 1.0, 9).unwrap();
        let mid = p.evaluate(0.5 * (p.time(2) + p.time(3))).unwrap();
        assert!(mid.dist(&((p.values()[2] + p.values()[3]) * 0.5)) < 1e-15);
        let s = p.slope(p.time(2)).unwrap();
        assert_eq!(s, (p.values()[3] - p.values()[2]) * 8.0);
        assert_eq!(p.slope(1.0).unwrap(), p.cell_slope(7));
        assert!(matches!(p.evaluate(1.5), Err(WienerError::OutOfHorizon { .. })));
    }

    #[test]
    fn deterministic_paths_refine_linearly() {
        let p = DyadicPath::from_fn(2, 1.0, |t| Vector::scalar(-3.0 * t)).unwrap();
        let q = p.refine();
        assert_eq!(q.seed(), None);
        assert!((q.evaluate(0.125).unwrap()[0] + 0.375).abs() < 1e-15);
    }

    #[test]
    fn holder_examples() {
        let t = [0.0, 0.5, 1.0];
        let c = holder_norm(&t, &scalar(&[2.0, 2.0, 2.0]), 0.5, 0.0, 1.0).unwrap();
        assert_eq!(c.value, 0.0);
        let ramp = holder_norm(&t, &scalar(&t), 1.0, 0.0, 1.0).unwrap();
        assert!((ramp.value - 1.0).abs() < 1e-15);
        let two = holder_norm(&[0.0, 0.25], &scalar(&[0.0, 1.0]), 0.5, 0.0, 0.25).unwrap();
        assert!((two.value - 2.0).abs() < 1e-15);
        assert!(two.exact);
        assert!(matches!(
            holder_norm(&t, &scalar(&t), 1.0, 0.6, 0.9),
            Err(WienerError::EmptyWindow { .. })
        ));
    }

    #[test]
    fn holder_switches_to_dyadic_pairs() {
        let n = HOLDER_EXACT_LIMIT + 1;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let h = holder_norm(&t, &scalar(&t), 1.0, 0.0, 1.0).unwrap();
        assert!(!h.exact);
        assert!((h.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn variation_examples() {
        let t = [0.0, 1.0];
        assert_eq!(total_variation(&t, &scalar(&[0.0, 5.0]), 0.0, 1.0).unwrap(), 5.0);
        let z = [0.0, 0.5, 1.0];
        assert_eq!(total_variation(&z, &scalar(&[0.0, 1.0, 0.0]), 0.0, 1.0).unwrap(), 2.0);
        let legs = [Vector::xy(0.0, 0.0), Vector::xy(3.0, 4.0), Vector::xy(0.0, 8.0)];
        assert_eq!(total_variation(&z, &legs, 0.0, 1.0).unwrap(), 10.0);
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        sample_path(2, 1, 1.0, 0).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,w1,w2\n0,0,0\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
