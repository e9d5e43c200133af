//! Synchronous and mirror couplings of reflected Brownian motions in a
//! planar domain, and the angle invariant checkers.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Domain, LipDomain};
use crate::linalg::Vector;
use crate::reflect::{catch_up, mirror_matrix, ReflectError};
use crate::wiener::{path_seed, sample_path, DyadicPath, WienerError};

/// Coalescence radius relative to the domain diameter.
pub const DELTA_COAL_REL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error(transparent)]
    Reflect(#[from] ReflectError),
    #[error(transparent)]
    Wiener(#[from] WienerError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl From<crate::geometry::GeometryError> for CouplingError {
    fn from(e: crate::geometry::GeometryError) -> Self {
        CouplingError::Reflect(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    Synchronous,
    Mirror,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Angle {
    Radians(f64),
    Coalesced,
}

impl Angle {
    pub fn radians(self) -> Option<f64> {
        match self {
            Angle::Radians(a) => Some(a),
            Angle::Coalesced => None,
        }
    }
}

/// `arg(y - x)`, or `Coalesced` when `|y - x| < delta_coal`.
pub fn angle(x: &Vector, y: &Vector, delta_coal: f64) -> Angle {
    let r = *y - *x;
    if r.norm() < delta_coal {
        Angle::Coalesced
    } else {
        Angle::Radians(r[1].atan2(r[0]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingRun {
    pub kind: CouplingKind,
    pub delta_coal: f64,
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    pub y: Vec<Vector>,
    pub theta: Vec<Angle>,
    /// Coalescence time.
    pub tau: Option<f64>,
    /// Final `|L|` of each component.
    pub lvar_x: f64,
    pub lvar_y: f64,
    /// Variation of each component's composed input.
    pub input_var_x: f64,
    pub input_var_y: f64,
}

impl CouplingRun {
    pub fn coalesced(&self) -> bool {
        self.tau.is_some()
    }

    /// CSV with header `t,x1,x2,y1,y2,theta,coalesced`; `theta` is empty
    /// once coalesced.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x1,x2,y1,y2,theta,coalesced")?;
        for k in 0..self.times.len() {
            let (x, y) = (self.x[k], self.y[k]);
            write!(out, "{},{},{},{},{},", self.times[k], x[0], x[1], y[0], y[1])?;
            match self.theta[k] {
                Angle::Radians(a) => writeln!(out, "{a},0")?,
                Angle::Coalesced => writeln!(out, ",1")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingOptions {
    pub substeps: usize,
    /// Record every `stride`-th substep (and the last).
    pub stride: usize,
    /// Defaults to `DELTA_COAL_REL * diameter`.
    pub delta_coal: Option<f64>,
}

impl CouplingOptions {
    pub fn new(substeps: usize) -> Self {
        Self {
            substeps,
            stride: 1,
            delta_coal: None,
        }
    }
}

/// One joint substep as seen by an observer.
#[derive(Debug, Clone, Copy)]
pub struct CouplingStep {
    pub t: f64,
    pub x_old: Vector,
    pub y_old: Vector,
    pub x_pre: Vector,
    pub y_pre: Vector,
    pub x_new: Vector,
    pub y_new: Vector,
    /// Matrix applied to the slope for `Y` (identity for synchronous).
    pub mirror: crate::linalg::Matrix,
    pub coalesced: bool,
}

pub fn run_synchronous(
    domain: &Domain,
    path: &DyadicPath,
    x0: &Vector,
    y0: &Vector,
    substeps: usize,
) -> Result<CouplingRun, CouplingError> {
    run_coupling(domain, path, CouplingKind::Synchronous, x0, y0, &CouplingOptions::new(substeps), &mut |_| {})
}

pub fn run_mirror(
    domain: &Domain,
    path: &DyadicPath,
    x0: &Vector,
    y0: &Vector,
    substeps: usize,
    delta_coal: f64,
) -> Result<CouplingRun, CouplingError> {
    let opts = CouplingOptions {
        delta_coal: Some(delta_coal),
        ..CouplingOptions::new(substeps)
    };
    run_coupling(domain, path, CouplingKind::Mirror, x0, y0, &opts, &mut |_| {})
}

/// Closest approach of `a + s (b - a)`, `s` in `[0, 1]`, to the origin.
fn closest_approach(a: &Vector, b: &Vector) -> (f64, f64) {
    let d = *b - *a;
    let dd = d.norm_sq();
    let s = if dd == 0.0 { 0.0 } else { (-a.dot(&d) / dd).clamp(0.0, 1.0) };
    (s, (*a + d * s).norm())
}

pub fn run_coupling(
    domain: &Domain,
    path: &DyadicPath,
    kind: CouplingKind,
    x0: &Vector,
    y0: &Vector,
    opts: &CouplingOptions,
    observer: &mut dyn FnMut(&CouplingStep),
) -> Result<CouplingRun, CouplingError> {
    if domain.dim() != 2 || path.dim() != 2 || x0.dim() != 2 || y0.dim() != 2 {
        return Err(CouplingError::InvalidArgument(
            "couplings need a planar domain, planar starts and a planar driver".into(),
        ));
    }
    if opts.substeps == 0 || !opts.substeps.is_power_of_two() || opts.stride == 0 {
        return Err(CouplingError::InvalidArgument(format!(
            "substeps {} must be a power of two and stride {} positive",
            opts.substeps, opts.stride
        )));
    }
    let eps = domain.eps_bdry();
    for p in [x0, y0] {
        if domain.signed_distance(p) < -eps {
            return Err(CouplingError::InvalidArgument(format!("start {p} is outside the closure")));
        }
    }
    let delta = opts.delta_coal.unwrap_or(DELTA_COAL_REL * domain.scale());
    if kind == CouplingKind::Mirror && x0.dist(y0) < delta {
        return Err(CouplingError::InvalidArgument(
            "mirror coupling needs |x0 - y0| >= delta_coal".into(),
        ));
    }

    let h = path.dt() / opts.substeps as f64;
    let total = path.cells() * opts.substeps;
    let cap = total / opts.stride + 2;
    let mut run = CouplingRun {
        kind,
        delta_coal: delta,
        times: Vec::with_capacity(cap),
        x: Vec::with_capacity(cap),
        y: Vec::with_capacity(cap),
        theta: Vec::with_capacity(cap),
        tau: None,
        lvar_x: 0.0,
        lvar_y: 0.0,
        input_var_x: 0.0,
        input_var_y: 0.0,
    };
    let (mut x, mut y) = (*x0, *y0);
    if x.dist(&y) < delta {
        run.tau = Some(0.0);
        y = x;
    }
    let record = |run: &mut CouplingRun, t: f64, x: Vector, y: Vector| {
        run.times.push(t);
        run.x.push(x);
        run.y.push(y);
        run.theta.push(if run.tau.is_some() { Angle::Coalesced } else { angle(&x, &y, delta) });
    };
    record(&mut run, 0.0, x, y);

    let identity = crate::linalg::Matrix::identity(2);
    let mut step = 0usize;
    for m in 0..path.cells() {
        let v = path.cell_slope(m);
        for _ in 0..opts.substeps {
            step += 1;
            let t = step as f64 * h;
            let frozen = kind == CouplingKind::Mirror && run.tau.is_some();
            if !frozen {
                let dx = v * h;
                let mirror = match kind {
                    CouplingKind::Mirror => mirror_matrix(&x, &y),
                    CouplingKind::Synchronous => identity,
                };
                let dy = mirror.mul_vec(&v) * h;
                let (x_pre, x_new, lx) = catch_up(domain, &x, &dx)?;
                let (y_pre, mut y_new, ly) = catch_up(domain, &y, &dy)?;
                run.lvar_x += lx.norm();
                run.input_var_x += dx.norm();
                let mut x_new = x_new;
                if run.tau.is_none() {
                    run.lvar_y += ly.norm();
                    run.input_var_y += dy.norm();
                    let (rel_old, rel_new) = (y - x, y_new - x_new);
                    let (s, gap) = closest_approach(&rel_old, &rel_new);
                    // A reversal of the pair within one substep is a crossing
                    // of the diagonal even when a boundary nudge makes the
                    // segment miss the delta-ball.
                    if gap < delta || rel_old.dot(&rel_new) < 0.0 {
                        run.tau = Some(t - (1.0 - s) * h);
                        match kind {
                            CouplingKind::Synchronous => y_new = x_new,
                            CouplingKind::Mirror => {
                                let xs = x + (x_new - x) * s;
                                let ys = y + (y_new - y) * s;
                                let meet = (xs + ys) * 0.5;
                                x_new = meet;
                                y_new = meet;
                            }
                        }
                    }
                } else {
                    // Synchronous after coalescence: Y follows X exactly.
                    run.lvar_y += lx.norm();
                    run.input_var_y += dx.norm();
                    y_new = x_new;
                }
                observer(&CouplingStep {
                    t,
                    x_old: x,
                    y_old: y,
                    x_pre,
                    y_pre,
                    x_new,
                    y_new,
                    mirror,
                    coalesced: run.tau.is_some(),
                });
                x = x_new;
                y = y_new;
            }
            if step % opts.stride == 0 || step == total {
                record(&mut run, t, x, y);
            }
        }
    }
    Ok(run)
}

/// Runs `paths` couplings on drivers `path_seed(master, i)` in parallel and
/// maps each run through `summarize`. Results are in path order.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble<R: Send>(
    domain: &Domain,
    kind: CouplingKind,
    x0: &Vector,
    y0: &Vector,
    level: u32,
    horizon: f64,
    master_seed: u64,
    paths: usize,
    opts: &CouplingOptions,
    summarize: impl Fn(usize, CouplingRun) -> R + Sync,
) -> Result<Vec<R>, CouplingError> {
    (0..paths)
        .into_par_iter()
        .map(|i| {
            let p = sample_path(2, level, horizon, path_seed(master_seed, i as u64))?;
            let run = run_coupling(domain, &p, kind, x0, y0, opts, &mut |_| {})?;
            Ok(summarize(i, run))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub value: f64,
    pub what: &'static str,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvariantReport {
    pub name: String,
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl InvariantReport {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: InvariantReport) {
        self.checked += other.checked;
        self.violations.extend(other.violations);
    }
}

impl fmt::Display for InvariantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {} ({} samples checked, {} violations)",
            self.name,
            if self.pass() { "PASS" } else { "FAIL" },
            self.checked,
            self.violations.len()
        )?;
        if !self.violations.is_empty() {
            writeln!(f, "{:>14} {:>22}  kind", "t", "value")?;
            for v in self.violations.iter().take(50) {
                writeln!(f, "{:>14.8} {:>22.15e}  {}", v.t, v.value, v.what)?;
            }
            if self.violations.len() > 50 {
                writeln!(f, "... {} more", self.violations.len() - 50)?;
            }
        }
        Ok(())
    }
}

/// Samples where the angle is defined and outside `[lower - eps, upper + eps]`.
pub fn check_cone_invariant(run: &CouplingRun, lower: f64, upper: f64, eps_angle: f64) -> InvariantReport {
    assert!(lower < upper, "lower bound must be below upper bound");
    let mut report = InvariantReport::new(format!("angle in [{lower:.6}, {upper:.6}]"));
    let mut seen_coalesced = false;
    for (t, th) in run.times.iter().zip(&run.theta) {
        report.checked += 1;
        match th {
            Angle::Coalesced => seen_coalesced = true,
            Angle::Radians(a) => {
                if seen_coalesced {
                    report.violations.push(Violation {
                        t: *t,
                        value: *a,
                        what: "angle defined after coalescence",
                    });
                } else if *a < lower - eps_angle || *a > upper + eps_angle {
                    report.violations.push(Violation {
                        t: *t,
                        value: *a,
                        what: "angle outside bounds",
                    });
                }
            }
        }
    }
    report
}

/// Upper band `[pi/4, pi/2 - atan(lambda)]` of a lip domain.
pub fn lip_band(lip: &LipDomain) -> (f64, f64) {
    (FRAC_PI_4, FRAC_PI_2 - lip.lambda_lip().atan())
}

/// While the angle is in the upper band, `X` is off the upper wall and `Y`
/// off the lower wall; symmetrically in the mirrored lower band.
pub fn check_lip_wall_exclusion(run: &CouplingRun, lip: &LipDomain, eps_bdry: f64) -> InvariantReport {
    let (lo, hi) = lip_band(lip);
    let mut report = InvariantReport::new("lip wall exclusion");
    for k in 0..run.times.len() {
        let Some(a) = run.theta[k].radians() else { continue };
        let (x, y) = (run.x[k], run.y[k]);
        if (lo..=hi).contains(&a) {
            report.checked += 1;
            if lip.nearest_upper(&x).distance <= eps_bdry {
                report.violations.push(Violation { t: run.times[k], value: a, what: "X on upper wall" });
            }
            if lip.nearest_lower(&y).distance <= eps_bdry {
                report.violations.push(Violation { t: run.times[k], value: a, what: "Y on lower wall" });
            }
        } else if (-hi..=-lo).contains(&a) {
            report.checked += 1;
            if lip.nearest_lower(&x).distance <= eps_bdry {
                report.violations.push(Violation { t: run.times[k], value: a, what: "X on lower wall" });
            }
            if lip.nearest_upper(&y).distance <= eps_bdry {
                report.violations.push(Violation { t: run.times[k], value: a, what: "Y on upper wall" });
            }
        }
    }
    report
}

/// Between consecutive samples starting in the shrunken upper band the
/// angle does not increase by more than `tol`; in the mirrored lower band
/// it does not decrease by more than `tol`.
pub fn check_edge_monotonicity(run: &CouplingRun, lip: &LipDomain, eps_angle: f64, tol: f64) -> InvariantReport {
    let (lo, hi) = lip_band(lip);
    let (lo, hi) = (lo + eps_angle, hi - eps_angle);
    let mut report = InvariantReport::new("edge monotonicity");
    for k in 1..run.times.len() {
        let (Some(a), Some(b)) = (run.theta[k - 1].radians(), run.theta[k].radians()) else {
            continue;
        };
        if (lo..=hi).contains(&a) {
            report.checked += 1;
            if b - a > tol {
                report.violations.push(Violation { t: run.times[k], value: b - a, what: "angle increased in upper band" });
            }
        } else if (-hi..=-lo).contains(&a) {
            report.checked += 1;
            if a - b > tol {
                report.violations.push(Violation { t: run.times[k], value: b - a, what: "angle decreased in lower band" });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn angle_examples() {
        let o = Vector::xy(0.0, 0.0);
        assert_eq!(angle(&o, &Vector::xy(1.0, 1.0), 1e-8), Angle::Radians(PI / 4.0));
        assert_eq!(angle(&o, &Vector::xy(-1.0, 0.0), 1e-8), Angle::Radians(PI));
        assert_eq!(angle(&o, &o, 1e-8), Angle::Coalesced);
    }

    #[test]
    fn equal_starts_coalesce_immediately() {
        let d = Domain::default_triangle();
        let p = sample_path(2, 4, 1.0, 5).unwrap();
        let x0 = Vector::xy(1.0, 0.2);
        let run = run_synchronous(&d, &p, &x0, &x0, 8).unwrap();
        assert_eq!(run.tau, Some(0.0));
        assert!(run.x.iter().zip(&run.y).all(|(a, b)| a == b));
        assert!(run.theta.iter().all(|a| *a == Angle::Coalesced));
    }

    #[test]
    fn interior_synchronous_keeps_offset() {
        let d = Domain::rectangle(-10.0, 10.0, -10.0, 10.0).unwrap();
        let p = sample_path(2, 4, 0.25, 5).unwrap();
        let (x0, y0) = (Vector::xy(0.0, 0.0), Vector::xy(1.0, 0.5));
        let run = run_synchronous(&d, &p, &x0, &y0, 8).unwrap();
        for (x, y) in run.x.iter().zip(&run.y) {
            assert!((*y - *x).dist(&(y0 - x0)) < 1e-12);
        }
    }

    #[test]
    fn checker_examples() {
        let run = CouplingRun {
            kind: CouplingKind::Synchronous,
            delta_coal: 1e-8,
            times: vec![0.0, 0.5, 1.0],
            x: vec![Vector::xy(0.0, 0.0); 3],
            y: vec![Vector::xy(1.0, 0.0); 3],
            theta: vec![Angle::Radians(0.0); 3],
            tau: None,
            lvar_x: 0.0,
            lvar_y: 0.0,
            input_var_x: 0.0,
            input_var_y: 0.0,
        };
        assert!(check_cone_invariant(&run, -PI / 4.0, PI / 4.0, 1e-4).pass());
        let mut bad = run.clone();
        bad.theta[1] = Angle::Radians(PI / 2.0);
        let report = check_cone_invariant(&bad, -PI / 4.0, PI / 4.0, 1e-4);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].t, 0.5);
        assert!(report.to_string().contains("FAIL"));
    }

    #[test]
    fn coalescence_is_absorbing() {
        let d = Domain::default_lip();
        let (x0, y0) = (Vector::xy(0.45, 0.0), Vector::xy(0.55, 0.0));
        for seed in 0..20 {
            let p = sample_path(2, 6, 1.0, seed).unwrap();
            let run = run_mirror(&d, &p, &x0, &y0, 16, 1e-8).unwrap();
            let first = run.theta.iter().position(|a| *a == Angle::Coalesced);
            if let Some(k) = first {
                assert!(run.theta[k..].iter().all(|a| *a == Angle::Coalesced));
                assert!(run.x[k..].iter().all(|p| *p == run.x[k]));
            }
        }
    }

    #[test]
    fn csv_layout() {
        let d = Domain::default_triangle();
        let p = DyadicPath::zero(2, 0, 1.0).unwrap();
        let run = run_synchronous(&d, &p, &Vector::xy(1.0, 0.2), &Vector::xy(2.0, 0.2), 1).unwrap();
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,x1,x2,y1,y2,theta,coalesced\n0,1,0.2,2,0.2,0,0\n1,1,0.2,2,0.2,0,0\n");
    }
}
