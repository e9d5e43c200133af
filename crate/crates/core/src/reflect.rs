//! Reflected ODE solvers driven by a dyadic path.
//!
//! The primary integrator is the catch-up scheme: an explicit Euler substep
//! followed by projection onto the closure. The tangent-form integrator and
//! the Picard iteration are kept for cross-validation, and the 1D Skorohod
//! map gives an exact oracle on the half-line.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::cones::{project_onto_cone, tangent_cone, ConeError};
use crate::geometry::{Domain, GeometryError};
use crate::linalg::{Matrix, Vector};
use crate::wiener::DyadicPath;

pub const DEFAULT_SUBSTEPS: usize = 1 << 6;
pub const MAX_AUTO_SUBSTEPS: usize = 1 << 14;
/// Finite-difference step relative to the domain diameter.
pub const FD_REL: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReflectError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("Picard iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("field is singular at {0}")]
    SingularPoint(Vector),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Lipschitz,
    C2,
}

/// A diffusion matrix `sigma` (d x r, columns `V_1..V_r`) and a drift `b`.
pub trait VectorField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn sigma(&self, x: &Vector) -> Matrix;
    fn drift(&self, _x: &Vector) -> Vector {
        Vector::zeros(self.dim())
    }
    fn smoothness(&self) -> Smoothness {
        Smoothness::Lipschitz
    }
}

type SigmaFn = dyn Fn(&Vector) -> Matrix + Send + Sync;
type DriftFn = dyn Fn(&Vector) -> Vector + Send + Sync;

/// Field defined by closures.
#[derive(Clone)]
pub struct FnField {
    dim: usize,
    noise_dim: usize,
    smoothness: Smoothness,
    sigma: Arc<SigmaFn>,
    drift: Option<Arc<DriftFn>>,
}

impl FnField {
    pub fn new(
        dim: usize,
        noise_dim: usize,
        smoothness: Smoothness,
        sigma: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            noise_dim,
            smoothness,
            sigma: Arc::new(sigma),
            drift: None,
        }
    }

    pub fn with_drift(mut self, drift: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(drift));
        self
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnField({}x{}, {:?})", self.dim, self.noise_dim, self.smoothness)
    }
}

impl VectorField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    fn sigma(&self, x: &Vector) -> Matrix {
        (self.sigma)(x)
    }
    fn drift(&self, x: &Vector) -> Vector {
        match &self.drift {
            Some(b) => b(x),
            None => Vector::zeros(self.dim),
        }
    }
    fn smoothness(&self) -> Smoothness {
        self.smoothness
    }
}

#[derive(Debug, Clone)]
pub enum FieldSpec {
    /// `sigma = I_d`, `b = 0`.
    Identity(usize),
    /// Planar, scalar noise: `sigma(x) = (x2, -x1)`.
    Rotation,
    /// On `(x, y)` in R^4 with planar noise: `sigma = [I; I - 2 u u^T]`,
    /// `u = (y - x) / |y - x|`.
    MirrorPair,
    Custom(Arc<dyn VectorField>),
}

/// Householder matrix `I - 2 u u^T` for `u` along `y - x`; identity when
/// the points coincide.
pub fn mirror_matrix(x: &Vector, y: &Vector) -> Matrix {
    match (*y - *x).normalized() {
        Some(u) => Matrix::householder(&u),
        None => Matrix::identity(x.dim()),
    }
}

impl FieldSpec {
    pub fn custom(field: impl VectorField + 'static) -> Self {
        FieldSpec::Custom(Arc::new(field))
    }

    pub fn dim(&self) -> usize {
        match self {
            FieldSpec::Identity(d) => *d,
            FieldSpec::Rotation => 2,
            FieldSpec::MirrorPair => 4,
            FieldSpec::Custom(f) => f.dim(),
        }
    }

    pub fn noise_dim(&self) -> usize {
        match self {
            FieldSpec::Identity(d) => *d,
            FieldSpec::Rotation => 1,
            FieldSpec::MirrorPair => 2,
            FieldSpec::Custom(f) => f.noise_dim(),
        }
    }

    pub fn smoothness(&self) -> Smoothness {
        match self {
            FieldSpec::Custom(f) => f.smoothness(),
            _ => Smoothness::C2,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, FieldSpec::Identity(_))
    }

    pub fn sigma(&self, x: &Vector) -> Matrix {
        match self {
            FieldSpec::Identity(d) => Matrix::identity(*d),
            FieldSpec::Rotation => Matrix::from_rows(&[&[x[1]], &[-x[0]]]),
            FieldSpec::MirrorPair => {
                let (a, b) = x.split(2);
                Matrix::vstack(&Matrix::identity(2), &mirror_matrix(&a, &b))
            }
            FieldSpec::Custom(f) => f.sigma(x),
        }
    }

    pub fn drift(&self, x: &Vector) -> Vector {
        match self {
            FieldSpec::Custom(f) => f.drift(x),
            _ => Vector::zeros(self.dim()),
        }
    }

    /// `sigma(x) v + b(x)`.
    pub fn velocity(&self, x: &Vector, v: &Vector) -> Vector {
        match self {
            FieldSpec::Identity(_) => *v,
            FieldSpec::Rotation => Vector::xy(x[1] * v[0], -x[0] * v[0]),
            _ => self.sigma(x).mul_vec(v) + self.drift(x),
        }
    }

    /// Sampled sup of `|sigma|_F + |b|` and Lipschitz estimate over pairs of
    /// points drawn uniformly from the closure.
    pub fn bounds_on<R: rand::Rng + ?Sized>(
        &self,
        domain: &Domain,
        samples: usize,
        rng: &mut R,
    ) -> FieldBounds {
        let pts: Vec<Vector> = (0..samples).map(|_| domain.sample_closure(rng)).collect();
        let mut sup: f64 = 0.0;
        let mut lip: f64 = 0.0;
        for (i, p) in pts.iter().enumerate() {
            let sp = self.sigma(p);
            let bp = self.drift(p);
            sup = sup.max(sp.frobenius() + bp.norm());
            if let Some(q) = pts.get(i + 1) {
                let d = p.dist(q);
                if d > 0.0 {
                    let mut diff = 0.0;
                    let sq = self.sigma(q);
                    for r in 0..sp.rows() {
                        for c in 0..sp.cols() {
                            diff += (sp.get(r, c) - sq.get(r, c)).powi(2);
                        }
                    }
                    lip = lip.max((diff.sqrt() + (bp - self.drift(q)).norm()) / d);
                }
            }
        }
        FieldBounds {
            sup_norm: sup,
            lipschitz: lip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldBounds {
    pub sup_norm: f64,
    pub lipschitz: f64,
}

/// Sampled `(X, L, |L|)` together with the composed input
/// `y_t = x0 + int sigma dw + int b dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    pub l: Vec<Vector>,
    pub lvar: Vec<f64>,
    pub input: Vec<Vector>,
    /// Variation of the composed input over every substep.
    pub input_variation: f64,
    /// Variation of `X` over every substep.
    pub x_variation: f64,
    pub level: u32,
    pub substeps: usize,
    pub stride: usize,
    pub driver_seed: Option<u64>,
    /// Picard iterations (worst window), when produced by [`solve_picard`].
    pub iterations: Option<usize>,
}

impl ReflectedTrajectory {
    fn start(x0: Vector, path: &DyadicPath, substeps: usize, stride: usize) -> Self {
        let expected = path.cells() * substeps / stride + 2;
        let mut t = Self {
            times: Vec::with_capacity(expected),
            x: Vec::with_capacity(expected),
            l: Vec::with_capacity(expected),
            lvar: Vec::with_capacity(expected),
            input: Vec::with_capacity(expected),
            input_variation: 0.0,
            x_variation: 0.0,
            level: path.level(),
            substeps,
            stride,
            driver_seed: path.seed(),
            iterations: None,
        };
        t.push(0.0, x0, Vector::zeros(x0.dim()), 0.0, x0);
        t
    }

    fn push(&mut self, time: f64, x: Vector, l: Vector, lvar: f64, y: Vector) {
        self.times.push(time);
        self.x.push(x);
        self.l.push(l);
        self.lvar.push(lvar);
        self.input.push(y);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_x(&self) -> Vector {
        *self.x.last().expect("trajectory has samples")
    }

    pub fn final_lvar(&self) -> f64 {
        *self.lvar.last().expect("trajectory has samples")
    }

    /// `max |X_t - y_t - L_t|` over samples.
    pub fn decomposition_error(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.input)
            .zip(&self.l)
            .map(|((x, y), l)| (*x - *y - *l).norm())
            .fold(0.0, f64::max)
    }

    /// `max_t |X_t - other.X_t|` over common sample times.
    pub fn sup_distance(&self, other: &ReflectedTrajectory) -> f64 {
        assert_eq!(self.times.len(), other.times.len(), "sample grids differ");
        self.x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| a.dist(b))
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,x1,..,xd,l1,..,ld,lvar`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.x.first().map_or(0, Vector::dim);
        write!(out, "t")?;
        for i in 1..=d {
            write!(out, ",x{i}")?;
        }
        for i in 1..=d {
            write!(out, ",l{i}")?;
        }
        writeln!(out, ",lvar")?;
        for k in 0..self.len() {
            write!(out, "{}", self.times[k])?;
            for v in self.x[k].as_slice().iter().chain(self.l[k].as_slice()) {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{}", self.lvar[k])?;
        }
        Ok(())
    }
}

/// One substep as seen by an observer.
#[derive(Debug, Clone, Copy)]
pub struct SubstepRecord {
    pub t: f64,
    pub cell: usize,
    pub x_old: Vector,
    /// Point before projection.
    pub x_pre: Vector,
    pub x_new: Vector,
    pub dl: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scheme {
    CatchUp,
    Tangent,
}

fn check_inputs(
    domain: &Domain,
    field: &FieldSpec,
    path: &DyadicPath,
    x0: &Vector,
    substeps: usize,
    stride: usize,
) -> Result<(), ReflectError> {
    if field.dim() != domain.dim() || x0.dim() != domain.dim() {
        return Err(ReflectError::InvalidArgument(format!(
            "domain, field and x0 dimensions differ ({}, {}, {})",
            domain.dim(),
            field.dim(),
            x0.dim()
        )));
    }
    if field.noise_dim() != path.dim() {
        return Err(ReflectError::InvalidArgument(format!(
            "field expects {}-dimensional noise, path has {}",
            field.noise_dim(),
            path.dim()
        )));
    }
    if substeps == 0 || !substeps.is_power_of_two() {
        return Err(ReflectError::InvalidArgument(format!(
            "substeps_per_cell = {substeps} is not a power of two"
        )));
    }
    if stride == 0 {
        return Err(ReflectError::InvalidArgument("stride must be positive".into()));
    }
    if domain.signed_distance(x0) < -domain.eps_bdry() {
        return Err(ReflectError::InvalidArgument(format!("x0 = {x0} is outside the closure")));
    }
    Ok(())
}

/// Catch-up projection integrator.
pub fn integrate_reflected(
    domain: &Domain,
    field: &FieldSpec,
    path: &DyadicPath,
    x0: &Vector,
    substeps_per_cell: usize,
) -> Result<ReflectedTrajectory, ReflectError> {
    integrate_reflected_observed(domain, field, path, x0, substeps_per_cell, 1, &mut |_| {})
}

/// [`integrate_reflected`] recording every `stride`-th substep (plus the
/// last) and reporting each substep to `observer`.
pub fn integrate_reflected_observed(
    domain: &Domain,
    field: &FieldSpec,
    path: &DyadicPath,
    x0: &Vector,
    substeps_per_cell: usize,
    stride: usize,
    observer: &mut dyn FnMut(&SubstepRecord),
) -> Result<ReflectedTrajectory, ReflectError> {
    integrate(domain, field, path, x0, substeps_per_cell, stride, Scheme::CatchUp, observer)
}

/// Catch-up integration starting at [`DEFAULT_SUBSTEPS`], doubling the
/// substep count on `OutOfReach` up to [`MAX_AUTO_SUBSTEPS`].
pub fn integrate_reflected_auto(
    domain: &Domain,
    field: &FieldSpec,
    path: &DyadicPath,
    x0: &Vector,
    stride: usize,
) -> Result<ReflectedTrajectory, ReflectError> {
    let mut substeps = DEFAULT_SUBSTEPS;
    loop {
        match integrate_reflected_observed(domain, field, path, x0, substeps, stride, &mut |_| {}) {
            Err(ReflectError::Geometry(GeometryError::OutOfReach { .. }))
                if substeps < MAX_AUTO_SUBSTEPS =>
            {
                substeps *= 2
            }
            other => return other,
        }
    }
}

/// Tangent-cone form: `u = proj_T(x)(sigma v + b)`, then `x <- proj(x + h u)`.
pub fn integrate_tangent_form(
    domain: &Domain,
    field: &FieldSpec,
    path: &DyadicPath,
    x0: &Vector,
    substeps_per_cell: usize,
) -> Result<ReflectedTrajectory, ReflectError> {
    integrate(domain, field, path, x0, substeps_per_cell, 1, Scheme::Tangent, &mut |_| {})
}

pub fn integrate_tangent_form_strided(
    domain: &Domain,
    field: &FieldSpec,
    path: &DyadicPath,
    x0: &Vector,
    substeps_per_cell: usize,
    stride: usize,
) -> Result<ReflectedTrajectory, ReflectError> {
    integrate(domain, field, path, x0, substeps_per_cell, stride, Scheme::Tangent, &mut |_| {})
}

/// One catch-up substep from `x` with input increment `dy`; returns the new
/// point and the pushing increment.
#[inline]
pub(crate) fn catch_up(domain: &Domain, x: &Vector, dy: &Vector) -> Result<(Vector, Vector, Vector), GeometryError> {
    let pre = *x + *dy;
    let new = domain.project_unchecked(&pre)?;
    Ok((pre, new, new - pre))
}

#[allow(clippy::too_many_arguments)]
fn integrate(
    domain: &Domain,
    field: &FieldSpec,
    path: &DyadicPath,
    x0: &Vector,
    substeps: usize,
    stride: usize,
    scheme: Scheme,
    observer: &mut dyn FnMut(&SubstepRecord),
) -> Result<ReflectedTrajectory, ReflectError> {
    check_inputs(domain, field, path, x0, substeps, stride)?;
    let h = path.dt() / substeps as f64;
    let eps = domain.eps_bdry();
    let mut traj = ReflectedTrajectory::start(*x0, path, substeps, stride);
    let mut x = *x0;
    let mut y = *x0;
    let mut l = Vector::zeros(x0.dim());
    let mut lvar = 0.0;
    let total = path.cells() * substeps;
    let mut step = 0usize;
    for m in 0..path.cells() {
        let v = path.cell_slope(m);
        for _ in 0..substeps {
            let w = field.velocity(&x, &v);
            let dy = w * h;
            let (pre, tangential) = match scheme {
                Scheme::CatchUp => (x + dy, Vector::zeros(x.dim())),
                Scheme::Tangent => {
                    let cone = tangent_cone(domain, &x, eps)?;
                    let u = project_onto_cone(&cone, &w)?;
                    (x + u * h, (u - w) * h)
                }
            };
            let x_new = domain.project_unchecked(&pre)?;
            let dl = (x_new - pre) + tangential;
            step += 1;
            let t = step as f64 * h;
            observer(&SubstepRecord {
                t,
                cell: m,
                x_old: x,
                x_pre: pre,
                x_new,
                dl,
            });
            traj.input_variation += dy.norm();
            traj.x_variation += x_new.dist(&x);
            lvar += dl.norm();
            l += dl;
            y += dy;
            x = x_new;
            if step % stride == 0 || step == total {
                traj.push(t, x, l, lvar, y);
            }
        }
    }
    Ok(traj)
}

/// Picard iteration `y <- Gamma(x0 + int sigma(y) dw + int b(y) dt)` with
/// `Gamma` the `sigma = I` catch-up map, run window by window (one dyadic
/// cell per window). The initial guess on a window is the image of the
/// constant path at the window's start, so a constant field converges after
/// one iteration. Iterations are counted per window and the worst is
/// reported.
pub fn solve_picard(
    domain: &Domain,
    field: &FieldSpec,
    path: &DyadicPath,
    x0: &Vector,
    substeps_per_cell: usize,
    tol: f64,
    max_iter: usize,
) -> Result<ReflectedTrajectory, ReflectError> {
    solve_picard_strided(domain, field, path, x0, substeps_per_cell, 1, tol, max_iter)
}

/// [`solve_picard`] recording every `stride`-th substep (plus the last).
#[allow(clippy::too_many_arguments)]
pub fn solve_picard_strided(
    domain: &Domain,
    field: &FieldSpec,
    path: &DyadicPath,
    x0: &Vector,
    substeps_per_cell: usize,
    stride: usize,
    tol: f64,
    max_iter: usize,
) -> Result<ReflectedTrajectory, ReflectError> {
    check_inputs(domain, field, path, x0, substeps_per_cell, stride)?;
    if !(tol > 0.0) || max_iter == 0 {
        return Err(ReflectError::InvalidArgument("need tol > 0 and max_iter >= 1".into()));
    }
    let s = substeps_per_cell;
    let h = path.dt() / s as f64;
    let mut traj = ReflectedTrajectory::start(*x0, path, s, stride);
    let total = path.cells() * s;
    let mut start = *x0;
    let mut y_start = *x0;
    let mut l_start = Vector::zeros(x0.dim());
    let mut lvar = 0.0;
    let mut worst_iter = 0;
    // States at the substep starts of the current window: iterate k and k+1.
    let mut cur = vec![start; s + 1];
    let mut next = vec![start; s + 1];

    // Gamma applied to the input generated by `states`; writes into `out`.
    let gamma = |states: &[Vector], v: &Vector, start: Vector, out: &mut [Vector]| -> Result<(), GeometryError> {
        out[0] = start;
        for k in 0..s {
            let dy = field.velocity(&states[k], v) * h;
            out[k + 1] = catch_up(domain, &out[k], &dy)?.1;
        }
        Ok(())
    };

    for m in 0..path.cells() {
        let v = path.cell_slope(m);
        cur.iter_mut().for_each(|c| *c = start);
        let constant = cur.clone();
        gamma(&constant, &v, start, &mut cur)?;
        let mut iterations = 0;
        loop {
            gamma(&cur, &v, start, &mut next)?;
            iterations += 1;
            let residual = cur
                .iter()
                .zip(&next)
                .map(|(a, b)| a.dist(b))
                .fold(0.0, f64::max);
            std::mem::swap(&mut cur, &mut next);
            if residual < tol {
                break;
            }
            if iterations >= max_iter {
                return Err(ReflectError::NoConvergence { iterations, residual });
            }
        }
        worst_iter = worst_iter.max(iterations);
        // Replay the converged window to fill L, |L| and the input.
        let mut x = start;
        for k in 0..s {
            let dy = field.velocity(&cur[k], &v) * h;
            let x_new = cur[k + 1];
            let dl = x_new - (x + dy);
            traj.input_variation += dy.norm();
            traj.x_variation += x_new.dist(&x);
            lvar += dl.norm();
            l_start += dl;
            y_start += dy;
            x = x_new;
            let step = m * s + k + 1;
            if step % stride == 0 || step == total {
                traj.push(step as f64 * h, x, l_start, lvar, y_start);
            }
        }
        start = x;
    }
    traj.iterations = Some(worst_iter);
    Ok(traj)
}

/// Reflection of a scalar path at zero: `l_t = max(0, max_{s<=t}(-w_s) - x0)`,
/// `x_t = x0 + w_t + l_t`. `w` is sampled with `w_0 = 0`.
pub fn skorohod_map_1d(w: &[f64], x0: f64) -> Result<(Vec<f64>, Vec<f64>), ReflectError> {
    if !(x0 >= 0.0) {
        return Err(ReflectError::InvalidArgument(format!("x0 = {x0} is negative")));
    }
    let mut running = f64::NEG_INFINITY;
    let mut x = Vec::with_capacity(w.len());
    let mut l = Vec::with_capacity(w.len());
    for &wt in w {
        running = running.max(-wt);
        let lt = (running - x0).max(0.0);
        l.push(lt);
        x.push(x0 + wt + lt);
    }
    Ok((x, l))
}

/// `1/2 sum_i (D_{V_i} V_i)(z)` by central differences along each column.
pub fn stratonovich_correction(field: &FieldSpec, z: &Vector, fd_step: f64) -> Result<Vector, ReflectError> {
    if !(fd_step > 0.0) {
        return Err(ReflectError::InvalidArgument("fd_step must be positive".into()));
    }
    if z.dim() != field.dim() {
        return Err(ReflectError::InvalidArgument(format!(
            "point of dimension {} for a field of dimension {}",
            z.dim(),
            field.dim()
        )));
    }
    if let FieldSpec::MirrorPair = field {
        let (x, y) = z.split(2);
        if x.dist(&y) < 10.0 * fd_step {
            return Err(ReflectError::SingularPoint(*z));
        }
    }
    if field.is_constant() {
        return Ok(Vector::zeros(z.dim()));
    }
    let sigma = field.sigma(z);
    let mut out = Vector::zeros(z.dim());
    for i in 0..sigma.cols() {
        let vi = sigma.column(i);
        let norm = vi.norm();
        let Some(dir) = vi.normalized() else { continue };
        let plus = field.sigma(&(*z + dir * fd_step)).column(i);
        let minus = field.sigma(&(*z - dir * fd_step)).column(i);
        out += (plus - minus) * (norm / (2.0 * fd_step));
    }
    Ok(out * 0.5)
}
