use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use rsde::coupling::{
    check_cone_invariant, check_edge_monotonicity, check_lip_wall_exclusion, run_coupling, CouplingError,
    CouplingKind, CouplingOptions, InvariantReport,
};
use rsde::diagnostics::{
    holder_tail_from_norms, max_holder_norm, moment_scaling, variation_growth, weak_convergence_ladder,
    DiagnosticsError, EnsembleSummary,
};
use rsde::geometry::{Domain, GeometryError};
use rsde::reflect::{integrate_reflected_observed, ReflectError, ReflectedTrajectory};
use rsde::wiener::{path_seed, sample_path, DyadicPath, WienerError};
use rsde::Vector;

use crate::config::{CouplingChoice, ExperimentConfig, ExperimentKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;

/// Slack on the variation bound `|L|_T <= var(y)`.
pub const VARIATION_TOL: f64 = 1e-6;

/// Paths integrated per parallel batch before their files are written.
const BATCH: usize = 256;
/// Tables longer than this are truncated in the report (the CSV is complete).
const REPORT_ROWS: usize = 20;

/// Deterministic replacement for the Brownian driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestDriver {
    Zero,
    /// `w(t) = slope * t` in every coordinate.
    Ramp(f64),
}

impl TestDriver {
    pub fn path(self, r: usize, level: u32, horizon: f64) -> Result<DyadicPath, WienerError> {
        match self {
            Self::Zero => DyadicPath::zero(r, level, horizon),
            Self::Ramp(slope) => DyadicPath::from_fn(level, horizon, |t| {
                let mut v = Vector::zeros(r);
                for i in 0..r {
                    v[i] = slope * t;
                }
                v
            }),
        }
    }
}

impl FromStr for TestDriver {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zero" => Ok(Self::Zero),
            "ramp" => Ok(Self::Ramp(1.0)),
            _ => s
                .strip_prefix("ramp:")
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .map(Self::Ramp)
                .ok_or_else(|| format!("unknown test driver `{s}` (zero, ramp, ramp:<slope>)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub test_driver: Option<TestDriver>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Wiener(#[from] WienerError),
    #[error(transparent)]
    Reflect(#[from] ReflectError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub exit_code: i32,
    pub text: String,
    pub out_dir: PathBuf,
    /// Files written, in order.
    pub files: Vec<PathBuf>,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    test_driver: Option<TestDriver>,
    dir: PathBuf,
    files: Vec<PathBuf>,
    body: String,
    violations: bool,
}

impl Ctx<'_> {
    fn driver(&self, r: usize, i: usize) -> Result<DyadicPath, WienerError> {
        let d = &self.cfg.driver;
        match self.test_driver {
            Some(t) => t.path(r, d.level, d.horizon),
            None => sample_path(r, d.level, d.horizon, path_seed(self.seed, i as u64)),
        }
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let io_err = |source| RunError::Io { path: path.clone(), source };
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        f(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        self.files.push(path);
        Ok(())
    }

    fn summary(&mut self, name: &str, s: &EnsembleSummary) -> Result<(), RunError> {
        self.write(name, |w| s.write_csv(w))?;
        if s.rows.len() <= REPORT_ROWS {
            writeln!(self.body, "{s}").unwrap();
        } else {
            let short = EnsembleSummary { rows: s.rows[..REPORT_ROWS].to_vec(), ..s.clone() };
            writeln!(self.body, "{short}  ... {} more rows in {name}\n", s.rows.len() - REPORT_ROWS).unwrap();
        }
        if !s.pass() {
            self.violations = true;
        }
        Ok(())
    }
}

/// Runs the configured experiment, writing CSVs and `report.txt` into the
/// output directory. Never panics on module errors: they end up in the
/// report with exit code 1.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> RunReport {
    let start = Instant::now();
    let dir = opts.out_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let mut ctx = Ctx {
        cfg,
        seed: opts.seed.unwrap_or(cfg.driver.seed),
        test_driver: opts.test_driver,
        dir: dir.clone(),
        files: Vec::new(),
        body: String::new(),
        violations: false,
    };
    let result = fs::create_dir_all(&dir)
        .map_err(|source| RunError::Io { path: dir.clone(), source })
        .and_then(|_| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| RunError::Unsupported(format!("thread pool: {e}")))?;
            pool.install(|| match cfg.kind {
                ExperimentKind::Simulate => simulate(&mut ctx),
                ExperimentKind::Couple => couple(&mut ctx),
                ExperimentKind::Converge => converge(&mut ctx),
                ExperimentKind::Diagnose => diagnose(&mut ctx),
            })
        });
    let (exit_code, status) = match &result {
        Err(e) => (EXIT_RUNTIME, format!("error: {e}")),
        Ok(()) if ctx.violations => (EXIT_INVARIANT, "invariant violations".to_string()),
        Ok(()) => (EXIT_OK, "ok".to_string()),
    };

    let mut text = String::new();
    writeln!(text, "rsde {}", cfg.kind).unwrap();
    writeln!(text, "\n[config]").unwrap();
    for (k, v) in &cfg.echo {
        writeln!(text, "{k} = {v}").unwrap();
    }
    writeln!(text, "\n[run]").unwrap();
    writeln!(text, "master seed = {} (path i uses path_seed(master, i))", ctx.seed).unwrap();
    match opts.test_driver {
        Some(t) => writeln!(text, "driver = test {t:?}").unwrap(),
        None => writeln!(text, "driver = brownian").unwrap(),
    }
    writeln!(text, "threads = {} (0 picks one per core)", cfg.threads).unwrap();
    writeln!(text, "wall time = {:.3} s", start.elapsed().as_secs_f64()).unwrap();
    writeln!(text, "\n[results]").unwrap();
    text.push_str(&ctx.body);
    writeln!(text, "\nstatus: {status}").unwrap();
    writeln!(text, "exit code: {exit_code}").unwrap();

    let report_path = dir.join("report.txt");
    let mut exit = exit_code;
    match fs::write(&report_path, &text) {
        Ok(()) => ctx.files.push(report_path),
        Err(e) => {
            writeln!(text, "could not write {}: {e}", report_path.display()).unwrap();
            exit = EXIT_RUNTIME;
        }
    }
    RunReport { exit_code: exit, text, out_dir: dir, files: ctx.files }
}

fn variation_ok(lvar: f64, input_var: f64) -> bool {
    lvar <= input_var + VARIATION_TOL
}

fn coord_names(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

fn simulate(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let domain = cfg.domain.build()?;
    let field = cfg.field.spec(domain.dim());
    let d = domain.dim();
    let eps = domain.eps_bdry();
    let mut columns = vec!["path".to_string()];
    columns.extend(coord_names("x", d));
    columns.extend(["lvar".into(), "input_var".into(), "min_signed_distance".into()]);
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut s = EnsembleSummary::new("final states", cfg.paths, &cols);
    let (mut bad_var, mut bad_inside) = (0usize, 0usize);

    for batch in (0..cfg.paths).collect::<Vec<_>>().chunks(BATCH) {
        let trs: Vec<ReflectedTrajectory> = batch
            .par_iter()
            .map(|&i| {
                let p = ctx.driver(field.noise_dim(), i)?;
                Ok(integrate_reflected_observed(
                    &domain,
                    &field,
                    &p,
                    &cfg.driver.x0,
                    cfg.driver.substeps,
                    cfg.stride,
                    &mut |_| {},
                )?)
            })
            .collect::<Result<_, RunError>>()?;
        for (&i, tr) in batch.iter().zip(&trs) {
            if i < cfg.trajectories {
                ctx.write(&format!("trajectory_{i:05}.csv"), |w| tr.write_csv(w))?;
            }
            let min_sd = tr.x.iter().map(|x| domain.signed_distance(x)).fold(f64::INFINITY, f64::min);
            bad_var += usize::from(!variation_ok(tr.final_lvar(), tr.input_variation));
            bad_inside += usize::from(min_sd < -eps);
            let mut row = vec![i as f64];
            row.extend((0..d).map(|k| tr.final_x()[k]));
            row.extend([tr.final_lvar(), tr.input_variation, min_sd]);
            s.rows.push(row);
        }
    }
    s.check("variation bound", bad_var == 0, format!("{bad_var} of {} paths exceed var(y) + {VARIATION_TOL}", cfg.paths));
    s.check("containment", bad_inside == 0, format!("{bad_inside} of {} paths leave the closure", cfg.paths));
    ctx.summary("summary.csv", &s)
}

fn default_bounds(ctx: &Ctx, domain: &Domain) -> Option<(f64, f64)> {
    let inv = &ctx.cfg.invariant;
    match (inv.lower, inv.upper, domain.as_lip()) {
        (Some(lo), Some(hi), _) => Some((lo, hi)),
        (lo, hi, Some(_)) => Some((lo.unwrap_or(-std::f64::consts::FRAC_PI_4), hi.unwrap_or(std::f64::consts::FRAC_PI_4))),
        (Some(lo), None, None) => Some((lo, f64::INFINITY)),
        (None, Some(hi), None) => Some((f64::NEG_INFINITY, hi)),
        (None, None, None) => None,
    }
}

fn couple(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let cc = cfg.coupling.as_ref().ok_or_else(|| RunError::Unsupported("missing coupling section".into()))?;
    let domain = cfg.domain.build()?;
    let kind = match cc.kind {
        CouplingChoice::Synchronous => CouplingKind::Synchronous,
        CouplingChoice::Mirror => CouplingKind::Mirror,
    };
    let opts = CouplingOptions { substeps: cfg.driver.substeps, stride: cfg.stride, delta_coal: cc.delta };
    let bounds = default_bounds(ctx, &domain);
    let lip = domain.as_lip().cloned();
    let eps = domain.eps_bdry();
    let eps_angle = cfg.invariant.eps_angle;

    let mut s = EnsembleSummary::new(
        format!("{kind:?} coupling"),
        cfg.paths,
        &["path", "tau", "lvar_x", "input_var_x", "lvar_y", "input_var_y"],
    );
    let mut total = InvariantReport::default();
    let mut bad_var = 0usize;
    for batch in (0..cfg.paths).collect::<Vec<_>>().chunks(BATCH) {
        let runs: Vec<_> = batch
            .par_iter()
            .map(|&i| {
                let p = ctx.driver(2, i)?;
                let run = run_coupling(&domain, &p, kind, &cfg.driver.x0, &cc.y0, &opts, &mut |_| {})?;
                let mut rep = InvariantReport::default();
                if let Some((lo, hi)) = bounds {
                    rep.merge(check_cone_invariant(&run, lo, hi, eps_angle));
                }
                if let Some(lip) = &lip {
                    rep.merge(check_lip_wall_exclusion(&run, lip, eps));
                    if kind == CouplingKind::Synchronous {
                        rep.merge(check_edge_monotonicity(&run, lip, eps_angle, 1e-6));
                    }
                }
                Ok((run, rep))
            })
            .collect::<Result<_, RunError>>()?;
        for (&i, (run, rep)) in batch.iter().zip(runs) {
            if i < cfg.trajectories {
                ctx.write(&format!("coupling_{i:05}.csv"), |w| run.write_csv(w))?;
            }
            bad_var += usize::from(!variation_ok(run.lvar_x, run.input_var_x) || !variation_ok(run.lvar_y, run.input_var_y));
            s.rows.push(vec![
                i as f64,
                run.tau.unwrap_or(f64::NAN),
                run.lvar_x,
                run.input_var_x,
                run.lvar_y,
                run.input_var_y,
            ]);
            total.merge(rep);
        }
    }
    let coalesced = s.rows.iter().filter(|r| !r[1].is_nan()).count();
    writeln!(ctx.body, "coalesced: {coalesced} of {} paths", cfg.paths).unwrap();
    match bounds {
        Some((lo, hi)) => writeln!(ctx.body, "angle bounds: [{lo}, {hi}] with eps_angle {eps_angle}").unwrap(),
        None => writeln!(ctx.body, "angle bounds: none configured, cone check skipped").unwrap(),
    }
    s.check("variation bound", bad_var == 0, format!("{bad_var} of {} paths exceed var(y) + {VARIATION_TOL}", cfg.paths));
    s.check(
        "coupling invariants",
        total.pass(),
        format!("{} samples checked, {} violations", total.checked, total.violations.len()),
    );
    ctx.write("invariant_report.txt", |w| write!(w, "{total}"))?;
    ctx.summary("summary.csv", &s)
}

fn converge(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    if ctx.test_driver.is_some() {
        return Err(RunError::Unsupported("converge compares Brownian refinements; test drivers do not apply".into()));
    }
    let cv = cfg.converge.as_ref().ok_or_else(|| RunError::Unsupported("missing converge section".into()))?;
    let domain = cfg.domain.build()?;
    let field = cfg.field.spec(domain.dim());
    let f = cv.f;
    let ladder = weak_convergence_ladder(
        &domain,
        &field,
        &move |x: &Vector| f.eval(x),
        &cfg.driver.x0,
        &cv.levels,
        cfg.driver.horizon,
        cfg.paths,
        ctx.seed,
        cfg.driver.substeps,
    )?;
    let s = ladder.summary();
    let min_level = cv.levels[0] + 2;
    writeln!(
        ctx.body,
        "differences decreasing beyond 2 combined SE from level {min_level}: {}",
        ladder.decreasing_beyond(2.0, min_level)
    )
    .unwrap();
    ctx.summary("ladder.csv", &s)
}

fn diagnose(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let domain = cfg.domain.build()?;
    let field = cfg.field.spec(domain.dim());
    let total = cfg.total_substeps();
    if total % cfg.stride != 0 {
        return Err(RunError::Unsupported(format!(
            "output.stride {} must divide the {total} substeps for a uniform sample grid",
            cfg.stride
        )));
    }
    let ensemble: Vec<ReflectedTrajectory> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let p = ctx.driver(field.noise_dim(), i)?;
            Ok(integrate_reflected_observed(
                &domain,
                &field,
                &p,
                &cfg.driver.x0,
                cfg.driver.substeps,
                cfg.stride,
                &mut |_| {},
            )?)
        })
        .collect::<Result<_, RunError>>()?;
    for (i, tr) in ensemble.iter().enumerate().take(cfg.trajectories) {
        ctx.write(&format!("trajectory_{i:05}.csv"), |w| tr.write_csv(w))?;
    }

    let bad_var = ensemble.iter().filter(|tr| !variation_ok(tr.final_lvar(), tr.input_variation)).count();
    let mut vs = EnsembleSummary::new("variation bound", cfg.paths, &["path", "lvar", "input_var"]);
    for (i, tr) in ensemble.iter().enumerate() {
        vs.rows.push(vec![i as f64, tr.final_lvar(), tr.input_variation]);
    }
    vs.check("variation bound", bad_var == 0, format!("{bad_var} of {} paths exceed var(y) + {VARIATION_TOL}", cfg.paths));
    ctx.summary("summary.csv", &vs)?;

    let dt = cfg.driver.horizon / total as f64 * cfg.stride as f64;
    let lags = cfg.diagnose.lags.clone().unwrap_or_else(|| {
        let base = 0.5f64.powi(cfg.driver.level as i32).max(dt);
        (0..5).map(|j| base * 2f64.powi(j)).filter(|&l| l <= cfg.driver.horizon / 2.0).collect()
    });
    let moments = moment_scaling(&ensemble, cfg.diagnose.m, &lags)?;
    writeln!(ctx.body, "moment log-log slope: {:.4}", moments.slope).unwrap();
    ctx.summary("moments.csv", &moments.summary())?;

    let beta = cfg.diagnose.beta;
    let norms: Vec<f64> = ensemble.par_iter().map(|tr| max_holder_norm(tr, beta)).collect::<Result<_, _>>()?;
    let mut sorted = norms.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[sorted.len() / 2], sorted[sorted.len() - 1]);
    let r_grid: Vec<f64> = (0..8).map(|k| lo * (hi / lo).powf(k as f64 / 7.0)).collect();
    let tail = holder_tail_from_norms(&norms, beta, &r_grid)?;
    writeln!(ctx.body, "Hoelder tail exponent (beta = {beta}): {:.3}", tail.exponent).unwrap();
    let mut ts = EnsembleSummary::new("Hoelder norm tail", tail.n, &["r", "probability"]);
    for (r, p) in tail.r_grid.iter().zip(&tail.probability) {
        ts.rows.push(vec![*r, *p]);
    }
    ctx.summary("holder_tail.csv", &ts)?;

    match domain.certificate().covering_radius() {
        Some(radius) => {
            let h = cfg.driver.horizon / 4.0;
            let windows: Vec<(f64, f64)> = (0..4).map(|k| (k as f64 * h, (k + 1) as f64 * h)).collect();
            let rows = variation_growth(&ensemble[0], &windows, radius)?;
            let mut gs = EnsembleSummary::new(
                "variation growth, path 0",
                1,
                &["s", "t", "lvar_increment", "x_holder", "l_sup", "ratio"],
            );
            for r in rows {
                gs.rows.push(vec![r.s, r.t, r.numerator, r.x_holder, r.l_sup, r.ratio]);
            }
            ctx.summary("variation_growth.csv", &gs)?;
        }
        None => writeln!(ctx.body, "variation growth skipped: no explicit covering radius").unwrap(),
    }
    Ok(())
}

/// Reads and parses a config file.
pub fn load_config(path: &Path, kind: Option<ExperimentKind>) -> Result<ExperimentConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    crate::config::parse_config(&text, kind).map_err(|e| format!("{}: {e}", path.display()))
}
