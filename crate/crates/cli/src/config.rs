//! `key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, keys are dotted
//! (`driver.N`). Lists are whitespace or comma separated; point lists in
//! `domain.vertices` are separated by `;`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rsde::geometry::{Domain, GeometryError, LipDomain};
use rsde::reflect::FieldSpec;
use rsde::wiener::{cell_count, MAX_LEVEL};
use rsde::Vector;

pub const MAX_N: u32 = 20;
pub const MAX_PATHS: usize = 1_000_000;
/// Default thinning keeps trajectory files at or below this many rows.
pub const MAX_DEFAULT_ROWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IssueKind {
    Parse,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub kind: IssueKind,
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            IssueKind::Parse => "parse error",
            IssueKind::Validation => "invalid value",
        };
        match self.line {
            Some(l) => write!(f, "line {l}: {kind} for `{}`: {}", self.key, self.message),
            None => write!(f, "{kind} for `{}`: {}", self.key, self.message),
        }
    }
}

/// Every problem found in a config, in line order.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl ConfigError {
    pub fn mentions(&self, key: &str) -> bool {
        self.issues.iter().any(|i| i.key == key)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} problem(s) in config:", self.issues.len())?;
        for i in &self.issues {
            writeln!(f, "  {i}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Simulate,
    Couple,
    Converge,
    Diagnose,
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "simulate" => Ok(Self::Simulate),
            "couple" => Ok(Self::Couple),
            "converge" => Ok(Self::Converge),
            "diagnose" => Ok(Self::Diagnose),
            _ => Err(format!("unknown experiment `{s}` (simulate, couple, converge, diagnose)")),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Simulate => "simulate",
            Self::Couple => "couple",
            Self::Converge => "converge",
            Self::Diagnose => "diagnose",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainConfig {
    Interval { lo: f64, hi: f64 },
    HalfLine { lo: f64 },
    Rectangle { xmin: f64, xmax: f64, ymin: f64, ymax: f64 },
    Polygon { vertices: Vec<Vector> },
    Triangle,
    Disc { center: Vector, radius: f64 },
    Lip { a: f64, b: f64, slope: f64 },
}

impl DomainConfig {
    pub fn build(&self) -> Result<Domain, GeometryError> {
        match self {
            Self::Interval { lo, hi } => Domain::interval(*lo, *hi),
            Self::HalfLine { lo } => Domain::half_line(*lo),
            Self::Rectangle { xmin, xmax, ymin, ymax } => Domain::rectangle(*xmin, *xmax, *ymin, *ymax),
            Self::Polygon { vertices } => Domain::polygon(vertices.clone()),
            Self::Triangle => Ok(Domain::default_triangle()),
            Self::Disc { center, radius } => Domain::disc(*center, *radius),
            Self::Lip { a, b, slope } => Domain::lip(LipDomain::sine(*a, *b, *slope)?),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Interval { .. } | Self::HalfLine { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Identity,
    Rotation,
}

impl FieldKind {
    pub fn spec(self, dim: usize) -> FieldSpec {
        match self {
            Self::Identity => FieldSpec::Identity(dim),
            Self::Rotation => FieldSpec::Rotation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingChoice {
    Synchronous,
    Mirror,
}

/// Test function for the convergence ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// First coordinate.
    X1,
    /// Euclidean norm.
    Norm,
    /// `min(x1, c)`.
    MinX1(f64),
}

impl TestFunction {
    pub fn eval(self, x: &Vector) -> f64 {
        match self {
            Self::X1 => x[0],
            Self::Norm => x.norm(),
            Self::MinX1(c) => x[0].min(c),
        }
    }
}

impl FromStr for TestFunction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "x1" => Ok(Self::X1),
            "norm" => Ok(Self::Norm),
            _ => match s.strip_prefix("min:") {
                Some(c) => c
                    .parse::<f64>()
                    .ok()
                    .filter(|c| c.is_finite())
                    .map(Self::MinX1)
                    .ok_or_else(|| format!("bad cap in `{s}`")),
                None => Err(format!("unknown test function `{s}` (x1, norm, min:<c>)")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverConfig {
    pub level: u32,
    pub horizon: f64,
    pub seed: u64,
    pub substeps: usize,
    pub x0: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantConfig {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub eps_angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    pub kind: CouplingChoice,
    pub y0: Vector,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeConfig {
    pub levels: Vec<u32>,
    pub f: TestFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseConfig {
    pub m: u32,
    pub lags: Option<Vec<f64>>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub domain: DomainConfig,
    pub field: FieldKind,
    pub driver: DriverConfig,
    pub paths: usize,
    /// 0 lets the thread pool pick.
    pub threads: usize,
    pub out_dir: PathBuf,
    /// Record every `stride`-th substep.
    pub stride: usize,
    /// Per-path CSVs are written for the first this-many paths.
    pub trajectories: usize,
    pub invariant: InvariantConfig,
    pub coupling: Option<CouplingConfig>,
    pub converge: Option<ConvergeConfig>,
    pub diagnose: DiagnoseConfig,
    /// Normalized `key = value` lines, for the report.
    pub echo: Vec<(String, String)>,
}

impl ExperimentConfig {
    /// Total substeps over the horizon.
    pub fn total_substeps(&self) -> usize {
        cell_count(self.driver.horizon, self.driver.level).unwrap_or(0) * self.driver.substeps
    }
}

const KNOWN_KEYS: &[&str] = &[
    "experiment.kind",
    "domain.kind",
    "domain.lo",
    "domain.hi",
    "domain.xmin",
    "domain.xmax",
    "domain.ymin",
    "domain.ymax",
    "domain.vertices",
    "domain.center",
    "domain.radius",
    "domain.a",
    "domain.b",
    "domain.slope",
    "field.kind",
    "driver.N",
    "driver.T",
    "driver.seed",
    "driver.substeps",
    "driver.x0",
    "ensemble.paths",
    "ensemble.threads",
    "output.dir",
    "output.stride",
    "output.trajectories",
    "invariant.lower",
    "invariant.upper",
    "invariant.eps_angle",
    "coupling.kind",
    "coupling.y0",
    "coupling.delta",
    "converge.levels",
    "converge.f",
    "diagnose.m",
    "diagnose.lags",
    "diagnose.beta",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
    issues: Vec<ConfigIssue>,
}

impl Entries {
    fn issue(&mut self, kind: IssueKind, line: Option<usize>, key: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue { kind, line, key: key.to_string(), message: message.into() });
    }

    fn raw(&self, key: &str) -> Option<(usize, String)> {
        self.map.get(key).cloned()
    }

    fn parsed<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let (line, text) = self.raw(key)?;
        match parse(&text) {
            Ok(v) => Some(v),
            Err(e) => {
                self.issue(IssueKind::Validation, Some(line), key, e);
                None
            }
        }
    }

    fn required<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        if !self.map.contains_key(key) {
            self.issue(IssueKind::Validation, None, key, "missing required key");
            return None;
        }
        self.parsed(key, parse)
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|e| e.0)
    }
}

fn number(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{s}` is not a finite number"))
}

fn positive(s: &str) -> Result<f64, String> {
    number(s).and_then(|v| if v > 0.0 { Ok(v) } else { Err(format!("{v} must be positive")) })
}

fn integer<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse::<T>().map_err(|_| format!("`{s}` is not a non-negative integer"))
}

fn list(s: &str) -> impl Iterator<Item = &str> {
    s.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty())
}

fn point(s: &str) -> Result<Vector, String> {
    let coords = list(s).map(number).collect::<Result<Vec<f64>, String>>()?;
    if coords.is_empty() || coords.len() > rsde::linalg::MAX_DIM {
        return Err(format!("`{s}` is not a point with 1 to {} coordinates", rsde::linalg::MAX_DIM));
    }
    Ok(Vector::from_slice(&coords))
}

fn points(s: &str) -> Result<Vec<Vector>, String> {
    s.split(';').filter(|p| !p.trim().is_empty()).map(point).collect()
}

/// Parses and validates a config. `kind` overrides `experiment.kind`, which
/// is then optional; a conflicting value is an error.
pub fn parse_config(text: &str, kind: Option<ExperimentKind>) -> Result<ExperimentConfig, ConfigError> {
    let mut e = Entries { map: BTreeMap::new(), issues: Vec::new() };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            e.issue(IssueKind::Parse, Some(line), content, "expected `key = value`");
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || !k.contains('.') || k.split('.').any(|p| p.is_empty()) {
            e.issue(IssueKind::Parse, Some(line), k, "keys are dotted, like `driver.N`");
            continue;
        }
        if v.is_empty() {
            e.issue(IssueKind::Parse, Some(line), k, "empty value");
            continue;
        }
        if !KNOWN_KEYS.contains(&k) {
            e.issue(IssueKind::Parse, Some(line), k, "unknown key");
            continue;
        }
        if let Some((first, _)) = e.map.get(k) {
            let msg = format!("duplicate key, first set on line {first}");
            e.issue(IssueKind::Parse, Some(line), k, msg);
            continue;
        }
        e.map.insert(k.to_string(), (line, v.to_string()));
    }
    let echo: Vec<(String, String)> = e.map.iter().map(|(k, (_, v))| (k.clone(), v.clone())).collect();

    let file_kind = e.parsed("experiment.kind", |s| s.parse::<ExperimentKind>());
    let kind = match (kind, file_kind) {
        (Some(k), Some(f)) if k != f => {
            let line = e.line("experiment.kind");
            e.issue(IssueKind::Validation, line, "experiment.kind", format!("config says {f}, command says {k}"));
            Some(k)
        }
        (Some(k), _) => Some(k),
        (None, Some(f)) => Some(f),
        (None, None) => {
            if !e.map.contains_key("experiment.kind") {
                e.issue(IssueKind::Validation, None, "experiment.kind", "missing required key");
            }
            None
        }
    };

    let domain = parse_domain(&mut e);
    let field = e
        .parsed("field.kind", |s| match s {
            "identity" => Ok(FieldKind::Identity),
            "rotation" => Ok(FieldKind::Rotation),
            _ => Err(format!("unknown field `{s}` (identity, rotation)")),
        })
        .unwrap_or(FieldKind::Identity);

    let level = e.required("driver.N", integer::<u32>);
    if let Some(n) = level {
        if n > MAX_N {
            let line = e.line("driver.N");
            e.issue(IssueKind::Validation, line, "driver.N", format!("{n} exceeds the maximum level {MAX_N}"));
        }
    }
    let horizon = e.parsed("driver.T", positive).unwrap_or(1.0);
    if let Some(n) = level.filter(|&n| n <= MAX_N) {
        if cell_count(horizon, n).is_none() {
            let line = e.line("driver.T");
            e.issue(
                IssueKind::Validation,
                line,
                "driver.T",
                format!("{horizon} is not a multiple of 2^-{n}, or has more than 2^{MAX_LEVEL} cells"),
            );
        }
    }
    let seed = e.required("driver.seed", integer::<u64>);
    let substeps = e
        .parsed("driver.substeps", |s| {
            integer::<usize>(s).and_then(|v| {
                if v.is_power_of_two() {
                    Ok(v)
                } else {
                    Err(format!("{v} is not a positive power of two"))
                }
            })
        })
        .unwrap_or(rsde::reflect::DEFAULT_SUBSTEPS);
    let x0 = e.required("driver.x0", point);

    let paths = e
        .parsed("ensemble.paths", |s| {
            integer::<usize>(s).and_then(|v| match v {
                0 => Err("need at least one path".to_string()),
                v if v > MAX_PATHS => Err(format!("{v} exceeds the maximum of {MAX_PATHS} paths")),
                v => Ok(v),
            })
        })
        .unwrap_or(1);
    let threads = e.parsed("ensemble.threads", integer::<usize>).unwrap_or(0);
    let out_dir = e.raw("output.dir").map(|(_, v)| PathBuf::from(v)).unwrap_or_else(|| PathBuf::from("out"));
    let stride = e.parsed("output.stride", |s| {
        integer::<usize>(s).and_then(|v| if v == 0 { Err("stride must be positive".into()) } else { Ok(v) })
    });
    let trajectories = e.parsed("output.trajectories", integer::<usize>).unwrap_or(16);

    let invariant = InvariantConfig {
        lower: e.parsed("invariant.lower", number),
        upper: e.parsed("invariant.upper", number),
        eps_angle: e.parsed("invariant.eps_angle", |s| {
            number(s).and_then(|v| if v >= 0.0 { Ok(v) } else { Err("must be non-negative".into()) })
        })
        .unwrap_or(1e-4),
    };
    if let (Some(lo), Some(hi)) = (invariant.lower, invariant.upper) {
        if lo > hi {
            let line = e.line("invariant.lower");
            e.issue(IssueKind::Validation, line, "invariant.lower", format!("{lo} exceeds invariant.upper {hi}"));
        }
    }

    let coupling = if kind == Some(ExperimentKind::Couple) {
        let ck = e
            .parsed("coupling.kind", |s| match s {
                "synchronous" => Ok(CouplingChoice::Synchronous),
                "mirror" => Ok(CouplingChoice::Mirror),
                _ => Err(format!("unknown coupling `{s}` (synchronous, mirror)")),
            })
            .unwrap_or(CouplingChoice::Synchronous);
        let y0 = e.required("coupling.y0", point);
        let delta = e.parsed("coupling.delta", positive);
        y0.map(|y0| CouplingConfig { kind: ck, y0, delta })
    } else {
        None
    };

    let converge = if kind == Some(ExperimentKind::Converge) {
        let levels = e.required("converge.levels", |s| {
            let v = list(s).map(integer::<u32>).collect::<Result<Vec<u32>, String>>()?;
            if v.is_empty() || v.windows(2).any(|w| w[0] >= w[1]) {
                return Err("levels must be a nonempty increasing list".into());
            }
            if let Some(&l) = v.iter().find(|&&l| l > MAX_N) {
                return Err(format!("level {l} exceeds the maximum level {MAX_N}"));
            }
            Ok(v)
        });
        let f = e.parsed("converge.f", |s| s.parse::<TestFunction>()).unwrap_or(TestFunction::X1);
        levels.map(|levels| ConvergeConfig { levels, f })
    } else {
        None
    };

    let diagnose = DiagnoseConfig {
        m: e.parsed("diagnose.m", |s| {
            integer::<u32>(s).and_then(|m| if m <= 4 { Ok(m) } else { Err(format!("m = {m} is above 4")) })
        })
        .unwrap_or(0),
        lags: e.parsed("diagnose.lags", |s| list(s).map(positive).collect::<Result<Vec<f64>, String>>()),
        beta: e
            .parsed("diagnose.beta", |s| {
                number(s).and_then(|b| if b > 0.0 && b < 0.5 { Ok(b) } else { Err(format!("{b} not in (0, 1/2)")) })
            })
            .unwrap_or(0.25),
    };

    if let (Some(d), Some(x0)) = (&domain, &x0) {
        if x0.dim() != d.dim() {
            let line = e.line("driver.x0");
            e.issue(
                IssueKind::Validation,
                line,
                "driver.x0",
                format!("has {} coordinates, domain is {}-dimensional", x0.dim(), d.dim()),
            );
        }
        if let Some(c) = &coupling {
            if d.dim() != 2 || c.y0.dim() != 2 {
                let line = e.line("coupling.y0");
                e.issue(IssueKind::Validation, line, "coupling.y0", "couplings need a planar domain and a planar y0");
            }
        }
        if field == FieldKind::Rotation && d.dim() != 2 {
            let line = e.line("field.kind");
            e.issue(IssueKind::Validation, line, "field.kind", "the rotation field needs a planar domain");
        }
    }

    e.issues.sort_by_key(|i| i.line.unwrap_or(usize::MAX));
    if !e.issues.is_empty() {
        return Err(ConfigError { issues: e.issues });
    }
    let (kind, domain, level, seed, x0) = (kind.unwrap(), domain.unwrap(), level.unwrap(), seed.unwrap(), x0.unwrap());
    let driver = DriverConfig { level, horizon, seed, substeps, x0 };
    let total = cell_count(horizon, level).unwrap_or(1) * substeps;
    let stride = stride.unwrap_or_else(|| total.div_ceil(MAX_DEFAULT_ROWS).max(1));
    Ok(ExperimentConfig {
        kind,
        domain,
        field,
        driver,
        paths,
        threads,
        out_dir,
        stride,
        trajectories,
        invariant,
        coupling,
        converge,
        diagnose,
        echo,
    })
}

fn parse_domain(e: &mut Entries) -> Option<DomainConfig> {
    let kind = e.required("domain.kind", |s| Ok(s.to_string()))?;
    let need = |e: &mut Entries, key: &str| e.required(key, number);
    let d = match kind.as_str() {
        "interval" => {
            let (lo, hi) = (need(e, "domain.lo"), need(e, "domain.hi"));
            DomainConfig::Interval { lo: lo?, hi: hi? }
        }
        "half_line" => DomainConfig::HalfLine { lo: e.parsed("domain.lo", number).unwrap_or(0.0) },
        "rectangle" => {
            let v = ["domain.xmin", "domain.xmax", "domain.ymin", "domain.ymax"].map(|k| need(e, k));
            DomainConfig::Rectangle { xmin: v[0]?, xmax: v[1]?, ymin: v[2]?, ymax: v[3]? }
        }
        "polygon" => DomainConfig::Polygon { vertices: e.required("domain.vertices", points)? },
        "triangle" => DomainConfig::Triangle,
        "disc" => {
            let center = e.parsed("domain.center", point).unwrap_or(Vector::xy(0.0, 0.0));
            let radius = e.parsed("domain.radius", positive).unwrap_or(1.0);
            DomainConfig::Disc { center, radius }
        }
        "lip" => DomainConfig::Lip {
            a: e.parsed("domain.a", number).unwrap_or(0.0),
            b: e.parsed("domain.b", number).unwrap_or(1.0),
            slope: e.parsed("domain.slope", positive).unwrap_or(0.5),
        },
        other => {
            let line = e.line("domain.kind");
            e.issue(
                IssueKind::Validation,
                line,
                "domain.kind",
                format!("unknown domain `{other}` (interval, half_line, rectangle, polygon, triangle, disc, lip)"),
            );
            return None;
        }
    };
    if let Err(err) = d.build() {
        let line = e.line("domain.kind");
        e.issue(IssueKind::Validation, line, "domain.kind", err.to_string());
        return None;
    }
    Some(d)
}
