//! Run configuration: TOML grammar and parse-time validation.
//!
//! Every check that a core module would reject later is done here first so
//! that the error names the config field and the accepted range.

use std::path::{Path, PathBuf};

use drscc_core::corridor::{AllocationMode, BoxRegion, InitialPath, SafeCorridor, TimeAllocation};
use drscc_core::qp::DerivativeLimit;
use drscc_core::robustness::{
    method_grid, BenchmarkCase, FamilySetting, Method, PerturbationSpec, DEFAULT_ALPHAS, DEFAULT_STUDENT_DOF,
    GRID_RADII, GRID_RISKS,
};
use drscc_core::tightening::{solve_eta_star, AmbiguitySpec, Side, TighteningError, UniformAmbiguity};
use drscc_core::{EllipticalRef, Family, Scatter, SnapSpec, ViolationMode};
use nalgebra::DMatrix;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("{field} = {value} is outside the valid interval {interval}")]
    Interval { field: String, value: String, interval: String },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.into(), message: message.into() }
}

fn interval_err(field: impl Into<String>, value: impl ToString, interval: &str) -> ConfigError {
    ConfigError::Interval { field: field.into(), value: value.to_string(), interval: interval.to_string() }
}

fn open_unit_half(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v < 0.5 {
        Ok(())
    } else {
        Err(interval_err(field, v, "(0, 0.5)"))
    }
}

fn nonnegative(field: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(interval_err(field, v, "[0, inf)"))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(interval_err(field, v, "(0, inf)"))
    }
}

fn finite_all(field: &str, v: &[f64]) -> Result<(), ConfigError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(field_err(format!("{field}[{i}]"), "must be finite")),
        None => Ok(()),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    corridor: RawCorridor,
    #[serde(default)]
    timing: RawTiming,
    #[serde(default)]
    spec: RawSpec,
    ambiguity: Option<RawAmbiguity>,
    #[serde(default)]
    benchmark: RawBenchmark,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorridor {
    regions: Vec<RawRegion>,
    waypoints: Vec<Vec<f64>>,
    arrival_times: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTiming {
    #[serde(default = "default_v_max")]
    v_max: f64,
    #[serde(default = "default_tau_min")]
    tau_min: f64,
    #[serde(default)]
    start_time: f64,
}

fn default_v_max() -> f64 {
    1.0
}

fn default_tau_min() -> f64 {
    TimeAllocation::default().tau_min
}

impl Default for RawTiming {
    fn default() -> Self {
        Self { v_max: default_v_max(), tau_min: default_tau_min(), start_time: 0.0 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLimit {
    order: usize,
    min: f64,
    max: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(default = "default_degree")]
    degree: usize,
    #[serde(default = "default_order")]
    order: usize,
    start_derivatives: Option<Vec<Vec<f64>>>,
    end_derivatives: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    limits: Vec<RawLimit>,
}

fn default_degree() -> usize {
    7
}

fn default_order() -> usize {
    4
}

impl Default for RawSpec {
    fn default() -> Self {
        Self {
            degree: default_degree(),
            order: default_order(),
            start_derivatives: None,
            end_derivatives: None,
            limits: Vec::new(),
        }
    }
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum RawFamily {
    Normal,
    StudentT,
    Logistic,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum RawSide {
    Lower,
    Upper,
    Both,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    region: usize,
    #[serde(default = "default_side")]
    side: RawSide,
    theta: Option<f64>,
    epsilon: Option<f64>,
    sigma: Option<f64>,
}

fn default_side() -> RawSide {
    RawSide::Both
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAmbiguity {
    family: RawFamily,
    dof: Option<f64>,
    sigma: Option<f64>,
    scatter: Option<Vec<Vec<f64>>>,
    theta: f64,
    epsilon: f64,
    #[serde(default)]
    overrides: Vec<RawOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBenchFamily {
    family: RawFamily,
    dof: Option<f64>,
    sigma: f64,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum RawViolationMode {
    SampledCurve,
    ControlPoints,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBenchmark {
    alphas: Option<Vec<f64>>,
    instances_per_alpha: Option<usize>,
    halfwidth: Option<f64>,
    seed: Option<u64>,
    resolution: Option<usize>,
    violation_mode: Option<RawViolationMode>,
    radii: Option<Vec<f64>>,
    risks: Option<Vec<f64>>,
    families: Option<Vec<RawBenchFamily>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    resolution: Option<usize>,
}

/// Per-face replacement of the broadcast ambiguity (region is 0-based here).
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityOverride {
    pub region: usize,
    pub sides: Vec<Side>,
    pub theta: Option<f64>,
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityConfig {
    pub family: Family,
    pub scatter: Scatter,
    pub theta: f64,
    pub epsilon: f64,
    pub overrides: Vec<AmbiguityOverride>,
}

impl AmbiguityConfig {
    /// Broadcast over `corridor`, then apply the overrides.
    pub fn spec(&self, corridor: &SafeCorridor) -> Result<AmbiguitySpec, TighteningError> {
        let uniform = UniformAmbiguity {
            family: self.family,
            scatter: self.scatter.clone(),
            radius: self.theta,
            risk: self.epsilon,
        };
        let mut spec = AmbiguitySpec::broadcast(corridor, &uniform)?;
        for o in &self.overrides {
            for &side in &o.sides {
                let face = spec.side_mut(o.region, side).expect("override region checked at parse time");
                if let Some(t) = o.theta {
                    face.radius = t;
                }
                if let Some(e) = o.epsilon {
                    face.risk = e;
                }
                if let Some(s) = o.sigma {
                    let dim = face.reference.dim();
                    face.reference = EllipticalRef::new(
                        face.reference.mean().clone(),
                        DMatrix::identity(dim, dim) * s,
                        self.family,
                    )?;
                }
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSettings {
    pub perturbation: PerturbationSpec,
    pub resolution: usize,
    pub mode: ViolationMode,
    pub methods: Vec<Method>,
    pub families: Vec<FamilySetting>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: Option<PathBuf>,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub corridor: SafeCorridor,
    pub path: InitialPath,
    pub spec: SnapSpec,
    pub ambiguity: Option<AmbiguityConfig>,
    pub benchmark: BenchmarkSettings,
    pub output: OutputSettings,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let fallback = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        Self::parse(&text, fallback)
    }

    /// Parses and validates `text`; `fallback_name` is used when `name` is absent.
    pub fn parse(text: &str, fallback_name: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string().trim().to_string()))?;
        let name = raw.name.clone().unwrap_or_else(|| fallback_name.to_string());
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(field_err("name", "use letters, digits, '-' or '_'"));
        }
        let corridor = corridor(&raw.corridor)?;
        let dim = corridor.dim();
        let path = initial_path(&raw.corridor, &raw.timing, &corridor)?;
        let spec = snap_spec(&raw.spec, dim, corridor.len())?;
        let ambiguity = raw.ambiguity.as_ref().map(|a| ambiguity(a, dim, corridor.len())).transpose()?;
        let benchmark = benchmark(&raw.benchmark)?;
        let resolution = raw.output.resolution.unwrap_or(100);
        if resolution < 2 {
            return Err(interval_err("output.resolution", resolution, "[2, inf)"));
        }
        Ok(Self {
            name,
            corridor,
            path,
            spec,
            ambiguity,
            benchmark,
            output: OutputSettings { dir: raw.output.dir.clone(), resolution },
        })
    }

    pub fn benchmark_case(&self) -> BenchmarkCase {
        BenchmarkCase { name: self.name.clone(), corridor: self.corridor.clone(), path: self.path.clone() }
    }
}

fn corridor(raw: &RawCorridor) -> Result<SafeCorridor, ConfigError> {
    if raw.regions.is_empty() {
        return Err(field_err("corridor.regions", "at least one region is required"));
    }
    let dim = raw.regions[0].lower.len();
    if !(2..=3).contains(&dim) {
        return Err(interval_err("corridor.regions[1].lower length", dim, "[2, 3]"));
    }
    let mut regions = Vec::with_capacity(raw.regions.len());
    for (i, r) in raw.regions.iter().enumerate() {
        let field = format!("corridor.regions[{}]", i + 1);
        if r.lower.len() != dim || r.upper.len() != dim {
            return Err(field_err(&field, format!("lower and upper must both have {dim} entries")));
        }
        finite_all(&format!("{field}.lower"), &r.lower)?;
        finite_all(&format!("{field}.upper"), &r.upper)?;
        if let Some(d) = (0..dim).find(|&d| !(r.lower[d] < r.upper[d])) {
            return Err(field_err(
                &field,
                format!("empty in dimension {}: lower {} >= upper {}", d + 1, r.lower[d], r.upper[d]),
            ));
        }
        regions.push(BoxRegion::new(r.lower.clone(), r.upper.clone()).map_err(|e| field_err(&field, e.to_string()))?);
    }
    SafeCorridor::new(regions).map_err(|e| field_err("corridor.regions", e.to_string()))
}

fn initial_path(raw: &RawCorridor, timing: &RawTiming, corridor: &SafeCorridor) -> Result<InitialPath, ConfigError> {
    let n = corridor.len();
    if raw.waypoints.len() != n + 1 {
        return Err(field_err(
            "corridor.waypoints",
            format!("expected {} waypoints for {n} regions, found {}", n + 1, raw.waypoints.len()),
        ));
    }
    for (i, w) in raw.waypoints.iter().enumerate() {
        if w.len() != corridor.dim() {
            return Err(field_err(format!("corridor.waypoints[{i}]"), format!("expected {} coordinates", corridor.dim())));
        }
        finite_all(&format!("corridor.waypoints[{i}]"), w)?;
    }
    match &raw.arrival_times {
        Some(times) => {
            if times.len() != n + 1 {
                return Err(field_err(
                    "corridor.arrival_times",
                    format!("expected {} times, found {}", n + 1, times.len()),
                ));
            }
            finite_all("corridor.arrival_times", times)?;
            Ok(InitialPath::new(raw.waypoints.clone(), times.clone()))
        }
        None => {
            positive("timing.v_max", timing.v_max)?;
            positive("timing.tau_min", timing.tau_min)?;
            if !timing.start_time.is_finite() {
                return Err(field_err("timing.start_time", "must be finite"));
            }
            let allocation = TimeAllocation {
                v_max: timing.v_max,
                tau_min: timing.tau_min,
                start_time: timing.start_time,
                mode: AllocationMode::Proportional,
            };
            InitialPath::with_allocation(raw.waypoints.clone(), &allocation)
                .map_err(|e| field_err("corridor.waypoints", e.to_string()))
        }
    }
}

fn snap_spec(raw: &RawSpec, dim: usize, segments: usize) -> Result<SnapSpec, ConfigError> {
    let (n, k) = (raw.degree, raw.order);
    if k == 0 {
        return Err(interval_err("spec.order", k, "[1, inf)"));
    }
    if n + 1 < 2 * k {
        return Err(ConfigError::Interval {
            field: "spec.degree".into(),
            value: n.to_string(),
            interval: format!("[{}, inf) for order {k}", 2 * k - 1),
        });
    }
    let boundary = |field: &str, given: &Option<Vec<Vec<f64>>>| -> Result<Vec<Vec<f64>>, ConfigError> {
        let ds = given.clone().unwrap_or_else(|| vec![vec![0.0; dim]; k - 1]);
        if ds.len() >= k {
            return Err(interval_err(format!("{field} length"), ds.len(), &format!("[0, {}]", k - 1)));
        }
        for (l, d) in ds.iter().enumerate() {
            if d.len() != dim {
                return Err(field_err(format!("{field}[{l}]"), format!("expected {dim} entries")));
            }
            finite_all(&format!("{field}[{l}]"), d)?;
        }
        Ok(ds)
    };
    let start_derivatives = boundary("spec.start_derivatives", &raw.start_derivatives)?;
    let end_derivatives = boundary("spec.end_derivatives", &raw.end_derivatives)?;
    let mut limits = Vec::new();
    for (i, l) in raw.limits.iter().enumerate() {
        let field = format!("spec.limits[{}]", i + 1);
        if l.order == 0 || l.order >= k {
            return Err(interval_err(format!("{field}.order"), l.order, &format!("[1, {}]", k - 1)));
        }
        if !(l.min < l.max) {
            return Err(field_err(&field, format!("min {} must be below max {}", l.min, l.max)));
        }
        limits.push(DerivativeLimit { order: l.order, min: l.min, max: l.max });
    }
    let spec = SnapSpec { degree: n, order: k, start_derivatives, end_derivatives, limits };
    spec.check(dim, segments).map_err(|e| field_err("spec", e.to_string()))?;
    Ok(spec)
}

fn family(field: &str, f: RawFamily, dof: Option<f64>) -> Result<Family, ConfigError> {
    match (f, dof) {
        (RawFamily::StudentT, dof) => {
            let dof = dof.unwrap_or(DEFAULT_STUDENT_DOF);
            if !(dof > 2.0 && dof.is_finite()) {
                return Err(interval_err(format!("{field}.dof"), dof, "(2, inf)"));
            }
            Ok(Family::StudentT { dof })
        }
        (_, Some(_)) => Err(field_err(format!("{field}.dof"), "only valid for family = \"student_t\"")),
        (RawFamily::Normal, None) => Ok(Family::Normal),
        (RawFamily::Logistic, None) => Ok(Family::Logistic),
    }
}

fn scatter(raw: &RawAmbiguity, dim: usize) -> Result<Scatter, ConfigError> {
    match (raw.sigma, &raw.scatter) {
        (Some(_), Some(_)) => Err(field_err("ambiguity", "give either sigma or scatter, not both")),
        (None, None) => Err(field_err("ambiguity", "one of sigma or scatter is required")),
        (Some(s), None) => {
            positive("ambiguity.sigma", s)?;
            Ok(Scatter::Isotropic(s))
        }
        (None, Some(rows)) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(field_err("ambiguity.scatter", format!("must be a {dim}x{dim} matrix")));
            }
            let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
            if m.iter().any(|v| !v.is_finite()) || (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                return Err(field_err("ambiguity.scatter", "must be finite and symmetric"));
            }
            if m.clone().cholesky().is_none() {
                return Err(field_err("ambiguity.scatter", "must be positive definite"));
            }
            Ok(Scatter::Full(m))
        }
    }
}

fn eta_exists(field: &str, family: Family, epsilon: f64, theta: f64) -> Result<(), ConfigError> {
    solve_eta_star(family, epsilon, theta).map(|_| ()).map_err(|e| field_err(field, e.to_string()))
}

fn ambiguity(raw: &RawAmbiguity, dim: usize, regions: usize) -> Result<AmbiguityConfig, ConfigError> {
    let family = family("ambiguity", raw.family, raw.dof)?;
    let scatter = scatter(raw, dim)?;
    nonnegative("ambiguity.theta", raw.theta)?;
    open_unit_half("ambiguity.epsilon", raw.epsilon)?;
    let mut overrides = Vec::new();
    for (i, o) in raw.overrides.iter().enumerate() {
        let field = format!("ambiguity.overrides[{}]", i + 1);
        if o.region == 0 || o.region > regions {
            return Err(interval_err(format!("{field}.region"), o.region, &format!("[1, {regions}]")));
        }
        if let Some(t) = o.theta {
            nonnegative(&format!("{field}.theta"), t)?;
        }
        if let Some(e) = o.epsilon {
            open_unit_half(&format!("{field}.epsilon"), e)?;
        }
        if let Some(s) = o.sigma {
            positive(&format!("{field}.sigma"), s)?;
        }
        let sides = match o.side {
            RawSide::Lower => vec![Side::Lower],
            RawSide::Upper => vec![Side::Upper],
            RawSide::Both => vec![Side::Lower, Side::Upper],
        };
        overrides.push(AmbiguityOverride { region: o.region - 1, sides, theta: o.theta, epsilon: o.epsilon, sigma: o.sigma });
    }
    eta_exists("ambiguity.theta", family, raw.epsilon, raw.theta)?;
    for (i, o) in overrides.iter().enumerate() {
        let (eps, theta) = (o.epsilon.unwrap_or(raw.epsilon), o.theta.unwrap_or(raw.theta));
        eta_exists(&format!("ambiguity.overrides[{}].theta", i + 1), family, eps, theta)?;
    }
    Ok(AmbiguityConfig { family, scatter, theta: raw.theta, epsilon: raw.epsilon, overrides })
}

fn benchmark(raw: &RawBenchmark) -> Result<BenchmarkSettings, ConfigError> {
    let defaults = PerturbationSpec::default();
    let alphas = raw.alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
    if alphas.is_empty() {
        return Err(field_err("benchmark.alphas", "at least one value is required"));
    }
    for (i, &a) in alphas.iter().enumerate() {
        if !(0.0..=1.0).contains(&a) {
            return Err(interval_err(format!("benchmark.alphas[{i}]"), a, "[0, 1]"));
        }
    }
    let instances_per_alpha = raw.instances_per_alpha.unwrap_or(defaults.instances_per_alpha);
    if instances_per_alpha == 0 {
        return Err(interval_err("benchmark.instances_per_alpha", 0, "[1, inf)"));
    }
    let halfwidth = raw.halfwidth.unwrap_or(defaults.halfwidth);
    nonnegative("benchmark.halfwidth", halfwidth)?;
    let resolution = raw.resolution.unwrap_or(100);
    if resolution < 2 {
        return Err(interval_err("benchmark.resolution", resolution, "[2, inf)"));
    }
    let radii = raw.radii.clone().unwrap_or_else(|| GRID_RADII.to_vec());
    for (i, &t) in radii.iter().enumerate() {
        nonnegative(&format!("benchmark.radii[{i}]"), t)?;
    }
    let risks = raw.risks.clone().unwrap_or_else(|| GRID_RISKS.to_vec());
    for (i, &e) in risks.iter().enumerate() {
        open_unit_half(&format!("benchmark.risks[{i}]"), e)?;
    }
    let families = match &raw.families {
        None => drscc_core::robustness::default_families(),
        Some(list) => {
            if list.is_empty() {
                return Err(field_err("benchmark.families", "at least one family is required"));
            }
            let mut out = Vec::new();
            for (i, f) in list.iter().enumerate() {
                let field = format!("benchmark.families[{}]", i + 1);
                positive(&format!("{field}.sigma"), f.sigma)?;
                out.push(FamilySetting { family: family(&field, f.family, f.dof)?, sigma: f.sigma });
            }
            out
        }
    };
    let mode = match raw.violation_mode.unwrap_or(RawViolationMode::SampledCurve) {
        RawViolationMode::SampledCurve => ViolationMode::SampledCurve,
        RawViolationMode::ControlPoints => ViolationMode::ControlPoints,
    };
    Ok(BenchmarkSettings {
        perturbation: PerturbationSpec {
            alphas,
            instances_per_alpha,
            halfwidth,
            seed: raw.seed.unwrap_or(defaults.seed),
        },
        resolution,
        mode,
        methods: method_grid(&radii, &risks),
        families,
    })
}
