//! Monte-Carlo robustness of planned trajectories against perturbed corridors.
//!
//! Every corner (lower and upper vector of every region) is redrawn as
//! `ψ = (1−α)ψ₁ + αψ₂`, with `ψ₁` from an elliptical reference centered on
//! the nominal corner and `ψ₂` uniform on a box of half-width `h` around it.
//! A planned trajectory is violated by an instance when any part of segment
//! `i` leaves perturbed region `i`.
//!
//! Perturbed corridors depend only on `(seed, case, family, α, instance)`,
//! never on the method, so all methods of a block see the same instances.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bezier::{BezierError, PiecewiseBezier};
use crate::cases::ReferenceCase;
use crate::corridor::{BoxRegion, InitialPath, SafeCorridor};
use crate::elliptical::{DistributionError, EllipticalRef, Family};
use crate::qp::{plan, PlanMode, SnapSpec, SolverSettings};
use crate::tightening::{AmbiguitySpec, Scatter, UniformAmbiguity};

/// Slack allowed before a sample counts as outside a perturbed region.
pub const VIOLATION_TOL: f64 = 1e-9;
/// Give up on an instance after this many crossed-bound redraws.
pub const MAX_RESAMPLES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobustnessError {
    #[error("alpha {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("need at least one alpha value and one instance per alpha")]
    EmptyDesign,
    #[error("uniform half-width must be finite and nonnegative, got {0}")]
    BadHalfwidth(f64),
    #[error("sample resolution must be at least 2, got {0}")]
    BadResolution(usize),
    #[error("corner references cover {refs} regions, corridor has {regions}")]
    RegionCount { refs: usize, regions: usize },
    #[error("trajectory has {segments} segments, corridor has {regions} regions")]
    SegmentCount { segments: usize, regions: usize },
    #[error("instance {instance}: every one of {MAX_RESAMPLES} draws had crossed bounds")]
    Degenerate { instance: usize },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Bezier(#[from] BezierError),
}

/// Design of the perturbation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub alphas: Vec<f64>,
    pub instances_per_alpha: usize,
    /// Half-width of the uniform component around each corner (world units).
    pub halfwidth: f64,
    pub seed: u64,
}

/// Repo default for the five mixture weights, evenly spread over `[0, 1]`.
pub const DEFAULT_ALPHAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self { alphas: DEFAULT_ALPHAS.to_vec(), instances_per_alpha: 2000, halfwidth: 1.0, seed: 2024 }
    }
}

impl PerturbationSpec {
    pub fn check(&self) -> Result<(), RobustnessError> {
        if self.alphas.is_empty() || self.instances_per_alpha == 0 {
            return Err(RobustnessError::EmptyDesign);
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(RobustnessError::BadAlpha(*a));
        }
        if !(self.halfwidth >= 0.0 && self.halfwidth.is_finite()) {
            return Err(RobustnessError::BadHalfwidth(self.halfwidth));
        }
        Ok(())
    }

    pub fn total_instances(&self) -> usize {
        self.alphas.len() * self.instances_per_alpha
    }

    /// `(α index, α)` of a flat instance index.
    pub fn alpha_of(&self, instance: usize) -> (usize, f64) {
        let k = instance / self.instances_per_alpha;
        (k, self.alphas[k])
    }
}

/// Reference distributions of the lower and upper corner of each region.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerReferences {
    pub regions: Vec<(EllipticalRef, EllipticalRef)>,
}

impl CornerReferences {
    /// References with means on the nominal corners and a shared scatter.
    pub fn centered(corridor: &SafeCorridor, family: Family, scatter: &Scatter) -> Result<Self, RobustnessError> {
        let s = scatter.matrix(corridor.dim());
        let make = |c: &[f64]| EllipticalRef::new(DVector::from_column_slice(c), s.clone(), family);
        let regions = corridor
            .regions()
            .iter()
            .map(|r| Ok((make(r.lower())?, make(r.upper())?)))
            .collect::<Result<Vec<_>, DistributionError>>()?;
        Ok(Self { regions })
    }
}

/// SplitMix64 finalizer, used to derive independent block seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `(case, family)` block derived from the run seed.
pub fn block_seed(seed: u64, case: usize, family: usize) -> u64 {
    mix(mix(mix(seed) ^ case as u64) ^ family as u64)
}

fn mixed_corner<R: Rng>(r: &EllipticalRef, alpha: f64, h: f64, rng: &mut R) -> Vec<f64> {
    let psi1 = r.draw(rng);
    r.mean()
        .iter()
        .zip(psi1.iter())
        .map(|(c, p1)| {
            let u: f64 = rng.random();
            let psi2 = c - h + 2.0 * h * u;
            (1.0 - alpha) * p1 + alpha * psi2
        })
        .collect()
}

/// One perturbed corridor and the number of crossed-bound redraws it took.
pub fn perturb(
    corridor: &SafeCorridor,
    refs: &CornerReferences,
    spec: &PerturbationSpec,
    seed: u64,
    instance: usize,
) -> Result<(SafeCorridor, usize), RobustnessError> {
    if refs.regions.len() != corridor.len() {
        return Err(RobustnessError::RegionCount { refs: refs.regions.len(), regions: corridor.len() });
    }
    let (_, alpha) = spec.alpha_of(instance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(instance as u64);
    for resamples in 0..MAX_RESAMPLES {
        let mut regions = Vec::with_capacity(corridor.len());
        for (lo_ref, hi_ref) in &refs.regions {
            let lo = mixed_corner(lo_ref, alpha, spec.halfwidth, &mut rng);
            let hi = mixed_corner(hi_ref, alpha, spec.halfwidth, &mut rng);
            match BoxRegion::new(lo, hi) {
                Ok(r) => regions.push(r),
                Err(_) => break,
            }
        }
        if regions.len() == corridor.len() {
            let perturbed = SafeCorridor::new(regions).expect("dimensions follow the nominal corridor");
            return Ok((perturbed, resamples));
        }
    }
    Err(RobustnessError::Degenerate { instance })
}

/// Which geometric test decides a violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationMode {
    /// Any curve sample outside its region.
    SampledCurve,
    /// Any control point outside its region.
    ControlPoints,
}

impl ViolationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationMode::SampledCurve => "sampled_curve",
            ViolationMode::ControlPoints => "control_points",
        }
    }
}

/// Per-segment, per-dimension extent of what the violation test looks at.
/// Checking an instance against it is `O(N·m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    min: DMatrix<f64>,
    max: DMatrix<f64>,
}

impl Envelope {
    pub fn new(traj: &PiecewiseBezier, mode: ViolationMode, resolution: usize) -> Result<Self, RobustnessError> {
        if resolution < 2 {
            return Err(RobustnessError::BadResolution(resolution));
        }
        let (n, m) = (traj.segments().len(), traj.dim());
        let mut min = DMatrix::from_element(n, m, f64::INFINITY);
        let mut max = DMatrix::from_element(n, m, f64::NEG_INFINITY);
        let mut absorb = |seg: usize, p: &[f64]| {
            for (mu, x) in p.iter().enumerate() {
                min[(seg, mu)] = min[(seg, mu)].min(*x);
                max[(seg, mu)] = max[(seg, mu)].max(*x);
            }
        };
        match mode {
            ViolationMode::SampledCurve => {
                for s in traj.sample(resolution)? {
                    absorb(s.segment, s.position.as_slice());
                }
            }
            ViolationMode::ControlPoints => {
                for (i, seg) in traj.segments().iter().enumerate() {
                    let cp = seg.control_points();
                    for j in 0..cp.nrows() {
                        let row: Vec<f64> = cp.row(j).iter().copied().collect();
                        absorb(i, &row);
                    }
                }
            }
        }
        Ok(Self { min, max })
    }

    pub fn violates(&self, corridor: &SafeCorridor) -> bool {
        corridor.regions().iter().enumerate().any(|(i, r)| {
            (0..r.dim()).any(|mu| {
                self.min[(i, mu)] < r.lower()[mu] - VIOLATION_TOL || self.max[(i, mu)] > r.upper()[mu] + VIOLATION_TOL
            })
        })
    }
}

/// Whether `traj` leaves `perturbed` (at most one violation per instance).
pub fn count_violations(
    traj: &PiecewiseBezier,
    perturbed: &SafeCorridor,
    resolution: usize,
    mode: ViolationMode,
) -> Result<bool, RobustnessError> {
    if traj.segments().len() != perturbed.len() {
        return Err(RobustnessError::SegmentCount { segments: traj.segments().len(), regions: perturbed.len() });
    }
    Ok(Envelope::new(traj, mode, resolution)?.violates(perturbed))
}

/// Method column of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Nominal,
    Drscc { radius: f64, risk: f64 },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Nominal => "nominal".to_string(),
            Method::Drscc { radius, risk } => format!("drscc(theta={radius},eps={risk})"),
        }
    }
}

/// Wasserstein radii and risk levels of the DRSCC columns.
pub const GRID_RADII: [f64; 2] = [0.05, 0.1];
pub const GRID_RISKS: [f64; 3] = [0.1, 0.15, 0.25];

/// Nominal followed by every `(θ, ε)` pair, θ-major.
pub fn method_grid(radii: &[f64], risks: &[f64]) -> Vec<Method> {
    let mut out = vec![Method::Nominal];
    for &radius in radii {
        for &risk in risks {
            out.push(Method::Drscc { radius, risk });
        }
    }
    out
}

/// A reference family with its isotropic scatter `σI`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilySetting {
    pub family: Family,
    pub sigma: f64,
}

/// Degrees of freedom used for the Student-t reference when none is given.
pub const DEFAULT_STUDENT_DOF: f64 = 3.0;

/// Normal σ=2, Student-t σ=1, logistic σ=1.
pub fn default_families() -> Vec<FamilySetting> {
    vec![
        FamilySetting { family: Family::Normal, sigma: 2.0 },
        FamilySetting { family: Family::StudentT { dof: DEFAULT_STUDENT_DOF }, sigma: 1.0 },
        FamilySetting { family: Family::Logistic, sigma: 1.0 },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub families: Vec<FamilySetting>,
    pub perturbation: PerturbationSpec,
    pub resolution: usize,
    pub mode: ViolationMode,
    pub keep_instances: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            methods: method_grid(&GRID_RADII, &GRID_RISKS),
            families: default_families(),
            perturbation: PerturbationSpec::default(),
            resolution: 100,
            mode: ViolationMode::SampledCurve,
            keep_instances: false,
        }
    }
}

/// One Table-I cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub method: Method,
    /// `None` when planning failed; see `failure`.
    pub objective: Option<f64>,
    pub objective_ratio: Option<f64>,
    pub violations: usize,
    pub per_alpha: Vec<usize>,
    pub failure: Option<String>,
    pub plan_time: Duration,
}

impl CellResult {
    pub fn violation_rate(&self, total: usize) -> f64 {
        self.violations as f64 / total as f64
    }
}

/// Raw outcome of one perturbed instance for every method of a block.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub instance: usize,
    pub alpha: f64,
    pub resamples: usize,
    pub violated: Vec<bool>,
}

/// All methods for one `(case, family)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockResult {
    pub case: String,
    pub family: FamilySetting,
    pub cells: Vec<CellResult>,
    pub resamples: usize,
    pub instances: Vec<InstanceRecord>,
    pub eval_time: Duration,
}

impl BlockResult {
    pub fn cell(&self, method: &Method) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.method == *method)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub blocks: Vec<BlockResult>,
}

impl BenchmarkReport {
    pub fn total_instances(&self) -> usize {
        self.config.perturbation.total_instances()
    }
}

/// Corridor and path scored by [`run_benchmark`].
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCase {
    pub name: String,
    pub corridor: SafeCorridor,
    pub path: InitialPath,
}

impl From<&ReferenceCase> for BenchmarkCase {
    fn from(case: &ReferenceCase) -> Self {
        Self { name: case.name.to_string(), corridor: case.corridor.clone(), path: case.path() }
    }
}

/// Plans every method for every `(case, family)` on the nominal corridor and
/// scores the plans against the same perturbed instances. Instance
/// evaluation runs on the current rayon pool; results do not depend on the
/// number of workers.
pub fn run_benchmark(
    cases: &[BenchmarkCase],
    config: &BenchmarkConfig,
    snap: impl Fn(usize) -> SnapSpec,
    settings: &SolverSettings,
) -> Result<BenchmarkReport, RobustnessError> {
    config.perturbation.check()?;
    if config.resolution < 2 {
        return Err(RobustnessError::BadResolution(config.resolution));
    }
    let mut blocks = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        let path = &case.path;
        let spec = snap(case.corridor.dim());
        for (fi, fam) in config.families.iter().enumerate() {
            let scatter = Scatter::Isotropic(fam.sigma);
            let mut cells = Vec::with_capacity(config.methods.len());
            let mut envelopes: Vec<Option<Envelope>> = Vec::with_capacity(config.methods.len());
            for method in &config.methods {
                let started = Instant::now();
                let outcome = match method {
                    Method::Nominal => plan(&case.corridor, path, &spec, PlanMode::Nominal, None, settings),
                    Method::Drscc { radius, risk } => {
                        let uniform =
                            UniformAmbiguity { family: fam.family, scatter: scatter.clone(), radius: *radius, risk: *risk };
                        match AmbiguitySpec::broadcast(&case.corridor, &uniform) {
                            Ok(amb) => plan(&case.corridor, path, &spec, PlanMode::Drscc, Some(&amb), settings),
                            Err(e) => Err(e.into()),
                        }
                    }
                };
                let plan_time = started.elapsed();
                match outcome {
                    Ok(p) => {
                        envelopes.push(Some(Envelope::new(&p.trajectory, config.mode, config.resolution)?));
                        cells.push(CellResult {
                            method: *method,
                            objective: Some(p.objective),
                            objective_ratio: None,
                            violations: 0,
                            per_alpha: vec![0; config.perturbation.alphas.len()],
                            failure: None,
                            plan_time,
                        });
                    }
                    Err(e) => {
                        envelopes.push(None);
                        cells.push(CellResult {
                            method: *method,
                            objective: None,
                            objective_ratio: None,
                            violations: 0,
                            per_alpha: vec![0; config.perturbation.alphas.len()],
                            failure: Some(e.to_string()),
                            plan_time,
                        });
                    }
                }
            }
            let nominal = cells.iter().find(|c| c.method == Method::Nominal).and_then(|c| c.objective);
            for cell in &mut cells {
                cell.objective_ratio = match (cell.objective, nominal) {
                    (Some(v), Some(n)) if n > 0.0 => Some(v / n),
                    _ => None,
                };
            }

            let refs = CornerReferences::centered(&case.corridor, fam.family, &scatter)?;
            let seed = block_seed(config.perturbation.seed, ci, fi);
            let started = Instant::now();
            let records: Vec<InstanceRecord> = (0..config.perturbation.total_instances())
                .into_par_iter()
                .map(|k| {
                    let (perturbed, resamples) = perturb(&case.corridor, &refs, &config.perturbation, seed, k)?;
                    let violated = envelopes.iter().map(|e| e.as_ref().is_some_and(|e| e.violates(&perturbed))).collect();
                    Ok(InstanceRecord { instance: k, alpha: config.perturbation.alpha_of(k).1, resamples, violated })
                })
                .collect::<Result<_, RobustnessError>>()?;
            let eval_time = started.elapsed();

            let mut resamples = 0;
            for rec in &records {
                resamples += rec.resamples;
                let (ai, _) = config.perturbation.alpha_of(rec.instance);
                for (cell, &v) in cells.iter_mut().zip(&rec.violated) {
                    if v {
                        cell.violations += 1;
                        cell.per_alpha[ai] += 1;
                    }
                }
            }
            blocks.push(BlockResult {
                case: case.name.clone(),
                family: *fam,
                cells,
                resamples,
                instances: if config.keep_instances { records } else { Vec::new() },
                eval_time,
            });
        }
    }
    Ok(BenchmarkReport { config: config.clone(), blocks })
}
