use std::path::{Path, PathBuf};
use std::time::Instant;

use drscc_core::qp::{assemble_constraints, export_triplets};
use drscc_core::robustness::{run_benchmark, BenchmarkConfig, BenchmarkReport};
use drscc_core::tightening::{connectivity_issues, tighten, TighteningError};
use drscc_core::{corridor, plan, Plan, PlanMode, SolverSettings};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{connectivity_details, CliError, EXIT_INVALID};
use crate::output;

/// Output directory used when neither `--out`, the environment nor the
/// config names one.
pub const DEFAULT_OUT_DIR: &str = "drscc-out";

fn out_dir(flag: Option<&Path>, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

#[derive(Debug, Clone)]
pub struct PlanArgs {
    pub config: PathBuf,
    pub mode: PlanMode,
    pub out: Option<PathBuf>,
    pub export_qp: bool,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub out: PathBuf,
    pub plan: Plan,
}

pub fn cmd_plan(args: &PlanArgs) -> Result<PlanOutcome, CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let amb = match (args.mode, &cfg.ambiguity) {
        (PlanMode::Drscc, None) => {
            return Err(CliError::new("config", EXIT_INVALID, "ambiguity: section required for --mode drscc")
                .with_details(json!({ "field": "ambiguity" })))
        }
        (PlanMode::Drscc, Some(a)) => Some(a.spec(&cfg.corridor)?),
        (PlanMode::Nominal, _) => None,
    };
    let settings = SolverSettings::default();
    let started = Instant::now();
    let result = plan(&cfg.corridor, &cfg.path, &cfg.spec, args.mode, amb.as_ref(), &settings)?;
    let wall = started.elapsed();
    let dir = out_dir(args.out.as_deref(), &cfg)?;
    let res = cfg.output.resolution;

    output::write_atomic(&dir.join("trajectory.csv"), &output::trajectory_csv(&result.trajectory, res))?;
    if let Some(t) = &result.tightened {
        output::write_atomic(&dir.join("bounds.csv"), &output::bounds_csv(&cfg.corridor, t))?;
    }
    let sol = &result.solution;
    let summary = json!({
        "schema": "drscc plan summary v1",
        "name": cfg.name,
        "mode": args.mode.as_str(),
        "status": sol.status.as_str(),
        "objective": result.objective,
        "iterations": sol.iterations,
        "polished": sol.polished,
        "kkt": {
            "stationarity": sol.residuals.stationarity,
            "primal": sol.residuals.primal,
            "complementarity": sol.residuals.complementarity,
        },
        "max_box_violation": result.max_box_violation,
        "dropped_equalities": result.dropped_equalities,
        "segments": result.trajectory.segments().len(),
        "duration": result.trajectory.end_time() - result.trajectory.start_time(),
        "solver_wall_time_s": sol.wall_time.as_secs_f64(),
        "wall_time_s": wall.as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&summary).expect("json value") + "\n";
    output::write_atomic(&dir.join("summary.json"), text.as_bytes())?;
    let svg = output::plan_svg(&cfg.corridor, result.tightened.as_ref(), &cfg.path.waypoints, &result.trajectory, res);
    output::write_atomic(&dir.join("plot.svg"), svg.as_bytes())?;

    if args.export_qp {
        let qp = match &result.tightened {
            Some(t) => assemble_constraints(t, &cfg.path, &cfg.spec),
            None => assemble_constraints(&cfg.corridor, &cfg.path, &cfg.spec),
        }
        .map_err(|e| CliError::new("assembly", EXIT_INVALID, e.to_string()))?;
        let mut buf = Vec::new();
        export_triplets(&qp.problem, &mut buf).expect("in-memory write");
        output::write_atomic(&dir.join("qp.txt"), &buf)?;
    }
    Ok(PlanOutcome { out: dir, plan: result })
}

#[derive(Debug, Clone, Default)]
pub struct BenchmarkArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Instances per α value.
    pub instances: Option<usize>,
    pub threads: Option<usize>,
    pub keep_instances: bool,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub out: PathBuf,
    pub report: BenchmarkReport,
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<BenchmarkOutcome, CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let b = &cfg.benchmark;
    let mut perturbation = b.perturbation.clone();
    if let Some(seed) = args.seed {
        perturbation.seed = seed;
    }
    if let Some(n) = args.instances {
        if n == 0 {
            return Err(CliError::new("config", EXIT_INVALID, "--instances = 0 is outside the valid interval [1, inf)"));
        }
        perturbation.instances_per_alpha = n;
    }
    let config = BenchmarkConfig {
        methods: b.methods.clone(),
        families: b.families.clone(),
        perturbation,
        resolution: b.resolution,
        mode: b.mode,
        keep_instances: args.keep_instances,
    };
    let cases = [cfg.benchmark_case()];
    let spec = cfg.spec.clone();
    let settings = SolverSettings::default();
    let run = || run_benchmark(&cases, &config, |_| spec.clone(), &settings);
    let report = match args.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::new("config", EXIT_INVALID, format!("--threads: {e}")))?;
            pool.install(run)
        }
        None => run(),
    }
    .map_err(|e| CliError::new("benchmark", EXIT_INVALID, e.to_string()))?;

    let dir = out_dir(args.out.as_deref(), &cfg)?;
    output::write_atomic(&dir.join("summary.csv"), &output::summary_csv(&report))?;
    output::write_atomic(&dir.join("per_alpha.csv"), &output::per_alpha_csv(&report))?;
    output::write_atomic(&dir.join("table.txt"), output::table_text(&report).as_bytes())?;
    output::write_atomic(&dir.join("timings.csv"), &output::timings_csv(&report))?;
    if args.keep_instances {
        output::write_atomic(&dir.join("instances.csv"), &output::instances_csv(&report))?;
    }
    let hist = dir.join("histograms");
    std::fs::create_dir_all(&hist).map_err(|e| CliError::io(&hist, e))?;
    let p = &report.config.perturbation;
    for block in &report.blocks {
        for cell in &block.cells {
            let fam = output::family_label(&block.family.family);
            let title = format!("{} {} {}: violations by alpha", block.case, fam, cell.method.label());
            let svg = output::histogram_svg(&title, &p.alphas, &cell.per_alpha, p.instances_per_alpha);
            let file = format!("{}_{}_{}.svg", block.case, block.family.family.name(), output::method_slug(&cell.method));
            output::write_atomic(&hist.join(file), svg.as_bytes())?;
        }
    }
    Ok(BenchmarkOutcome { out: dir, report })
}

/// Report of [`cmd_validate`]: one human-readable line per finding.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<String>,
    pub notes: Vec<String>,
}

/// Corridor invariants plus a tightening and connectivity preview; no solve.
pub fn cmd_validate(config: &Path) -> Result<ValidationReport, CliError> {
    let cfg = RunConfig::load(config)?;
    let mut report = ValidationReport::default();
    let violations = corridor::validate(&cfg.corridor, &cfg.path)
        .map_err(|e| CliError::new("config", EXIT_INVALID, e.to_string()))?;
    report.issues.extend(violations.iter().map(|v| v.to_string()));
    report.notes.push(format!(
        "{} regions in {} dimensions, duration {:.3}",
        cfg.corridor.len(),
        cfg.corridor.dim(),
        cfg.path.arrival_times.last().unwrap() - cfg.path.arrival_times[0]
    ));
    let mut details = json!({ "violations": report.issues.clone() });
    let corridor_ok = report.issues.is_empty();
    if let (true, Some(a)) = (corridor_ok, &cfg.ambiguity) {
        let spec = a.spec(&cfg.corridor)?;
        match tighten(&cfg.corridor, &spec) {
            Ok(t) => {
                for (i, r) in t.regions().iter().enumerate() {
                    report.notes.push(format!(
                        "region {} tightened by {:.4} (lower) / {:.4} (upper) marginal units",
                        i + 1,
                        r.lower_eta,
                        r.upper_eta
                    ));
                }
                let n = cfg.path.waypoints.len();
                let issues = connectivity_issues(&t, &cfg.path.waypoints[0], &cfg.path.waypoints[n - 1]);
                details["connectivity"] = connectivity_details(&issues);
                report.issues.extend(issues.iter().map(|i| i.to_string()));
            }
            Err(TighteningError::Infeasible(r)) => {
                let crossed: Vec<_> = r
                    .crossed
                    .iter()
                    .map(|c| json!({ "region": c.region + 1, "dimension": c.dim + 1, "lower": c.lower, "upper": c.upper }))
                    .collect();
                details["crossed"] = json!(crossed);
                report.issues.push(r.to_string());
            }
            Err(e) => return Err(e.into()),
        }
    }
    if report.issues.is_empty() {
        Ok(report)
    } else {
        details["issues"] = json!(report.issues);
        Err(CliError::new("validation", EXIT_INVALID, report.issues.join("; ")).with_details(details))
    }
}
