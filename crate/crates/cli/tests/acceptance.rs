//! Acceptance suite: one PASS/FAIL line per criterion, written straight to
//! stdout so it shows up without `--nocapture`.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use drscc_core::bezier::BezierSegment;
use drscc_core::cases::reference_cases;
use drscc_core::qp::{assemble_objective, solve};
use drscc_core::robustness::{
    default_families, method_grid, run_benchmark, BenchmarkCase, BlockResult, GRID_RADII, GRID_RISKS,
};
use drscc_core::tightening::{lower_risk, solve_eta_star, tighten, RegionBounds};
use drscc_core::{
    plan, AmbiguitySpec, BenchmarkConfig, BoxRegion, Family, Method, PlanMode, SafeCorridor, Scatter, SnapSpec,
    SolverSettings, Status, UniformAmbiguity,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let started = Instant::now();
    let o = f();
    let took = started.elapsed();
    let within = took <= budget;
    let verdict = if o.pass && within { "PASS" } else { "FAIL" };
    let timing = if within { String::new() } else { format!(" [over budget {budget:?}]") };
    let line = format!("{verdict} criterion {id} ({name}): {} in {:.2}s{timing}\n", o.detail, took.as_secs_f64());
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    o.pass && within
}

fn families() -> [Family; 3] {
    [Family::Normal, Family::StudentT { dof: 3.0 }, Family::Logistic]
}

// Standardized laws written independently of the core crate.
struct Law {
    family: Family,
    t_norm: f64,
}

impl Law {
    fn new(family: Family) -> Self {
        let t_norm = match family {
            Family::StudentT { dof } => {
                (statrs::function::gamma::ln_gamma(0.5 * (dof + 1.0))
                    - statrs::function::gamma::ln_gamma(0.5 * dof)
                    - 0.5 * (dof * std::f64::consts::PI).ln())
                .exp()
            }
            _ => 0.0,
        };
        Self { family, t_norm }
    }

    fn pdf(&self, x: f64) -> f64 {
        match self.family {
            Family::Normal => (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Family::StudentT { dof } => self.t_norm * (1.0 + x * x / dof).powf(-0.5 * (dof + 1.0)),
            Family::Logistic => {
                let e = (-x).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
        }
    }

    fn sf(&self, x: f64) -> f64 {
        match self.family {
            Family::Normal => Normal::new(0.0, 1.0).unwrap().sf(x),
            Family::StudentT { dof } => StudentsT::new(0.0, 1.0, dof).unwrap().sf(x),
            Family::Logistic => 1.0 / (1.0 + x.exp()),
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        match self.family {
            Family::Normal => Normal::new(0.0, 1.0).unwrap().inverse_cdf(p),
            Family::StudentT { dof } => StudentsT::new(0.0, 1.0, dof).unwrap().inverse_cdf(p),
            Family::Logistic => (p / (1.0 - p)).ln(),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::Normal => StandardNormal.sample(rng),
            Family::StudentT { dof } => StudentT::new(dof).unwrap().sample(rng),
            Family::Logistic => {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                (u / (1.0 - u)).ln()
            }
        }
    }
}

/// First point of the `step` grid above `a` where
/// `η(ε − sf(η)) − ∫_a^η x f(x) dx ≥ θ`, with both integrals accumulated by
/// Simpson's rule on each grid cell.
fn grid_eta(law: &Law, eps: f64, theta: f64, step: f64) -> f64 {
    let a = law.quantile(1.0 - eps);
    if theta == 0.0 {
        return a;
    }
    let mut eta = a;
    let mut sf = law.sf(a);
    let mut kappa = 0.0;
    let mut f_lo = law.pdf(a);
    loop {
        let (mid, hi) = (eta + 0.5 * step, eta + step);
        let (f_mid, f_hi) = (law.pdf(mid), law.pdf(hi));
        sf -= step / 6.0 * (f_lo + 4.0 * f_mid + f_hi);
        kappa += step / 6.0 * (eta * f_lo + 4.0 * mid * f_mid + hi * f_hi);
        eta = hi;
        f_lo = f_hi;
        if eta * (eps - sf) - kappa >= theta {
            return eta;
        }
    }
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for fam in families() {
        for eps in [0.05, 0.1, 0.25, 0.4] {
            let lr = lower_risk(fam, eps, 0.0).unwrap();
            worst = worst.max((lr - eps).abs());
        }
    }
    Outcome { pass: worst <= 1e-12, detail: format!("max |eps_lower - eps| = {worst:.2e} over 12 pairs (tol 1e-12)") }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut worst_case = String::new();
    for _ in 0..30 {
        let family = match rng.random_range(0..3) {
            0 => Family::Normal,
            1 => Family::StudentT { dof: [3.0, 4.0, 6.0, 10.0][rng.random_range(0..4)] },
            _ => Family::Logistic,
        };
        let eps = rng.random_range(0.05..0.4);
        let theta = rng.random_range(0.0..0.12);
        let got = solve_eta_star(family, eps, theta).unwrap();
        let want = grid_eta(&Law::new(family), eps, theta, 1e-6);
        let d = (got - want).abs();
        if d > worst {
            worst = d;
            worst_case = format!("{} eps={eps:.3} theta={theta:.3}", family.name());
        }
    }
    Outcome { pass: worst <= 1e-5, detail: format!("max |eta - eta_grid| = {worst:.2e} ({worst_case}) over 30 triples (tol 1e-5)") }
}

fn criterion_3() -> Outcome {
    let eps = 0.1;
    let n = 1_000_000;
    let scatter = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let corridor = SafeCorridor::new(vec![BoxRegion::new(vec![0.0, 0.0], vec![40.0, 40.0]).unwrap()]).unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (k, fam) in families().into_iter().enumerate() {
        let uniform = UniformAmbiguity { family: fam, scatter: Scatter::Full(scatter.clone()), radius: 0.0, risk: eps };
        let spec = AmbiguitySpec::broadcast(&corridor, &uniform).unwrap();
        let t = tighten(&corridor, &spec).unwrap();
        let law = Law::new(fam);
        let mut rng = ChaCha8Rng::seed_from_u64(300 + k as u64);
        for d in 0..2 {
            let s = scatter[(d, d)].sqrt();
            // the upper face ψ must stay above the tightened upper bound
            let (face, bound) = (corridor.upper(0)[d], t.upper(0)[d]);
            let held = (0..n).filter(|_| face + s * law.draw(&mut rng) >= bound).count();
            let cov_u = held as f64 / n as f64;
            let (face, bound) = (corridor.lower(0)[d], t.lower(0)[d]);
            let held = (0..n).filter(|_| face + s * law.draw(&mut rng) <= bound).count();
            let cov_l = held as f64 / n as f64;
            worst = worst.max((cov_u - (1.0 - eps)).abs()).max((cov_l - (1.0 - eps)).abs());
            if d == 0 {
                parts.push(format!("{} {cov_u:.4}", fam.name()));
            }
        }
    }
    Outcome {
        pass: worst <= 0.002,
        detail: format!("coverage ({}) max deviation {worst:.4} from 0.9, 1e6 samples per face (tol 0.002)", parts.join(", ")),
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let settings = SolverSettings::default();
    let (mut df_max, mut dx_max, mut kkt_max): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut failures = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..=30);
        let prob = oracle::random_qp(&mut rng, n, 8);
        let want = oracle::enumerate_active_sets(&prob).expect("oracle KKT point");
        let sol = solve(&prob, &settings).unwrap();
        if sol.status != Status::Optimal {
            failures += 1;
            continue;
        }
        df_max = df_max.max((sol.objective - want.objective).abs() / want.objective.abs().max(1.0));
        dx_max = dx_max.max((&sol.x - &want.x).norm());
        kkt_max = kkt_max.max(sol.residuals.stationarity).max(sol.residuals.complementarity);
    }
    Outcome {
        pass: failures == 0 && df_max <= 1e-6 && dx_max <= 1e-5 && kkt_max <= 1e-6,
        detail: format!(
            "50 QPs (n <= 30): {failures} non-optimal, objective dev {df_max:.1e}, solution dev {dx_max:.1e}, KKT {kkt_max:.1e}"
        ),
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let tau = rng.random_range(0.2..3.0);
        let dim = rng.random_range(1..=3);
        let pts = DMatrix::from_fn(8, dim, |_, _| rng.random_range(-10.0..10.0));
        let seg = BezierSegment::new(pts.clone(), tau).unwrap();
        let q = assemble_objective(&[tau], 7, 4, dim).unwrap();
        // dimension-major layout: all control points of x, then y, ...
        let c = DVector::from_column_slice(pts.as_slice());
        let got = (c.transpose() * &q * &c)[(0, 0)];
        let want = oracle::snap_integral(&seg, 4, 2000);
        worst = worst.max((got - want).abs() / want.abs());
    }
    Outcome { pass: worst <= 1e-6, detail: format!("max relative deviation {worst:.2e} over 100 segments (tol 1e-6)") }
}

fn box_excess<B: RegionBounds>(traj: &drscc_core::PiecewiseBezier, bounds: &B) -> f64 {
    let mut worst: f64 = 0.0;
    for s in traj.sample(200).unwrap() {
        for (d, x) in s.position.iter().enumerate() {
            worst = worst.max(bounds.lower(s.segment)[d] - x).max(x - bounds.upper(s.segment)[d]);
        }
    }
    worst
}

fn criterion_6() -> Outcome {
    let settings = SolverSettings::default();
    let methods = method_grid(&GRID_RADII, &GRID_RISKS);
    let (mut plans, mut failed, mut worst) = (0, 0, 0.0f64);
    for case in reference_cases() {
        let path = case.path();
        let spec = SnapSpec::minimum_snap(case.corridor.dim());
        for fam in default_families() {
            for m in &methods {
                let result = match m {
                    Method::Nominal => plan(&case.corridor, &path, &spec, PlanMode::Nominal, None, &settings),
                    Method::Drscc { radius, risk } => {
                        let u = UniformAmbiguity {
                            family: fam.family,
                            scatter: Scatter::Isotropic(fam.sigma),
                            radius: *radius,
                            risk: *risk,
                        };
                        let amb = AmbiguitySpec::broadcast(&case.corridor, &u).unwrap();
                        plan(&case.corridor, &path, &spec, PlanMode::Drscc, Some(&amb), &settings)
                    }
                };
                match result {
                    Ok(p) => {
                        plans += 1;
                        let excess = match &p.tightened {
                            Some(t) => box_excess(&p.trajectory, t),
                            None => box_excess(&p.trajectory, &case.corridor),
                        };
                        worst = worst.max(excess);
                    }
                    Err(_) => failed += 1,
                }
            }
        }
    }
    Outcome {
        pass: failed == 0 && worst <= 1e-7,
        detail: format!("{plans} optimal plans (3 cases x 3 families x 7 methods), {failed} failed, max box excess {worst:.1e} (tol 1e-7)"),
    }
}

fn violations(b: &BlockResult, radius: f64, risk: f64) -> usize {
    b.cell(&Method::Drscc { radius, risk }).unwrap().violations
}

fn criterion_7() -> Outcome {
    let cases: Vec<BenchmarkCase> = reference_cases().iter().map(BenchmarkCase::from).collect();
    let config = BenchmarkConfig::default();
    let report = run_benchmark(&cases, &config, SnapSpec::minimum_snap, &SolverSettings::default()).unwrap();
    let mut problems = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for fam in &config.families {
        let blocks: Vec<&BlockResult> = report.blocks.iter().filter(|b| b.family == *fam).collect();
        for m in config.methods.iter().filter(|m| **m != Method::Nominal) {
            let mut strong = 0;
            for b in &blocks {
                let nominal = b.cell(&Method::Nominal).unwrap();
                let cell = b.cell(m).unwrap();
                if cell.failure.is_some() || nominal.failure.is_some() {
                    problems.push(format!("{} {} {}: planning failed", b.case, fam.family.name(), m.label()));
                    continue;
                }
                if cell.violations >= nominal.violations {
                    problems.push(format!("{} {} {}: not below nominal", b.case, fam.family.name(), m.label()));
                }
                let ratio = nominal.violations as f64 / cell.violations.max(1) as f64;
                min_ratio = min_ratio.min(ratio);
                if ratio >= 3.0 {
                    strong += 1;
                }
                if !(cell.objective_ratio.unwrap() > 1.0) {
                    problems.push(format!("{} {} {}: objective ratio <= 1", b.case, fam.family.name(), m.label()));
                }
            }
            if strong < 2 {
                problems.push(format!("{} {}: ratio >= 3 in only {strong} cases", fam.family.name(), m.label()));
            }
        }
        for b in &blocks {
            for &eps in &GRID_RISKS {
                for w in GRID_RADII.windows(2) {
                    if violations(b, w[1], eps) > violations(b, w[0], eps) {
                        problems.push(format!("{} {}: violations rise with theta at eps={eps}", b.case, fam.family.name()));
                    }
                    let r = |t: f64| b.cell(&Method::Drscc { radius: t, risk: eps }).unwrap().objective_ratio.unwrap();
                    if r(w[1]) < r(w[0]) {
                        problems.push(format!("{} {}: objective ratio falls with theta at eps={eps}", b.case, fam.family.name()));
                    }
                }
            }
            for &theta in &GRID_RADII {
                for w in GRID_RISKS.windows(2) {
                    if violations(b, theta, w[1]) < violations(b, theta, w[0]) {
                        problems.push(format!("{} {}: violations fall with eps at theta={theta}", b.case, fam.family.name()));
                    }
                }
            }
        }
    }
    Outcome {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("orderings hold on 3 cases x 3 families x 6 settings, min nominal/drscc ratio {min_ratio:.1}")
        } else {
            problems.join("; ")
        },
    }
}

const PARALLEL: &str = "4";

fn benchmark_run(config: &Path, out: &Path, threads: Option<&str>) -> Vec<u8> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_drscc"));
    cmd.args(["benchmark", config.to_str().unwrap(), "--out"]).arg(out);
    if let Some(t) = threads {
        cmd.args(["--threads", t]);
    }
    let status = cmd.output().unwrap().status;
    assert!(status.success(), "benchmark run failed: {status}");
    let mut bytes = std::fs::read(out.join("summary.csv")).unwrap();
    bytes.extend(std::fs::read(out.join("per_alpha.csv")).unwrap());
    bytes
}

fn criterion_8() -> Outcome {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut mismatched = Vec::new();
    for name in ["case1", "case2", "case3"] {
        let cfg = configs.join(format!("{name}.toml"));
        let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
        let a = benchmark_run(&cfg, dirs[0].path(), Some(PARALLEL));
        let b = benchmark_run(&cfg, dirs[1].path(), Some(PARALLEL));
        let c = benchmark_run(&cfg, dirs[2].path(), Some("1"));
        if a != b {
            mismatched.push(format!("{name}: repeat"));
        }
        if a != c {
            mismatched.push(format!("{name}: 1 thread vs {PARALLEL}"));
        }
    }
    Outcome {
        pass: mismatched.is_empty(),
        detail: if mismatched.is_empty() {
            format!("summary.csv and per_alpha.csv bit-identical across 2 runs and 1 vs {PARALLEL} threads on 3 configs")
        } else {
            format!("differences: {}", mismatched.join(", "))
        },
    }
}

#[test]
fn acceptance() {
    let results = [
        report(1, "singleton ball", Duration::from_secs(1), criterion_1),
        report(2, "eta oracle", Duration::from_secs(30), criterion_2),
        report(3, "chance-constraint Monte Carlo", Duration::from_secs(60), criterion_3),
        report(4, "QP vs enumeration", Duration::from_secs(120), criterion_4),
        report(5, "snap objective quadrature", Duration::from_secs(10), criterion_5),
        report(6, "convex-hull safety", Duration::from_secs(60), criterion_6),
        report(7, "benchmark ordering", Duration::from_secs(600), criterion_7),
        report(8, "determinism", Duration::from_secs(600), criterion_8),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
