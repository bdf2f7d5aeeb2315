//! Artifact writers. Every file goes through [`write_atomic`].

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use drscc_core::robustness::{BenchmarkReport, BlockResult, FamilySetting, Method};
use drscc_core::tightening::TightenedCorridor;
use drscc_core::{Family, PiecewiseBezier, SafeCorridor};
use nalgebra::DVector;

use crate::error::CliError;

pub const TRAJECTORY_SCHEMA: &str = "# drscc trajectory v1";
pub const BOUNDS_SCHEMA: &str = "# drscc bounds v1";
pub const SUMMARY_SCHEMA: &str = "# drscc benchmark summary v1";
pub const PER_ALPHA_SCHEMA: &str = "# drscc benchmark per-alpha v1";
pub const TIMINGS_SCHEMA: &str = "# drscc benchmark timings v1";
pub const INSTANCES_SCHEMA: &str = "# drscc benchmark instances v1";

const AXES: [&str; 3] = ["x", "y", "z"];

/// Writes `bytes` to a temp file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn csv_bytes(schema: &str, header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = format!("{schema}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header).expect("in-memory csv");
        for r in rows {
            w.write_record(r).expect("in-memory csv");
        }
        w.flush().expect("in-memory csv");
    }
    out
}

pub fn family_label(f: &Family) -> String {
    match f {
        Family::StudentT { dof } => format!("student_t(dof={dof})"),
        other => other.name().to_string(),
    }
}

fn setting_label(f: &FamilySetting) -> String {
    format!("{} sigma={}", family_label(&f.family), f.sigma)
}

/// Normalized times of the export grid: `r/res` for `r < res` on every
/// segment, plus the final endpoint, so junctions appear once.
fn grid(segments: usize, res: usize) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> =
        (0..segments).flat_map(|i| (0..res).map(move |r| (i, r as f64 / res as f64))).collect();
    out.push((segments - 1, 1.0));
    out
}

/// Position, velocity and acceleration on `N × res + 1` timestamps.
pub fn trajectory_csv(traj: &PiecewiseBezier, res: usize) -> Vec<u8> {
    let dim = traj.dim();
    let mut header = vec!["t".to_string()];
    for prefix in ["", "v", "a"] {
        header.extend(AXES[..dim].iter().map(|a| format!("{prefix}{a}")));
    }
    let starts = traj.segment_start_times();
    let rows: Vec<Vec<String>> = grid(traj.segments().len(), res)
        .into_iter()
        .map(|(i, t)| {
            let seg = &traj.segments()[i];
            let mut row = vec![(starts[i] + t * seg.duration()).to_string()];
            for order in 0..3 {
                let v = seg.derivative(order, t).expect("t in [0, 1]");
                row.extend(v.iter().map(|x| x.to_string()));
            }
            row
        })
        .collect();
    csv_bytes(TRAJECTORY_SCHEMA, &header, &rows)
}

/// Nominal and tightened bounds with the per-face margin and risk.
pub fn bounds_csv(corridor: &SafeCorridor, tightened: &TightenedCorridor) -> Vec<u8> {
    let header: Vec<String> = [
        "region",
        "dimension",
        "nominal_lower",
        "nominal_upper",
        "lower",
        "upper",
        "lower_eta",
        "upper_eta",
        "lower_risk",
        "upper_risk",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::new();
    for (i, (nom, t)) in corridor.regions().iter().zip(tightened.regions()).enumerate() {
        for d in 0..corridor.dim() {
            rows.push(vec![
                (i + 1).to_string(),
                (d + 1).to_string(),
                nom.lower()[d].to_string(),
                nom.upper()[d].to_string(),
                t.lower[d].to_string(),
                t.upper[d].to_string(),
                t.lower_eta.to_string(),
                t.upper_eta.to_string(),
                t.lower_risk.to_string(),
                t.upper_risk.to_string(),
            ]);
        }
    }
    csv_bytes(BOUNDS_SCHEMA, &header, &rows)
}

struct Frame {
    x0: f64,
    y0: f64,
    scale: f64,
    height: f64,
    pad: f64,
}

impl Frame {
    fn fit(lo: [f64; 2], hi: [f64; 2], width: f64, pad: f64) -> Self {
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let scale = (width - 2.0 * pad) / span;
        let height = (hi[1] - lo[1]) * scale + 2.0 * pad;
        Self { x0: lo[0], y0: hi[1], scale, height, pad }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (self.pad + (x - self.x0) * self.scale, self.pad + (self.y0 - y) * self.scale)
    }

    fn rect(&self, lo: &[f64], hi: &[f64], style: &str) -> String {
        let (x, y) = self.px(lo[0], hi[1]);
        let (w, h) = ((hi[0] - lo[0]) * self.scale, (hi[1] - lo[1]) * self.scale);
        format!("<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" {style}/>\n")
    }
}

/// Corridor, tightened boxes, waypoints and the x-y projection of the path.
pub fn plan_svg(
    corridor: &SafeCorridor,
    tightened: Option<&TightenedCorridor>,
    waypoints: &[Vec<f64>],
    traj: &PiecewiseBezier,
    res: usize,
) -> String {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for r in corridor.regions() {
        for d in 0..2 {
            lo[d] = lo[d].min(r.lower()[d]);
            hi[d] = hi[d].max(r.upper()[d]);
        }
    }
    let width = 800.0;
    let f = Frame::fit(lo, hi, width, 20.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{:.0}\" viewBox=\"0 0 {width} {:.2}\">",
        f.height, f.height
    );
    if corridor.dim() > 2 {
        let _ = writeln!(s, "<!-- x-y projection of a {}-D corridor -->", corridor.dim());
    }
    s.push_str("<g id=\"corridor\">\n");
    for r in corridor.regions() {
        s.push_str(&f.rect(r.lower(), r.upper(), "fill=\"#9bb7d4\" fill-opacity=\"0.25\" stroke=\"#35557a\""));
    }
    s.push_str("</g>\n");
    if let Some(t) = tightened {
        s.push_str("<g id=\"tightened\">\n");
        for r in t.regions() {
            s.push_str(&f.rect(&r.lower, &r.upper, "fill=\"none\" stroke=\"#b03a2e\" stroke-dasharray=\"6 4\""));
        }
        s.push_str("</g>\n");
    }
    let pts: Vec<String> = grid(traj.segments().len(), res)
        .into_iter()
        .map(|(i, t)| {
            let p: DVector<f64> = traj.segments()[i].evaluate(t).expect("t in [0, 1]");
            let (x, y) = f.px(p[0], p[1]);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        s,
        "<polyline id=\"trajectory\" fill=\"none\" stroke=\"#111\" stroke-width=\"2\" points=\"{}\"/>",
        pts.join(" ")
    );
    s.push_str("<g id=\"waypoints\">\n");
    for w in waypoints {
        let (x, y) = f.px(w[0], w[1]);
        let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"#e67e22\"/>");
    }
    s.push_str("</g>\n</svg>\n");
    s
}

/// Bars of violations per α for one cell.
pub fn histogram_svg(title: &str, alphas: &[f64], counts: &[usize], per_alpha: usize) -> String {
    let (w, h, pad) = (480.0, 300.0, 40.0);
    let bar = (w - 2.0 * pad) / alphas.len() as f64;
    let mut s = String::new();
    let _ = writeln!(s, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">");
    let _ = writeln!(s, "<text x=\"{pad}\" y=\"20\" font-family=\"monospace\" font-size=\"12\">{}</text>", escape(title));
    let _ = writeln!(
        s,
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>",
        h - pad,
        w - pad,
        h - pad
    );
    for (i, (&a, &c)) in alphas.iter().zip(counts).enumerate() {
        let frac = c as f64 / per_alpha as f64;
        let bh = frac * (h - 2.0 * pad - 20.0);
        let x = pad + i as f64 * bar + 0.1 * bar;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{bh:.2}\" fill=\"#35557a\"/>",
            h - pad - bh,
            0.8 * bar
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{c}</text>",
            x + 0.4 * bar,
            h - pad - bh - 4.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">alpha={a}</text>",
            x + 0.4 * bar,
            h - pad + 14.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// File-name-safe slug of a method label.
pub fn method_slug(m: &Method) -> String {
    match m {
        Method::Nominal => "nominal".to_string(),
        Method::Drscc { radius, risk } => format!("drscc_theta{radius}_eps{risk}"),
    }
}

fn method_params(m: &Method) -> (String, String) {
    match m {
        Method::Nominal => (String::new(), String::new()),
        Method::Drscc { radius, risk } => (radius.to_string(), risk.to_string()),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per cell; contains no timing so it is reproducible bit for bit.
pub fn summary_csv(report: &BenchmarkReport) -> Vec<u8> {
    let total = report.total_instances();
    let header: Vec<String> = [
        "case",
        "family",
        "sigma",
        "method",
        "theta",
        "epsilon",
        "status",
        "objective",
        "objective_ratio",
        "violations",
        "instances",
        "violation_rate",
        "resamples",
        "failure",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::new();
    for b in &report.blocks {
        for c in &b.cells {
            let (theta, eps) = method_params(&c.method);
            rows.push(vec![
                b.case.clone(),
                family_label(&b.family.family),
                b.family.sigma.to_string(),
                c.method.label(),
                theta,
                eps,
                if c.failure.is_some() { "failed" } else { "ok" }.to_string(),
                opt(c.objective),
                opt(c.objective_ratio),
                c.violations.to_string(),
                total.to_string(),
                c.violation_rate(total).to_string(),
                b.resamples.to_string(),
                c.failure.clone().unwrap_or_default(),
            ]);
        }
    }
    csv_bytes(SUMMARY_SCHEMA, &header, &rows)
}

pub fn per_alpha_csv(report: &BenchmarkReport) -> Vec<u8> {
    let p = &report.config.perturbation;
    let header: Vec<String> =
        ["case", "family", "method", "alpha", "violations", "instances"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for b in &report.blocks {
        for c in &b.cells {
            for (a, v) in p.alphas.iter().zip(&c.per_alpha) {
                rows.push(vec![
                    b.case.clone(),
                    family_label(&b.family.family),
                    c.method.label(),
                    a.to_string(),
                    v.to_string(),
                    p.instances_per_alpha.to_string(),
                ]);
            }
        }
    }
    csv_bytes(PER_ALPHA_SCHEMA, &header, &rows)
}

/// Planning and evaluation wall times; kept apart from the summary.
pub fn timings_csv(report: &BenchmarkReport) -> Vec<u8> {
    let header: Vec<String> = ["case", "family", "stage", "method", "seconds"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for b in &report.blocks {
        for c in &b.cells {
            rows.push(vec![
                b.case.clone(),
                family_label(&b.family.family),
                "plan".into(),
                c.method.label(),
                c.plan_time.as_secs_f64().to_string(),
            ]);
        }
        rows.push(vec![
            b.case.clone(),
            family_label(&b.family.family),
            "evaluate".into(),
            String::new(),
            b.eval_time.as_secs_f64().to_string(),
        ]);
    }
    csv_bytes(TIMINGS_SCHEMA, &header, &rows)
}

pub fn instances_csv(report: &BenchmarkReport) -> Vec<u8> {
    let methods = &report.config.methods;
    let mut header: Vec<String> =
        ["case", "family", "instance", "alpha", "resamples"].iter().map(|s| s.to_string()).collect();
    header.extend(methods.iter().map(|m| m.label()));
    let mut rows = Vec::new();
    for b in &report.blocks {
        for r in &b.instances {
            let mut row = vec![
                b.case.clone(),
                family_label(&b.family.family),
                r.instance.to_string(),
                r.alpha.to_string(),
                r.resamples.to_string(),
            ];
            row.extend(r.violated.iter().map(|&v| u8::from(v).to_string()));
            rows.push(row);
        }
    }
    csv_bytes(INSTANCES_SCHEMA, &header, &rows)
}

/// Violation counts and objective ratios laid out with one row pair per
/// family and one column per method.
pub fn table_text(report: &BenchmarkReport) -> String {
    let total = report.total_instances();
    let methods = &report.config.methods;
    let head_w = 28;
    let col_w = methods.iter().map(|m| m.label().len()).max().unwrap_or(8).max(10) + 2;
    let mut s = String::new();
    let mut cases: Vec<&str> = Vec::new();
    for b in &report.blocks {
        if !cases.contains(&b.case.as_str()) {
            cases.push(&b.case);
        }
    }
    for case in cases {
        let _ = writeln!(s, "{case}: violations out of {total} perturbed corridors per cell");
        let _ = write!(s, "{:<head_w$}", "family / metric");
        for m in methods {
            let _ = write!(s, "{:>col_w$}", m.label());
        }
        s.push('\n');
        for b in report.blocks.iter().filter(|b| b.case == case) {
            row(&mut s, &setting_label(&b.family), b, methods, head_w, col_w, |c| Some(c.violations.to_string()));
            row(&mut s, "  objective ratio", b, methods, head_w, col_w, |c| {
                c.objective_ratio.map(|r| format!("{r:.3}"))
            });
        }
        s.push('\n');
    }
    s
}

fn row(
    s: &mut String,
    label: &str,
    b: &BlockResult,
    methods: &[Method],
    head_w: usize,
    col_w: usize,
    f: impl Fn(&drscc_core::robustness::CellResult) -> Option<String>,
) {
    let _ = write!(s, "{label:<head_w$}");
    for m in methods {
        let v = b.cell(m).and_then(|c| if c.failure.is_some() { Some("failed".into()) } else { f(c) });
        let _ = write!(s, "{:>col_w$}", v.unwrap_or_else(|| "-".into()));
    }
    s.push('\n');
}
