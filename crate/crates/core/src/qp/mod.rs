//! Minimum-snap QP over Bezier control points, nominal or tightened.
//!
//! Decision vector layout (dimension-major, as in `c = [c_{1,x}^0 … c_{N,x}^n,
//! c_{1,y}^0 …]`): control point `j` of segment `i` in dimension `μ` sits at
//! `(μ·N + i)·(n+1) + j`.

pub mod solver;

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::bezier::{binomial, difference_matrix, BezierError, BezierSegment, PiecewiseBezier};
use crate::corridor::{validate, CorridorError, InitialPath, SafeCorridor, Violation};
use crate::tightening::{
    connectivity_issues, tighten, AmbiguitySpec, ConnectivityIssue, RegionBounds, TightenedCorridor, TighteningError,
};

pub use solver::{
    kkt_residuals, solve, KktResiduals, QpError, QpProblem, QpSolution, RowKind, SolverSettings, Stacked, Status,
};

/// Rank tolerance for dropping dependent equality rows.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("degree {degree} too low for derivative order {order}: need n ≥ 2k − 1 = {}", 2 * order - 1)]
    DegreeTooLow { degree: usize, order: usize },
    #[error("objective derivative order must be at least 1")]
    ZeroOrder,
    #[error("boundary derivative orders 1..={pinned} requested at the {side}, but only orders below k = {order} can be pinned")]
    BoundaryOrder { side: &'static str, pinned: usize, order: usize },
    #[error("{side} derivative of order {order} has {found} components, expected {expected}")]
    BoundaryDimension { side: &'static str, order: usize, expected: usize, found: usize },
    #[error("single segment of degree {degree} cannot meet {pins} boundary conditions")]
    OverConstrained { degree: usize, pins: usize },
    #[error("derivative limit order {order} outside 1..{k}")]
    LimitOrder { order: usize, k: usize },
    #[error("derivative limit for order {order} is empty: min {min} ≥ max {max}")]
    EmptyLimit { order: usize, min: f64, max: f64 },
    #[error("equality row {row} contradicts the independent rows (residual {residual:e})")]
    InconsistentEqualities { row: usize, residual: f64 },
    #[error("bounds describe {regions} regions but the path has {waypoints} waypoints")]
    RegionCount { regions: usize, waypoints: usize },
    #[error("waypoint {index} is {found}-D, bounds are {expected}-D")]
    Dimension { index: usize, expected: usize, found: usize },
    #[error("segment {0} has nonpositive duration")]
    Duration(usize),
    #[error(transparent)]
    Bezier(#[from] BezierError),
}

/// Derivative limits on one order `g`, applied to its control points.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeLimit {
    pub order: usize,
    pub min: f64,
    pub max: f64,
}

/// Objective order, degree, boundary states and derivative limits.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapSpec {
    pub degree: usize,
    /// `k`: objective derivative order; junctions are `C^{k−1}`.
    pub order: usize,
    /// Physical derivatives of orders `1, 2, …` pinned at the start.
    pub start_derivatives: Vec<Vec<f64>>,
    pub end_derivatives: Vec<Vec<f64>>,
    pub limits: Vec<DerivativeLimit>,
}

impl SnapSpec {
    /// Start and end at rest: all derivatives of order `1..k` are zero.
    pub fn at_rest(dim: usize, degree: usize, order: usize) -> Self {
        let zeros = vec![vec![0.0; dim]; order.saturating_sub(1)];
        Self { degree, order, start_derivatives: zeros.clone(), end_derivatives: zeros, limits: Vec::new() }
    }

    /// Degree 7, snap objective, at rest at both ends.
    pub fn minimum_snap(dim: usize) -> Self {
        Self::at_rest(dim, 7, 4)
    }

    pub fn check(&self, dim: usize, segments: usize) -> Result<(), AssemblyError> {
        let (n, k) = (self.degree, self.order);
        if k == 0 {
            return Err(AssemblyError::ZeroOrder);
        }
        if n + 1 < 2 * k {
            return Err(AssemblyError::DegreeTooLow { degree: n, order: k });
        }
        for (side, ds) in [("start", &self.start_derivatives), ("end", &self.end_derivatives)] {
            if ds.len() >= k {
                return Err(AssemblyError::BoundaryOrder { side, pinned: ds.len(), order: k });
            }
            for (l, d) in ds.iter().enumerate() {
                if d.len() != dim {
                    return Err(AssemblyError::BoundaryDimension { side, order: l + 1, expected: dim, found: d.len() });
                }
            }
        }
        let pins = 2 + self.start_derivatives.len() + self.end_derivatives.len();
        if segments == 1 && pins > n + 1 {
            return Err(AssemblyError::OverConstrained { degree: n, pins });
        }
        for lim in &self.limits {
            if lim.order == 0 || lim.order >= k {
                return Err(AssemblyError::LimitOrder { order: lim.order, k });
            }
            if !(lim.min < lim.max) {
                return Err(AssemblyError::EmptyLimit { order: lim.order, min: lim.min, max: lim.max });
            }
        }
        Ok(())
    }
}

/// Gram matrix `∫₀¹ b_p^i b_p^j dt = C(p,i)C(p,j) / ((2p+1)·C(2p,i+j))`.
pub fn bernstein_gram(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p + 1, p + 1, |i, j| {
        binomial(p, i) * binomial(p, j) / ((2 * p + 1) as f64 * binomial(2 * p, i + j))
    })
}

/// Per-segment block `τ^{1−2k} D_kᵀ G_{n−k} D_k`, so that `cᵀQc` is the
/// integral of the squared physical `k`-th derivative over the segment.
pub fn segment_objective(degree: usize, order: usize, duration: f64) -> Result<DMatrix<f64>, AssemblyError> {
    if degree + 1 < 2 * order {
        return Err(AssemblyError::DegreeTooLow { degree, order });
    }
    let d = difference_matrix(degree, order)?;
    let g = bernstein_gram(degree - order);
    Ok(d.transpose() * g * d * duration.powi(1 - 2 * order as i32))
}

/// Block-diagonal objective `Q` over segments and dimensions.
pub fn assemble_objective(durations: &[f64], degree: usize, order: usize, dim: usize) -> Result<DMatrix<f64>, AssemblyError> {
    let segs = durations.len();
    let w = degree + 1;
    let mut q = DMatrix::zeros(dim * segs * w, dim * segs * w);
    for (i, &tau) in durations.iter().enumerate() {
        if !(tau > 0.0) {
            return Err(AssemblyError::Duration(i));
        }
        let block = segment_objective(degree, order, tau)?;
        for mu in 0..dim {
            let off = (mu * segs + i) * w;
            q.view_mut((off, off), (w, w)).copy_from(&block);
        }
    }
    Ok(q)
}

/// Indices of a maximal linearly independent subset of the rows of `a`
/// (pivoted modified Gram–Schmidt), in original order. A row is dependent
/// when its residual is at most `tol` times its norm.
pub fn independent_rows(a: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let m = a.nrows();
    let norms: Vec<f64> = (0..m).map(|i| a.row(i).norm()).collect();
    let mut residual: Vec<DVector<f64>> = (0..m).map(|i| a.row(i).transpose()).collect();
    let mut remaining: Vec<usize> = (0..m).filter(|&i| norms[i] > 0.0).collect();
    let mut kept = Vec::new();
    loop {
        let best = remaining
            .iter()
            .enumerate()
            .map(|(pos, &i)| (pos, residual[i].norm() / norms[i]))
            .fold(None, |acc: Option<(usize, f64)>, (pos, r)| match acc {
                Some((_, br)) if br >= r => acc,
                _ => Some((pos, r)),
            });
        let Some((pos, rel)) = best else { break };
        if rel <= tol {
            break;
        }
        let i = remaining.remove(pos);
        let q = &residual[i] / residual[i].norm();
        for &r in &remaining {
            let proj = q.dot(&residual[r]);
            residual[r].axpy(-proj, &q, 1.0);
        }
        kept.push(i);
    }
    kept.sort_unstable();
    kept
}

/// Drops dependent rows of `a x = b`, failing if a dropped row contradicts
/// the kept ones. Returns the kept row indices.
pub fn reduce_equalities(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<Vec<usize>, AssemblyError> {
    let kept = independent_rows(a, tol);
    if kept.len() == a.nrows() {
        return Ok(kept);
    }
    let ak = a.select_rows(&kept);
    let bk = b.select_rows(&kept);
    // Minimum-norm solution of the kept system; dependent rows are constant on its solution set.
    let gram = &ak * ak.transpose();
    let x0 = match gram.clone().cholesky() {
        Some(ch) => ak.transpose() * ch.solve(&bk),
        None => ak.transpose() * gram.lu().solve(&bk).unwrap_or_else(|| DVector::zeros(kept.len())),
    };
    for row in 0..a.nrows() {
        if kept.binary_search(&row).is_ok() {
            continue;
        }
        let value = a.row(row).dot(&x0.transpose());
        let residual = (value - b[row]).abs();
        let scale = 1.0f64.max(b[row].abs()).max(a.row(row).norm() * x0.norm());
        if residual > 1e-8 * scale {
            return Err(AssemblyError::InconsistentEqualities { row, residual });
        }
    }
    Ok(kept)
}

/// Assembled trajectory QP plus what is needed to read the solution back.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryQp {
    pub problem: QpProblem,
    /// `Q` with objective `cᵀQc`; the solver Hessian is `2Q`.
    pub objective: DMatrix<f64>,
    pub segments: usize,
    pub degree: usize,
    pub dim: usize,
    pub durations: Vec<f64>,
    pub start_time: f64,
    /// Equality rows removed as linearly dependent.
    pub dropped_equalities: usize,
}

impl TrajectoryQp {
    pub fn var(&self, mu: usize, segment: usize, j: usize) -> usize {
        (mu * self.segments + segment) * (self.degree + 1) + j
    }

    pub fn trajectory(&self, c: &DVector<f64>) -> Result<PiecewiseBezier, BezierError> {
        let w = self.degree + 1;
        let segments = (0..self.segments)
            .map(|i| {
                let pts = DMatrix::from_fn(w, self.dim, |j, mu| c[self.var(mu, i, j)]);
                BezierSegment::new(pts, self.durations[i])
            })
            .collect::<Result<Vec<_>, _>>()?;
        PiecewiseBezier::new(segments, self.start_time)
    }

    /// Stacks per-segment control points into the decision vector.
    pub fn decision_vector(&self, traj: &PiecewiseBezier) -> DVector<f64> {
        let mut c = DVector::zeros(self.problem.num_vars());
        for (i, seg) in traj.segments().iter().enumerate() {
            for mu in 0..self.dim {
                for j in 0..=self.degree {
                    c[self.var(mu, i, j)] = seg.control_points()[(j, mu)];
                }
            }
        }
        c
    }
}

/// Builds the QP: SCC box rows from `bounds` (nominal or tightened), boundary
/// pinning, `C^{k−1}` junctions and derivative-limit rows.
pub fn assemble_constraints<B: RegionBounds>(
    bounds: &B,
    path: &InitialPath,
    spec: &SnapSpec,
) -> Result<TrajectoryQp, AssemblyError> {
    let segs = bounds.region_count();
    let dim = bounds.dim();
    if path.waypoints.len() != segs + 1 || path.arrival_times.len() != segs + 1 {
        return Err(AssemblyError::RegionCount { regions: segs, waypoints: path.waypoints.len() });
    }
    for (index, p) in path.waypoints.iter().enumerate() {
        if p.len() != dim {
            return Err(AssemblyError::Dimension { index, expected: dim, found: p.len() });
        }
    }
    spec.check(dim, segs)?;
    let (n, k) = (spec.degree, spec.order);
    let w = n + 1;
    let durations = path.durations();
    let objective = assemble_objective(&durations, n, k, dim)?;
    let nv = dim * segs * w;
    let var = |mu: usize, i: usize, j: usize| (mu * segs + i) * w + j;
    let diffs: Vec<DMatrix<f64>> = (0..=n).map(|l| difference_matrix(n, l)).collect::<Result<_, _>>()?;

    let mut eq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let last = segs - 1;
    for mu in 0..dim {
        // Start and end state: τ^{−l}·a^{l,0} and τ^{−l}·a^{l,n−l}.
        let start = std::iter::once(path.waypoints[0][mu])
            .chain(spec.start_derivatives.iter().map(|d| d[mu]));
        for (l, value) in start.enumerate() {
            let s = durations[0].powi(-(l as i32));
            let row = (0..w).filter(|&c| diffs[l][(0, c)] != 0.0).map(|c| (var(mu, 0, c), s * diffs[l][(0, c)])).collect();
            eq_rows.push((row, value));
        }
        let end = std::iter::once(path.waypoints[segs][mu]).chain(spec.end_derivatives.iter().map(|d| d[mu]));
        for (l, value) in end.enumerate() {
            let s = durations[last].powi(-(l as i32));
            let r = n - l;
            let row =
                (0..w).filter(|&c| diffs[l][(r, c)] != 0.0).map(|c| (var(mu, last, c), s * diffs[l][(r, c)])).collect();
            eq_rows.push((row, value));
        }
        // Junctions: τ_i^{−φ} a_i^{φ,n−φ} = τ_{i+1}^{−φ} a_{i+1}^{φ,0}.
        for i in 0..last {
            for phi in 0..k {
                let left = durations[i].powi(-(phi as i32));
                let right = durations[i + 1].powi(-(phi as i32));
                let d = &diffs[phi];
                let mut row = Vec::new();
                for c in 0..w {
                    if d[(n - phi, c)] != 0.0 {
                        row.push((var(mu, i, c), left * d[(n - phi, c)]));
                    }
                    if d[(0, c)] != 0.0 {
                        row.push((var(mu, i + 1, c), -right * d[(0, c)]));
                    }
                }
                eq_rows.push((row, 0.0));
            }
        }
    }
    let mut a_eq = DMatrix::zeros(eq_rows.len(), nv);
    let mut b_eq = DVector::zeros(eq_rows.len());
    for (r, (row, value)) in eq_rows.iter().enumerate() {
        for &(c, v) in row {
            a_eq[(r, c)] += v;
        }
        b_eq[r] = *value;
    }
    let kept = reduce_equalities(&a_eq, &b_eq, RANK_TOL)?;
    let dropped = a_eq.nrows() - kept.len();
    let a_eq = a_eq.select_rows(&kept);
    let b_eq = b_eq.select_rows(&kept);

    let mut lo = DVector::zeros(nv);
    let mut hi = DVector::zeros(nv);
    for i in 0..segs {
        for mu in 0..dim {
            for j in 0..w {
                lo[var(mu, i, j)] = bounds.lower(i)[mu];
                hi[var(mu, i, j)] = bounds.upper(i)[mu];
            }
        }
    }

    let mut lim_rows: Vec<(Vec<(usize, f64)>, f64, f64)> = Vec::new();
    for lim in &spec.limits {
        let g = lim.order;
        for i in 0..segs {
            let s = durations[i].powi(-(g as i32));
            for mu in 0..dim {
                for j in 0..=(n - g) {
                    let row = (0..w)
                        .filter(|&c| diffs[g][(j, c)] != 0.0)
                        .map(|c| (var(mu, i, c), s * diffs[g][(j, c)]))
                        .collect();
                    lim_rows.push((row, lim.min, lim.max));
                }
            }
        }
    }
    let mut a_in = DMatrix::zeros(lim_rows.len(), nv);
    let mut l_in = DVector::zeros(lim_rows.len());
    let mut u_in = DVector::zeros(lim_rows.len());
    for (r, (row, l, u)) in lim_rows.iter().enumerate() {
        for &(c, v) in row {
            a_in[(r, c)] += v;
        }
        l_in[r] = *l;
        u_in[r] = *u;
    }

    let problem = QpProblem::new(&objective * 2.0, DVector::zeros(nv))
        .with_equalities(a_eq, b_eq)
        .with_inequalities(a_in, l_in, u_in)
        .with_bounds(lo, hi);
    Ok(TrajectoryQp {
        problem,
        objective,
        segments: segs,
        degree: n,
        dim,
        durations,
        start_time: path.arrival_times[0],
        dropped_equalities: dropped,
    })
}

/// Largest distance by which the sampled trajectory leaves the box of its
/// own segment (0 when inside).
pub fn box_violation<B: RegionBounds>(traj: &PiecewiseBezier, bounds: &B, resolution: usize) -> Result<f64, BezierError> {
    let mut worst: f64 = 0.0;
    for s in traj.sample(resolution)? {
        let (lo, hi) = (bounds.lower(s.segment), bounds.upper(s.segment));
        for (mu, x) in s.position.iter().enumerate() {
            worst = worst.max(lo[mu] - x).max(x - hi[mu]);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    Nominal,
    Drscc,
}

impl PlanMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlanMode::Nominal => "nominal",
            PlanMode::Drscc => "drscc",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Corridor(#[from] CorridorError),
    #[error("corridor/path invalid: {}", join(.0))]
    InvalidCorridor(Vec<Violation>),
    #[error("drscc mode needs an ambiguity spec")]
    MissingAmbiguity,
    #[error(transparent)]
    Tightening(#[from] TighteningError),
    #[error("{}", join(.0))]
    Disconnected(Vec<ConnectivityIssue>),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("QP infeasible ({} rows in the certificate)", .0.infeasible_rows.len())]
    Infeasible(Box<QpSolution>),
    #[error("QP solver hit the iteration cap after {} iterations", .0.iterations)]
    MaxIter(Box<QpSolution>),
    #[error(transparent)]
    Bezier(#[from] BezierError),
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Outcome of [`plan`].
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub mode: PlanMode,
    pub trajectory: PiecewiseBezier,
    pub solution: QpSolution,
    /// `cᵀQc` at the optimum.
    pub objective: f64,
    pub tightened: Option<TightenedCorridor>,
    /// Sampled post-check against the boxes the QP used (200 samples per segment).
    pub max_box_violation: f64,
    pub dropped_equalities: usize,
}

/// Samples per segment for the post-solve containment check.
pub const POSTCHECK_RESOLUTION: usize = 200;

/// Validate → tighten (drscc) → assemble → solve → reshape.
pub fn plan(
    corridor: &SafeCorridor,
    path: &InitialPath,
    spec: &SnapSpec,
    mode: PlanMode,
    ambiguity: Option<&AmbiguitySpec>,
    settings: &SolverSettings,
) -> Result<Plan, PlanError> {
    let violations = validate(corridor, path)?;
    if !violations.is_empty() {
        return Err(PlanError::InvalidCorridor(violations));
    }
    let start = &path.waypoints[0];
    let goal = &path.waypoints[path.waypoints.len() - 1];
    match mode {
        PlanMode::Nominal => finish(corridor, path, spec, mode, None, settings),
        PlanMode::Drscc => {
            let amb = ambiguity.ok_or(PlanError::MissingAmbiguity)?;
            let tightened = tighten(corridor, amb)?;
            let issues = connectivity_issues(&tightened, start, goal);
            if !issues.is_empty() {
                return Err(PlanError::Disconnected(issues));
            }
            finish(&tightened, path, spec, mode, Some(tightened.clone()), settings)
        }
    }
}

fn finish<B: RegionBounds>(
    bounds: &B,
    path: &InitialPath,
    spec: &SnapSpec,
    mode: PlanMode,
    tightened: Option<TightenedCorridor>,
    settings: &SolverSettings,
) -> Result<Plan, PlanError> {
    let qp = assemble_constraints(bounds, path, spec)?;
    let solution = solve(&qp.problem, settings)?;
    match solution.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(PlanError::Infeasible(Box::new(solution))),
        Status::MaxIter => return Err(PlanError::MaxIter(Box::new(solution))),
    }
    let trajectory = qp.trajectory(&solution.x)?;
    let max_box_violation = box_violation(&trajectory, bounds, POSTCHECK_RESOLUTION)?;
    Ok(Plan {
        mode,
        objective: solution.objective,
        trajectory,
        solution,
        tightened,
        max_box_violation,
        dropped_equalities: qp.dropped_equalities,
    })
}

fn write_matrix<W: Write>(w: &mut W, name: &str, m: &DMatrix<f64>) -> io::Result<()> {
    let entries: Vec<(usize, usize, f64)> = (0..m.ncols())
        .flat_map(|j| (0..m.nrows()).map(move |i| (i, j)))
        .filter_map(|(i, j)| (m[(i, j)] != 0.0).then(|| (i, j, m[(i, j)])))
        .collect();
    writeln!(w, "{name}")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{i} {j} {v:e}")?;
    }
    Ok(())
}

fn write_vector<W: Write>(w: &mut W, name: &str, v: &DVector<f64>) -> io::Result<()> {
    let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    write_matrix(w, name, &m)
}

/// Writes the problem as named sparse triplet blocks: `P`, `q`, `A`, `l`,
/// `u` of the stacked form `min ½xᵀPx + qᵀx, l ≤ Ax ≤ u`. Each block is a
/// name line, a `rows cols nnz` line, then one `i j value` line per nonzero
/// (0-based, column-major order). Infinite bounds print as `inf`/`-inf`.
pub fn export_triplets<W: Write>(problem: &QpProblem, mut w: W) -> io::Result<()> {
    let st = problem.stacked();
    writeln!(w, "# drscc qp triplets v1")?;
    write_matrix(&mut w, "P", &problem.hessian)?;
    write_vector(&mut w, "q", &problem.linear)?;
    write_matrix(&mut w, "A", &st.a)?;
    write_vector(&mut w, "l", &st.l)?;
    write_vector(&mut w, "u", &st.u)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corridor::BoxRegion;

    fn single_box() -> SafeCorridor {
        SafeCorridor::new(vec![BoxRegion::new(vec![-10.0, -10.0], vec![10.0, 10.0]).unwrap()]).unwrap()
    }

    #[test]
    fn gram_matches_closed_forms() {
        let g = bernstein_gram(1);
        assert!((g[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((g[(0, 1)] - 1.0 / 6.0).abs() < 1e-15);
        let total: f64 = bernstein_gram(5).iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn objective_vanishes_on_low_degree() {
        let q = assemble_objective(&[1.3, 0.7], 7, 4, 2).unwrap();
        let c = DVector::from_element(q.nrows(), 2.5);
        assert!(c.dot(&(&q * &c)).abs() < 1e-12 * q.amax() * c.norm_squared());
        let q2 = assemble_objective(&[2.0], 5, 2, 1).unwrap();
        let ramp = DVector::from_fn(6, |j, _| 1.0 + 0.4 * j as f64);
        assert!(ramp.dot(&(&q2 * &ramp)).abs() < 1e-10);
        assert!(matches!(assemble_objective(&[1.0], 6, 4, 1), Err(AssemblyError::DegreeTooLow { .. })));
    }

    #[test]
    fn objective_is_symmetric_psd() {
        let q = assemble_objective(&[0.4, 2.5], 7, 4, 1).unwrap();
        assert!((&q - q.transpose()).amax() < 1e-12 * q.amax());
        let eig = q.clone().symmetric_eigen().eigenvalues;
        assert!(eig.min() >= -1e-8 * q.amax());
    }

    #[test]
    fn linear_segment_pins_endpoints() {
        let path = InitialPath::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0.0, 1.0]);
        let spec = SnapSpec::at_rest(2, 1, 1);
        let qp = assemble_constraints(&single_box(), &path, &spec).unwrap();
        let a = &qp.problem.eq_matrix;
        assert_eq!(a.nrows(), 4);
        // Row per (dimension, endpoint) picks exactly one control point.
        assert_eq!(a.row(0).iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(a[(0, qp.var(0, 0, 0))], 1.0);
        assert_eq!(a[(1, qp.var(0, 0, 1))], 1.0);
        assert_eq!(qp.problem.eq_rhs[1], 1.0);
    }

    #[test]
    fn junction_rows_match_velocity() {
        let corridor = SafeCorridor::new(vec![
            BoxRegion::new(vec![-5.0], vec![5.0]).unwrap(),
            BoxRegion::new(vec![-5.0], vec![5.0]).unwrap(),
        ])
        .unwrap();
        let path = InitialPath::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.0, 1.0, 3.0]);
        let qp = assemble_constraints(&corridor, &path, &SnapSpec::at_rest(1, 3, 2)).unwrap();
        // Cubic on [0,1] and [1,3] joined with matching position and velocity.
        let c = DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0]);
        let jr: Vec<usize> = (0..qp.problem.eq_matrix.nrows())
            .filter(|&r| {
                let row = qp.problem.eq_matrix.row(r);
                row[3] != 0.0 && row[4] != 0.0 && row.iter().filter(|v| **v != 0.0).count() == 2
            })
            .collect();
        assert_eq!(jr.len(), 1);
        assert!((qp.problem.eq_matrix.row(jr[0]) * &c)[0].abs() < 1e-12);
        let vel_row = (0..qp.problem.eq_matrix.nrows())
            .find(|&r| qp.problem.eq_matrix[(r, 2)] != 0.0 && qp.problem.eq_matrix[(r, 5)] != 0.0)
            .unwrap();
        // Velocity 3(c3 − c2)/1 vs 3(c1' − c0')/2.
        assert!((qp.problem.eq_matrix[(vel_row, 2)] + 3.0).abs() < 1e-12);
        assert!((qp.problem.eq_matrix[(vel_row, 5)] + 1.5).abs() < 1e-12);
    }

    #[test]
    fn drops_duplicate_rows_and_flags_contradictions() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 1.0]);
        let kept = reduce_equalities(&a, &DVector::from_vec(vec![1.0, 2.0, 0.5]), RANK_TOL).unwrap();
        assert_eq!(kept.len(), 2);
        assert!(kept.contains(&2));
        let err = reduce_equalities(&a, &DVector::from_vec(vec![1.0, 3.0, 0.5]), RANK_TOL).unwrap_err();
        assert!(matches!(err, AssemblyError::InconsistentEqualities { .. }));
    }

    #[test]
    fn straight_line_plan() {
        let path = InitialPath::new(vec![vec![-4.0, 0.0], vec![4.0, 0.0]], vec![0.0, 4.0]);
        let plan = plan(&single_box(), &path, &SnapSpec::minimum_snap(2), PlanMode::Nominal, None, &SolverSettings::default())
            .unwrap();
        assert_eq!(plan.solution.status, Status::Optimal);
        // Min snap rest-to-rest on one segment is the degree-7 smoothstep; y stays at 0.
        let mid = plan.trajectory.segments()[0].evaluate(0.5).unwrap();
        assert!(mid[0].abs() < 1e-8 && mid[1].abs() < 1e-8);
        assert!(plan.max_box_violation <= 0.0);
        assert!(matches!(
            super::plan(&single_box(), &path, &SnapSpec::minimum_snap(2), PlanMode::Drscc, None, &SolverSettings::default()),
            Err(PlanError::MissingAmbiguity)
        ));
    }

    #[test]
    fn triplets_round_trip_counts() {
        let prob = QpProblem::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 0.0]))
            .with_bounds(DVector::from_element(2, 0.0), DVector::from_element(2, f64::INFINITY));
        let mut out = Vec::new();
        export_triplets(&prob, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "P");
        assert_eq!(lines[2], "2 2 2");
        assert!(text.contains("\nu\n2 1 2\n0 0 inf\n"));
    }
}
