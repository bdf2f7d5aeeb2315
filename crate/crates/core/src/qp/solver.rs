//! Dense convex QP solver.
//!
//! Problem form:
//!
//! ```text
//! minimize   ½ xᵀPx + qᵀx
//! subject to A_eq x = b_eq,   lo ≤ A_in x ≤ hi,   x_lo ≤ x ≤ x_hi
//! ```
//!
//! All constraints are stacked into `l ≤ Ax ≤ u` and handled by an
//! operator-splitting (ADMM) iteration on a Ruiz-equilibrated copy of the
//! problem. Once the iterate is close, the active set it implies is polished
//! with an equality-constrained KKT solve and corrected until the multipliers
//! have the right signs. Multipliers follow the convention
//! `Px + q + Aᵀy = 0` with `y ≥ 0` on upper-active rows and `y ≤ 0` on
//! lower-active rows.

use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("{what} has shape {found:?}, expected {expected:?}")]
    Shape { what: &'static str, expected: (usize, usize), found: (usize, usize) },
    #[error("problem data contains a NaN ({0})")]
    NotANumber(&'static str),
    #[error("Hessian is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("{what} row {row}: lower bound {lower} exceeds upper bound {upper}")]
    CrossedBounds { what: &'static str, row: usize, lower: f64, upper: f64 },
    #[error("problem has no variables")]
    Empty,
}

/// Convex QP in the form described in the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_lower: DVector<f64>,
    pub ineq_upper: DVector<f64>,
    pub var_lower: DVector<f64>,
    pub var_upper: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem; add constraints with the `with_*` methods.
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_lower: DVector::zeros(0),
            ineq_upper: DVector::zeros(0),
            var_lower: DVector::from_element(n, f64::NEG_INFINITY),
            var_upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.eq_matrix = a;
        self.eq_rhs = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.ineq_matrix = a;
        self.ineq_lower = lower;
        self.ineq_upper = upper;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.var_lower = lower;
        self.var_upper = upper;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    pub fn check(&self) -> Result<(), QpError> {
        let n = self.num_vars();
        if n == 0 {
            return Err(QpError::Empty);
        }
        let shape = |what, m: &DMatrix<f64>, expected: (usize, usize)| {
            if m.shape() == expected {
                Ok(())
            } else {
                Err(QpError::Shape { what, expected, found: m.shape() })
            }
        };
        let vshape = |what, v: &DVector<f64>, len: usize| {
            if v.len() == len {
                Ok(())
            } else {
                Err(QpError::Shape { what, expected: (len, 1), found: (v.len(), 1) })
            }
        };
        shape("hessian", &self.hessian, (n, n))?;
        shape("eq_matrix", &self.eq_matrix, (self.eq_rhs.len(), n))?;
        let mi = self.ineq_matrix.nrows();
        shape("ineq_matrix", &self.ineq_matrix, (mi, n))?;
        vshape("ineq_lower", &self.ineq_lower, mi)?;
        vshape("ineq_upper", &self.ineq_upper, mi)?;
        vshape("var_lower", &self.var_lower, n)?;
        vshape("var_upper", &self.var_upper, n)?;

        for (what, values) in [
            ("hessian", self.hessian.as_slice()),
            ("linear", self.linear.as_slice()),
            ("eq_matrix", self.eq_matrix.as_slice()),
            ("eq_rhs", self.eq_rhs.as_slice()),
            ("ineq_matrix", self.ineq_matrix.as_slice()),
            ("ineq_lower", self.ineq_lower.as_slice()),
            ("ineq_upper", self.ineq_upper.as_slice()),
            ("var_lower", self.var_lower.as_slice()),
            ("var_upper", self.var_upper.as_slice()),
        ] {
            if values.iter().any(|v| v.is_nan()) {
                return Err(QpError::NotANumber(what));
            }
        }

        let asym = (&self.hessian - self.hessian.transpose()).amax();
        if asym > 1e-9 * self.hessian.amax().max(1.0) {
            return Err(QpError::Asymmetric(asym));
        }
        for (what, lo, hi) in [
            ("inequality", &self.ineq_lower, &self.ineq_upper),
            ("variable bound", &self.var_lower, &self.var_upper),
        ] {
            for (row, (l, u)) in lo.iter().zip(hi.iter()).enumerate() {
                if l > u {
                    return Err(QpError::CrossedBounds { what, row, lower: *l, upper: *u });
                }
            }
        }
        Ok(())
    }

    /// All constraints as `l ≤ Ax ≤ u`. Variables without any finite bound
    /// get no row.
    pub fn stacked(&self) -> Stacked {
        let n = self.num_vars();
        let bounded: Vec<usize> = (0..n)
            .filter(|&j| self.var_lower[j].is_finite() || self.var_upper[j].is_finite())
            .collect();
        let me = self.eq_matrix.nrows();
        let mi = self.ineq_matrix.nrows();
        let m = me + mi + bounded.len();
        let mut a = DMatrix::zeros(m, n);
        let mut l = DVector::zeros(m);
        let mut u = DVector::zeros(m);
        let mut kinds = Vec::with_capacity(m);
        for r in 0..me {
            a.row_mut(r).copy_from(&self.eq_matrix.row(r));
            l[r] = self.eq_rhs[r];
            u[r] = self.eq_rhs[r];
            kinds.push(RowKind::Equality(r));
        }
        for r in 0..mi {
            a.row_mut(me + r).copy_from(&self.ineq_matrix.row(r));
            l[me + r] = self.ineq_lower[r];
            u[me + r] = self.ineq_upper[r];
            kinds.push(RowKind::Inequality(r));
        }
        for (k, &j) in bounded.iter().enumerate() {
            let r = me + mi + k;
            a[(r, j)] = 1.0;
            l[r] = self.var_lower[j];
            u[r] = self.var_upper[j];
            kinds.push(RowKind::Bound(j));
        }
        Stacked { a, l, u, kinds }
    }
}

/// Where a stacked row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    Equality(usize),
    Inequality(usize),
    Bound(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stacked {
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
    pub kinds: Vec<RowKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    MaxIter,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::MaxIter => "max_iter",
        }
    }
}

/// Absolute KKT errors in the original (unscaled) problem units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// `‖Px + q + Aᵀy‖∞`.
    pub stationarity: f64,
    /// Largest bound or equality violation.
    pub primal: f64,
    /// Largest `|y_i|·gap_i`; a multiplier on an infinite side counts as
    /// its own magnitude.
    pub complementarity: f64,
}

/// KKT residuals of `(x, y)` for the stacked constraints.
pub fn kkt_residuals(problem: &QpProblem, stacked: &Stacked, x: &DVector<f64>, y: &DVector<f64>) -> KktResiduals {
    let ax = &stacked.a * x;
    let grad = &problem.hessian * x + &problem.linear + stacked.a.tr_mul(y);
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for i in 0..ax.len() {
        let (l, u) = (stacked.l[i], stacked.u[i]);
        primal = primal.max(ax[i] - u).max(l - ax[i]);
        let pos = y[i].max(0.0);
        let neg = (-y[i]).max(0.0);
        let up = if u.is_finite() { pos * (u - ax[i]).abs() } else { pos };
        let down = if l.is_finite() { neg * (ax[i] - l).abs() } else { neg };
        comp = comp.max(up).max(down);
    }
    KktResiduals { stationarity: grad.amax(), primal: primal.max(0.0), complementarity: comp }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// ADMM absolute and relative residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation parameter in (0, 2).
    pub relaxation: f64,
    pub scaling_iters: usize,
    pub polish: bool,
    /// Iterations between residual, polish and infeasibility checks.
    pub check_every: usize,
    /// Iterations between step-size adaptations (0 disables).
    pub adapt_every: usize,
    /// Acceptance bound on stationarity and complementarity.
    pub kkt_tol: f64,
    /// Acceptance bound on constraint violation.
    pub feas_tol: f64,
    pub infeasibility_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            relaxation: 1.6,
            scaling_iters: 10,
            polish: true,
            check_every: 10,
            adapt_every: 50,
            kkt_tol: 1e-6,
            feas_tol: 1e-8,
            infeasibility_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: Status,
    pub x: DVector<f64>,
    pub objective: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub polished: bool,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    /// One entry per variable; zero for unbounded variables.
    pub bound_multipliers: DVector<f64>,
    /// Rows carried by the infeasibility certificate (empty unless infeasible).
    pub infeasible_rows: Vec<RowKind>,
    pub wall_time: Duration,
}

struct Scaled {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    d: DVector<f64>,
    e: DVector<f64>,
    cost: f64,
}

fn clamp_norm(v: f64) -> f64 {
    if v < 1e-4 {
        1.0
    } else {
        v.min(1e4)
    }
}

fn equilibrate(problem: &QpProblem, stacked: &Stacked, iters: usize) -> Scaled {
    let n = problem.num_vars();
    let m = stacked.a.nrows();
    let mut p = problem.hessian.clone();
    let mut q = problem.linear.clone();
    let mut a = stacked.a.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    for _ in 0..iters {
        let dd = DVector::from_fn(n, |j, _| {
            let col = p.column(j).amax().max(if m > 0 { a.column(j).amax() } else { 0.0 });
            1.0 / clamp_norm(col).sqrt()
        });
        let de = DVector::from_fn(m, |i, _| 1.0 / clamp_norm(a.row(i).amax()).sqrt());
        for j in 0..n {
            for i in 0..n {
                p[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                a[(i, j)] *= de[i] * dd[j];
            }
        }
        q.component_mul_assign(&dd);
        d.component_mul_assign(&dd);
        e.component_mul_assign(&de);
    }
    let mean_col = (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n as f64;
    let cost = 1.0 / clamp_norm(mean_col.max(q.amax()));
    p *= cost;
    q *= cost;
    let l = stacked.l.component_mul(&e);
    let u = stacked.u.component_mul(&e);
    Scaled { p, q, a, l, u, d, e, cost }
}

impl Scaled {
    fn unscale_x(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.d)
    }

    fn unscale_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.component_mul(&self.e) / self.cost
    }
}

fn step_sizes(l: &DVector<f64>, u: &DVector<f64>, rho: f64) -> DVector<f64> {
    DVector::from_fn(l.len(), |i, _| if l[i] == u[i] { 1e3 * rho } else { rho })
}

fn factor(s: &Scaled, rho: &DVector<f64>, sigma: f64) -> Cholesky<f64, nalgebra::Dyn> {
    let n = s.p.nrows();
    let mut k = s.p.clone() + DMatrix::identity(n, n) * sigma;
    let mut ra = s.a.clone();
    for i in 0..ra.nrows() {
        ra.row_mut(i).scale_mut(rho[i]);
    }
    k += s.a.tr_mul(&ra);
    Cholesky::new(k).expect("P + σI + AᵀRA is positive definite")
}

/// Solves `problem`. Malformed data is rejected before iterating.
pub fn solve(problem: &QpProblem, settings: &SolverSettings) -> Result<QpSolution, QpError> {
    problem.check()?;
    let started = Instant::now();
    let stacked = problem.stacked();
    let s = equilibrate(problem, &stacked, settings.scaling_iters);
    let n = problem.num_vars();
    let m = stacked.a.nrows();

    let mut rho_scalar = settings.rho;
    let mut rho = step_sizes(&s.l, &s.u, rho_scalar);
    let mut chol = factor(&s, &rho, settings.sigma);

    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(m);
    let mut y = DVector::zeros(m);
    let mut y_prev = y.clone();
    let alpha = settings.relaxation;

    let finish = |status, x: DVector<f64>, y: DVector<f64>, iterations, polished, rows: Vec<RowKind>| {
        let residuals = kkt_residuals(problem, &stacked, &x, &y);
        split(problem, &stacked, status, x, y, residuals, iterations, polished, rows, started.elapsed())
    };

    for iter in 1..=settings.max_iter.max(1) {
        y_prev.copy_from(&y);
        let mut rhs = &x * settings.sigma - &s.q;
        if m > 0 {
            rhs += s.a.tr_mul(&(rho.component_mul(&z) - &y));
        }
        let x_tilde = chol.solve(&rhs);
        let z_tilde = &s.a * &x_tilde;
        x = &x_tilde * alpha + &x * (1.0 - alpha);
        let z_relaxed = &z_tilde * alpha + &z * (1.0 - alpha);
        let z_next = DVector::from_fn(m, |i, _| (z_relaxed[i] + y[i] / rho[i]).clamp(s.l[i], s.u[i]));
        y += (&z_relaxed - &z_next).component_mul(&rho);
        z = z_next;

        if iter % settings.check_every.max(1) != 0 && iter != settings.max_iter {
            continue;
        }

        // Convergence in original units.
        let xo = s.unscale_x(&x);
        let yo = s.unscale_y(&y);
        let zo = z.component_div(&s.e);
        let axo = &stacked.a * &xo;
        let r_prim = (&axo - &zo).amax();
        let pxo = &problem.hessian * &xo;
        let aty = stacked.a.tr_mul(&yo);
        let r_dual = (&pxo + &problem.linear + &aty).amax();
        let eps_prim = settings.tol + settings.tol * axo.amax().max(zo.amax());
        let eps_dual = settings.tol + settings.tol * pxo.amax().max(aty.amax()).max(problem.linear.amax());
        let near = r_prim <= eps_prim.sqrt() && r_dual <= eps_dual.sqrt();

        if settings.polish && near {
            if let Some((xp, yp)) = polish(&s, &x, &z, &y) {
                let res = kkt_residuals(problem, &stacked, &xp, &yp);
                if accepts(&res, settings) {
                    return Ok(finish(Status::Optimal, xp, yp, iter, true, Vec::new()));
                }
            }
        }
        if r_prim <= eps_prim && r_dual <= eps_dual {
            let res = kkt_residuals(problem, &stacked, &xo, &yo);
            if accepts(&res, settings) {
                return Ok(finish(Status::Optimal, xo, yo, iter, false, Vec::new()));
            }
        }

        if let Some(rows) = infeasibility_certificate(&s, &(&y - &y_prev), settings.infeasibility_tol) {
            let kinds = rows.into_iter().map(|i| stacked.kinds[i]).collect();
            return Ok(finish(Status::Infeasible, xo, yo, iter, false, kinds));
        }

        if settings.adapt_every > 0 && iter % settings.adapt_every == 0 && m > 0 {
            let ax = &s.a * &x;
            let px = &s.p * &x;
            let aty_s = s.a.tr_mul(&y);
            let rp = (&ax - &z).amax() / ax.amax().max(z.amax()).max(1e-12);
            let rd = (&px + &s.q + &aty_s).amax() / px.amax().max(aty_s.amax()).max(s.q.amax()).max(1e-12);
            let proposal = (rho_scalar * (rp / rd.max(1e-30)).sqrt()).clamp(1e-6, 1e6);
            if proposal > 5.0 * rho_scalar || proposal < 0.2 * rho_scalar {
                rho_scalar = proposal;
                rho = step_sizes(&s.l, &s.u, rho_scalar);
                chol = factor(&s, &rho, settings.sigma);
            }
        }
    }
    let xo = s.unscale_x(&x);
    let yo = s.unscale_y(&y);
    Ok(finish(Status::MaxIter, xo, yo, settings.max_iter, false, Vec::new()))
}

fn accepts(res: &KktResiduals, settings: &SolverSettings) -> bool {
    res.primal <= settings.feas_tol && res.stationarity <= settings.kkt_tol && res.complementarity <= settings.kkt_tol
}

#[allow(clippy::too_many_arguments)]
fn split(
    problem: &QpProblem,
    stacked: &Stacked,
    status: Status,
    x: DVector<f64>,
    y: DVector<f64>,
    residuals: KktResiduals,
    iterations: usize,
    polished: bool,
    infeasible_rows: Vec<RowKind>,
    wall_time: Duration,
) -> QpSolution {
    let mut eq = DVector::zeros(problem.eq_matrix.nrows());
    let mut ineq = DVector::zeros(problem.ineq_matrix.nrows());
    let mut bound = DVector::zeros(problem.num_vars());
    for (i, kind) in stacked.kinds.iter().enumerate() {
        match *kind {
            RowKind::Equality(r) => eq[r] = y[i],
            RowKind::Inequality(r) => ineq[r] = y[i],
            RowKind::Bound(j) => bound[j] = y[i],
        }
    }
    QpSolution {
        status,
        objective: problem.objective(&x),
        x,
        residuals,
        iterations,
        polished,
        eq_multipliers: eq,
        ineq_multipliers: ineq,
        bound_multipliers: bound,
        infeasible_rows,
        wall_time,
    }
}

/// Primal infeasibility test on the dual step `δy` (scaled space).
fn infeasibility_certificate(s: &Scaled, dy: &DVector<f64>, tol: f64) -> Option<Vec<usize>> {
    let norm = dy.amax();
    if norm <= tol || s.a.nrows() == 0 {
        return None;
    }
    if s.a.tr_mul(dy).amax() > tol * norm {
        return None;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        let v = dy[i];
        if v > 0.0 {
            if s.u[i].is_finite() {
                support += s.u[i] * v;
            } else if v > tol * norm {
                return None;
            }
        } else if v < 0.0 {
            if s.l[i].is_finite() {
                support += s.l[i] * v;
            } else if -v > tol * norm {
                return None;
            }
        }
    }
    if support >= -tol * norm {
        return None;
    }
    Some((0..dy.len()).filter(|&i| dy[i].abs() > 1e-6 * norm).collect())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Active {
    Free,
    Lower,
    Upper,
    Fixed,
}

const POLISH_DELTA: f64 = 1e-9;
const POLISH_REFINE: usize = 5;
const POLISH_PASSES: usize = 50;

/// Guesses the active set from the ADMM iterate, solves the resulting
/// equality-constrained QP, and swaps rows in or out until the solution is
/// primal feasible with correctly signed multipliers. Returns unscaled
/// `(x, y)`.
fn polish(s: &Scaled, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let m = s.a.nrows();
    let mut active: Vec<Active> = (0..m)
        .map(|i| {
            if s.l[i] == s.u[i] {
                Active::Fixed
            } else if s.l[i].is_finite() && z[i] - s.l[i] < -y[i] {
                Active::Lower
            } else if s.u[i].is_finite() && s.u[i] - z[i] < y[i] {
                Active::Upper
            } else {
                Active::Free
            }
        })
        .collect();
    let scale_x = x.amax().max(1.0);
    let mut seen: Vec<Vec<Active>> = Vec::new();

    for _ in 0..POLISH_PASSES {
        if seen.contains(&active) {
            return None;
        }
        seen.push(active.clone());
        let (xp, yp) = solve_active(s, &active)?;
        let ax = &s.a * &xp;
        let feas = 1e-10 * scale_x.max(s.l.iter().chain(s.u.iter()).filter(|v| v.is_finite()).fold(1.0, |a: f64, v| a.max(v.abs())));
        let dual = 1e-10 * yp.amax().max(1.0);
        let mut changed = false;
        // Drop one wrong-signed multiplier at a time (the worst), add every violated row.
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..m {
            let bad = match active[i] {
                Active::Lower => yp[i],
                Active::Upper => -yp[i],
                _ => continue,
            };
            if bad > dual && worst.is_none_or(|(_, w)| bad > w) {
                worst = Some((i, bad));
            }
        }
        if let Some((i, _)) = worst {
            active[i] = Active::Free;
            changed = true;
        }
        for i in 0..m {
            if active[i] != Active::Free {
                continue;
            }
            if ax[i] > s.u[i] + feas {
                active[i] = Active::Upper;
                changed = true;
            } else if ax[i] < s.l[i] - feas {
                active[i] = Active::Lower;
                changed = true;
            }
        }
        if !changed {
            return Some((s.unscale_x(&xp), s.unscale_y(&yp)));
        }
    }
    None
}

/// Regularized KKT solve with iterative refinement against the exact system.
fn solve_active(s: &Scaled, active: &[Active]) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = s.p.nrows();
    let rows: Vec<usize> = (0..active.len()).filter(|&i| active[i] != Active::Free).collect();
    let k = rows.len();
    let dim = n + k;
    let mut exact = DMatrix::zeros(dim, dim);
    exact.view_mut((0, 0), (n, n)).copy_from(&s.p);
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&s.q));
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..n {
            exact[(n + r, j)] = s.a[(i, j)];
            exact[(j, n + r)] = s.a[(i, j)];
        }
        rhs[n + r] = match active[i] {
            Active::Lower => s.l[i],
            _ => s.u[i],
        };
    }
    let mut reg = exact.clone();
    for j in 0..n {
        reg[(j, j)] += POLISH_DELTA;
    }
    for r in 0..k {
        reg[(n + r, n + r)] -= POLISH_DELTA;
    }
    let lu = reg.lu();
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..POLISH_REFINE {
        let r = &rhs - &exact * &sol;
        sol += lu.solve(&r)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let mut y = DVector::zeros(active.len());
    for (r, &i) in rows.iter().enumerate() {
        y[i] = sol[n + r];
    }
    Some((x, y))
}
