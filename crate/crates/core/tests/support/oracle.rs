//! Independent oracles for solver and objective checks. Nothing here calls
//! into the solver or the objective assembly.
#![allow(dead_code)]

use drscc_core::bezier::BezierSegment;
use drscc_core::qp::QpProblem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub struct OracleResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub candidates: usize,
}

/// Exhaustive active-set enumeration for a strictly convex QP: every
/// inequality row is free, at its lower bound, or at its upper bound; each
/// combination is solved as an equality-constrained KKT system and kept when
/// it is primal feasible with correctly signed multipliers.
pub fn enumerate_active_sets(p: &QpProblem) -> Option<OracleResult> {
    let n = p.linear.len();
    // rows: (coefficients, lower, upper, is_equality)
    let mut rows: Vec<(DVector<f64>, f64, f64, bool)> = Vec::new();
    for r in 0..p.eq_matrix.nrows() {
        rows.push((p.eq_matrix.row(r).transpose(), p.eq_rhs[r], p.eq_rhs[r], true));
    }
    for r in 0..p.ineq_matrix.nrows() {
        rows.push((p.ineq_matrix.row(r).transpose(), p.ineq_lower[r], p.ineq_upper[r], false));
    }
    for j in 0..n {
        if p.var_lower[j].is_finite() || p.var_upper[j].is_finite() {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            rows.push((e, p.var_lower[j], p.var_upper[j], false));
        }
    }
    let free: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i].3).collect();
    let combos = 3usize.pow(free.len() as u32);
    let mut best: Option<OracleResult> = None;
    let mut candidates = 0;
    for code in 0..combos {
        // state per free row: 0 inactive, 1 lower, 2 upper
        let mut c = code;
        let mut state = vec![0u8; rows.len()];
        let mut skip = false;
        for &i in &free {
            state[i] = (c % 3) as u8;
            c /= 3;
            if (state[i] == 1 && !rows[i].1.is_finite()) || (state[i] == 2 && !rows[i].2.is_finite()) {
                skip = true;
            }
        }
        if skip {
            continue;
        }
        let act: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].3 || state[i] != 0).collect();
        let k = act.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.hessian);
        let mut rhs = DVector::zeros(n + k);
        for j in 0..n {
            rhs[j] = -p.linear[j];
        }
        for (r, &i) in act.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = rows[i].0[j];
                kkt[(j, n + r)] = rows[i].0[j];
            }
            rhs[n + r] = if state[i] == 1 || rows[i].3 { rows[i].1 } else { rows[i].2 };
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if sol.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let feasible = rows.iter().all(|(a, l, u, _)| {
            let v = a.dot(&x);
            v >= l - 1e-9 && v <= u + 1e-9
        });
        // Multiplier sign: Px + q + Σ y_i a_i = 0, y ≤ 0 at lower, y ≥ 0 at upper.
        let signs = act.iter().enumerate().all(|(r, &i)| match state[i] {
            1 if !rows[i].3 => sol[n + r] <= 1e-9,
            2 => sol[n + r] >= -1e-9,
            _ => true,
        });
        if feasible && signs {
            candidates += 1;
            let objective = 0.5 * x.dot(&(&p.hessian * &x)) + p.linear.dot(&x);
            if best.as_ref().is_none_or(|b| objective < b.objective) {
                best = Some(OracleResult { x, objective, candidates: 0 });
            }
        }
    }
    best.map(|mut b| {
        b.candidates = candidates;
        b
    })
}

/// Random strictly convex QP with at most `max_rows` enumerated rows,
/// feasible by construction around a hidden interior point.
pub fn random_qp<R: Rng>(rng: &mut R, n: usize, max_rows: usize) -> QpProblem {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let hessian = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
    let linear = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));

    let n_eq = rng.random_range(0..=2.min(n - 1));
    let eq = DMatrix::from_fn(n_eq, n, |_, _| rng.random_range(-1.0..1.0));
    let eq_rhs = &eq * &x0;

    let budget = rng.random_range(1..=max_rows);
    let n_bounds = rng.random_range(0..=budget.min(n));
    let n_ineq = budget - n_bounds;
    let ineq = DMatrix::from_fn(n_ineq, n, |_, _| rng.random_range(-1.0..1.0));
    let ax0 = &ineq * &x0;
    let mut lo = DVector::zeros(n_ineq);
    let mut hi = DVector::zeros(n_ineq);
    for r in 0..n_ineq {
        let one_sided = rng.random_bool(0.3);
        lo[r] = ax0[r] - rng.random_range(0.05..1.0);
        hi[r] = if one_sided { f64::INFINITY } else { ax0[r] + rng.random_range(0.05..1.0) };
    }
    let mut vlo = DVector::from_element(n, f64::NEG_INFINITY);
    let mut vhi = DVector::from_element(n, f64::INFINITY);
    let mut idx: Vec<usize> = (0..n).collect();
    for k in 0..n_bounds {
        let pick = rng.random_range(k..n);
        idx.swap(k, pick);
        let j = idx[k];
        vlo[j] = x0[j] - rng.random_range(0.05..1.0);
        vhi[j] = if rng.random_bool(0.2) { f64::INFINITY } else { x0[j] + rng.random_range(0.05..1.0) };
    }
    QpProblem::new(hessian, linear)
        .with_equalities(eq, eq_rhs)
        .with_inequalities(ineq, lo, hi)
        .with_bounds(vlo, vhi)
}

/// `∫₀^τ ‖d^k/ds^k B(s)‖² ds` by composite Simpson on the physical
/// derivative returned by the segment itself.
pub fn snap_integral(seg: &BezierSegment, order: usize, panels: usize) -> f64 {
    let panels = panels + panels % 2;
    let h = 1.0 / panels as f64;
    let f = |t: f64| seg.derivative(order, t).unwrap().norm_squared();
    let mut acc = f(0.0) + f(1.0);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0 * seg.duration()
}
