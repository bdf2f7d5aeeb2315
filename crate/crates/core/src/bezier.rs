//! Bernstein-basis polynomial segments.
//!
//! Every segment is parameterized on normalized time `t ∈ [0, 1]`; the
//! physical time of segment `i` is `T_{i-1} + τ_i·t`. Control points are
//! positions, so the curve lies in the convex hull of its control points and
//! the `l`-th physical derivative is the normalized derivative times `τ^{-l}`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Highest degree for which binomial coefficients are tabulated exactly.
pub const MAX_DEGREE: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BezierError {
    #[error("basis index {index} out of range for degree {degree}")]
    IndexOutOfRange { degree: usize, index: usize },
    #[error("degree {0} exceeds the supported maximum of {MAX_DEGREE}")]
    DegreeTooHigh(usize),
    #[error("normalized time {0} outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("derivative order {order} exceeds degree {degree}")]
    OrderTooHigh { degree: usize, order: usize },
    #[error("segment duration must be positive and finite, got {0}")]
    BadDuration(f64),
    #[error("segment needs at least one control point and one dimension")]
    EmptySegment,
    #[error("segments disagree on degree or dimension")]
    Mismatch,
    #[error("sample resolution must be at least 2, got {0}")]
    BadResolution(usize),
}

fn pascal() -> &'static Vec<Vec<u64>> {
    static TABLE: OnceLock<Vec<Vec<u64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut rows: Vec<Vec<u64>> = Vec::with_capacity(2 * MAX_DEGREE + 1);
        rows.push(vec![1]);
        // Gram matrices of degree-p bases need C(2p, ·).
        for n in 1..=2 * MAX_DEGREE {
            let prev = &rows[n - 1];
            let mut row = vec![1u64; n + 1];
            for j in 1..n {
                row[j] = prev[j - 1] + prev[j];
            }
            rows.push(row);
        }
        rows
    })
}

/// Binomial coefficient `C(n, j)` from the exact integer table.
pub fn binomial(n: usize, j: usize) -> f64 {
    assert!(n <= 2 * MAX_DEGREE && j <= n, "binomial({n}, {j}) outside table");
    pascal()[n][j] as f64
}

/// `n! / (n - l)!`, the falling factorial.
pub fn falling_factorial(n: usize, l: usize) -> f64 {
    ((n - l + 1)..=n).map(|v| v as f64).product()
}

/// Bernstein basis polynomial `b_n^j(t) = C(n,j) t^j (1-t)^{n-j}`.
pub fn basis(n: usize, j: usize, t: f64) -> Result<f64, BezierError> {
    if n > MAX_DEGREE {
        return Err(BezierError::DegreeTooHigh(n));
    }
    if j > n {
        return Err(BezierError::IndexOutOfRange { degree: n, index: j });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(BezierError::TimeOutOfRange(t));
    }
    Ok(basis_unchecked(n, j, t))
}

#[inline]
fn basis_unchecked(n: usize, j: usize, t: f64) -> f64 {
    binomial(n, j) * t.powi(j as i32) * (1.0 - t).powi((n - j) as i32)
}

/// All `n + 1` basis values at `t`.
fn basis_row(n: usize, t: f64) -> Vec<f64> {
    (0..=n).map(|j| basis_unchecked(n, j, t)).collect()
}

/// Matrix `D` with `a^{l} = D c`: row `j` holds `n!/(n-l)! · Δ^l` at offset `j`.
pub fn difference_matrix(n: usize, l: usize) -> Result<DMatrix<f64>, BezierError> {
    if l > n {
        return Err(BezierError::OrderTooHigh { degree: n, order: l });
    }
    if n > MAX_DEGREE {
        return Err(BezierError::DegreeTooHigh(n));
    }
    let scale = falling_factorial(n, l);
    let mut d = DMatrix::zeros(n - l + 1, n + 1);
    for j in 0..=(n - l) {
        for r in 0..=l {
            let sign = if (l - r) % 2 == 0 { 1.0 } else { -1.0 };
            d[(j, j + r)] = scale * sign * binomial(l, r);
        }
    }
    Ok(d)
}

/// One polynomial piece: `(n+1) × m` control points and a duration.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierSegment {
    control_points: DMatrix<f64>,
    duration: f64,
}

impl BezierSegment {
    pub fn new(control_points: DMatrix<f64>, duration: f64) -> Result<Self, BezierError> {
        if control_points.nrows() == 0 || control_points.ncols() == 0 {
            return Err(BezierError::EmptySegment);
        }
        if control_points.nrows() - 1 > MAX_DEGREE {
            return Err(BezierError::DegreeTooHigh(control_points.nrows() - 1));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(BezierError::BadDuration(duration));
        }
        Ok(Self { control_points, duration })
    }

    pub fn degree(&self) -> usize {
        self.control_points.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.control_points.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn control_points(&self) -> &DMatrix<f64> {
        &self.control_points
    }

    /// Position at normalized time `t`.
    pub fn evaluate(&self, t: f64) -> Result<DVector<f64>, BezierError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(BezierError::TimeOutOfRange(t));
        }
        Ok(eval_points(&self.control_points, t))
    }

    /// Control points of the `order`-th derivative with respect to normalized
    /// time. With `physical` set, they are rescaled by `τ^{-order}` so they
    /// describe the derivative with respect to wall-clock time.
    pub fn derivative_control_points(
        &self,
        order: usize,
        physical: bool,
    ) -> Result<DMatrix<f64>, BezierError> {
        let n = self.degree();
        let mut a = difference_matrix(n, order)? * &self.control_points;
        if physical {
            a *= self.duration.powi(-(order as i32));
        }
        Ok(a)
    }

    /// `order`-th physical derivative at normalized time `t`.
    pub fn derivative(&self, order: usize, t: f64) -> Result<DVector<f64>, BezierError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(BezierError::TimeOutOfRange(t));
        }
        let n = self.degree();
        if order > n {
            return Ok(DVector::zeros(self.dim()));
        }
        let a = self.derivative_control_points(order, true)?;
        Ok(eval_points(&a, t))
    }
}

fn eval_points(points: &DMatrix<f64>, t: f64) -> DVector<f64> {
    let n = points.nrows() - 1;
    let b = basis_row(n, t);
    let mut out = DVector::zeros(points.ncols());
    for (j, bj) in b.iter().enumerate() {
        for mu in 0..points.ncols() {
            out[mu] += bj * points[(j, mu)];
        }
    }
    out
}

/// A timed sample of the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub segment: usize,
    pub position: DVector<f64>,
}

/// Consecutive segments sharing degree and dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseBezier {
    segments: Vec<BezierSegment>,
    start_time: f64,
}

impl PiecewiseBezier {
    pub fn new(segments: Vec<BezierSegment>, start_time: f64) -> Result<Self, BezierError> {
        let first = segments.first().ok_or(BezierError::EmptySegment)?;
        let (n, m) = (first.degree(), first.dim());
        if segments.iter().any(|s| s.degree() != n || s.dim() != m) {
            return Err(BezierError::Mismatch);
        }
        Ok(Self { segments, start_time })
    }

    pub fn segments(&self) -> &[BezierSegment] {
        &self.segments
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn degree(&self) -> usize {
        self.segments[0].degree()
    }

    pub fn dim(&self) -> usize {
        self.segments[0].dim()
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.segments.iter().map(|s| s.duration).sum::<f64>()
    }

    /// Absolute start time of every segment.
    pub fn segment_start_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len());
        let mut t = self.start_time;
        for s in &self.segments {
            out.push(t);
            t += s.duration;
        }
        out
    }

    /// Uniform normalized times `0, 1/(r-1), …, 1` on every segment; shared
    /// junction instants appear once per adjacent segment.
    pub fn sample(&self, resolution: usize) -> Result<Vec<Sample>, BezierError> {
        self.sample_with(resolution, |seg, t| Ok(eval_points(&seg.control_points, t)))
    }

    /// Same grid as [`sample`](Self::sample) for the `order`-th physical derivative.
    pub fn sample_derivative(
        &self,
        order: usize,
        resolution: usize,
    ) -> Result<Vec<Sample>, BezierError> {
        self.sample_with(resolution, |seg, t| seg.derivative(order, t))
    }

    fn sample_with<F>(&self, resolution: usize, f: F) -> Result<Vec<Sample>, BezierError>
    where
        F: Fn(&BezierSegment, f64) -> Result<DVector<f64>, BezierError>,
    {
        if resolution < 2 {
            return Err(BezierError::BadResolution(resolution));
        }
        let starts = self.segment_start_times();
        let mut out = Vec::with_capacity(resolution * self.segments.len());
        for (i, seg) in self.segments.iter().enumerate() {
            for r in 0..resolution {
                let t = r as f64 / (resolution - 1) as f64;
                out.push(Sample {
                    time: starts[i] + seg.duration * t,
                    segment: i,
                    position: f(seg, t)?,
                });
            }
        }
        Ok(out)
    }
}
