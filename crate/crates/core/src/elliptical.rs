//! Elliptical reference distributions.
//!
//! A reference distribution is described by a location vector, a symmetric
//! positive-definite *scatter* matrix and a generator family. Every
//! one-dimensional projection `eᵀx` is again elliptical with location `eᵀμ`,
//! scale `sqrt(eᵀΣe)` and the standardized law of the family:
//!
//! | family          | standardized CDF                      | variance of `eᵀx`        |
//! |-----------------|---------------------------------------|--------------------------|
//! | `Normal`        | `Φ(x)`                                | `eᵀΣe`                   |
//! | `StudentT(ν)`   | Student-t with `ν` degrees of freedom | `eᵀΣe · ν/(ν−2)`         |
//! | `Logistic`      | `1 / (1 + e^{−x})`                    | `eᵀΣe · π²/3`            |
//!
//! The scatter is therefore *not* the covariance for the t and logistic
//! families; configurations quote `σ` as a scatter parameter.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::{beta::beta_reg, erf::erfc_inv};
use thiserror::Error;

use crate::quadrature;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("Student-t degrees of freedom must exceed 2, got {0}")]
    BadDegreesOfFreedom(f64),
    #[error("probability {0} must lie strictly inside (0, 1)")]
    BadProbability(f64),
    #[error("integration bounds must satisfy 0 <= a <= b, got a = {a}, b = {b}")]
    BadBounds { a: f64, b: f64 },
    #[error("scatter matrix must be square and match the mean dimension {dim}")]
    ShapeMismatch { dim: usize },
    #[error("scatter matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("direction vector must be nonzero")]
    ZeroDirection,
    #[error("sample count must be at least 1")]
    EmptySample,
}

/// Generator family of an elliptical distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Normal,
    StudentT { dof: f64 },
    Logistic,
}

impl Family {
    pub fn validate(&self) -> Result<(), DistributionError> {
        match *self {
            Family::StudentT { dof } if !(dof > 2.0 && dof.is_finite()) => {
                Err(DistributionError::BadDegreesOfFreedom(dof))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::StudentT { .. } => "student_t",
            Family::Logistic => "logistic",
        }
    }

    /// Standardized density.
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Family::Normal => (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            Family::StudentT { dof } => {
                let ln_norm = libm::lgamma(0.5 * (dof + 1.0))
                    - libm::lgamma(0.5 * dof)
                    - 0.5 * (dof * PI).ln();
                (ln_norm - 0.5 * (dof + 1.0) * (x * x / dof).ln_1p()).exp()
            }
            Family::Logistic => {
                let e = (-x.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
        }
    }

    /// Standardized CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        if x > 0.0 {
            1.0 - self.sf(x)
        } else {
            self.sf(-x)
        }
    }

    /// Standardized survival function `1 − F(x)`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match *self {
            Family::Normal => 0.5 * libm::erfc(x / SQRT_2),
            Family::Logistic => 1.0 / (1.0 + x.exp()),
            Family::StudentT { dof } => {
                if x.is_infinite() {
                    return if x > 0.0 { 0.0 } else { 1.0 };
                }
                let x2 = x * x;
                let tail = if x2 < dof {
                    // I_{x²/(ν+x²)}(1/2, ν/2) is well conditioned near the center.
                    0.5 - 0.5 * beta_reg(0.5, 0.5 * dof, x2 / (dof + x2))
                } else {
                    0.5 * beta_reg(0.5 * dof, 0.5, dof / (dof + x2))
                };
                if x >= 0.0 {
                    tail
                } else {
                    1.0 - tail
                }
            }
        }
    }

    /// Standardized quantile `F⁻¹(p)` for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64, DistributionError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(DistributionError::BadProbability(p));
        }
        Ok(if p < 0.5 {
            -self.upper_tail_quantile(p)
        } else if p > 0.5 {
            self.upper_tail_quantile(1.0 - p)
        } else {
            0.0
        })
    }

    /// Nonnegative `y` with `sf(y) = q`, for `q ∈ (0, 1/2]`.
    fn upper_tail_quantile(&self, q: f64) -> f64 {
        match *self {
            Family::Logistic => (-q).ln_1p() - q.ln(),
            Family::Normal => {
                let mut y = SQRT_2 * erfc_inv(2.0 * q);
                for _ in 0..2 {
                    let pdf = self.pdf(y);
                    if pdf <= 0.0 {
                        break;
                    }
                    y += (self.sf(y) - q) / pdf;
                }
                y.max(0.0)
            }
            Family::StudentT { .. } => self.solve_upper_tail(q),
        }
    }

    /// Safeguarded Newton iteration on `ln sf(y) = ln q`.
    fn solve_upper_tail(&self, q: f64) -> f64 {
        if q >= 0.5 {
            return 0.0;
        }
        let target = q.ln();
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while self.sf(hi) > q {
            lo = hi;
            hi *= 2.0;
        }
        let mut y = Family::Normal.upper_tail_quantile(q).clamp(lo, hi);
        for _ in 0..200 {
            let s = self.sf(y);
            if s > q {
                lo = y;
            } else {
                hi = y;
            }
            let g = s.ln() - target;
            let slope = -self.pdf(y) / s;
            let mut next = y - g / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - y).abs() <= 1e-15 * y.abs().max(1.0) || hi - lo <= 1e-15 * hi {
                return next;
            }
            y = next;
        }
        y
    }
}

/// Standardized density of `family` at `x`.
pub fn std_pdf(family: Family, x: f64) -> f64 {
    family.pdf(x)
}

/// Standardized CDF of `family` at `x`.
pub fn std_cdf(family: Family, x: f64) -> f64 {
    family.cdf(x)
}

/// Standardized quantile of `family` at probability `p`.
pub fn std_quantile(family: Family, p: f64) -> Result<f64, DistributionError> {
    family.quantile(p)
}

const KAPPA_TOL: f64 = 1e-10;

/// `κ = ∫_{a²/2}^{b²/2} k·g(z) dz`, evaluated as `∫_a^b x·f(x) dx` on the
/// standardized density (substitute `z = x²/2`).
pub fn kappa(family: Family, a: f64, b: f64) -> Result<f64, DistributionError> {
    if !(a >= 0.0 && b >= a) || !b.is_finite() {
        return Err(DistributionError::BadBounds { a, b });
    }
    if a == b {
        return Ok(0.0);
    }
    Ok(quadrature::integrate(|x| x * family.pdf(x), a, b, KAPPA_TOL))
}

/// One-dimensional projection of an [`EllipticalRef`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marginal {
    pub location: f64,
    pub scale: f64,
    pub family: Family,
}

impl Marginal {
    pub fn cdf(&self, x: f64) -> f64 {
        self.family.cdf((x - self.location) / self.scale)
    }
}

/// Elliptical distribution with location, scatter and generator family.
#[derive(Debug, Clone)]
pub struct EllipticalRef {
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    family: Family,
    // Lower Cholesky factor of the scatter.
    lower: DMatrix<f64>,
}

impl PartialEq for EllipticalRef {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.scatter == other.scatter && self.family == other.family
    }
}

impl EllipticalRef {
    pub fn new(
        mean: DVector<f64>,
        scatter: DMatrix<f64>,
        family: Family,
    ) -> Result<Self, DistributionError> {
        family.validate()?;
        let dim = mean.len();
        if scatter.nrows() != dim || scatter.ncols() != dim || dim == 0 {
            return Err(DistributionError::ShapeMismatch { dim });
        }
        let asym = (&scatter - scatter.transpose()).abs().max();
        if asym > 1e-12 * scatter.abs().max().max(1.0) || scatter.iter().any(|v| !v.is_finite()) {
            return Err(DistributionError::NotPositiveDefinite);
        }
        let lower = Cholesky::new(scatter.clone())
            .ok_or(DistributionError::NotPositiveDefinite)?
            .l();
        if lower.diagonal().iter().any(|d| *d <= 0.0) {
            return Err(DistributionError::NotPositiveDefinite);
        }
        Ok(Self { mean, scatter, family, lower })
    }

    /// Scatter `σ·I` around `mean`.
    pub fn isotropic(mean: DVector<f64>, sigma: f64, family: Family) -> Result<Self, DistributionError> {
        let dim = mean.len();
        Self::new(mean, DMatrix::identity(dim, dim) * sigma, family)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Projection onto `direction`.
    pub fn marginal(&self, direction: &DVector<f64>) -> Result<Marginal, DistributionError> {
        if direction.len() != self.dim() {
            return Err(DistributionError::ShapeMismatch { dim: self.dim() });
        }
        if direction.iter().all(|v| *v == 0.0) {
            return Err(DistributionError::ZeroDirection);
        }
        Ok(Marginal {
            location: direction.dot(&self.mean),
            scale: direction.dot(&(&self.scatter * direction)).sqrt(),
            family: self.family,
        })
    }

    /// Projection onto the `axis`-th standard basis vector.
    pub fn axis_marginal(&self, axis: usize) -> Marginal {
        Marginal {
            location: self.mean[axis],
            scale: self.scatter[(axis, axis)].sqrt(),
            family: self.family,
        }
    }

    /// Mahalanobis norm of `x` under this scatter.
    pub fn mahalanobis(&self, x: &DVector<f64>) -> f64 {
        let y = self
            .lower
            .solve_lower_triangular(x)
            .expect("Cholesky factor has a positive diagonal");
        y.norm()
    }

    /// `count` draws from a stream seeded with `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<DVector<f64>>, DistributionError> {
        if count == 0 {
            return Err(DistributionError::EmptySample);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count).map(|_| self.draw(&mut rng)).collect())
    }

    /// One draw using the caller's generator.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let dim = self.dim();
        let z = match self.family {
            Family::Logistic if dim == 1 => {
                let u: f64 = open_unit(rng);
                DVector::from_element(1, (u / (1.0 - u)).ln())
            }
            family => {
                let normal = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                normal * radial_mixing(family, rng)
            }
        };
        &self.mean + &self.lower * z
    }
}

/// Mahalanobis norm `sqrt(xᵀ Σ⁻¹ x)`.
pub fn mahalanobis(x: &DVector<f64>, scatter: &DMatrix<f64>) -> Result<f64, DistributionError> {
    let reference = EllipticalRef::new(DVector::zeros(x.len()), scatter.clone(), Family::Normal)?;
    Ok(reference.mahalanobis(x))
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Scale factor `w` such that `w·Z` (Z standard normal vector) has the
/// family's elliptical law: `1` for the normal, `sqrt(ν/χ²_ν)` for Student-t,
/// and `2K` with `K` Kolmogorov distributed for the logistic (the logistic is
/// a normal scale mixture, so every projection stays exactly logistic).
fn radial_mixing<R: Rng + ?Sized>(family: Family, rng: &mut R) -> f64 {
    match family {
        Family::Normal => 1.0,
        Family::StudentT { dof } => {
            let chi2: f64 = ChiSquared::new(dof).expect("validated dof").sample(rng);
            (dof / chi2).sqrt()
        }
        Family::Logistic => 2.0 * kolmogorov_quantile(open_unit(rng)),
    }
}

/// CDF of the Kolmogorov distribution (supremum of a Brownian bridge).
pub(crate) fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 1.18 {
        let w = -PI * PI / (8.0 * x * x);
        let mut s = 0.0;
        for k in 1..=8 {
            let odd = (2 * k - 1) as f64;
            s += (odd * odd * w).exp();
        }
        (2.0 * PI).sqrt() / x * s
    } else {
        let mut s = 0.0;
        for k in 1..=12 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            s += if k % 2 == 1 { term } else { -term };
        }
        1.0 - 2.0 * s
    }
}

fn kolmogorov_quantile(u: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 8.0_f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
