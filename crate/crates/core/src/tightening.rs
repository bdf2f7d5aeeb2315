//! Deterministic tightening of corridor bounds under Wasserstein ambiguity.
//!
//! Each corridor face (region `i`, side lower/upper) carries an elliptical
//! reference distribution, a Wasserstein radius `θ` (Mahalanobis ground
//! metric) and a risk level `ε ∈ (0, 1/2)`. The distributionally robust chance
//! constraint on a control point reduces to a single chance constraint under
//! the reference with the stricter level `ε̲ = 1 − Φ(η*)`, where `η*` is the
//! smallest `η ≥ Φ⁻¹(1−ε)` with
//!
//! ```text
//! η·(Φ(η) − (1−ε)) − κ(Φ⁻¹(1−ε), η) ≥ θ.
//! ```
//!
//! The resulting bound is `eᵀμ ± sqrt(eᵀΣe)·Φ⁻¹(1−ε̲) = eᵀμ ± sqrt(eᵀΣe)·η*`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::corridor::{SafeCorridor, CONTAINMENT_TOL};
use crate::elliptical::{kappa, DistributionError, EllipticalRef, Family};

/// Bracket growth gives up beyond this η.
pub const ETA_LIMIT: f64 = 1e6;
/// Bisection stops once the bracket is narrower than this.
pub const ETA_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TighteningError {
    #[error("risk level must lie in (0, 0.5), got {0}")]
    BadRisk(f64),
    #[error("Wasserstein radius must be finite and nonnegative, got {0}")]
    BadRadius(f64),
    #[error("radius too large for family tails: no η below {ETA_LIMIT} satisfies the constraint (family {family}, ε = {risk}, θ = {radius})")]
    RadiusTooLarge { family: &'static str, risk: f64, radius: f64 },
    #[error("ambiguity spec covers {spec} regions but the corridor has {corridor}")]
    RegionCount { spec: usize, corridor: usize },
    #[error("reference distribution for region {region} is {found}-D, corridor is {expected}-D")]
    Dimension { region: usize, expected: usize, found: usize },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("{0}")]
    Infeasible(InfeasibilityReport),
}

fn check_risk(risk: f64) -> Result<(), TighteningError> {
    if risk > 0.0 && risk < 0.5 {
        Ok(())
    } else {
        Err(TighteningError::BadRisk(risk))
    }
}

fn check_radius(radius: f64) -> Result<(), TighteningError> {
    if radius >= 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(TighteningError::BadRadius(radius))
    }
}

/// `ψ(η) = η·(Φ(η) − (1−ε)) − κ(a, η) − θ` with `a = Φ⁻¹(1−ε)`.
pub fn eta_residual(family: Family, risk: f64, radius: f64, eta: f64) -> Result<f64, TighteningError> {
    let a = family.quantile(1.0 - risk)?;
    Ok(residual(family, risk, radius, a, eta)?)
}

fn residual(family: Family, risk: f64, radius: f64, a: f64, eta: f64) -> Result<f64, DistributionError> {
    // Φ(η) − (1−ε) written as ε − sf(η) to keep precision in the tail.
    Ok(eta * (risk - family.sf(eta)) - kappa(family, a, eta)? - radius)
}

/// Smallest `η ≥ Φ⁻¹(1−ε)` meeting the Wasserstein budget `θ`.
pub fn solve_eta_star(family: Family, risk: f64, radius: f64) -> Result<f64, TighteningError> {
    family.validate()?;
    check_risk(risk)?;
    check_radius(radius)?;
    let a = family.quantile(1.0 - risk)?;
    if radius == 0.0 {
        return Ok(a);
    }
    let too_large = || TighteningError::RadiusTooLarge { family: family.name(), risk, radius };

    let mut lo = a;
    let mut step = 1.0;
    let mut hi = a + step;
    while residual(family, risk, radius, a, hi)? <= 0.0 {
        lo = hi;
        step *= 2.0;
        hi = a + step;
        if hi > ETA_LIMIT {
            return Err(too_large());
        }
    }
    while hi - lo >= ETA_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(family, risk, radius, a, mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `ε̲ = 1 − Φ(η*)`.
pub fn lower_risk(family: Family, risk: f64, radius: f64) -> Result<f64, TighteningError> {
    let eta = solve_eta_star(family, risk, radius)?;
    Ok(family.sf(eta))
}

/// Ambiguity description of one corridor face.
#[derive(Debug, Clone, PartialEq)]
pub struct SideAmbiguity {
    pub reference: EllipticalRef,
    pub radius: f64,
    pub risk: f64,
}

impl SideAmbiguity {
    pub fn new(reference: EllipticalRef, radius: f64, risk: f64) -> Result<Self, TighteningError> {
        check_risk(risk)?;
        check_radius(radius)?;
        Ok(Self { reference, radius, risk })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionAmbiguity {
    pub lower: SideAmbiguity,
    pub upper: SideAmbiguity,
}

/// Which face of a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Lower,
    Upper,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
        })
    }
}

/// Scatter of a broadcast reference distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Scatter {
    /// `σ·I`
    Isotropic(f64),
    Full(DMatrix<f64>),
}

impl Scatter {
    pub fn matrix(&self, dim: usize) -> DMatrix<f64> {
        match self {
            Scatter::Isotropic(s) => DMatrix::identity(dim, dim) * *s,
            Scatter::Full(m) => m.clone(),
        }
    }
}

/// One `(family, scatter, θ, ε)` applied to every face of every region.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformAmbiguity {
    pub family: Family,
    pub scatter: Scatter,
    pub radius: f64,
    pub risk: f64,
}

/// Per-region, per-side ambiguity.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySpec {
    regions: Vec<RegionAmbiguity>,
}

impl AmbiguitySpec {
    pub fn new(regions: Vec<RegionAmbiguity>) -> Self {
        Self { regions }
    }

    /// References centered on the nominal corners of `corridor`.
    pub fn broadcast(corridor: &SafeCorridor, uniform: &UniformAmbiguity) -> Result<Self, TighteningError> {
        let dim = corridor.dim();
        let scatter = uniform.scatter.matrix(dim);
        let side = |corner: &[f64]| -> Result<SideAmbiguity, TighteningError> {
            let reference = EllipticalRef::new(
                DVector::from_column_slice(corner),
                scatter.clone(),
                uniform.family,
            )?;
            SideAmbiguity::new(reference, uniform.radius, uniform.risk)
        };
        let regions = corridor
            .regions()
            .iter()
            .map(|r| Ok(RegionAmbiguity { lower: side(r.lower())?, upper: side(r.upper())? }))
            .collect::<Result<Vec<_>, TighteningError>>()?;
        Ok(Self { regions })
    }

    pub fn regions(&self) -> &[RegionAmbiguity] {
        &self.regions
    }

    pub fn regions_mut(&mut self) -> &mut [RegionAmbiguity] {
        &mut self.regions
    }

    pub fn side_mut(&mut self, region: usize, side: Side) -> Option<&mut SideAmbiguity> {
        self.regions.get_mut(region).map(|r| match side {
            Side::Lower => &mut r.lower,
            Side::Upper => &mut r.upper,
        })
    }
}

/// Effective bounds of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct TightenedRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower_eta: f64,
    pub upper_eta: f64,
    /// `ε̲` of the lower face.
    pub lower_risk: f64,
    /// `ε̲` of the upper face.
    pub upper_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TightenedCorridor {
    regions: Vec<TightenedRegion>,
}

impl TightenedCorridor {
    pub fn regions(&self) -> &[TightenedRegion] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// A dimension in which tightened bounds cross.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossedBounds {
    pub region: usize,
    pub dim: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityReport {
    pub crossed: Vec<CrossedBounds>,
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tightened corridor infeasible:")?;
        for c in &self.crossed {
            write!(
                f,
                " region {} dimension {} (lower {:.6} > upper {:.6});",
                c.region + 1,
                c.dim + 1,
                c.lower,
                c.upper
            )?;
        }
        Ok(())
    }
}

/// Tightens every region of `corridor` according to `spec`.
///
/// Returns [`TighteningError::Infeasible`] naming every crossed
/// `(region, dimension)` pair instead of relaxing anything.
pub fn tighten(corridor: &SafeCorridor, spec: &AmbiguitySpec) -> Result<TightenedCorridor, TighteningError> {
    if spec.regions.len() != corridor.len() {
        return Err(TighteningError::RegionCount { spec: spec.regions.len(), corridor: corridor.len() });
    }
    let dim = corridor.dim();
    let mut cache: Vec<((Family, f64, f64), f64)> = Vec::new();
    let mut eta_for = |side: &SideAmbiguity| -> Result<f64, TighteningError> {
        let key = (side.reference.family(), side.risk, side.radius);
        if let Some((_, eta)) = cache.iter().find(|(k, _)| *k == key) {
            return Ok(*eta);
        }
        let eta = solve_eta_star(key.0, key.1, key.2)?;
        cache.push((key, eta));
        Ok(eta)
    };

    let mut regions = Vec::with_capacity(corridor.len());
    let mut crossed = Vec::new();
    for (region, amb) in spec.regions.iter().enumerate() {
        for side in [&amb.lower, &amb.upper] {
            if side.reference.dim() != dim {
                return Err(TighteningError::Dimension { region, expected: dim, found: side.reference.dim() });
            }
        }
        let lower_eta = eta_for(&amb.lower)?;
        let upper_eta = eta_for(&amb.upper)?;
        let mut lower = Vec::with_capacity(dim);
        let mut upper = Vec::with_capacity(dim);
        for mu in 0..dim {
            let lo = amb.lower.reference.axis_marginal(mu);
            let hi = amb.upper.reference.axis_marginal(mu);
            lower.push(lo.location + lo.scale * lower_eta);
            upper.push(hi.location - hi.scale * upper_eta);
            if lower[mu] > upper[mu] {
                crossed.push(CrossedBounds { region, dim: mu, lower: lower[mu], upper: upper[mu] });
            }
        }
        regions.push(TightenedRegion {
            lower,
            upper,
            lower_eta,
            upper_eta,
            lower_risk: amb.lower.reference.family().sf(lower_eta),
            upper_risk: amb.upper.reference.family().sf(upper_eta),
        });
    }
    if !crossed.is_empty() {
        return Err(TighteningError::Infeasible(InfeasibilityReport { crossed }));
    }
    Ok(TightenedCorridor { regions })
}

/// Read access to per-region box bounds, nominal or tightened.
pub trait RegionBounds {
    fn region_count(&self) -> usize;
    fn dim(&self) -> usize;
    fn lower(&self, region: usize) -> &[f64];
    fn upper(&self, region: usize) -> &[f64];

    fn contains(&self, region: usize, p: &[f64], tol: f64) -> bool {
        let (lo, hi) = (self.lower(region), self.upper(region));
        p.iter().zip(lo.iter().zip(hi)).all(|(x, (l, u))| *x >= l - tol && *x <= u + tol)
    }
}

impl RegionBounds for SafeCorridor {
    fn region_count(&self) -> usize {
        self.len()
    }
    fn dim(&self) -> usize {
        SafeCorridor::dim(self)
    }
    fn lower(&self, region: usize) -> &[f64] {
        self.regions()[region].lower()
    }
    fn upper(&self, region: usize) -> &[f64] {
        self.regions()[region].upper()
    }
}

impl RegionBounds for TightenedCorridor {
    fn region_count(&self) -> usize {
        self.regions.len()
    }
    fn dim(&self) -> usize {
        self.regions[0].lower.len()
    }
    fn lower(&self, region: usize) -> &[f64] {
        &self.regions[region].lower
    }
    fn upper(&self, region: usize) -> &[f64] {
        &self.regions[region].upper
    }
}

/// Problems that make a (tightened) corridor unusable for planning even
/// though every region is nonempty.
#[derive(Debug, Clone, PartialEq)]
pub enum ConnectivityIssue {
    /// Consecutive regions no longer overlap.
    Disjoint { first: usize },
    /// Start or goal position is outside its region.
    EndpointOutside { region: usize, waypoint: usize },
}

impl fmt::Display for ConnectivityIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConnectivityIssue::Disjoint { first } => {
                write!(f, "tightened regions {},{} disjoint", first + 1, first + 2)
            }
            ConnectivityIssue::EndpointOutside { region, waypoint } => {
                write!(f, "waypoint {waypoint} outside tightened region {}", region + 1)
            }
        }
    }
}

/// Overlap of consecutive regions and containment of the pinned endpoints.
pub fn connectivity_issues<B: RegionBounds>(bounds: &B, start: &[f64], goal: &[f64]) -> Vec<ConnectivityIssue> {
    let n = bounds.region_count();
    let mut issues = Vec::new();
    for i in 0..n.saturating_sub(1) {
        let overlap = (0..bounds.dim()).all(|mu| {
            bounds.lower(i)[mu].max(bounds.lower(i + 1)[mu])
                <= bounds.upper(i)[mu].min(bounds.upper(i + 1)[mu]) + CONTAINMENT_TOL
        });
        if !overlap {
            issues.push(ConnectivityIssue::Disjoint { first: i });
        }
    }
    if !bounds.contains(0, start, CONTAINMENT_TOL) {
        issues.push(ConnectivityIssue::EndpointOutside { region: 0, waypoint: 0 });
    }
    if !bounds.contains(n - 1, goal, CONTAINMENT_TOL) {
        issues.push(ConnectivityIssue::EndpointOutside { region: n - 1, waypoint: n });
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corridor::BoxRegion;

    const FAMILIES: [Family; 3] = [Family::Normal, Family::StudentT { dof: 3.0 }, Family::Logistic];

    /// First point of a coarse-to-fine scan (finest step 1e-6) where the
    /// residual becomes nonnegative; κ from a closed-form antiderivative.
    fn grid_oracle(family: Family, risk: f64, radius: f64) -> f64 {
        let a = family.quantile(1.0 - risk).unwrap();
        let antider = |x: f64| -> f64 {
            match family {
                Family::Normal => -family.pdf(x),
                Family::StudentT { dof } => -(dof + x * x) / (dof - 1.0) * family.pdf(x),
                Family::Logistic => x * family.cdf(x) - (x.max(0.0) + (-x.abs()).exp().ln_1p()),
            }
        };
        let psi = |eta: f64| eta * (risk - family.sf(eta)) - (antider(eta) - antider(a)) - radius;
        let mut start = a;
        for step in [1e-2, 1e-4, 1e-6] {
            let mut x = start;
            while psi(x) < 0.0 {
                x += step;
            }
            start = (x - step).max(a);
        }
        let mut x = start;
        while psi(x) < 0.0 {
            x += 1e-6;
        }
        x
    }

    #[test]
    fn zero_radius_gives_quantile() {
        for f in FAMILIES {
            let eta = solve_eta_star(f, 0.1, 0.0).unwrap();
            assert_eq!(eta, f.quantile(0.9).unwrap());
            assert!((lower_risk(f, 0.1, 0.0).unwrap() - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_star_matches_grid_search() {
        let cases = [(Family::Normal, 0.1, 0.05), (Family::Logistic, 0.25, 0.1), (Family::Normal, 0.25, 0.1)];
        for (f, eps, theta) in cases {
            let eta = solve_eta_star(f, eps, theta).unwrap();
            let oracle = grid_oracle(f, eps, theta);
            assert!((eta - oracle).abs() < 1e-6, "{f:?} {eta} vs {oracle}");
            assert!(f.sf(eta) < eps);
            assert!((f.sf(eta) - f.sf(oracle)).abs() < 1e-6);
        }
    }

    #[test]
    fn lower_risk_monotone() {
        for f in FAMILIES {
            let mut prev = 0.5;
            for theta in [0.0, 0.01, 0.05, 0.1, 0.2] {
                let r = lower_risk(f, 0.15, theta).unwrap();
                assert!(r <= prev && r > 0.0);
                prev = r;
            }
            let mut prev = 0.0;
            for eps in [0.05, 0.1, 0.2, 0.3, 0.45] {
                let r = lower_risk(f, eps, 0.05).unwrap();
                assert!(r >= prev && r <= eps);
                prev = r;
            }
        }
    }

    #[test]
    fn residual_slope_matches_cdf_gap() {
        let mut state = 1u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for f in FAMILIES {
            let a = f.quantile(0.8).unwrap();
            for _ in 0..100 {
                let eta = a + 0.01 + 6.0 * next();
                let h = 1e-5;
                let slope = (eta_residual(f, 0.2, 0.1, eta + h).unwrap()
                    - eta_residual(f, 0.2, 0.1, eta - h).unwrap())
                    / (2.0 * h);
                assert!((slope - (f.cdf(eta) - 0.8)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(solve_eta_star(Family::Normal, 0.5, 0.1), Err(TighteningError::BadRisk(0.5)));
        assert_eq!(solve_eta_star(Family::Normal, 0.0, 0.1), Err(TighteningError::BadRisk(0.0)));
        assert_eq!(solve_eta_star(Family::Normal, 0.1, -1.0), Err(TighteningError::BadRadius(-1.0)));
        assert!(matches!(
            solve_eta_star(Family::StudentT { dof: 2.5 }, 0.01, 1e5),
            Err(TighteningError::RadiusTooLarge { .. })
        ));
    }

    fn square(lo: f64, hi: f64) -> BoxRegion {
        BoxRegion::new(vec![lo, lo], vec![hi, hi]).unwrap()
    }

    #[test]
    fn tighten_shrinks_by_scale_times_eta() {
        let corridor = SafeCorridor::new(vec![square(0.0, 20.0)]).unwrap();
        let uniform = UniformAmbiguity {
            family: Family::Normal,
            scatter: Scatter::Isotropic(2.0),
            radius: 0.05,
            risk: 0.1,
        };
        let spec = AmbiguitySpec::broadcast(&corridor, &uniform).unwrap();
        let t = tighten(&corridor, &spec).unwrap();
        let oracle = grid_oracle(Family::Normal, 0.1, 0.05);
        let shrink = 2f64.sqrt() * oracle;
        let r = &t.regions()[0];
        for mu in 0..2 {
            assert!((r.lower[mu] - shrink).abs() < 1e-5);
            assert!((r.upper[mu] - (20.0 - shrink)).abs() < 1e-5);
        }
        assert!((r.lower_risk - Family::Normal.sf(oracle)).abs() < 1e-6);
    }

    #[test]
    fn vanishing_ambiguity_recovers_nominal_bounds() {
        let corridor = SafeCorridor::new(vec![square(-1.0, 3.0)]).unwrap();
        let uniform = UniformAmbiguity {
            family: Family::Logistic,
            scatter: Scatter::Isotropic(1e-12),
            radius: 0.0,
            risk: 0.4999,
        };
        let t = tighten(&corridor, &AmbiguitySpec::broadcast(&corridor, &uniform).unwrap()).unwrap();
        let r = &t.regions()[0];
        for mu in 0..2 {
            assert!((r.lower[mu] + 1.0).abs() < 1e-9 && (r.upper[mu] - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn crossed_bounds_reported() {
        let corridor = SafeCorridor::new(vec![
            square(0.0, 10.0),
            BoxRegion::new(vec![5.0, 0.0], vec![5.1, 10.0]).unwrap(),
        ])
        .unwrap();
        // Normal with ε = 0.1, θ = 0: shrink = scale · 1.2816; pick scale for 0.5.
        let scale = 0.5 / Family::Normal.quantile(0.9).unwrap();
        let uniform = UniformAmbiguity {
            family: Family::Normal,
            scatter: Scatter::Isotropic(scale * scale),
            radius: 0.0,
            risk: 0.1,
        };
        let spec = AmbiguitySpec::broadcast(&corridor, &uniform).unwrap();
        match tighten(&corridor, &spec) {
            Err(TighteningError::Infeasible(report)) => {
                assert_eq!(report.crossed.len(), 1);
                assert_eq!((report.crossed[0].region, report.crossed[0].dim), (1, 0));
                assert!(report.to_string().contains("region 2 dimension 1"));
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn connectivity_detects_lost_overlap() {
        let corridor = SafeCorridor::new(vec![square(0.0, 10.0), square(9.0, 20.0)]).unwrap();
        let uniform = UniformAmbiguity {
            family: Family::Normal,
            scatter: Scatter::Isotropic(1.0),
            radius: 0.0,
            risk: 0.1,
        };
        let t = tighten(&corridor, &AmbiguitySpec::broadcast(&corridor, &uniform).unwrap()).unwrap();
        let issues = connectivity_issues(&t, &[0.5, 5.0], &[15.0, 15.0]);
        assert!(issues.contains(&ConnectivityIssue::Disjoint { first: 0 }));
        assert!(issues.contains(&ConnectivityIssue::EndpointOutside { region: 0, waypoint: 0 }));
        assert!(connectivity_issues(&corridor, &[0.5, 5.0], &[15.0, 15.0]).is_empty());
    }
}
