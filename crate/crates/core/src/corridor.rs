//! Safe corridors: overlapping axis-aligned boxes and the initial path through them.

use std::fmt;

use thiserror::Error;

/// Tolerance for closed-box containment and overlap tests.
pub const CONTAINMENT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorridorError {
    #[error("box bounds have different lengths ({lower} vs {upper})")]
    BoundLength { lower: usize, upper: usize },
    #[error("box is empty in dimension {dim}: lower {lower} >= upper {upper}")]
    EmptyBox { dim: usize, lower: f64, upper: f64 },
    #[error("corridor needs at least one region")]
    NoRegions,
    #[error("region {region} has dimension {found}, expected {expected}")]
    RegionDimension { region: usize, expected: usize, found: usize },
    #[error("dimension mismatch: corridor is {corridor}-D but path point {index} is {path}-D")]
    DimensionMismatch { corridor: usize, path: usize, index: usize },
    #[error("corridor has {regions} regions, so the path needs {expected} waypoints and times, got {waypoints} waypoints and {times} times")]
    CountMismatch { regions: usize, expected: usize, waypoints: usize, times: usize },
    #[error("v_max must be positive, got {0}")]
    BadSpeed(f64),
    #[error("at least two waypoints are needed")]
    TooFewWaypoints,
    #[error("segment {0} between coincident waypoints has zero duration")]
    DegenerateSegment(usize),
}

/// Closed axis-aligned box `lower ≤ p ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, CorridorError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(CorridorError::BoundLength { lower: lower.len(), upper: upper.len() });
        }
        for (dim, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !(l < u) {
                return Err(CorridorError::EmptyBox { dim, lower: l, upper: u });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *x >= l - tol && *x <= u + tol)
    }

    /// Closed intersection, or `None` when the boxes are disjoint beyond `tol`.
    pub fn intersection(&self, other: &BoxRegion, tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let lo: Vec<f64> = self.lower.iter().zip(&other.lower).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.upper.iter().zip(&other.upper).map(|(a, b)| a.min(*b)).collect();
        lo.iter().zip(&hi).all(|(l, h)| *l <= h + tol).then_some((lo, hi))
    }
}

/// Ordered union of boxes; consecutive boxes are expected to overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeCorridor {
    regions: Vec<BoxRegion>,
}

impl SafeCorridor {
    pub fn new(regions: Vec<BoxRegion>) -> Result<Self, CorridorError> {
        let first = regions.first().ok_or(CorridorError::NoRegions)?;
        let expected = first.dim();
        for (region, r) in regions.iter().enumerate() {
            if r.dim() != expected {
                return Err(CorridorError::RegionDimension { region, expected, found: r.dim() });
            }
        }
        Ok(Self { regions })
    }

    pub fn regions(&self) -> &[BoxRegion] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.regions[0].dim()
    }
}

/// Waypoints `p_0 … p_N` with arrival times `T_0 … T_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPath {
    pub waypoints: Vec<Vec<f64>>,
    pub arrival_times: Vec<f64>,
}

impl InitialPath {
    pub fn new(waypoints: Vec<Vec<f64>>, arrival_times: Vec<f64>) -> Self {
        Self { waypoints, arrival_times }
    }

    /// Path with times from [`allocate_times`].
    pub fn with_allocation(
        waypoints: Vec<Vec<f64>>,
        allocation: &TimeAllocation,
    ) -> Result<Self, CorridorError> {
        let arrival_times = allocate_times(&waypoints, allocation)?;
        Ok(Self { waypoints, arrival_times })
    }

    /// Segment durations `τ_i = T_i − T_{i−1}`.
    pub fn durations(&self) -> Vec<f64> {
        self.arrival_times.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// One violated corridor or path invariant. Region and waypoint numbers in
/// messages are 1-based for regions and 0-based for waypoints (`p_0 … p_N`).
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RegionsDisjoint { first: usize },
    TimesNotIncreasing { index: usize },
    StartOutside,
    EndOutside,
    WaypointOutsideOverlap { waypoint: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RegionsDisjoint { first } => {
                write!(f, "regions {},{} disjoint", first + 1, first + 2)
            }
            Violation::TimesNotIncreasing { index } => {
                write!(f, "arrival time {} not after time {}", index + 1, index)
            }
            Violation::StartOutside => write!(f, "waypoint 0 outside region 1"),
            Violation::EndOutside => write!(f, "final waypoint outside last region"),
            Violation::WaypointOutsideOverlap { waypoint } => {
                write!(f, "waypoint {waypoint} outside overlap")
            }
        }
    }
}

/// Checks every corridor/path invariant and lists the violated ones.
///
/// Structural problems (dimension or count mismatches) are errors, not
/// violations.
pub fn validate(corridor: &SafeCorridor, path: &InitialPath) -> Result<Vec<Violation>, CorridorError> {
    let n = corridor.len();
    if path.waypoints.len() != n + 1 || path.arrival_times.len() != n + 1 {
        return Err(CorridorError::CountMismatch {
            regions: n,
            expected: n + 1,
            waypoints: path.waypoints.len(),
            times: path.arrival_times.len(),
        });
    }
    for (index, p) in path.waypoints.iter().enumerate() {
        if p.len() != corridor.dim() {
            return Err(CorridorError::DimensionMismatch {
                corridor: corridor.dim(),
                path: p.len(),
                index,
            });
        }
    }

    let regions = corridor.regions();
    let mut report = Vec::new();
    for i in 0..n.saturating_sub(1) {
        if regions[i].intersection(&regions[i + 1], CONTAINMENT_TOL).is_none() {
            report.push(Violation::RegionsDisjoint { first: i });
        }
    }
    for (index, w) in path.arrival_times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            report.push(Violation::TimesNotIncreasing { index });
        }
    }
    if !regions[0].contains(&path.waypoints[0], CONTAINMENT_TOL) {
        report.push(Violation::StartOutside);
    }
    if !regions[n - 1].contains(&path.waypoints[n], CONTAINMENT_TOL) {
        report.push(Violation::EndOutside);
    }
    for waypoint in 1..n {
        let p = &path.waypoints[waypoint];
        let inside = regions[waypoint - 1].contains(p, CONTAINMENT_TOL)
            && regions[waypoint].contains(p, CONTAINMENT_TOL);
        if !inside {
            report.push(Violation::WaypointOutsideOverlap { waypoint });
        }
    }
    Ok(report)
}

/// How segment durations are derived from the waypoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AllocationMode {
    /// `τ_i = max(‖p_i − p_{i−1}‖ / v_max, τ_min)`.
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAllocation {
    pub v_max: f64,
    pub tau_min: f64,
    pub start_time: f64,
    pub mode: AllocationMode,
}

impl Default for TimeAllocation {
    fn default() -> Self {
        Self { v_max: 1.0, tau_min: 0.1, start_time: 0.0, mode: AllocationMode::Proportional }
    }
}

pub fn allocate_times(
    waypoints: &[Vec<f64>],
    allocation: &TimeAllocation,
) -> Result<Vec<f64>, CorridorError> {
    if !(allocation.v_max > 0.0) {
        return Err(CorridorError::BadSpeed(allocation.v_max));
    }
    if waypoints.len() < 2 {
        return Err(CorridorError::TooFewWaypoints);
    }
    let mut times = Vec::with_capacity(waypoints.len());
    times.push(allocation.start_time);
    for (i, pair) in waypoints.windows(2).enumerate() {
        let dist = pair[0]
            .iter()
            .zip(&pair[1])
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        let tau = match allocation.mode {
            AllocationMode::Proportional => (dist / allocation.v_max).max(allocation.tau_min),
        };
        if !(tau > 0.0) {
            return Err(CorridorError::DegenerateSegment(i));
        }
        times.push(times[i] + tau);
    }
    Ok(times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_pair() -> SafeCorridor {
        SafeCorridor::new(vec![
            BoxRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            BoxRegion::new(vec![0.5, 0.0], vec![1.5, 1.0]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn valid_overlap_gives_empty_report() {
        let path = InitialPath::new(
            vec![vec![0.2, 0.5], vec![0.75, 0.5], vec![1.4, 0.5]],
            vec![0.0, 1.0, 2.0],
        );
        assert!(validate(&unit_pair(), &path).unwrap().is_empty());
    }

    #[test]
    fn disjoint_regions_reported() {
        let c = SafeCorridor::new(vec![
            BoxRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            BoxRegion::new(vec![2.0, 2.0], vec![3.0, 3.0]).unwrap(),
        ])
        .unwrap();
        let path = InitialPath::new(
            vec![vec![0.5, 0.5], vec![1.0, 1.0], vec![2.5, 2.5]],
            vec![0.0, 1.0, 2.0],
        );
        let report = validate(&c, &path).unwrap();
        assert!(report.contains(&Violation::RegionsDisjoint { first: 0 }));
        assert_eq!(report[0].to_string(), "regions 1,2 disjoint");
    }

    #[test]
    fn waypoint_outside_overlap_reported() {
        let path = InitialPath::new(
            vec![vec![0.2, 0.5], vec![1.4, 0.5], vec![1.4, 0.5]],
            vec![0.0, 1.0, 2.0],
        );
        let report = validate(&unit_pair(), &path).unwrap();
        assert_eq!(report, vec![Violation::WaypointOutsideOverlap { waypoint: 1 }]);
        assert_eq!(report[0].to_string(), "waypoint 1 outside overlap");
    }

    #[test]
    fn touching_boxes_overlap() {
        let c = SafeCorridor::new(vec![
            BoxRegion::new(vec![0.0], vec![1.0]).unwrap(),
            BoxRegion::new(vec![1.0], vec![2.0]).unwrap(),
        ])
        .unwrap();
        let path = InitialPath::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.0, 1.0, 2.0]);
        assert!(validate(&c, &path).unwrap().is_empty());
    }

    #[test]
    fn structural_errors() {
        let path = InitialPath::new(vec![vec![0.2], vec![0.7], vec![1.2]], vec![0.0, 1.0, 2.0]);
        assert!(matches!(
            validate(&unit_pair(), &path),
            Err(CorridorError::DimensionMismatch { .. })
        ));
        let short = InitialPath::new(vec![vec![0.2, 0.5]], vec![0.0]);
        assert!(matches!(validate(&unit_pair(), &short), Err(CorridorError::CountMismatch { .. })));
        assert!(BoxRegion::new(vec![1.0], vec![1.0]).is_err());
        assert!(SafeCorridor::new(vec![]).is_err());
    }

    #[test]
    fn non_monotone_times_reported() {
        let path = InitialPath::new(
            vec![vec![0.2, 0.5], vec![0.75, 0.5], vec![1.4, 0.5]],
            vec![0.0, 1.0, 1.0],
        );
        assert_eq!(
            validate(&unit_pair(), &path).unwrap(),
            vec![Violation::TimesNotIncreasing { index: 1 }]
        );
    }

    #[test]
    fn allocation_examples() {
        let alloc = TimeAllocation { v_max: 1.0, ..Default::default() };
        let t = allocate_times(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]], &alloc).unwrap();
        assert_eq!(t, vec![0.0, 1.0, 2.0]);
        let t = allocate_times(&[vec![0.0, 0.0], vec![3.0, 4.0]], &alloc).unwrap();
        assert_eq!(t, vec![0.0, 5.0]);
        let zero = TimeAllocation { tau_min: 0.0, ..alloc };
        assert_eq!(
            allocate_times(&[vec![0.0, 0.0], vec![0.0, 0.0]], &zero),
            Err(CorridorError::DegenerateSegment(0))
        );
        let clamped = allocate_times(&[vec![0.0, 0.0], vec![0.0, 0.0]], &alloc).unwrap();
        assert_eq!(clamped, vec![0.0, 0.1]);
        assert!(allocate_times(&[vec![0.0]], &alloc).is_err());
        assert!(allocate_times(&[vec![0.0], vec![1.0]], &TimeAllocation { v_max: 0.0, ..alloc }).is_err());
    }

    proptest! {
        #[test]
        fn allocation_is_strictly_increasing(
            pts in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 2), 2..12),
            v_max in 0.1f64..10.0,
            tau_min in 0.01f64..1.0,
        ) {
            let alloc = TimeAllocation { v_max, tau_min, ..Default::default() };
            let t = allocate_times(&pts, &alloc).unwrap();
            prop_assert_eq!(t.len(), pts.len());
            prop_assert!(t.windows(2).all(|w| w[1] > w[0]));
        }

        #[test]
        fn validate_is_idempotent(shift in -2.0f64..2.0) {
            let path = InitialPath::new(
                vec![vec![0.2 + shift, 0.5], vec![0.75 + shift, 0.5], vec![1.4, 0.5]],
                vec![0.0, 1.0, 2.0],
            );
            let c = unit_pair();
            prop_assert_eq!(validate(&c, &path).unwrap(), validate(&c, &path).unwrap());
        }
    }
}
