//! Repo-defined reference corridors for planning and benchmark runs.
//!
//! The boxes are sized so the strongest tightening of the benchmark grid
//! (about 4.1 units per face for the logistic reference at θ = 0.1, ε = 0.1)
//! still leaves every tightened region nonempty, consecutive tightened
//! regions overlapping, and the start/goal inside their tightened regions.
//! Intermediate waypoints sit at the centers of the overlaps.

use crate::corridor::{BoxRegion, CorridorError, InitialPath, SafeCorridor, TimeAllocation};

/// Cruise speed used for proportional time allocation in the reference cases.
pub const REFERENCE_SPEED: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCase {
    pub name: &'static str,
    pub corridor: SafeCorridor,
    pub waypoints: Vec<Vec<f64>>,
    pub allocation: TimeAllocation,
}

impl ReferenceCase {
    fn build(name: &'static str, boxes: &[(&[f64], &[f64])], start: &[f64], goal: &[f64]) -> Result<Self, CorridorError> {
        let regions = boxes
            .iter()
            .map(|(lo, hi)| BoxRegion::new(lo.to_vec(), hi.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let corridor = SafeCorridor::new(regions)?;
        let mut waypoints = vec![start.to_vec()];
        for pair in corridor.regions().windows(2) {
            let (lo, hi) = pair[0].intersection(&pair[1], 0.0).expect("reference boxes overlap");
            waypoints.push(lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect());
        }
        waypoints.push(goal.to_vec());
        let allocation = TimeAllocation { v_max: REFERENCE_SPEED, ..TimeAllocation::default() };
        Ok(Self { name, corridor, waypoints, allocation })
    }

    pub fn path(&self) -> InitialPath {
        InitialPath::with_allocation(self.waypoints.clone(), &self.allocation).expect("reference waypoints are distinct")
    }
}

/// Planar L-turn through three boxes.
pub fn case_one() -> ReferenceCase {
    ReferenceCase::build(
        "case1",
        &[
            (&[0.0, 0.0], &[40.0, 20.0]),
            (&[26.0, 0.0], &[46.0, 50.0]),
            (&[26.0, 36.0], &[80.0, 56.0]),
        ],
        &[8.0, 10.0],
        &[72.0, 46.0],
    )
    .expect("case1 geometry")
}

/// Planar zig-zag through five boxes.
pub fn case_two() -> ReferenceCase {
    ReferenceCase::build(
        "case2",
        &[
            (&[0.0, 0.0], &[30.0, 20.0]),
            (&[16.0, 0.0], &[36.0, 45.0]),
            (&[16.0, 30.0], &[66.0, 50.0]),
            (&[50.0, 5.0], &[70.0, 50.0]),
            (&[50.0, 5.0], &[100.0, 25.0]),
        ],
        &[6.0, 10.0],
        &[92.0, 15.0],
    )
    .expect("case2 geometry")
}

/// Climbing turn through four boxes in 3-D.
pub fn case_three() -> ReferenceCase {
    ReferenceCase::build(
        "case3",
        &[
            (&[0.0, 0.0, 0.0], &[30.0, 20.0, 20.0]),
            (&[16.0, 0.0, 0.0], &[36.0, 40.0, 20.0]),
            (&[16.0, 26.0, 0.0], &[36.0, 46.0, 50.0]),
            (&[16.0, 26.0, 34.0], &[70.0, 46.0, 54.0]),
        ],
        &[6.0, 10.0, 10.0],
        &[62.0, 36.0, 44.0],
    )
    .expect("case3 geometry")
}

pub fn reference_cases() -> Vec<ReferenceCase> {
    vec![case_one(), case_two(), case_three()]
}

pub fn by_name(name: &str) -> Option<ReferenceCase> {
    reference_cases().into_iter().find(|c| c.name == name)
}
