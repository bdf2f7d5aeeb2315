//! Benchmark fixtures shared by the criterion targets.

use drscc_core::cases::ReferenceCase;
use drscc_core::{AmbiguitySpec, Family, Scatter, UniformAmbiguity};

/// Normal σ=2, θ=0.1, ε=0.1 on every face of `case`.
pub fn normal_ambiguity(case: &ReferenceCase) -> AmbiguitySpec {
    let u = UniformAmbiguity { family: Family::Normal, scatter: Scatter::Isotropic(2.0), radius: 0.1, risk: 0.1 };
    AmbiguitySpec::broadcast(&case.corridor, &u).expect("reference ambiguity")
}
