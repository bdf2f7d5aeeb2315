use drscc_core::tightening::{eta_residual, lower_risk, solve_eta_star, tighten};
use drscc_core::{AmbiguitySpec, BoxRegion, Family, SafeCorridor, Scatter, UniformAmbiguity};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::Normal),
        (2.5f64..30.0).prop_map(|dof| Family::StudentT { dof }),
        Just(Family::Logistic),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eta_monotone_in_radius(f in family(), eps in 0.02f64..0.45, t1 in 0.0f64..0.2, dt in 0.0f64..0.2) {
        let a = solve_eta_star(f, eps, t1).unwrap();
        let b = solve_eta_star(f, eps, t1 + dt).unwrap();
        prop_assert!(b >= a - 1e-9);
    }

    #[test]
    fn eta_decreasing_in_risk(f in family(), e1 in 0.02f64..0.3, de in 0.0f64..0.15, theta in 0.0f64..0.2) {
        let a = solve_eta_star(f, e1, theta).unwrap();
        let b = solve_eta_star(f, e1 + de, theta).unwrap();
        prop_assert!(b <= a + 1e-9);
    }

    #[test]
    fn root_sits_on_the_budget(f in family(), eps in 0.02f64..0.45, theta in 1e-3f64..0.2) {
        let eta = solve_eta_star(f, eps, theta).unwrap();
        prop_assert!(eta_residual(f, eps, theta, eta).unwrap() >= -1e-9);
        prop_assert!(eta_residual(f, eps, theta, eta - 1e-8).unwrap() <= 1e-9);
        prop_assert!(lower_risk(f, eps, theta).unwrap() <= eps);
    }

    #[test]
    fn margin_scales_with_root_sigma(f in family(), sigma in 0.1f64..9.0, eps in 0.05f64..0.4, theta in 0.0f64..0.1) {
        let c = SafeCorridor::new(vec![BoxRegion::new(vec![-100.0, -100.0], vec![100.0, 100.0]).unwrap()]).unwrap();
        let u = UniformAmbiguity { family: f, scatter: Scatter::Isotropic(sigma), radius: theta, risk: eps };
        let t = tighten(&c, &AmbiguitySpec::broadcast(&c, &u).unwrap()).unwrap();
        let want = sigma.sqrt() * solve_eta_star(f, eps, theta).unwrap();
        let r = &t.regions()[0];
        prop_assert!((r.lower[0] + 100.0 - want).abs() < 1e-9 * want.max(1.0));
        prop_assert!((100.0 - r.upper[1] - want).abs() < 1e-9 * want.max(1.0));
    }
}

#[test]
fn normal_theta_zero_matches_table_quantile() {
    // Φ⁻¹(0.95) = 1.6448536269514722
    let eta = solve_eta_star(Family::Normal, 0.05, 0.0).unwrap();
    assert!((eta - 1.6448536269514722).abs() < 1e-12);
}
