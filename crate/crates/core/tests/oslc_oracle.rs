mod common;

use common::grid::{grid_oracle, Instance, Spec, H};
use freqctl::oslc::{predicted_frequency, solve, verify_kkt};
use proptest::prelude::*;

fn grid_value(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo..hi).prop_map(|x| (x / H).round() * H)
}

fn spec() -> impl Strategy<Value = Spec> {
    (0.5..5.0f64, prop::option::of((-0.3..0.3f64, 0.05..1.0f64)), grid_value(-0.5, -0.05), grid_value(0.05, 0.5))
        .prop_map(|(alpha, kink, lower, upper)| Spec { alpha, kink, lower, upper })
}

fn instance() -> impl Strategy<Value = Instance> {
    (prop::collection::vec(spec(), 1..=3), prop::collection::vec(spec(), 0..=3), 0.1..2.0f64, -1000i64..=1000)
        .prop_map(|(generators, demands, damping, load)| Instance { generators, demands, damping, load })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn solve_matches_grid_search(inst in instance()) {
        let sol = solve(&inst.problem()).unwrap();
        let (p_m, d_c, d_u) = grid_oracle(&inst);
        for (a, b) in sol.p_m.iter().zip(&p_m) {
            prop_assert!((a - b).abs() <= 2e-3, "p_m {:?} vs grid {:?}", sol.p_m, p_m);
        }
        for (a, b) in sol.d_c.iter().zip(&d_c) {
            prop_assert!((a - b).abs() <= 2e-3, "d_c {:?} vs grid {:?}", sol.d_c, d_c);
        }
        prop_assert!((sol.d_u[0] - d_u).abs() <= 2e-3, "d_u {} vs grid {}", sol.d_u[0], d_u);
    }
}

proptest! {
    #[test]
    fn solution_balances_and_passes_kkt(inst in instance()) {
        let problem = inst.problem();
        let sol = solve(&problem).unwrap();
        let net: f64 = sol.p_m.iter().sum::<f64>() - sol.d_c.iter().sum::<f64>() - sol.d_u.iter().sum::<f64>();
        prop_assert!((net - problem.load_steps[0]).abs() < 1e-9);
        let kkt = verify_kkt(&problem, &sol, 1e-9);
        prop_assert!(kkt.passed(), "{kkt:?}");
    }

    #[test]
    fn frequency_falls_as_load_rises(inst in instance(), extra in 1i64..500) {
        let lighter = predicted_frequency(&inst.problem()).unwrap();
        let heavier = predicted_frequency(&Instance { load: inst.load + extra, ..inst.clone() }.problem()).unwrap();
        prop_assert!(heavier < lighter);
    }

    #[test]
    fn removing_demand_control_never_helps(mut inst in instance()) {
        // demand costs minimized at zero: kinks only on the positive side
        for d in &mut inst.demands {
            if let Some((k, _)) = &mut d.kink {
                *k = k.abs();
            }
        }
        let with = predicted_frequency(&inst.problem()).unwrap();
        let without = predicted_frequency(&Instance { demands: vec![], ..inst.clone() }.problem()).unwrap();
        prop_assert!(with.abs() <= without.abs() + 1e-12);
    }
}
