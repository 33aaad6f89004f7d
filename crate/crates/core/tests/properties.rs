use proptest::prelude::*;

use solenoid_tower::circle_map::{circle_dist, CircleMapParams};
use solenoid_tower::coupling::simulate_pair;
use solenoid_tower::stats::fit_power_law;
use solenoid_tower::tower::{invariant_density, step_density, tv_decay, FiniteTowerModel};

fn model_strategy() -> impl Strategy<Value = FiniteTowerModel> {
    prop::collection::vec((0.05f64..1.0, 1u32..8), 1..6).prop_map(|branches| {
        let (p, r): (Vec<f64>, Vec<u32>) = branches.into_iter().unzip();
        FiniteTowerModel::new(p, r).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_branch_inverts_the_map(gamma in 0.1f64..0.9, degree in 2u32..5, y in -0.5f64..0.5) {
        let f = CircleMapParams::new(gamma, degree).unwrap();
        for j in 1..=degree as usize {
            let x = f.inverse_branch(j, y).unwrap();
            prop_assert!(circle_dist(f.eval(x), y) < 1e-12);
            prop_assert_eq!(f.domain_of(x), j);
        }
    }

    #[test]
    fn map_is_expanding_away_from_zero(gamma in 0.1f64..0.9, x in -0.5f64..0.5) {
        let f = CircleMapParams::new(gamma, 2).unwrap();
        prop_assert!(f.deriv(x) >= 1.0);
    }

    #[test]
    fn push_forward_conserves_mass(model in model_strategy()) {
        let mut d = model.ground_density();
        for _ in 0..50 {
            d = step_density(&model, &d);
        }
        prop_assert!((model.mass(&d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_variation_is_nonincreasing(model in model_strategy()) {
        prop_assume!(model.gcd_r() == 1);
        let nu = invariant_density(&model).unwrap();
        let tv = tv_decay(&model, &model.ground_density(), &nu, 60);
        for w in tv.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-14);
        }
    }

    #[test]
    fn invariant_density_is_fixed(model in model_strategy()) {
        prop_assume!(model.gcd_r() == 1);
        let nu = invariant_density(&model).unwrap();
        let pushed = step_density(&model, &nu);
        for (a, b) in nu.values.iter().zip(&pushed.values) {
            prop_assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn coupling_times_respect_the_wait(model in model_strategy(), n0 in 1usize..4, seed in any::<u64>()) {
        let g = model.ground_density();
        let rec = match simulate_pair(&model, &g, &g, n0, 400, seed) {
            Ok(r) => r,
            Err(_) => return Ok(()),
        };
        let n0 = n0 as u64;
        prop_assert!(rec.taus.len() >= 2);
        prop_assert!(rec.taus[0] >= n0);
        for w in rec.taus.windows(2) {
            prop_assert!(w[1] >= w[0] + n0);
        }
        prop_assert!(rec.t >= 2 * n0);
        prop_assert!(rec.taus.contains(&rec.t) || rec.taus.len() == 12);
        prop_assert_eq!(rec.ts.first().copied(), Some(rec.t));
        for w in rec.ts.windows(2) {
            prop_assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn power_law_fit_recovers_exponent(s in -4.0f64..-0.2, c in 0.01f64..100.0) {
        let ns: Vec<f64> = (1..=64).map(|n| n as f64).collect();
        let v: Vec<f64> = ns.iter().map(|n| c * n.powf(s)).collect();
        let fit = fit_power_law(&ns, &v, (4.0, 64.0)).unwrap();
        prop_assert!((fit.slope - s).abs() < 1e-9);
        prop_assert!((fit.r2 - 1.0).abs() < 1e-9);
    }
}
