use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tower::{find_n0_gamma0, invariant_density};

fn single() -> FiniteTowerModel {
    FiniteTowerModel::new(vec![1.0], vec![1]).unwrap()
}

fn ground(model: &FiniteTowerModel) -> DensityVector {
    model.ground_density()
}

#[test]
fn single_branch_hand_trace() {
    let m = single();
    let g = ground(&m);
    let rec = simulate_pair(&m, &g, &g, 1, 20, 7).unwrap();
    assert_eq!(rec.t, 2);
    assert_eq!(&rec.taus[..4], &[1, 2, 3, 4]);
    assert_eq!(rec.ts, vec![2, 4, 6, 8, 10, 12, 14, 16, 18, 20]);

    let d = t_distribution(&m, &ground_start(&m), 1, 10).unwrap();
    assert!((d.pmf[2] - 1.0).abs() < 1e-15);
    assert_eq!(d.beyond, 0.0);
}

#[test]
fn stopping_time_invariants() {
    let m = FiniteTowerModel::polynomial(8, 3.0).unwrap();
    let th = find_n0_gamma0(&m, 200).unwrap();
    let g = ground(&m);
    let nu = invariant_density(&m).unwrap();
    let recs = simulate_batch(&m, &g, &nu, th.n0, 3000, 2000, 11).unwrap();
    for r in &recs {
        assert!(!r.censored);
        assert!(r.t >= 2 * th.n0 as u64);
        for w in r.taus.windows(2) {
            assert!(w[1] - w[0] >= th.n0 as u64);
        }
        assert!(r.taus.contains(&r.t));
        assert_eq!(r.ts[0], r.t);
        for w in r.ts.windows(2) {
            assert!(w[1] - w[0] >= 2 * th.n0 as u64);
        }
    }
}

#[test]
fn horizon_exceeded_carries_partial_record() {
    let m = FiniteTowerModel::polynomial(8, 1.0).unwrap();
    let g = ground(&m);
    let mut seen = false;
    for seed in 0..200 {
        if let Err(Error::HorizonExceeded { horizon, partial }) =
            simulate_pair(&m, &g, &g, 1, 3, seed)
        {
            assert_eq!(horizon, 3);
            assert!(partial.censored);
            seen = true;
            break;
        }
    }
    assert!(seen);
    assert!(simulate_pair(&m, &g, &g, 2, 3, 0).is_err());
}

#[test]
fn stopping_times_depend_only_on_the_prefix() {
    let m = FiniteTowerModel::polynomial(6, 2.0).unwrap();
    let g = ground(&m);
    let nu = invariant_density(&m).unwrap();
    let sampler = PairSampler::new(&m, &g, &nu).unwrap();
    let mut states = Vec::new();
    for (branch, &r) in m.r().iter().enumerate() {
        for level in 0..r {
            states.push(TowerStateIndex { branch, level });
        }
    }
    let n0 = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..200 {
        let rec = match sampler.sample(n0, 4000, crate::stream_seed(1, k)) {
            Ok(r) => r,
            Err(_) => continue,
        };
        for i in 1..=rec.taus.len().min(6) {
            let key = verify::xi_key(&rec, i).unwrap();
            // Replay the choices that define the cylinder, then diverge.
            let mut replay: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
            let mut c = 0;
            for &v in &key[3..] {
                if v == u64::MAX {
                    c = 1;
                } else {
                    replay[c].push(v as u32);
                }
            }
            let mut used = [0usize; 2];
            let other = run_pair(
                &m,
                [states[rec.start.0], states[rec.start.1]],
                n0,
                4000,
                |c, _| {
                    used[c] += 1;
                    match replay[c].get(used[c] - 1) {
                        Some(&b) => b,
                        None => rng.random_range(0..6),
                    }
                },
            );
            assert_eq!(&other.taus[..i], &rec.taus[..i]);
            // {T = tau_{i-1}} is decided by the xi_i cylinder.
            if i >= 2 {
                let a = !rec.censored && rec.t == rec.taus[i - 2];
                let b = !other.censored && other.t == other.taus[i - 2];
                assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn exact_law_matches_simulation() {
    let m = FiniteTowerModel::polynomial(4, 2.0).unwrap();
    let g = ground(&m);
    let nu = invariant_density(&m).unwrap();
    let n0 = 2;
    let horizon = 400;
    let d = t_distribution(&m, &product_start(&m, &g, &nu).unwrap(), n0, horizon).unwrap();
    let total: f64 = d.pmf.iter().sum::<f64>() + d.beyond;
    assert!((total - 1.0).abs() < 1e-12);
    assert!(d.pmf[..2 * n0].iter().all(|&p| p == 0.0));
    let est = estimate_t_tail(&m, &g, &nu, n0, 20_000, horizon, 3).unwrap();
    let tail = d.tail();
    for n in [4, 6, 8, 12, 16, 24] {
        assert!(
            est.lo[n] - 0.01 <= tail[n] && tail[n] <= est.hi[n] + 0.01,
            "n={n}"
        );
    }
}

#[test]
fn tail_estimate_shape() {
    let m = FiniteTowerModel::polynomial(8, 3.0).unwrap();
    let g = ground(&m);
    let n0 = 3;
    let est = estimate_t_tail(&m, &g, &g, n0, 2000, 300, 9).unwrap();
    assert!(est.p_hat[..2 * n0].iter().all(|&p| p == 1.0));
    assert!(est.p_hat.windows(2).all(|w| w[1] <= w[0]));
    assert!(est.lo.iter().zip(&est.hi).all(|(l, h)| l <= h));
    assert!(estimate_t_tail(&m, &g, &g, n0, 10, 300, 9).is_err());
}

#[test]
fn wilson_interval() {
    let (l, h) = wilson(50, 100, 1.96);
    assert!((l - 0.4038).abs() < 1e-3 && (h - 0.5962).abs() < 1e-3);
    assert_eq!(wilson(0, 10, 1.96).0, 0.0);
    assert_eq!(wilson(10, 10, 1.96).1, 1.0);
}

#[test]
fn extraction_on_small_model() {
    let m = FiniteTowerModel::polynomial(4, 2.0).unwrap();
    let th = find_n0_gamma0(&m, 200).unwrap();
    let g = ground(&m);
    let nu = invariant_density(&m).unwrap();
    let opts = ExtractionOptions::new(th.n0, 300);
    let rep = run_extraction(&m, &g, &nu, &opts).unwrap();
    assert_eq!(rep.history.len(), 8);
    assert!(rep.max_matching_defect() < 1e-12);
    assert!(rep.max_ledger_error() < 1e-12);
    for s in &rep.history {
        assert!(s.sup_ratio < 1.0);
        assert!(s.cells.iter().all(|c| c.residual <= c.before));
    }
    assert!(rep.epsilon1_hat > 0.0 && rep.epsilon1_hat < 1.0);
    assert_eq!(rep.e3.violations, 0);
    assert_eq!(rep.e3.violations_fit, 0);
}

#[test]
fn extraction_halves_large_epsilon() {
    let m = FiniteTowerModel::polynomial(3, 2.0).unwrap();
    let g = ground(&m);
    let nu = invariant_density(&m).unwrap();
    let mut opts = ExtractionOptions::new(1, 60);
    opts.epsilon = 1.5;
    opts.i_max = 2;
    let rep = run_extraction(&m, &g, &nu, &opts).unwrap();
    assert_eq!(rep.epsilon, 0.75);
    opts.auto_halve = false;
    assert!(matches!(
        run_extraction(&m, &g, &nu, &opts),
        Err(Error::ExtractionNegative { .. })
    ));
    opts.epsilon = 0.1;
    opts.cell_budget = 10;
    assert!(matches!(
        run_extraction(&m, &g, &nu, &opts),
        Err(Error::CellBudgetExceeded { .. })
    ));
}

#[test]
fn identical_starts_have_zero_distance() {
    let m = FiniteTowerModel::polynomial(4, 2.0).unwrap();
    let nu = invariant_density(&m).unwrap();
    let rep = run_extraction(&m, &nu, &nu, &ExtractionOptions::new(1, 100)).unwrap();
    assert!(rep.e3.tv_exact.iter().all(|&v| v < 1e-12));
    assert!(rep.e3.bound.iter().all(|&v| v >= 0.0));
}

#[test]
fn e1_e4_on_single_branch() {
    let m = single();
    let g = ground(&m);
    let rep = verify_e1_e4(&m, &g, &g, 1, 1000, 40, 2).unwrap();
    assert_eq!(rep.eps0_hat, 1.0);
    assert_eq!(rep.censored, 0);
}

#[test]
fn e1_e4_on_polynomial_model() {
    let m = FiniteTowerModel::polynomial(8, 3.0).unwrap();
    let th = find_n0_gamma0(&m, 200).unwrap();
    let g = ground(&m);
    let nu = invariant_density(&m).unwrap();
    let rep = verify_e1_e4(&m, &g, &nu, th.n0, 20_000, 1000, 4).unwrap();
    assert!(rep.eps0_hat > 0.0);
    assert!(rep.k0_hat.is_finite() && rep.k0_hat > 0.0);
    assert!(rep.k2_hat.is_finite() && rep.k2_hat > 0.0);
}
