//! Monte Carlo checks of (E1), (E2) and (E4).
//!
//! Histories are binned by the cylinder of `xi_i` they start in. That
//! cylinder is fixed by the starting pair of cells and, for each
//! coordinate, the branches chosen at its ground arrivals strictly before
//! the last stopping time at which that coordinate fell.

use std::collections::HashMap;

use serde::Serialize;

use super::exact::{product_start, t_distribution};
use super::{simulate_batch, CouplingRecord};
use crate::error::{Error, Result};
use crate::tower::{hat_r_tail, invariant_density, DensityVector, FiniteTowerModel};

/// Bins with fewer samples are excluded.
pub const MIN_BIN: usize = 50;

#[derive(Clone, Debug, Serialize)]
pub struct BinSummary {
    pub i: usize,
    pub bins: usize,
    pub samples: usize,
    /// The extreme value over the bins of this depth.
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct E1E4Report {
    pub samples: usize,
    pub censored: usize,
    /// `min P{T = tau_i | Gamma}` over bins with `T > tau_{i-1}`.
    pub eps0_hat: f64,
    /// `max P{tau_{i+1} - tau_i > n0 + n | Gamma} / m{R-hat > n}`.
    pub k0_hat: f64,
    /// `max P{T_{i+1} - T_i > n} / (m x m){T > n}`.
    pub k2_hat: f64,
    pub e1: Vec<BinSummary>,
    pub e2: Vec<BinSummary>,
    pub e4: Vec<BinSummary>,
    /// Bins dropped for having fewer than [`MIN_BIN`] samples.
    pub excluded_e1: usize,
    pub excluded_e2: usize,
}

const SEP: u64 = u64::MAX;

/// Key of the `xi_i` cylinder containing the start of `rec`, if the
/// record reaches `tau_i`.
pub fn xi_key(rec: &CouplingRecord, i: usize) -> Option<Vec<u64>> {
    if rec.taus.len() < i {
        return None;
    }
    // tau_j with j odd concerns x, with j even x'.
    let last = |parity: usize| -> u64 {
        (1..=i)
            .rev()
            .find(|j| j % 2 == parity)
            .map_or(0, |j| rec.taus[j - 1])
    };
    let bounds = [last(1), last(0)];
    let mut key = vec![rec.start.0 as u64, rec.start.1 as u64];
    for c in 0..2 {
        key.push(SEP);
        key.extend(
            rec.landings[c]
                .iter()
                .take_while(|(t, _)| *t < bounds[c])
                .map(|&(_, b)| b as u64),
        );
    }
    Some(key)
}

/// Simulates `m` histories and measures the constants of (E1), (E2), (E4).
pub fn verify_e1_e4(
    model: &FiniteTowerModel,
    lambda: &DensityVector,
    lambda_prime: &DensityVector,
    n0: usize,
    m: usize,
    horizon: usize,
    seed: u64,
) -> Result<E1E4Report> {
    let records = simulate_batch(model, lambda, lambda_prime, n0, m, horizon, seed)?;
    let censored = records.iter().filter(|r| r.censored).count();
    let max_i = records.iter().map(|r| r.taus.len()).max().unwrap_or(0);

    // (E1)
    let mut e1 = Vec::new();
    let mut excluded_e1 = 0;
    let mut largest = 0;
    for i in 2..=max_i {
        let mut bins: HashMap<Vec<u64>, (usize, usize)> = HashMap::new();
        for r in &records {
            let Some(key) = xi_key(r, i) else { continue };
            if !r.censored && r.t <= r.taus[i - 2] {
                continue;
            }
            let e = bins.entry(key).or_default();
            e.0 += 1;
            if !r.censored && r.t == r.taus[i - 1] {
                e.1 += 1;
            }
        }
        let mut s = BinSummary {
            i,
            bins: 0,
            samples: 0,
            value: f64::INFINITY,
        };
        for (count, hits) in bins.values() {
            largest = largest.max(*count);
            if *count < MIN_BIN {
                excluded_e1 += 1;
                continue;
            }
            s.bins += 1;
            s.samples += count;
            s.value = s.value.min(*hits as f64 / *count as f64);
        }
        if s.bins > 0 {
            e1.push(s);
        }
    }
    if e1.is_empty() {
        return Err(Error::InsufficientSamples {
            count: largest,
            required: MIN_BIN,
        });
    }

    // (E2)
    let max_r = model.r().iter().copied().max().unwrap_or(1);
    let ref_tail: Vec<f64> = (0..max_r).map(|n| hat_r_tail(model, n)).collect();
    let mut e2 = Vec::new();
    let mut excluded_e2 = 0;
    for i in 0..max_i {
        let mut bins: HashMap<Vec<u64>, Vec<u64>> = HashMap::new();
        for r in &records {
            if r.taus.len() < i + 1 {
                continue;
            }
            let Some(key) = xi_key(r, i) else { continue };
            let prev = if i == 0 { 0 } else { r.taus[i - 1] };
            bins.entry(key)
                .or_default()
                .push(r.taus[i] - prev - n0 as u64);
        }
        let mut s = BinSummary {
            i,
            bins: 0,
            samples: 0,
            value: 0.0,
        };
        for gaps in bins.values() {
            if gaps.len() < MIN_BIN {
                excluded_e2 += 1;
                continue;
            }
            s.bins += 1;
            s.samples += gaps.len();
            for (n, &rt) in ref_tail.iter().enumerate() {
                let over = gaps.iter().filter(|&&g| g > n as u64).count();
                if over > 0 {
                    s.value = s.value.max(over as f64 / gaps.len() as f64 / rt);
                }
            }
        }
        if s.bins > 0 {
            e2.push(s);
        }
    }

    // (E4) against the exact (m x m){T > n}.
    let nu = invariant_density(model)?;
    let start = product_start(model, &nu, &nu)?;
    let reference = t_distribution(model, &start, n0, horizon)?.tail();
    let m_total = model.mean_return();
    let limit = horizon / 2;
    let mut e4 = Vec::new();
    let max_k = records.iter().map(|r| r.ts.len()).max().unwrap_or(0);
    for i in 0..max_k {
        // (gap, censored) per record with T_i known.
        let mut gaps = Vec::new();
        for r in &records {
            let ti = if i == 0 {
                0
            } else if r.ts.len() >= i {
                r.ts[i - 1]
            } else {
                continue;
            };
            // Later starts leave too little room before the horizon.
            if ti > limit as u64 {
                continue;
            }
            match r.ts.get(i) {
                Some(&next) => gaps.push((next - ti, false)),
                None => gaps.push((horizon as u64 - ti, true)),
            }
        }
        if gaps.len() < MIN_BIN {
            continue;
        }
        let mut s = BinSummary {
            i,
            bins: 1,
            samples: gaps.len(),
            value: 0.0,
        };
        for (n, &rf) in reference.iter().enumerate().take(limit + 1) {
            let mm = m_total * m_total * rf;
            if mm < 1e-12 {
                break;
            }
            let over = gaps.iter().filter(|&&(g, c)| c || g > n as u64).count();
            s.value = s.value.max(over as f64 / gaps.len() as f64 / mm);
        }
        e4.push(s);
    }

    let eps0_hat = e1.iter().map(|s| s.value).fold(f64::INFINITY, f64::min);
    let k0_hat = e2.iter().map(|s| s.value).fold(0.0, f64::max);
    let k2_hat = e4.iter().map(|s| s.value).fold(0.0, f64::max);
    Ok(E1E4Report {
        samples: records.len(),
        censored,
        eps0_hat,
        k0_hat,
        k2_hat,
        e1,
        e2,
        e4,
        excluded_e1,
        excluded_e2,
    })
}
