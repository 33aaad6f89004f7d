//! Coupling of two copies of a finite tower.
//!
//! A pair `(x, x')` evolves under `F x F`. The stopping times `tau_i` let
//! the two coordinates fall to the ground alternately, `n0` steps apart at
//! least; `T` is the first `tau_i` with `i >= 2` at which both sit on the
//! ground, and `T_n` restarts the construction from `(F x F)^{T_{n-1}}`.
//!
//! [`simulate_pair`] samples single histories, [`exact`] computes the
//! distributions of `T` and `T_i` by dynamic programming over the pair
//! chain, [`verify`] bins Monte Carlo histories by cylinder for the
//! estimates (E1), (E2), (E4), and [`extraction`] runs the density
//! extraction and assembles the (E3) bound.

use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::stream_seed;
use crate::tower::{DensityVector, FiniteTowerModel, TowerStateIndex};

pub mod exact;
pub mod extraction;
pub mod verify;

pub use exact::{ground_start, product_start, renewal_weights, t_distribution, TDistribution};
pub use extraction::{
    run_extraction, write_e3_csv, write_extraction_csv, E3Check, ExtractionCell, ExtractionOptions,
    ExtractionReport, ExtractionState,
};
pub use verify::{verify_e1_e4, BinSummary, E1E4Report};

/// A point of the product tower.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairState {
    pub s: TowerStateIndex,
    pub s_prime: TowerStateIndex,
}

/// How many stopping times are kept past `T`, for the gap statistics.
pub const TAU_RECORD: usize = 12;

/// One simulated pair history.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CouplingRecord {
    /// `tau_1 < tau_2 < ...`, at least up to `T` and up to [`TAU_RECORD`]
    /// entries when the horizon allows.
    pub taus: Vec<u64>,
    /// The simultaneous return time; the horizon when censored.
    pub t: u64,
    /// `T_1 < T_2 < ...` up to the horizon.
    pub ts: Vec<u64>,
    pub seed: u64,
    pub censored: bool,
    /// Flat cell indices of the starting pair.
    pub start: (usize, usize),
    /// Ground arrivals `(time, branch)` of each coordinate, while the
    /// stopping times are being recorded.
    pub landings: [Vec<(u64, u32)>; 2],
}

/// Samplers for the start and the ground redistribution.
pub(crate) struct PairSampler<'a> {
    model: &'a FiniteTowerModel,
    states: Vec<TowerStateIndex>,
    start: [WeightedIndex<f64>; 2],
    ground: WeightedIndex<f64>,
}

fn start_weights(model: &FiniteTowerModel, d: &DensityVector) -> Result<WeightedIndex<f64>> {
    if d.values.len() != model.cells() {
        return Err(Error::InvalidParameter(
            "density length does not match the tower".into(),
        ));
    }
    let masses = model.cell_masses();
    let w: Vec<f64> = d.values.iter().zip(&masses).map(|(v, m)| v * m).collect();
    WeightedIndex::new(&w).map_err(|e| Error::InvalidParameter(format!("start density: {e}")))
}

impl<'a> PairSampler<'a> {
    pub(crate) fn new(
        model: &'a FiniteTowerModel,
        lambda: &DensityVector,
        lambda_prime: &DensityVector,
    ) -> Result<Self> {
        let mut states = Vec::with_capacity(model.cells());
        for (branch, &r) in model.r().iter().enumerate() {
            for level in 0..r {
                states.push(TowerStateIndex { branch, level });
            }
        }
        Ok(Self {
            model,
            states,
            start: [
                start_weights(model, lambda)?,
                start_weights(model, lambda_prime)?,
            ],
            ground: WeightedIndex::new(model.p())
                .map_err(|e| Error::InvalidParameter(format!("branch masses: {e}")))?,
        })
    }

    pub(crate) fn sample(&self, n0: usize, horizon: usize, seed: u64) -> Result<CouplingRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = self.start[0].sample(&mut rng);
        let b = self.start[1].sample(&mut rng);
        let mut rec = run_pair(
            self.model,
            [self.states[a], self.states[b]],
            n0,
            horizon,
            |_, _| self.ground.sample(&mut rng) as u32,
        );
        rec.seed = seed;
        rec.start = (a, b);
        if rec.censored {
            Err(Error::HorizonExceeded {
                horizon,
                partial: Box::new(rec),
            })
        } else {
            Ok(rec)
        }
    }
}

/// Runs the pair chain from `start`, asking `choose(coord, time)` for the
/// branch of every ground arrival.
pub(crate) fn run_pair(
    model: &FiniteTowerModel,
    start: [TowerStateIndex; 2],
    n0: usize,
    horizon: usize,
    mut choose: impl FnMut(usize, u64) -> u32,
) -> CouplingRecord {
    let n0 = n0 as u64;
    let horizon = horizon as u64;
    let mut state = start;
    let mut rec = CouplingRecord {
        t: horizon,
        censored: true,
        ..Default::default()
    };

    // The tau sequence, never restarted.
    let mut tau_target = 0usize;
    let mut tau_wait = n0;
    // The cycle that produces T_1, T_2, ...
    let mut cyc_target = 0usize;
    let mut cyc_wait = n0;
    let mut cyc_count = 0usize;

    let mut time = 0u64;
    loop {
        let recording = rec.censored || rec.taus.len() < TAU_RECORD;
        if recording && tau_wait == 0 && state[tau_target].level == 0 {
            rec.taus.push(time);
            tau_target ^= 1;
            tau_wait = n0;
        }
        if cyc_wait == 0 && state[cyc_target].level == 0 {
            cyc_count += 1;
            if cyc_count >= 2 && state[cyc_target ^ 1].level == 0 {
                if rec.censored {
                    rec.t = time;
                    rec.censored = false;
                }
                rec.ts.push(time);
                cyc_target = 0;
                cyc_count = 0;
            } else {
                cyc_target ^= 1;
            }
            cyc_wait = n0;
        }
        if time == horizon {
            break;
        }
        let recording = rec.censored || rec.taus.len() < TAU_RECORD;
        for (c, s) in state.iter_mut().enumerate() {
            if s.level + 1 < model.r()[s.branch] {
                s.level += 1;
            } else {
                let b = choose(c, time + 1);
                if recording {
                    rec.landings[c].push((time + 1, b));
                }
                *s = TowerStateIndex {
                    branch: b as usize,
                    level: 0,
                };
            }
        }
        time += 1;
        tau_wait = tau_wait.saturating_sub(1);
        cyc_wait = cyc_wait.saturating_sub(1);
    }
    rec
}

/// Samples `(x, x') ~ lambda x lambda'` and runs the pair chain up to the
/// horizon. Fails with `HorizonExceeded` when `T` is not reached.
pub fn simulate_pair(
    model: &FiniteTowerModel,
    lambda: &DensityVector,
    lambda_prime: &DensityVector,
    n0: usize,
    horizon: usize,
    seed: u64,
) -> Result<CouplingRecord> {
    check_horizon(n0, horizon)?;
    PairSampler::new(model, lambda, lambda_prime)?.sample(n0, horizon, seed)
}

fn check_horizon(n0: usize, horizon: usize) -> Result<()> {
    if n0 == 0 {
        return Err(Error::InvalidParameter("n0 must be at least 1".into()));
    }
    if horizon < 2 * n0 {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} is below 2 n0 = {}",
            2 * n0
        )));
    }
    Ok(())
}

/// `m` independent histories; censored ones are kept with `censored` set.
pub fn simulate_batch(
    model: &FiniteTowerModel,
    lambda: &DensityVector,
    lambda_prime: &DensityVector,
    n0: usize,
    m: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<CouplingRecord>> {
    check_horizon(n0, horizon)?;
    let sampler = PairSampler::new(model, lambda, lambda_prime)?;
    (0..m as u64)
        .into_par_iter()
        .map(
            |k| match sampler.sample(n0, horizon, stream_seed(seed, k)) {
                Ok(r) => Ok(r),
                Err(Error::HorizonExceeded { partial, .. }) => Ok(*partial),
                Err(e) => Err(e),
            },
        )
        .collect()
}

/// Empirical `P{T > n}` with Wilson score bands.
#[derive(Clone, Debug, Serialize)]
pub struct TailEstimate {
    pub samples: usize,
    pub censored: usize,
    pub p_hat: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl TailEstimate {
    pub fn from_records(records: &[CouplingRecord], horizon: usize) -> Self {
        let mut hist = vec![0usize; horizon + 2];
        let mut censored = 0;
        for r in records {
            if r.censored {
                censored += 1;
                hist[horizon + 1] += 1;
            } else {
                hist[(r.t as usize).min(horizon + 1)] += 1;
            }
        }
        let m = records.len();
        let (mut p_hat, mut lo, mut hi) = (Vec::new(), Vec::new(), Vec::new());
        let mut exceed = m;
        for &h in hist.iter().take(horizon + 1) {
            exceed -= h;
            let (l, u) = wilson(exceed, m, 1.96);
            p_hat.push(exceed as f64 / m.max(1) as f64);
            lo.push(l);
            hi.push(u);
        }
        Self {
            samples: m,
            censored,
            p_hat,
            lo,
            hi,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "n,p_hat,lo,hi,censored")?;
        for n in 0..self.p_hat.len() {
            writeln!(
                w,
                "{n},{:.10e},{:.10e},{:.10e},{}",
                self.p_hat[n], self.lo[n], self.hi[n], self.censored
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let den = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / den;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Monte Carlo estimate of `P{T > n}` for `n = 0..=horizon`. Censored
/// histories count as exceeding every `n`.
pub fn estimate_t_tail(
    model: &FiniteTowerModel,
    lambda: &DensityVector,
    lambda_prime: &DensityVector,
    n0: usize,
    m: usize,
    horizon: usize,
    seed: u64,
) -> Result<TailEstimate> {
    if m < 1000 {
        return Err(Error::InvalidParameter(format!(
            "need at least 1000 samples, got {m}"
        )));
    }
    let records = simulate_batch(model, lambda, lambda_prime, n0, m, horizon, seed)?;
    Ok(TailEstimate::from_records(&records, horizon))
}

/// Probability of each cell under the measure with density `d`.
pub fn start_probabilities(model: &FiniteTowerModel, d: &DensityVector) -> Vec<f64> {
    let masses = model.cell_masses();
    d.values.iter().zip(&masses).map(|(v, m)| v * m).collect()
}

#[cfg(test)]
mod tests;
