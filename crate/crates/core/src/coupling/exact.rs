//! Exact laws of `T` and `T_i` on a finite tower.
//!
//! The pair chain together with the phase of the stopping-time construction
//! (whose turn it is, how much of the `n0` wait is left, whether `tau_1` has
//! passed) is a finite Markov chain, so the law of `T` is obtained by
//! pushing a probability matrix over pairs of cells forward and absorbing
//! mass at the simultaneous returns. After `T` both coordinates have just
//! landed, on branches drawn from `p` independently, so the increments
//! `T_{i+1} - T_i` are i.i.d. with the law of `T` from the ground start.

use crate::error::{Error, Result};
use crate::tower::{DensityVector, FiniteTowerModel};

/// Law of `T` on `0..=horizon`, with the landing branches.
#[derive(Clone, Debug)]
pub struct TDistribution {
    pub pmf: Vec<f64>,
    /// `landing[t][j * N + j']`: mass absorbed at time `t` with the two
    /// coordinates landing on branches `j` and `j'`.
    pub landing: Vec<Vec<f64>>,
    /// `P{T > horizon}`.
    pub beyond: f64,
}

impl TDistribution {
    pub fn horizon(&self) -> usize {
        self.pmf.len() - 1
    }

    /// `P{T > n}` for `n = 0..=horizon`.
    pub fn tail(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.pmf.len()];
        let mut acc = self.beyond;
        for n in (0..self.pmf.len()).rev() {
            out[n] = acc;
            acc += self.pmf[n];
        }
        out
    }
}

/// Start matrix `P(x in a, x' in b)` for densities `lambda`, `lambda'`.
pub fn product_start(
    model: &FiniteTowerModel,
    lambda: &DensityVector,
    lambda_prime: &DensityVector,
) -> Result<Vec<f64>> {
    let c = model.cells();
    if lambda.values.len() != c || lambda_prime.values.len() != c {
        return Err(Error::InvalidParameter(
            "density length does not match the tower".into(),
        ));
    }
    let a = super::start_probabilities(model, lambda);
    let b = super::start_probabilities(model, lambda_prime);
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - 1.0).abs() > 1e-9 || (sb - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "start densities must be probabilities (masses {sa}, {sb})"
        )));
    }
    let mut m = vec![0.0; c * c];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            m[i * c + j] = x * y;
        }
    }
    Ok(m)
}

/// Both coordinates on the ground, distributed as `p x p`.
pub fn ground_start(model: &FiniteTowerModel) -> Vec<f64> {
    let c = model.cells();
    let g = ground_cells(model);
    let mut m = vec![0.0; c * c];
    for (i, &a) in g.iter().enumerate() {
        for (j, &b) in g.iter().enumerate() {
            m[a * c + b] = model.p()[i] * model.p()[j];
        }
    }
    m
}

fn ground_cells(model: &FiniteTowerModel) -> Vec<usize> {
    let mut out = Vec::with_capacity(model.branches());
    let mut acc = 0;
    for &r in model.r() {
        out.push(acc);
        acc += r as usize;
    }
    out
}

struct Layout {
    c: usize,
    top: Vec<bool>,
    /// Branch of a ground cell, `usize::MAX` above the ground.
    ground_branch: Vec<usize>,
    ground: Vec<usize>,
    p: Vec<f64>,
}

impl Layout {
    fn new(model: &FiniteTowerModel) -> Self {
        let c = model.cells();
        let ground = ground_cells(model);
        let mut top = vec![false; c];
        let mut ground_branch = vec![usize::MAX; c];
        for (i, &g) in ground.iter().enumerate() {
            ground_branch[g] = i;
            top[g + model.r()[i] as usize - 1] = true;
        }
        Self {
            c,
            top,
            ground_branch,
            ground,
            p: model.p().to_vec(),
        }
    }

    /// One step of `F x F` on a probability matrix over pairs of cells.
    fn step(&self, m: &[f64], tmp: &mut [f64], out: &mut [f64]) {
        let c = self.c;
        // First coordinate: rows.
        tmp.fill(0.0);
        let mut exit = vec![0.0; c];
        for a in 0..c {
            let row = &m[a * c..(a + 1) * c];
            if self.top[a] {
                for (e, &v) in exit.iter_mut().zip(row) {
                    *e += v;
                }
            } else {
                tmp[(a + 1) * c..(a + 2) * c].copy_from_slice(row);
            }
        }
        for (&g, &pj) in self.ground.iter().zip(&self.p) {
            for (t, &e) in tmp[g * c..(g + 1) * c].iter_mut().zip(&exit) {
                *t += pj * e;
            }
        }
        // Second coordinate: columns, row by row.
        for a in 0..c {
            let row = &tmp[a * c..(a + 1) * c];
            let dst = &mut out[a * c..(a + 1) * c];
            let mut e = 0.0;
            for b in 0..c {
                if self.top[b] {
                    e += row[b];
                } else {
                    dst[b + 1] = row[b];
                }
            }
            for (&g, &pj) in self.ground.iter().zip(&self.p) {
                dst[g] = pj * e;
            }
        }
    }
}

/// The law of `T` from the start matrix `start`, up to `horizon`.
pub fn t_distribution(
    model: &FiniteTowerModel,
    start: &[f64],
    n0: usize,
    horizon: usize,
) -> Result<TDistribution> {
    if n0 == 0 {
        return Err(Error::InvalidParameter("n0 must be at least 1".into()));
    }
    let lay = Layout::new(model);
    let c = lay.c;
    let cc = c * c;
    if start.len() != cc {
        return Err(Error::InvalidParameter(
            "start matrix does not match the tower".into(),
        ));
    }
    let nb = model.branches();
    let waits = n0 + 1;
    // Stage 0: before tau_1, x to fall. Stage 1: x to fall. Stage 2: x'.
    let block = |stage: usize, k: usize| (stage * waits + k) * cc;
    let mut state = vec![0.0; 3 * waits * cc];
    state[block(0, n0)..block(0, n0) + cc].copy_from_slice(start);
    let mut live = vec![false; 3 * waits];
    live[n0] = true;

    let mut pmf = vec![0.0; horizon + 1];
    let mut landing = vec![Vec::new(); horizon + 1];
    let mut tmp = vec![0.0; cc];
    let mut out = vec![0.0; cc];

    for t in 0..=horizon {
        // Stopping times at time t.
        let mut absorbed = vec![0.0; nb * nb];
        for stage in 0..3 {
            let src = block(stage, 0);
            if !live[stage * waits] {
                continue;
            }
            let next_stage = if stage == 2 { 1 } else { 2 };
            let dst = block(next_stage, n0);
            for a in 0..c {
                for b in 0..c {
                    let (target, other) = if stage == 2 { (b, a) } else { (a, b) };
                    if lay.ground_branch[target] == usize::MAX {
                        continue;
                    }
                    let v = state[src + a * c + b];
                    if v == 0.0 {
                        continue;
                    }
                    state[src + a * c + b] = 0.0;
                    if stage != 0 && lay.ground_branch[other] != usize::MAX {
                        pmf[t] += v;
                        absorbed[lay.ground_branch[a] * nb + lay.ground_branch[b]] += v;
                    } else {
                        state[dst + a * c + b] += v;
                        live[next_stage * waits + n0] = true;
                    }
                }
            }
        }
        landing[t] = absorbed;
        if t == horizon {
            break;
        }
        // Advance time; the waits count down.
        let mut next = vec![0.0; state.len()];
        let mut next_live = vec![false; live.len()];
        for stage in 0..3 {
            for k in 0..waits {
                if !live[stage * waits + k] {
                    continue;
                }
                let src = block(stage, k);
                lay.step(&state[src..src + cc], &mut tmp, &mut out);
                let nk = k.saturating_sub(1);
                let dst = block(stage, nk);
                for (d, &v) in next[dst..dst + cc].iter_mut().zip(&out) {
                    *d += v;
                }
                next_live[stage * waits + nk] = true;
            }
        }
        state = next;
        live = next_live;
    }
    let remaining: f64 = state.iter().sum();
    Ok(TDistribution {
        pmf,
        landing,
        beyond: remaining.max(0.0),
    })
}

/// Convolution of two sequences truncated to the length of `a`.
pub(crate) fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0; n];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(n - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// `V(n) = sum_{i>=1} w^i P{T_i = n}`, where `T_1` has law `g1` and the
/// increments have law `h`.
pub fn renewal_weights(g1: &[f64], h: &[f64], w: f64) -> Vec<f64> {
    let n = g1.len();
    let mut v = vec![0.0; n];
    for k in 0..n {
        let mut acc = w * g1[k];
        for m in 0..k {
            acc += w * v[m] * h[k - m];
        }
        v[k] = acc;
    }
    v
}

/// `sum_{i>=1} w^i P{T_i <= n < T_{i+1}}` for `n = 0..len`.
pub fn weighted_occupation(g1: &[f64], h: &TDistribution, w: f64) -> Vec<f64> {
    let n = g1.len();
    let v = renewal_weights(g1, &h.pmf[..n.min(h.pmf.len())], w);
    let h_tail = h.tail();
    let mut out = vec![0.0; n];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for m in 0..=k {
            acc += v[m] * h_tail.get(k - m).copied().unwrap_or(h.beyond);
        }
        *o = acc;
    }
    out
}
