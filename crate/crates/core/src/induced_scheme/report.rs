use serde::Serialize;

use super::{BaseId, Pullback, RStarPartition};
use crate::circle_map::CircleMapParams;

/// Measured expansion and distortion of the induced scheme.
#[derive(Clone, Debug, Serialize)]
pub struct SchemeReport {
    /// `min (f^R)'` over sampled points of the base elements.
    pub beta_inv_base: f64,
    /// `min (f^{R*})'` over the endpoints of all closed cells.
    pub beta_inv_rstar: f64,
    /// The smaller of the two; the contraction rate is its inverse.
    pub beta_inv: f64,
    pub beta: f64,
    /// `max |log (f^{R*})'(a) - log (f^{R*})'(b)|` over the deepest cells,
    /// sampled in the interior.
    pub distortion_c: f64,
    /// Same over the endpoints of every closed cell.
    pub distortion_endpoints: f64,
    /// Smallest `C` with `log (f^i)'(x)/(f^i)'(y) <= C |f^i x - f^i y| / |J_{n-i}|`
    /// over sampled pairs in `J_n`.
    pub bounded_distortion_c: f64,
    pub gcd_r: u64,
    pub cells: usize,
    pub deepest_sampled: usize,
}

const DEEPEST: usize = 200;

fn sample_points(a: f64, b: f64, samples: usize) -> impl Iterator<Item = f64> {
    let m = samples.max(2);
    (0..m).map(move |i| a + (b - a) * i as f64 / (m - 1) as f64)
}

fn base_expansion(f: &CircleMapParams, x0: f64, r: u32) -> f64 {
    let mut x = x0;
    let mut ld = 0.0;
    for _ in 0..r {
        ld += f.deriv(x).ln();
        x = f.eval(x);
    }
    ld.exp()
}

pub fn check_expansion_distortion(
    params: &CircleMapParams,
    part: &RStarPartition,
    samples: usize,
) -> SchemeReport {
    let pb = Pullback::new(params);
    let n_max = (part.options.max_time as usize).max(4);
    let seq = params
        .boundary_sequences(n_max + 1)
        .expect("n_max is positive");

    // Expansion of f^R on the base elements, in their interiors.
    let mut beta_inv_base = f64::INFINITY;
    let mut ns: Vec<usize> = (0..16.min(n_max)).collect();
    let mut n = 16;
    while n < n_max {
        ns.push(n);
        n = n * 3 / 2;
    }
    for &n in &ns {
        for (iv, r) in [(seq.j(n), n as u32 + 1), (seq.j_prime(n), n as u32 + 1)] {
            for x in sample_points(iv.start, iv.end, samples) {
                beta_inv_base = beta_inv_base.min(base_expansion(params, x, r));
            }
        }
    }
    for j in 2..params.degree() {
        let iv = params.domain(j as usize);
        for x in sample_points(iv.start, iv.end, samples) {
            beta_inv_base = beta_inv_base.min(params.deriv(x));
        }
    }

    // Bounded distortion along the chains J_n -> J_0.
    let mut bounded: f64 = 0.0;
    for &n in ns.iter().filter(|&&n| n >= 1) {
        let iv = seq.j(n);
        let pts: Vec<f64> = sample_points(iv.start, iv.end, samples.min(8)).collect();
        for (ia, &a0) in pts.iter().enumerate() {
            for &b0 in &pts[ia + 1..] {
                let (mut a, mut b) = (a0, b0);
                let mut lr = 0.0;
                for i in 1..=n {
                    lr += params.deriv(a).ln() - params.deriv(b).ln();
                    a = params.eval(a);
                    b = params.eval(b);
                    let scale = (a - b).abs() / seq.j(n - i).len();
                    if scale > 0.0 {
                        bounded = bounded.max(lr.abs() / scale);
                    }
                }
            }
        }
    }

    let mut beta_inv_rstar = f64::INFINITY;
    let mut distortion_endpoints: f64 = 0.0;
    for c in &part.cells {
        beta_inv_rstar = beta_inv_rstar.min(c.log_deriv[0].min(c.log_deriv[1]).exp());
        distortion_endpoints = distortion_endpoints.max((c.log_deriv[0] - c.log_deriv[1]).abs());
    }

    let mut order: Vec<usize> = (0..part.cells.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(part.cells[i].r_star));
    order.truncate(DEEPEST);
    let i1 = pb.i1();
    let mut distortion_c: f64 = 0.0;
    for &i in &order {
        let word: &[BaseId] = &part.cells[i].word;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in sample_points(i1.start, i1.end, samples) {
            let (_, ld) = pb.pull_point(word, y);
            lo = lo.min(ld);
            hi = hi.max(ld);
        }
        distortion_c = distortion_c.max(hi - lo);
    }

    let beta_inv = beta_inv_base.min(beta_inv_rstar);
    SchemeReport {
        beta_inv_base,
        beta_inv_rstar,
        beta_inv,
        beta: 1.0 / beta_inv,
        distortion_c,
        distortion_endpoints,
        bounded_distortion_c: bounded,
        gcd_r: part.gcd_r_star(),
        cells: part.cells.len(),
        deepest_sampled: order.len(),
    }
}
