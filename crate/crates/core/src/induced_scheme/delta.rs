//! The diameter sequence `delta_k`.
//!
//! For `P` in `P_0` with return time `R` and `0 <= l < R`, write
//! `Y = f^l(P)` and `r = R - l`, and `q = k - r + 1`. The set whose diameter
//! is taken is `Y` itself when `q <= 0`, and otherwise the pieces `f^l(Q)`
//! with `Q` in `P_q`. Those are the pullbacks `H_Y(C)` of the cylinders
//! `C = f^R(Q)` of the first-return map whose accumulated return time first
//! reaches `q`. Only `(Y, r)` matters, and every such `Y` is a suffix of a
//! cell's itinerary, so the sup runs over cells and intermediate suffixes.
//!
//! The search prunes with distortion: `|H_Y(C)| <= |Y| |C| e^D / |I_1|`.

use rayon::prelude::*;

use super::{BaseId, Pullback, RStarPartition, Word};
use crate::circle_map::{Arc, CircleMapParams};
use crate::error::{Error, Result};
use crate::solenoid::LEAF_SLOPE_BOUND;

#[derive(Clone, Debug)]
pub struct DeltaSeries {
    pub k: Vec<usize>,
    /// Circle-factor diameters.
    pub circle: Vec<f64>,
    /// Diameters along unstable leaves: `circle * (1 + slope bound)`.
    pub delta: Vec<f64>,
}

impl DeltaSeries {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "k,delta_k")?;
        for (k, d) in self.k.iter().zip(&self.delta) {
            writeln!(w, "{k},{d:.17e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Piece<'a> {
    word: &'a [BaseId],
    len: f64,
    r: u32,
}

struct Search<'a> {
    pb: Pullback,
    i1: Arc,
    /// Closed cells by decreasing length.
    cells: Vec<(f64, u32, &'a [BaseId], Arc)>,
    /// `u[q]`: largest `|C|` over the cylinders `C` of level `q`.
    u: Vec<f64>,
    /// Distortion factor of the induced map and all its iterates on their
    /// cylinders: `|H(X)| <= |H(I_1)| |X| spread / |I_1|`.
    spread: f64,
    prune: bool,
}

impl<'a> Search<'a> {
    fn new(params: &CircleMapParams, part: &'a RStarPartition, q_max: usize, prune: bool) -> Self {
        let mut cells: Vec<_> = part
            .cells
            .iter()
            .map(|c| (c.len(), c.r_star, &c.word[..], c.interval()))
            .collect();
        cells.sort_by(|a, b| b.0.total_cmp(&a.0));
        let d = measured_distortion(params, part);
        let mut s = Self {
            pb: Pullback::new(params),
            i1: part.i1,
            cells,
            u: Vec::with_capacity(q_max + 1),
            spread: (1.25 * d).exp(),
            prune,
        };
        s.u.push(s.i1.len());
        // Until u[1] is known the reach bound in `sup` must not prune.
        s.u.push(s.i1.len());
        let mut best = 0.0;
        s.sup(1, &mut Vec::new(), s.i1.len(), &mut best);
        s.u[1] = best;
        for q in 2..=q_max {
            let mut best = 0.0;
            s.sup(q as u32, &mut Vec::new(), s.i1.len(), &mut best);
            s.u.push(best);
        }
        s
    }

    /// Largest `|H(C)|` over the cylinders `C` of level `q`, where `H` pulls
    /// back through `stack` (outermost first) and `l_node = |H(I_1)|`.
    fn sup(&self, q: u32, stack: &mut Vec<&'a [BaseId]>, l_node: f64, best: &mut f64) {
        let scale = l_node * self.spread / self.i1.len();
        // Descendants of a child of length `len` are bounded by
        // `scale * len * max(1, u[s] spread / |I_1|)`.
        let reach = scale * (self.u[1] * self.spread / self.i1.len()).max(1.0);
        for &(len, r, word, iv) in &self.cells {
            if self.prune && reach * len <= *best {
                break;
            }
            let rest = q.saturating_sub(r) as usize;
            let bound = if rest == 0 {
                scale * len
            } else {
                scale * len * self.u[rest] * self.spread / self.i1.len()
            };
            if self.prune && bound <= *best {
                continue;
            }
            let l_child = stack
                .iter()
                .rev()
                .fold(iv, |a, w| self.pb.pull_word(w, a))
                .len();
            if rest == 0 {
                *best = best.max(l_child);
            } else {
                if self.prune && l_child * self.u[rest] * self.spread / self.i1.len() <= *best {
                    continue;
                }
                stack.push(word);
                self.sup(rest as u32, stack, l_child, best);
                stack.pop();
            }
        }
    }

    fn piece_value(&self, piece: &Piece<'a>, k: usize, best: &mut f64) {
        let q = k as i64 - piece.r as i64 + 1;
        if q <= 0 {
            *best = best.max(piece.len);
            return;
        }
        if self.prune && piece.len * self.u[q as usize] * self.spread / self.i1.len() <= *best {
            return;
        }
        let mut stack = vec![piece.word];
        self.sup(q as u32, &mut stack, piece.len, best);
    }
}

/// Largest variation of `log H'` over `I_1`, for `H` the pullback through a
/// single cell or suffix, or through two cells in a row. Sampled at
/// interior points: endpoint values alone miss interior extrema.
fn measured_distortion(params: &CircleMapParams, part: &RStarPartition) -> f64 {
    let pb = Pullback::new(params);
    let i1 = part.i1;
    let variation = |word: &[BaseId]| {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..=16 {
            let y = i1.start + i1.len() * i as f64 / 16.0;
            let (_, ld) = pb.pull_point(word, y);
            lo = lo.min(ld);
            hi = hi.max(ld);
        }
        hi - lo
    };
    let mut d = part
        .cells
        .iter()
        .map(|c| (c.log_deriv[0] - c.log_deriv[1]).abs())
        .chain(
            part.nodes
                .iter()
                .map(|n| (n.log_deriv[0] - n.log_deriv[1]).abs()),
        )
        .fold(0.0, f64::max);
    let mut by_len: Vec<&[BaseId]> = Vec::new();
    let mut idx: Vec<usize> = (0..part.cells.len()).collect();
    idx.sort_by(|&a, &b| part.cells[b].len().total_cmp(&part.cells[a].len()));
    by_len.extend(idx.iter().take(12).map(|&i| &part.cells[i].word[..]));
    idx.sort_by_key(|&i| std::cmp::Reverse(part.cells[i].r_star));
    let deep: Vec<&[BaseId]> = idx
        .iter()
        .take(12)
        .map(|&i| &part.cells[i].word[..])
        .collect();
    let mut outer: Vec<&[BaseId]> = by_len.clone();
    let mut nidx: Vec<usize> = (0..part.nodes.len()).collect();
    nidx.sort_by(|&a, &b| part.nodes[b].arc.len().total_cmp(&part.nodes[a].arc.len()));
    outer.extend(nidx.iter().take(8).map(|&i| &part.nodes[i].word[..]));
    outer.extend(deep.iter().copied());
    for w in &outer {
        d = d.max(variation(w));
    }
    for a in &outer {
        for b in by_len.iter().chain(&deep) {
            let mut w: Vec<BaseId> = a.to_vec();
            w.extend_from_slice(b);
            d = d.max(variation(&w));
        }
    }
    d
}

fn pieces(part: &RStarPartition) -> Vec<Piece<'_>> {
    let mut v: Vec<Piece> = part
        .cells
        .iter()
        .map(|c| Piece {
            word: &c.word,
            len: c.len(),
            r: c.r_star,
        })
        .chain(part.nodes.iter().map(|n| Piece {
            word: &n.word,
            len: n.arc.len(),
            r: n.r,
        }))
        .collect();
    v.sort_by(|a, b| b.len.total_cmp(&a.len));
    v
}

fn check_depth(part: &RStarPartition, k_max: usize) -> Result<()> {
    // Pieces with r > k are needed for the first case; their sizes decrease
    // with r, so enumerating up to 2k is enough in practice.
    if (part.options.max_time as usize) < 2 * k_max {
        return Err(Error::InvalidParameter(format!(
            "delta_k up to k = {k_max} needs cells with R* up to {}, have {}",
            2 * k_max,
            part.options.max_time
        )));
    }
    Ok(())
}

/// `delta_k` for each `k` in `ks`, over the enumerated cells.
pub fn delta_sequence(
    params: &CircleMapParams,
    part: &RStarPartition,
    ks: &[usize],
) -> Result<DeltaSeries> {
    let k_max = ks.iter().copied().max().unwrap_or(0);
    check_depth(part, k_max)?;
    let search = Search::new(params, part, k_max + 1, true);
    let ps = pieces(part);
    let circle: Vec<f64> = ks
        .par_iter()
        .map(|&k| {
            let mut best = 0.0f64;
            let umax = search.u[1..].iter().copied().fold(0.0, f64::max);
            for p in &ps {
                if p.len <= best && p.len * search.spread * umax / search.i1.len() <= best {
                    break;
                }
                search.piece_value(p, k, &mut best);
            }
            best
        })
        .collect();
    let leaf = 1.0 + LEAF_SLOPE_BOUND;
    Ok(DeltaSeries {
        k: ks.to_vec(),
        delta: circle.iter().map(|c| c * leaf).collect(),
        circle,
    })
}

/// `delta_k` for `k = 1..=k_max`.
pub fn delta_k(
    params: &CircleMapParams,
    part: &RStarPartition,
    k_max: usize,
) -> Result<DeltaSeries> {
    let ks: Vec<usize> = (1..=k_max).collect();
    delta_sequence(params, part, &ks)
}

/// `f^l(P)` as a suffix word.
fn suffix_at(word: &[BaseId], l: u32) -> Word {
    let mut s = 0;
    for (i, &id) in word.iter().enumerate() {
        let r = id.return_time();
        if l < s + r {
            let t = l - s;
            let head = match id {
                BaseId::J(n) => BaseId::J(n - t),
                BaseId::JPrime(n) => BaseId::JPrime(n - t),
                BaseId::Middle(j) => BaseId::Middle(j),
            };
            let mut w = Word::new();
            w.push(head);
            w.extend_from_slice(&word[i + 1..]);
            return w;
        }
        s += r;
    }
    unreachable!("l must be below the return time")
}

/// The definition evaluated cell by cell and offset by offset, with the two
/// regimes `k > R(P) - 1` and `k <= R(P) - 1` kept apart. Meant for small
/// truncations, as a check on [`delta_sequence`].
pub fn delta_k_literal(params: &CircleMapParams, part: &RStarPartition, k: usize) -> f64 {
    let search = Search::new(params, part, k + 1, true);
    let pb = Pullback::new(params);
    let i1 = part.i1;
    let image = |word: &[BaseId], l: u32| -> (Word, f64) {
        let w = suffix_at(word, l);
        let len = pb.pull_word(&w, i1).len();
        (w, len)
    };
    // Largest f^l(Q) over Q in P_q inside P.
    let refined = |w: &Word, len: f64, q: usize| {
        let mut best = 0.0;
        let mut stack = vec![&w[..]];
        search.sup(q as u32, &mut stack, len, &mut best);
        best
    };
    let mut out: f64 = 0.0;
    for c in &part.cells {
        let r = c.r_star as usize;
        if k > r - 1 {
            for l in 0..r {
                let (w, len) = image(&c.word, l as u32);
                out = out.max(refined(&w, len, k + 1 + l - r));
            }
        } else {
            let mut d0: f64 = 0.0;
            for l in 0..r - k {
                d0 = d0.max(image(&c.word, l as u32).1);
            }
            let mut dplus: f64 = 0.0;
            for l in r - k..r {
                let (w, len) = image(&c.word, l as u32);
                dplus = dplus.max(refined(&w, len, k + 1 + l - r));
            }
            out = out.max(d0).max(dplus);
        }
    }
    out * (1.0 + LEAF_SLOPE_BOUND)
}
