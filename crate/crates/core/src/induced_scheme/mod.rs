//! Return-time partitions of the intermittent circle map.
//!
//! The base partition `A` splits the circle into the middle fundamental
//! domains and the sequences `J_n`, `J'_n` accumulating at the neutral fixed
//! point. Iterating the return time `R` gives stopping times `S_i`; the
//! first `S_i` landing in `I_1` is `R*`, and the cylinders of `R*` form the
//! Markov partition `P_0` of `I_1`.
//!
//! Cylinders are enumerated backwards from `I_1`. A closed itinerary is a
//! word `J_n A_2 ... A_m` with later letters among `J'_n` and the middle
//! domains; pulling `I_1` back through the word one letter at a time shares
//! the long inverse-branch chains of `J_n`, `J'_n` between all words with a
//! common suffix.

mod delta;
mod report;

pub use delta::{delta_k, delta_k_literal, delta_sequence, DeltaSeries};
pub use report::{check_expansion_distortion, SchemeReport};

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use smallvec::SmallVec;

use crate::circle_map::{circle_dist, Arc, BoundarySequences, CircleMapParams};
use crate::error::{Error, Result};

/// Identifier of an element of the base partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseId {
    /// Fundamental domain `I_j`, `2 <= j <= d-1`.
    Middle(u32),
    J(u32),
    JPrime(u32),
}

impl BaseId {
    pub fn return_time(self) -> u32 {
        match self {
            BaseId::Middle(_) => 1,
            BaseId::J(n) | BaseId::JPrime(n) => n + 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseElement {
    pub id: BaseId,
    pub interval: Arc,
    pub r: u32,
}

/// The partition `A` truncated at `n_max`: `J_0..J_{n_max-1}`, the same for
/// `J'`, and the middle domains. What is left is `[x'_{n_max}, x_{n_max}]`.
pub fn build_base_partition(
    params: &CircleMapParams,
    n_max: usize,
) -> Result<(Vec<BaseElement>, BoundarySequences)> {
    if n_max < 2 {
        return Err(Error::InvalidParameter("n_max must be at least 2".into()));
    }
    let seq = params.boundary_sequences(n_max)?;
    let mut out = Vec::with_capacity(2 * n_max + params.degree() as usize);
    for j in 2..params.degree() {
        out.push(BaseElement {
            id: BaseId::Middle(j),
            interval: params.domain(j as usize),
            r: 1,
        });
    }
    for n in 0..n_max {
        out.push(BaseElement {
            id: BaseId::J(n as u32),
            interval: seq.j(n),
            r: n as u32 + 1,
        });
        out.push(BaseElement {
            id: BaseId::JPrime(n as u32),
            interval: seq.j_prime(n),
            r: n as u32 + 1,
        });
    }
    Ok((out, seq))
}

/// Tail masses `n -> Leb{T > n}` for `n = 0..=max`, where `T` is a return time.
#[derive(Clone, Debug)]
pub struct TailSeries {
    pub mass: Vec<f64>,
    /// Mass whose return time was not resolved within the truncation.
    pub truncation_mass: f64,
}

impl TailSeries {
    /// `Leb{R > n}` from the boundary sequences; exact up to rounding.
    pub fn for_base(seq: &BoundarySequences) -> Self {
        let mut mass = Vec::with_capacity(seq.n_max + 1);
        mass.push(1.0);
        for n in 1..=seq.n_max {
            mass.push(seq.tail_mass(n));
        }
        Self {
            mass,
            truncation_mass: seq.tail_mass(seq.n_max),
        }
    }

    pub fn at(&self, n: usize) -> f64 {
        self.mass[n]
    }
}

/// Geometry shared by all pullbacks: image ranges of the letters and the
/// inverse branches.
#[derive(Clone, Debug)]
pub struct Pullback {
    params: CircleMapParams,
    /// `I_1 = [0, x0]`.
    x0: f64,
}

impl Pullback {
    pub fn new(params: &CircleMapParams) -> Self {
        Self {
            params: *params,
            x0: params.inverse_lift(1.0),
        }
    }

    pub fn params(&self) -> &CircleMapParams {
        &self.params
    }

    pub fn i1(&self) -> Arc {
        Arc {
            start: 0.0,
            end: self.x0,
        }
    }

    /// Lower end of the lifted image `f^R(letter)`.
    fn image_start(&self, id: BaseId) -> f64 {
        match id {
            BaseId::J(_) => self.x0,
            BaseId::JPrime(_) => -1.0,
            BaseId::Middle(j) => (j - 1) as f64,
        }
    }

    /// Shift of `arc` by an integer so that it sits inside the image of `id`.
    fn lift_into(&self, id: BaseId, arc: Arc) -> Arc {
        let k = (self.image_start(id) - arc.start - 1e-9).ceil();
        Arc {
            start: arc.start + k,
            end: arc.end + k,
        }
    }

    /// One inverse step with the log-derivative of `f` at the preimage.
    #[inline]
    fn step(&self, y: f64) -> (f64, f64) {
        let x = self.params.inverse_lift(y);
        (x, self.params.deriv(x).ln())
    }

    /// Pull `arc` (anywhere on the circle, inside the image of `id`) back
    /// through `f^R` on `id`. Returns the arc and the log-derivatives of
    /// `f^R` at its two endpoints.
    pub fn pull_letter(&self, id: BaseId, arc: Arc) -> (Arc, [f64; 2]) {
        let lifted = self.lift_into(id, arc);
        let (mut a, mut b) = (lifted.start, lifted.end);
        let mut ld = [0.0, 0.0];
        for _ in 0..id.return_time() {
            let (na, la) = self.step(a);
            let (nb, lb) = self.step(b);
            a = na;
            b = nb;
            ld[0] += la;
            ld[1] += lb;
        }
        (Arc { start: a, end: b }, ld)
    }

    /// Pull `arc` back through a whole word, last letter first.
    pub fn pull_word(&self, word: &[BaseId], arc: Arc) -> Arc {
        word.iter()
            .rev()
            .fold(arc, |acc, &id| self.pull_letter(id, acc).0)
    }

    /// Pull a single point back through a word; also returns
    /// `log (f^{r})'` at the result, `r` the total time of the word.
    pub fn pull_point(&self, word: &[BaseId], y: f64) -> (f64, f64) {
        let mut p = y;
        let mut ld = 0.0;
        for &id in word.iter().rev() {
            let k = (self.image_start(id) - p - 1e-9).ceil();
            p += k;
            for _ in 0..id.return_time() {
                let (x, l) = self.step(p);
                p = x;
                ld += l;
            }
        }
        (p, ld)
    }
}

pub type Word = SmallVec<[BaseId; 2]>;

/// An element of `P_0`: points of `stages[0]` follow the itinerary `word`
/// and land exactly on `I_1` at time `r_star`.
#[derive(Clone, Debug)]
pub struct CylinderCell {
    pub word: Word,
    /// `stages[i] = f^{S_i}(cell)`, lying in the element `word[i]`.
    pub stages: SmallVec<[Arc; 2]>,
    pub r_star: u32,
    /// `log (f^{R*})'` at the two endpoints.
    pub log_deriv: [f64; 2],
}

impl CylinderCell {
    pub fn interval(&self) -> Arc {
        self.stages[0]
    }

    pub fn len(&self) -> f64 {
        self.stages[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages[0].is_empty()
    }

    /// `S_1 < ... < S_N = R*`.
    pub fn stopping_times(&self) -> Vec<u32> {
        self.word
            .iter()
            .scan(0, |s, id| {
                *s += id.return_time();
                Some(*s)
            })
            .collect()
    }
}

/// `f^{S_j}` of some cell: an arc together with the rest of the itinerary.
/// `r` is the time left until `I_1` is covered.
#[derive(Clone, Debug)]
pub struct SuffixPiece {
    pub word: Word,
    pub arc: Arc,
    pub r: u32,
    /// `log (f^r)'` at the two endpoints.
    pub log_deriv: [f64; 2],
}

#[derive(Clone, Copy, Debug)]
pub struct TruncationOptions {
    pub max_time: u32,
    pub min_len: f64,
    /// Abort instead of exhausting memory.
    pub cell_budget: usize,
}

impl TruncationOptions {
    pub fn new(max_time: u32, min_len: f64) -> Self {
        Self {
            max_time,
            min_len,
            cell_budget: 20_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RStarPartition {
    pub cells: Vec<CylinderCell>,
    /// Intermediate suffixes that lie on the itinerary of at least one cell.
    pub nodes: Vec<SuffixPiece>,
    pub tail: TailSeries,
    pub i1: Arc,
    pub options: TruncationOptions,
}

impl RStarPartition {
    pub fn closed_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.len()).sum()
    }

    pub fn gcd_r_star(&self) -> u64 {
        self.cells.iter().fold(0u64, |g, c| gcd(g, c.r_star as u64))
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[derive(Clone)]
struct Node {
    word: Word,
    stages: SmallVec<[Arc; 2]>,
    time: u32,
    log_deriv: [f64; 2],
}

struct Enumerator<'a> {
    pb: &'a Pullback,
    opts: TruncationOptions,
    degree: u32,
}

#[derive(Default)]
struct Found {
    cells: Vec<CylinderCell>,
    nodes: Vec<SuffixPiece>,
}

impl Enumerator<'_> {
    fn arc(&self, node: &Node) -> Arc {
        node.stages.first().copied().unwrap_or(self.pb.i1())
    }

    fn child(&self, node: &Node, id: BaseId, arc: Arc, ld: [f64; 2]) -> Node {
        let mut word = Word::with_capacity(node.word.len() + 1);
        word.push(id);
        word.extend_from_slice(&node.word);
        let mut stages = SmallVec::with_capacity(node.stages.len() + 1);
        stages.push(arc);
        stages.extend_from_slice(&node.stages);
        Node {
            word,
            stages,
            time: node.time + id.return_time(),
            log_deriv: [node.log_deriv[0] + ld[0], node.log_deriv[1] + ld[1]],
        }
    }

    /// Walks a chain `id(0), id(1), ...` of letters sharing one image,
    /// calling `visit` until time or length runs out.
    fn chain(
        &self,
        node: &Node,
        make: fn(u32) -> BaseId,
        reserve: u32,
        mut visit: impl FnMut(Node) -> Result<()>,
    ) -> Result<()> {
        let y = self.pb.lift_into(make(0), self.arc(node));
        let (mut a, mut b) = (y.start, y.end);
        let mut ld = [0.0, 0.0];
        let mut n = 0u32;
        loop {
            let (na, la) = self.pb.step(a);
            let (nb, lb) = self.pb.step(b);
            a = na;
            b = nb;
            ld[0] += la;
            ld[1] += lb;
            if node.time + n + 1 + reserve > self.opts.max_time || b - a < self.opts.min_len {
                return Ok(());
            }
            visit(self.child(node, make(n), Arc { start: a, end: b }, ld))?;
            n += 1;
        }
    }

    /// Emits every closed cell whose itinerary ends with `node`; returns the
    /// number of cells found below it.
    fn expand(&self, node: &Node, out: &mut Found) -> Result<usize> {
        let mut count = 0usize;
        if !node.word.is_empty() {
            self.chain(node, BaseId::J, 0, |c| {
                out.cells.push(CylinderCell {
                    word: c.word,
                    stages: c.stages,
                    r_star: c.time,
                    log_deriv: c.log_deriv,
                });
                count += 1;
                if out.cells.len() > self.opts.cell_budget {
                    return Err(Error::CellBudgetExceeded {
                        budget: self.opts.cell_budget,
                        depth: c.time as usize,
                    });
                }
                Ok(())
            })?;
        }
        // J' is followed only by a middle domain or by I_1 itself.
        let jp_allowed = matches!(node.word.first(), None | Some(BaseId::Middle(_)));
        if jp_allowed {
            let mut kids = Vec::new();
            self.chain(node, BaseId::JPrime, 1, |c| {
                kids.push(c);
                Ok(())
            })?;
            for c in kids {
                count += self.expand_recorded(&c, out)?;
            }
        }
        for j in 2..self.degree {
            let (arc, ld) = self.pb.pull_letter(BaseId::Middle(j), self.arc(node));
            if node.time + 2 > self.opts.max_time || arc.len() < self.opts.min_len {
                continue;
            }
            let c = self.child(node, BaseId::Middle(j), arc, ld);
            count += self.expand_recorded(&c, out)?;
        }
        Ok(count)
    }

    fn expand_recorded(&self, node: &Node, out: &mut Found) -> Result<usize> {
        let slot = out.nodes.len();
        out.nodes.push(SuffixPiece {
            word: node.word.clone(),
            arc: node.stages[0],
            r: node.time,
            log_deriv: node.log_deriv,
        });
        let n = self.expand(node, out)?;
        if n == 0 {
            out.nodes.remove(slot);
        }
        Ok(n)
    }

    /// Children of the root, expanded in parallel.
    fn run(&self) -> Result<Found> {
        let root = Node {
            word: Word::new(),
            stages: SmallVec::new(),
            time: 0,
            log_deriv: [0.0, 0.0],
        };
        let mut kids = Vec::new();
        self.chain(&root, BaseId::JPrime, 1, |c| {
            kids.push(c);
            Ok(())
        })?;
        for j in 2..self.degree {
            let (arc, ld) = self.pb.pull_letter(BaseId::Middle(j), self.pb.i1());
            if arc.len() >= self.opts.min_len && self.opts.max_time >= 2 {
                kids.push(self.child(&root, BaseId::Middle(j), arc, ld));
            }
        }
        let parts: Vec<Result<Found>> = kids
            .par_iter()
            .map(|k| {
                let mut f = Found::default();
                self.expand_recorded(k, &mut f)?;
                Ok(f)
            })
            .collect();
        let mut all = Found::default();
        for p in parts {
            let p = p?;
            all.cells.extend(p.cells);
            all.nodes.extend(p.nodes);
            if all.cells.len() > self.opts.cell_budget {
                return Err(Error::CellBudgetExceeded {
                    budget: self.opts.cell_budget,
                    depth: self.opts.max_time as usize,
                });
            }
        }
        Ok(all)
    }
}

/// Enumerates the closed cells of `P_0` with `R* <= max_time` and length at
/// least `min_len`. Everything else is counted in `tail.truncation_mass`.
pub fn build_rstar_partition(
    params: &CircleMapParams,
    opts: TruncationOptions,
) -> Result<RStarPartition> {
    if opts.max_time < 2 {
        return Err(Error::InvalidParameter(
            "max_time must be at least 2".into(),
        ));
    }
    if !(opts.min_len >= 0.0) {
        return Err(Error::InvalidParameter(
            "min_len must be nonnegative".into(),
        ));
    }
    let pb = Pullback::new(params);
    let en = Enumerator {
        pb: &pb,
        opts,
        degree: params.degree(),
    };
    let found = en.run()?;
    let i1 = pb.i1();
    let mut by_time = vec![0.0; opts.max_time as usize + 1];
    for c in &found.cells {
        by_time[c.r_star as usize] += c.len();
    }
    let mut mass = Vec::with_capacity(by_time.len());
    let mut closed = 0.0;
    for m in &by_time {
        closed += m;
        mass.push((i1.len() - closed).max(0.0));
    }
    let truncation_mass = *mass.last().unwrap();
    if truncation_mass > 0.1 * i1.len() {
        return Err(Error::TruncationTooCoarse {
            open_mass: truncation_mass,
            limit: 0.1 * i1.len(),
        });
    }
    Ok(RStarPartition {
        cells: found.cells,
        nodes: found.nodes,
        tail: TailSeries {
            mass,
            truncation_mass,
        },
        i1,
        options: opts,
    })
}

/// Largest endpoint mismatch, over all stages of `cell`, between
/// `f^{R}(stage_i)` and `stage_{i+1}` (and `I_1` after the last stage).
/// Each stage is iterated forward separately: iterating the whole cell at
/// once amplifies rounding by the full expansion of `f^{R*}`.
pub fn markov_defect(pb: &Pullback, cell: &CylinderCell) -> f64 {
    let f = pb.params();
    let mut worst: f64 = 0.0;
    for (i, (&id, stage)) in cell.word.iter().zip(&cell.stages).enumerate() {
        let target = cell.stages.get(i + 1).copied().unwrap_or(pb.i1());
        let (mut a, mut b) = (stage.start, stage.end);
        for _ in 0..id.return_time() {
            a = f.eval(a);
            b = f.eval(b);
        }
        // The right end of a stage can map onto the seam, which is 0 or
        // 1 depending on the side; on the circle that is the same point.
        worst = worst
            .max(circle_dist(a, target.start))
            .max(circle_dist(b, target.end));
    }
    worst
}

pub fn write_tails_csv(path: &Path, base: &TailSeries, rstar: &TailSeries) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "n,mass_R,mass_Rstar,truncation_mass")?;
    let n = base.mass.len().min(rstar.mass.len());
    for i in 0..n {
        writeln!(
            w,
            "{},{:.17e},{:.17e},{:.17e}",
            i, base.mass[i], rstar.mass[i], rstar.truncation_mass
        )?;
    }
    w.flush()?;
    Ok(())
}
