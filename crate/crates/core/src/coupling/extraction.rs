//! Density extraction along the joint returns, and the (E3) bound.
//!
//! `hat Phi_i` lives on the partition `hat xi_i` into cylinders on which
//! `T_1, ..., T_i` are constant and `hat F^i` is onto `Delta_0 x Delta_0`.
//! On a finite tower with a piecewise-constant start both `hat Phi_{i-1}`
//! and the Jacobian are constant on each cylinder, so the cylinders with a
//! common value of `T_i` are merged into one class without changing any of
//! the quantities computed here: class masses follow from the exact law of
//! `T` by convolution, and the branch pair on which a class lands is kept
//! for the matching check.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::exact::{convolve, ground_start, product_start, t_distribution, weighted_occupation};
use crate::error::{Error, Result};
use crate::tower::{tv_decay, DensityVector, FiniteTowerModel};

#[derive(Clone, Debug)]
pub struct ExtractionOptions {
    pub epsilon: f64,
    pub i_max: usize,
    pub n0: usize,
    pub horizon: usize,
    /// Total number of classes over all depths.
    pub cell_budget: usize,
    /// Halve `epsilon` and retry on `ExtractionNegative`.
    pub auto_halve: bool,
}

impl ExtractionOptions {
    pub fn new(n0: usize, horizon: usize) -> Self {
        Self {
            epsilon: 0.1,
            i_max: 8,
            n0,
            horizon,
            cell_budget: 1_000_000,
            auto_halve: true,
        }
    }
}

/// The cylinders of `hat xi_i` with `T_i = t`.
#[derive(Clone, Debug, Serialize)]
pub struct ExtractionCell {
    pub t: u64,
    /// `P`-mass of the class.
    pub mass: f64,
    /// Integral of `hat Phi_{i-1}` over the class.
    pub before: f64,
    /// Integral of `hat Phi_i` over the class.
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtractionState {
    pub depth: usize,
    pub epsilon: f64,
    #[serde(skip)]
    pub cells: Vec<ExtractionCell>,
    pub cell_count: usize,
    /// `sup hat Phi_i / hat Phi_{i-1}` over the classes.
    pub sup_ratio: f64,
    pub extracted_mass: f64,
    pub cumulative_extracted: f64,
    /// Residual mass of points whose `T_i` lies past the horizon.
    pub frozen_mass: f64,
    /// `|extracted + residual + frozen - 1|`.
    pub ledger_error: f64,
    /// Largest difference between the two marginals of the extracted mass
    /// pushed to the ground, over classes and branches.
    pub matching_defect: f64,
}

/// Rows of the (E3) comparison.
#[derive(Clone, Debug, Serialize)]
pub struct E3Check {
    pub tv_exact: Vec<f64>,
    /// `P{T > n}`.
    pub t_tail: Vec<f64>,
    /// `sum_i (1 - eps1)^i P{T_i <= n < T_{i+1}}`.
    pub occupation: Vec<f64>,
    pub k1: f64,
    pub bound: Vec<f64>,
    /// Smallest `K1` for which the bound holds at `n = 2 n0`.
    pub k1_fit: f64,
    /// Rows `n >= 1` where the exact curve exceeds the bound.
    pub violations: usize,
    /// Rows `n >= 2 n0` exceeding the bound with `k1_fit`.
    pub violations_fit: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtractionReport {
    pub epsilon: f64,
    pub i1: usize,
    pub epsilon1_hat: f64,
    pub history: Vec<ExtractionState>,
    pub e3: E3Check,
}

impl ExtractionReport {
    pub fn max_matching_defect(&self) -> f64 {
        self.history
            .iter()
            .map(|s| s.matching_defect)
            .fold(0.0, f64::max)
    }

    pub fn max_ledger_error(&self) -> f64 {
        self.history
            .iter()
            .map(|s| s.ledger_error)
            .fold(0.0, f64::max)
    }
}

/// Threshold depth after which extraction starts. Piecewise-constant
/// densities have no oscillation across cylinders, so it is 1.
pub const I1: usize = 1;

/// `K1` of the (E3) bound with `i1 = 1`: `2 (1 - eps1)^{-i1 + 1} = 2`.
pub const K1: f64 = 2.0;

/// One extraction step on a cylinder where `hat Phi_{i-1} / J hat F^i` is
/// constant: `[Phi/J - eps min_w Phi/J] J`, integrated over the cylinder.
fn extract(before: f64, eps: f64) -> f64 {
    let ratio_min = before;
    before - eps * ratio_min
}

pub fn run_extraction(
    model: &FiniteTowerModel,
    lambda: &DensityVector,
    lambda_prime: &DensityVector,
    opts: &ExtractionOptions,
) -> Result<ExtractionReport> {
    let mut eps = opts.epsilon;
    for _ in 0..30 {
        match extraction_once(model, lambda, lambda_prime, opts, eps) {
            Err(Error::ExtractionNegative { .. }) if opts.auto_halve => eps *= 0.5,
            other => return other,
        }
    }
    Err(Error::ExtractionNegative { epsilon: eps })
}

fn extraction_once(
    model: &FiniteTowerModel,
    lambda: &DensityVector,
    lambda_prime: &DensityVector,
    opts: &ExtractionOptions,
    eps: f64,
) -> Result<ExtractionReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    let horizon = opts.horizon;
    let nb = model.branches();
    let start = product_start(model, lambda, lambda_prime)?;
    let g = t_distribution(model, &start, opts.n0, horizon)?;
    let h = t_distribution(model, &ground_start(model), opts.n0, horizon)?;
    let h_tail = h.tail();

    // Class masses and landing pairs at depth 1.
    let mut mass = g.pmf.clone();
    let mut landing = g.landing.clone();
    // Integral of hat Phi_{i-1} over each class; hat Phi_0 = Phi.
    let mut before = g.pmf.clone();
    let mut frozen = g.beyond;
    let mut cumulative = 0.0;
    let mut total_cells = 0usize;
    let mut history = Vec::new();

    for depth in 1..=opts.i_max {
        if depth > 1 {
            let prev_res: Vec<f64> = history
                .last()
                .map(|s: &ExtractionState| {
                    let mut v = vec![0.0; horizon + 1];
                    for c in &s.cells {
                        v[c.t as usize] = c.residual;
                    }
                    v
                })
                .unwrap_or_default();
            // Residual mass carried past the horizon.
            for (t, &r) in prev_res.iter().enumerate() {
                frozen += r * h_tail[horizon - t];
            }
            before = convolve(&prev_res, &h.pmf);
            let next_mass = convolve(&mass, &h.pmf);
            let mut next_landing = vec![vec![0.0; nb * nb]; horizon + 1];
            for (t0, &q) in mass.iter().enumerate() {
                if q == 0.0 {
                    continue;
                }
                for k in 0..=horizon - t0 {
                    for (d, &l) in next_landing[t0 + k].iter_mut().zip(&h.landing[k]) {
                        *d += q * l;
                    }
                }
            }
            mass = next_mass;
            landing = next_landing;
        }

        let mut cells = Vec::new();
        let mut sup_ratio: f64 = 0.0;
        let mut extracted = 0.0;
        let mut defect: f64 = 0.0;
        for t in 0..=horizon {
            if mass[t] <= 0.0 {
                continue;
            }
            let (b, r) = if depth < I1 {
                (before[t], before[t])
            } else {
                (before[t], extract(before[t], eps))
            };
            if r < 0.0 {
                return Err(Error::ExtractionNegative { epsilon: eps });
            }
            if b > 0.0 {
                sup_ratio = sup_ratio.max(r / b);
            }
            let taken = b - r;
            extracted += taken;
            // Push the extracted mass to the ground and compare marginals.
            let scale = taken / mass[t];
            for j in 0..nb {
                let row: f64 = (0..nb).map(|k| landing[t][j * nb + k]).sum();
                let col: f64 = (0..nb).map(|k| landing[t][k * nb + j]).sum();
                defect = defect.max(scale * (row - col).abs());
            }
            cells.push(ExtractionCell {
                t: t as u64,
                mass: mass[t],
                before: b,
                residual: r,
            });
        }
        total_cells += cells.len();
        if total_cells > opts.cell_budget {
            return Err(Error::CellBudgetExceeded {
                budget: opts.cell_budget,
                depth,
            });
        }
        cumulative += extracted;
        let live: f64 = cells.iter().map(|c| c.residual).sum();
        history.push(ExtractionState {
            depth,
            epsilon: eps,
            cell_count: cells.len(),
            cells,
            sup_ratio,
            extracted_mass: extracted,
            cumulative_extracted: cumulative,
            frozen_mass: frozen,
            ledger_error: (cumulative + live + frozen - 1.0).abs(),
            matching_defect: defect,
        });
    }

    let worst = history
        .iter()
        .filter(|s| s.depth >= I1)
        .map(|s| s.sup_ratio)
        .fold(0.0, f64::max);
    let epsilon1_hat = 1.0 - worst;
    let e3 = e3_check(model, lambda, lambda_prime, opts.n0, &g, &h, epsilon1_hat);
    Ok(ExtractionReport {
        epsilon: eps,
        i1: I1,
        epsilon1_hat,
        history,
        e3,
    })
}

fn e3_check(
    model: &FiniteTowerModel,
    lambda: &DensityVector,
    lambda_prime: &DensityVector,
    n0: usize,
    g: &super::TDistribution,
    h: &super::TDistribution,
    eps1: f64,
) -> E3Check {
    let horizon = g.horizon();
    let tv_exact = tv_decay(model, lambda, lambda_prime, horizon);
    let t_tail = g.tail();
    let occupation = weighted_occupation(&g.pmf, h, 1.0 - eps1);
    let bound: Vec<f64> = t_tail
        .iter()
        .zip(&occupation)
        .map(|(t, o)| 2.0 * t + K1 * o)
        .collect();
    let tol = 1e-12;
    let violations = (1..=horizon)
        .filter(|&n| tv_exact[n] > bound[n] + tol)
        .count();
    let n_fit = (2 * n0).min(horizon);
    let k1_fit = if occupation[n_fit] > 0.0 {
        ((tv_exact[n_fit] - 2.0 * t_tail[n_fit]) / occupation[n_fit]).max(0.0)
    } else {
        0.0
    };
    let violations_fit = (n_fit..=horizon)
        .filter(|&n| tv_exact[n] > 2.0 * t_tail[n] + k1_fit * occupation[n] + tol)
        .count();
    E3Check {
        tv_exact,
        t_tail,
        occupation,
        k1: K1,
        bound,
        k1_fit,
        violations,
        violations_fit,
    }
}

pub fn write_e3_csv(path: &Path, e3: &E3Check) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "n,tv_exact,e3_bound")?;
    for n in 1..e3.bound.len() {
        writeln!(w, "{n},{:.10e},{:.10e}", e3.tv_exact[n], e3.bound[n])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_extraction_csv(path: &Path, history: &[ExtractionState]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "i,sup_ratio,extracted_mass")?;
    for s in history {
        writeln!(
            w,
            "{},{:.15},{:.10e}",
            s.depth, s.sup_ratio, s.extracted_mass
        )?;
    }
    w.flush()?;
    Ok(())
}
