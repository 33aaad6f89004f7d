//! Finite Young towers with full-branch returns.
//!
//! Branch `i` has base mass `p_i` and return time `R_i`; the tower has
//! levels `0..R_i` over it, each a copy of the base cell. From the top
//! level a point returns to the ground and spreads over the base with
//! weights `p_j`. Densities constant on tower cells stay constant under the
//! transfer operator, so iterating them is exact linear algebra.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::induced_scheme::{gcd, RStarPartition};

#[derive(Clone, Debug, Serialize)]
pub struct FiniteTowerModel {
    p: Vec<f64>,
    r: Vec<u32>,
    /// Start of branch `i` in the flat cell layout.
    offsets: Vec<usize>,
    /// Mass redistributed when the model was renormalized.
    pub renormalized_mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TowerStateIndex {
    pub branch: usize,
    pub level: u32,
}

/// Density with respect to the reference measure, one value per cell
/// `(i, l)`; the cell's reference mass is `p_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityVector {
    pub values: Vec<f64>,
}

impl FiniteTowerModel {
    pub fn new(p: Vec<f64>, r: Vec<u32>) -> Result<Self> {
        if p.is_empty() || p.len() != r.len() {
            return Err(Error::InvalidParameter(
                "need one return time per branch mass".into(),
            ));
        }
        if r.contains(&0) {
            return Err(Error::InvalidParameter(
                "return times must be at least 1".into(),
            ));
        }
        if p.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter(
                "branch masses must be positive".into(),
            ));
        }
        let total: f64 = p.iter().sum();
        let renormalized_mass = (1.0 - total).abs();
        let p: Vec<f64> = p.iter().map(|x| x / total).collect();
        let mut offsets = Vec::with_capacity(r.len() + 1);
        let mut acc = 0usize;
        for &ri in &r {
            offsets.push(acc);
            acc += ri as usize;
        }
        offsets.push(acc);
        Ok(Self {
            p,
            r,
            offsets,
            renormalized_mass,
        })
    }

    /// `p_i` proportional to `i^{-(zeta+1)}`, `R_i = i`, so that
    /// `m{R > n}` decays like `n^{-zeta}`.
    pub fn polynomial(n: usize, zeta: f64) -> Result<Self> {
        let p = (1..=n).map(|i| (i as f64).powf(-(zeta + 1.0))).collect();
        let r = (1..=n as u32).collect();
        Self::new(p, r)
    }

    /// Random model with `n` branches and return times in `1..=r_max`.
    pub fn random<G: Rng + ?Sized>(rng: &mut G, n: usize, r_max: u32) -> Result<Self> {
        let p = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
        let r = (0..n).map(|_| rng.random_range(1..=r_max)).collect();
        Self::new(p, r)
    }

    /// One branch per realized value of `R*`, with the mass of all cells
    /// sharing it. The open mass is spread proportionally.
    pub fn from_partition(part: &RStarPartition) -> Result<Self> {
        let t = part.options.max_time as usize;
        let mut mass = vec![0.0; t + 1];
        for c in &part.cells {
            mass[c.r_star as usize] += c.len();
        }
        let (p, r): (Vec<f64>, Vec<u32>) = mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(i, &m)| (m / part.i1.len(), i as u32))
            .unzip();
        Self::new(p, r)
    }

    pub fn branches(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn r(&self) -> &[u32] {
        &self.r
    }

    pub fn cells(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn index(&self, s: TowerStateIndex) -> usize {
        debug_assert!(s.level < self.r[s.branch]);
        self.offsets[s.branch] + s.level as usize
    }

    pub fn gcd_r(&self) -> u64 {
        self.r.iter().fold(0, |g, &x| gcd(g, x as u64))
    }

    pub fn mean_return(&self) -> f64 {
        self.p.iter().zip(&self.r).map(|(p, &r)| p * r as f64).sum()
    }

    /// Reference mass of every cell, in the flat layout.
    pub fn cell_masses(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cells());
        for (i, &ri) in self.r.iter().enumerate() {
            out.extend(std::iter::repeat_n(self.p[i], ri as usize));
        }
        out
    }

    /// Density `1` on the ground level, zero above.
    pub fn ground_density(&self) -> DensityVector {
        let mut v = vec![0.0; self.cells()];
        for &o in &self.offsets[..self.branches()] {
            v[o] = 1.0;
        }
        DensityVector { values: v }
    }

    /// Unit point mass on a cell.
    pub fn point_mass(&self, s: TowerStateIndex) -> DensityVector {
        let mut v = vec![0.0; self.cells()];
        v[self.index(s)] = 1.0 / self.p[s.branch];
        DensityVector { values: v }
    }

    pub fn mass(&self, d: &DensityVector) -> f64 {
        let mut total = 0.0;
        for i in 0..self.branches() {
            let s: f64 = d.values[self.offsets[i]..self.offsets[i + 1]].iter().sum();
            total += s * self.p[i];
        }
        total
    }

    /// Mass of a density on the ground level.
    pub fn ground_mass(&self, d: &DensityVector) -> f64 {
        (0..self.branches())
            .map(|i| d.values[self.offsets[i]] * self.p[i])
            .sum()
    }

    /// `|mu - mu'|`, the L1 distance of the densities.
    pub fn total_variation(&self, a: &DensityVector, b: &DensityVector) -> f64 {
        let mut total = 0.0;
        for i in 0..self.branches() {
            let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
            let s: f64 = a.values[lo..hi]
                .iter()
                .zip(&b.values[lo..hi])
                .map(|(x, y)| (x - y).abs())
                .sum();
            total += s * self.p[i];
        }
        total
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "i,p_i,R_i")?;
        for (i, (p, r)) in self.p.iter().zip(&self.r).enumerate() {
            writeln!(w, "{},{:.17e},{}", i + 1, p, r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Push-forward of a density under the tower map.
pub fn step_density(model: &FiniteTowerModel, d: &DensityVector) -> DensityVector {
    let mut out = vec![0.0; d.values.len()];
    let mut exit = 0.0;
    for i in 0..model.branches() {
        let (lo, hi) = (model.offsets[i], model.offsets[i + 1]);
        out[lo + 1..hi].copy_from_slice(&d.values[lo..hi - 1]);
        exit += d.values[hi - 1] * model.p[i];
    }
    // The exiting mass spreads over the ground with weights p_j, which is
    // density `exit` on every ground cell.
    for i in 0..model.branches() {
        out[model.offsets[i]] = exit;
    }
    DensityVector { values: out }
}

/// The invariant density: `1 / sum p_i R_i` on every cell.
pub fn invariant_density(model: &FiniteTowerModel) -> Result<DensityVector> {
    let g = model.gcd_r();
    if g > 1 {
        return Err(Error::PeriodicTower { gcd: g });
    }
    Ok(DensityVector {
        values: vec![1.0 / model.mean_return(); model.cells()],
    })
}

/// `|F^n_* lambda - F^n_* lambda'|` for `n = 0..=n_max`.
pub fn tv_decay(
    model: &FiniteTowerModel,
    lambda: &DensityVector,
    lambda_prime: &DensityVector,
    n_max: usize,
) -> Vec<f64> {
    let mut a = lambda.clone();
    let mut b = lambda_prime.clone();
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        out.push(model.total_variation(&a, &b));
        if n < n_max {
            a = step_density(model, &a);
            b = step_density(model, &b);
        }
    }
    out
}

pub fn write_tv_csv(path: &Path, tv: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "n,tv")?;
    for (n, v) in tv.iter().enumerate() {
        writeln!(w, "{n},{v:.17e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Time to reach the ground: `R_i - l` above the ground, `0` on it.
pub fn hat_r(model: &FiniteTowerModel, s: TowerStateIndex) -> u32 {
    if s.level == 0 {
        0
    } else {
        model.r[s.branch] - s.level
    }
}

/// `m{R-hat > n}` summed cell by cell.
pub fn hat_r_tail(model: &FiniteTowerModel, n: u32) -> f64 {
    let mut total = 0.0;
    for (i, &ri) in model.r.iter().enumerate() {
        for level in 0..ri {
            if hat_r(model, TowerStateIndex { branch: i, level }) > n {
                total += model.p[i];
            }
        }
    }
    total
}

/// `m{R > l}` on the base.
pub fn return_tail(model: &FiniteTowerModel, l: u32) -> f64 {
    model
        .p
        .iter()
        .zip(&model.r)
        .filter(|(_, &r)| r > l)
        .map(|(p, _)| p)
        .sum()
}

/// `m(F^{-n} Delta_0 cap Delta_0)` for `n = 0..=n_max`.
pub fn ground_return_masses(model: &FiniteTowerModel, n_max: usize) -> Vec<f64> {
    let mut d = model.ground_density();
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        out.push(model.ground_mass(&d));
        if n < n_max {
            d = step_density(model, &d);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MixingThreshold {
    pub n0: usize,
    pub gamma0: f64,
    /// `m(Delta_0) nu(Delta_0)`, the limit of the return masses.
    pub limit: f64,
}

/// Smallest `n0 >= 1` with `m(F^{-n} Delta_0 cap Delta_0) >= gamma0` for all
/// `n0 <= n <= n_probe`, where `gamma0` is half the limit.
pub fn find_n0_gamma0(model: &FiniteTowerModel, n_probe: usize) -> Result<MixingThreshold> {
    let g = model.gcd_r();
    if g > 1 {
        return Err(Error::PeriodicTower { gcd: g });
    }
    let masses = ground_return_masses(model, n_probe);
    let limit = 1.0 / model.mean_return();
    let gamma0 = 0.5 * limit;
    if n_probe == 0 || masses[n_probe] < gamma0 {
        return Err(Error::ProbeTooShort { n_probe });
    }
    let mut n0 = n_probe;
    while n0 > 1 && masses[n0 - 1] >= gamma0 {
        n0 -= 1;
    }
    Ok(MixingThreshold { n0, gamma0, limit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two() -> FiniteTowerModel {
        FiniteTowerModel::new(vec![0.5, 0.5], vec![1, 2]).unwrap()
    }

    #[test]
    fn kac_example() {
        let m = two();
        let nu = invariant_density(&m).unwrap();
        assert!((m.ground_mass(&nu) - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.mass(&nu) - m.ground_mass(&nu) - 1.0 / 3.0).abs() < 1e-15);
        let next = step_density(&m, &nu);
        assert!(m.total_variation(&next, &nu) < 1e-15);
    }

    #[test]
    fn single_branch_is_identity() {
        let m = FiniteTowerModel::new(vec![1.0], vec![1]).unwrap();
        assert_eq!(invariant_density(&m).unwrap().values, vec![1.0]);
        let t = find_n0_gamma0(&m, 10).unwrap();
        assert_eq!(t.n0, 1);
        assert!(ground_return_masses(&m, 10).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn interior_shift_and_periodic_error() {
        let m = FiniteTowerModel::new(vec![0.3, 0.7], vec![2, 5]).unwrap();
        let s = TowerStateIndex {
            branch: 1,
            level: 2,
        };
        let d = step_density(&m, &m.point_mass(s));
        assert_eq!(
            d,
            m.point_mass(TowerStateIndex {
                branch: 1,
                level: 3
            })
        );
        let per = FiniteTowerModel::new(vec![0.3, 0.7], vec![2, 4]).unwrap();
        assert!(matches!(
            invariant_density(&per),
            Err(Error::PeriodicTower { gcd: 2 })
        ));
        assert!(matches!(
            find_n0_gamma0(&per, 50),
            Err(Error::PeriodicTower { .. })
        ));
    }

    #[test]
    fn hat_r_values_and_tail_identity() {
        let m = FiniteTowerModel::new(
            vec![0.1, 0.2, 0.3, 0.05, 0.05, 0.1, 0.1, 0.1],
            vec![5, 1, 3, 8, 2, 7, 4, 6],
        )
        .unwrap();
        assert_eq!(
            hat_r(
                &m,
                TowerStateIndex {
                    branch: 0,
                    level: 0
                }
            ),
            0
        );
        assert_eq!(
            hat_r(
                &m,
                TowerStateIndex {
                    branch: 0,
                    level: 1
                }
            ),
            4
        );
        for n in 0..10 {
            let rhs: f64 = (n + 1..12).map(|l| return_tail(&m, l)).sum();
            assert!(
                (hat_r_tail(&m, n) - rhs).abs() < 1e-14,
                "{} {rhs}",
                hat_r_tail(&m, n)
            );
        }
    }

    /// Probability of being on the ground at time `n` by enumerating the
    /// sequences of returns.
    fn paths(m: &FiniteTowerModel, n: u32) -> f64 {
        if n == 0 {
            return 1.0;
        }
        m.p()
            .iter()
            .zip(m.r())
            .filter(|(_, &r)| r <= n)
            .map(|(p, &r)| p * paths(m, n - r))
            .sum()
    }

    #[test]
    fn return_masses_match_path_enumeration() {
        let m = two();
        let masses = ground_return_masses(&m, 12);
        for n in 0..=12 {
            assert!((masses[n] - paths(&m, n as u32)).abs() < 1e-14);
        }
    }

    #[test]
    fn power_iteration_reaches_kac() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut done = 0;
        while done < 5 {
            let m = FiniteTowerModel::random(&mut rng, 8, 6).unwrap();
            if m.gcd_r() != 1 {
                continue;
            }
            let nu = invariant_density(&m).unwrap();
            let tv = tv_decay(&m, &m.ground_density(), &nu, 1000);
            assert!(tv[1000] < 1e-12, "{}", tv[1000]);
            let t = find_n0_gamma0(&m, 1000).unwrap();
            let masses = ground_return_masses(&m, 1000);
            assert!((masses[1000] / t.limit - 1.0).abs() < 0.01);
            done += 1;
        }
    }

    #[test]
    fn mass_is_conserved() {
        let m = FiniteTowerModel::polynomial(16, 3.0).unwrap();
        let mut d = m.ground_density();
        for _ in 0..10_000 {
            d = step_density(&m, &d);
        }
        assert!((m.mass(&d) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn equal_starts_have_zero_distance() {
        let m = two();
        assert!(tv_decay(&m, &m.ground_density(), &m.ground_density(), 20)
            .iter()
            .all(|&x| x == 0.0));
    }
}
