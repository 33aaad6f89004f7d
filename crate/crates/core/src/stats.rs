//! Correlation functions, power-law fits and CLT checks for observables of
//! the solenoid.
//!
//! Observables that depend on `x` alone are evaluated along orbits of the
//! circle map, which is the quotient of the skew product along the stable
//! disks; this skips the vertical coordinates without changing the law of
//! the observable along orbits.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::solenoid::{g_eval, random_point, Observable, Point3, SolenoidParams};
use crate::stream_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Time averages along a few long orbits.
    LongOrbit,
    /// Averages over many independent starts, each followed for
    /// `max(lag)` steps.
    Ensemble,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationConfig {
    pub estimator: Estimator,
    /// Points per orbit for [`Estimator::LongOrbit`].
    pub orbit_len: usize,
    /// Independent orbits (long-orbit) or starts (ensemble).
    pub ensemble: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Iterate the circle map only; both observables must depend on `x`
    /// alone.
    pub quotient: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationSeries {
    pub lags: Vec<usize>,
    /// `|cov(phi o g^n, psi)|`.
    pub c_hat: Vec<f64>,
    pub signed: Vec<f64>,
    /// Jackknife standard errors.
    pub stderr: Vec<f64>,
    pub config: CorrelationConfig,
    pub blocks: usize,
    pub map_evaluations: u64,
}

impl CorrelationSeries {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "n,c_hat,stderr")?;
        for i in 0..self.lags.len() {
            writeln!(
                w,
                "{},{:.10e},{:.10e}",
                self.lags[i], self.c_hat[i], self.stderr[i]
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Orbit of either the skew product or its circle quotient.
struct Walker {
    params: SolenoidParams,
    quotient: bool,
    p: Point3,
}

impl Walker {
    fn start(params: &SolenoidParams, quotient: bool, burn_in: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = random_point(&mut rng);
        if quotient {
            p = Point3::new(p.x, 0.0, 0.0);
        }
        let mut w = Self {
            params: *params,
            quotient,
            p,
        };
        for _ in 0..burn_in {
            w.advance();
        }
        w
    }

    #[inline]
    fn advance(&mut self) {
        if self.quotient {
            self.p.x = self.params.circle.eval(self.p.x);
        } else {
            self.p = g_eval(&self.params, self.p);
        }
    }
}

/// Sums collected per jackknife block.
#[derive(Clone)]
struct Block {
    pairs: Vec<f64>,
    pair_count: Vec<f64>,
    /// For the long-orbit estimator: sums of `phi` and `psi` over the
    /// block. For the ensemble estimator: per lag, sums of `phi(x_n)` and
    /// `psi(x_0)`.
    phi: Vec<f64>,
    psi: Vec<f64>,
    count: f64,
}

impl Block {
    fn new(lags: usize, per_lag: bool) -> Self {
        let k = if per_lag { lags } else { 1 };
        Self {
            pairs: vec![0.0; lags],
            pair_count: vec![0.0; lags],
            phi: vec![0.0; k],
            psi: vec![0.0; k],
            count: 0.0,
        }
    }

    fn add(&mut self, o: &Block) {
        for (a, b) in self.pairs.iter_mut().zip(&o.pairs) {
            *a += b;
        }
        for (a, b) in self.pair_count.iter_mut().zip(&o.pair_count) {
            *a += b;
        }
        for (a, b) in self.phi.iter_mut().zip(&o.phi) {
            *a += b;
        }
        for (a, b) in self.psi.iter_mut().zip(&o.psi) {
            *a += b;
        }
        self.count += o.count;
    }

    fn sub(&self, o: &Block) -> Block {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        Block {
            pairs: d(&self.pairs, &o.pairs),
            pair_count: d(&self.pair_count, &o.pair_count),
            phi: d(&self.phi, &o.phi),
            psi: d(&self.psi, &o.psi),
            count: self.count - o.count,
        }
    }

    fn covariance(&self, li: usize) -> f64 {
        let k = if self.phi.len() == 1 { 0 } else { li };
        let norm = if self.phi.len() == 1 {
            self.count
        } else {
            self.pair_count[li]
        };
        self.pairs[li] / self.pair_count[li] - (self.phi[k] / norm) * (self.psi[k] / norm)
    }
}

fn long_orbit_blocks(
    params: &SolenoidParams,
    phi: Observable,
    psi: Observable,
    lags: &[usize],
    cfg: &CorrelationConfig,
    chain: u64,
) -> Vec<Block> {
    let max_lag = *lags.iter().max().unwrap();
    let block_len = 10 * max_lag.max(1);
    let nblocks = cfg.orbit_len.div_ceil(block_len);
    let mut blocks = vec![Block::new(lags.len(), false); nblocks];
    let mut w = Walker::start(
        params,
        cfg.quotient,
        cfg.burn_in,
        stream_seed(cfg.seed, chain),
    );
    let ring = max_lag + 1;
    let mut psi_hist = vec![0.0; ring];
    for j in 0..cfg.orbit_len {
        let a = phi.eval(&w.p);
        let b = psi.eval(&w.p);
        psi_hist[j % ring] = b;
        let blk = &mut blocks[j / block_len];
        blk.phi[0] += a;
        blk.psi[0] += b;
        blk.count += 1.0;
        for (li, &n) in lags.iter().enumerate() {
            if n <= j {
                // The pair (j - n, j) belongs to the block of its start.
                let start = j - n;
                let blk = &mut blocks[start / block_len];
                blk.pairs[li] += a * psi_hist[start % ring];
                blk.pair_count[li] += 1.0;
            }
        }
        w.advance();
    }
    blocks
}

fn ensemble_block(
    params: &SolenoidParams,
    phi: Observable,
    psi: Observable,
    lags: &[usize],
    cfg: &CorrelationConfig,
    members: std::ops::Range<u64>,
) -> Block {
    let max_lag = *lags.iter().max().unwrap();
    let mut blk = Block::new(lags.len(), true);
    let mut values = vec![0.0; max_lag + 1];
    for k in members {
        let mut w = Walker::start(params, cfg.quotient, cfg.burn_in, stream_seed(cfg.seed, k));
        let b0 = psi.eval(&w.p);
        for v in values.iter_mut() {
            *v = phi.eval(&w.p);
            w.advance();
        }
        for (li, &n) in lags.iter().enumerate() {
            blk.pairs[li] += values[n] * b0;
            blk.pair_count[li] += 1.0;
            blk.phi[li] += values[n];
            blk.psi[li] += b0;
        }
        blk.count += 1.0;
    }
    blk
}

/// Estimates `|int (phi o g^n) psi dmu - int phi dmu int psi dmu|` for each
/// lag, with block-jackknife standard errors.
pub fn correlation(
    params: &SolenoidParams,
    phi: Observable,
    psi: Observable,
    lags: &[usize],
    cfg: &CorrelationConfig,
) -> Result<CorrelationSeries> {
    if lags.is_empty() {
        return Err(Error::InvalidParameter("no lags requested".into()));
    }
    if lags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "lags must be strictly increasing".into(),
        ));
    }
    if cfg.quotient && !(phi.x_only() && psi.x_only()) {
        return Err(Error::InvalidParameter(
            "the quotient estimator needs observables of x alone".into(),
        ));
    }
    if cfg.ensemble == 0 {
        return Err(Error::InvalidParameter(
            "ensemble size must be positive".into(),
        ));
    }
    let max_lag = *lags.last().unwrap();
    let (blocks, evaluations) = match cfg.estimator {
        Estimator::LongOrbit => {
            if cfg.orbit_len < 100 * max_lag.max(1) {
                return Err(Error::SeriesTooShort {
                    len: cfg.orbit_len,
                    max_lag,
                });
            }
            let blocks: Vec<Block> = (0..cfg.ensemble as u64)
                .into_par_iter()
                .flat_map_iter(|c| long_orbit_blocks(params, phi, psi, lags, cfg, c))
                .collect();
            let evals = cfg.ensemble as u64 * (cfg.orbit_len + cfg.burn_in) as u64;
            (blocks, evals)
        }
        Estimator::Ensemble => {
            let groups = cfg.ensemble.min(100) as u64;
            let m = cfg.ensemble as u64;
            let blocks: Vec<Block> = (0..groups)
                .into_par_iter()
                .map(|g| {
                    ensemble_block(
                        params,
                        phi,
                        psi,
                        lags,
                        cfg,
                        g * m / groups..(g + 1) * m / groups,
                    )
                })
                .collect();
            let evals = m * (cfg.burn_in + max_lag + 1) as u64;
            (blocks, evals)
        }
    };

    let per_lag = matches!(cfg.estimator, Estimator::Ensemble);
    let mut total = Block::new(lags.len(), per_lag);
    for b in &blocks {
        total.add(b);
    }
    let nb = blocks.len() as f64;
    let mut signed = Vec::with_capacity(lags.len());
    let mut stderr = Vec::with_capacity(lags.len());
    for li in 0..lags.len() {
        let full = total.covariance(li);
        let loo: Vec<f64> = blocks.iter().map(|b| total.sub(b).covariance(li)).collect();
        let mean = loo.iter().sum::<f64>() / nb;
        let var = (nb - 1.0) / nb * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        signed.push(full);
        stderr.push(var.sqrt());
    }
    Ok(CorrelationSeries {
        lags: lags.to_vec(),
        c_hat: signed.iter().map(|v| v.abs()).collect(),
        signed,
        stderr,
        config: cfg.clone(),
        blocks: blocks.len(),
        map_evaluations: evaluations,
    })
}

/// Roughly log-spaced integers in `[lo, hi]`, `per_octave` per doubling.
pub fn log_lags(lo: usize, hi: usize, per_octave: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let steps = ((hi as f64 / lo as f64).log2() * per_octave as f64).round() as usize;
    for i in 0..=steps {
        let v = (lo as f64 * 2f64.powf(i as f64 / per_octave as f64)).round() as usize;
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub r2: f64,
    pub points: usize,
}

/// Level below which exact total variation curves are rounding noise.
pub const TV_FLOOR: f64 = 1e-14;

/// Shrinks `window` so that it ends before the first value at or below
/// `floor`, e.g. where an exact curve has reached rounding level.
pub fn trim_window(ns: &[f64], values: &[f64], window: (f64, f64), floor: f64) -> (f64, f64) {
    let mut hi = window.0;
    for (&n, &v) in ns.iter().zip(values) {
        if n < window.0 {
            continue;
        }
        if n > window.1 || !(v > floor) {
            break;
        }
        hi = n;
    }
    (window.0, hi)
}

/// Least squares on `(log n, log v)` over `lo <= n <= hi`.
pub fn fit_power_law(ns: &[f64], values: &[f64], window: (f64, f64)) -> Result<FitResult> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&n, &v) in ns.iter().zip(values) {
        if n < window.0 || n > window.1 {
            continue;
        }
        if !(v > 0.0) {
            return Err(Error::NonpositiveValues { n, value: v });
        }
        xs.push(n.ln());
        ys.push(v.ln());
    }
    let k = xs.len();
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "window [{}, {}] holds {k} points",
            window.0, window.1
        )));
    }
    let kf = k as f64;
    let mx = xs.iter().sum::<f64>() / kf;
    let my = ys.iter().sum::<f64>() / kf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = if k > 2 {
        (sse / (kf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(FitResult {
        slope,
        intercept,
        stderr,
        window,
        r2,
        points: k,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    /// Green-Kubo variance.
    pub sigma2: f64,
    /// Last autocovariance lag included.
    pub gk_lag: usize,
    pub mean: f64,
    pub ks: f64,
    pub p_value: f64,
    pub m: usize,
    pub n: usize,
    pub flags: Vec<String>,
    /// `S_n / sqrt(n)` per ensemble member.
    #[serde(skip)]
    pub sums: Vec<f64>,
}

impl CltReport {
    pub fn write_sums_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "member,normalized_sum")?;
        for (i, s) in self.sums.iter().enumerate() {
            writeln!(w, "{i},{s:.10e}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }
}

/// `P{K > lambda}` for the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against `Normal(0, sigma)`, with
/// Stephens' small-sample correction. Returns `(D, p)`.
pub fn ks_normal(samples: &[f64], sigma: f64) -> Result<(f64, f64)> {
    let normal =
        Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(format!("normal law: {e}")))?;
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m);
    }
    let root = m.sqrt();
    Ok((d, kolmogorov_q((root + 0.12 + 0.11 / root) * d)))
}

/// Green-Kubo variance of centred series: `gamma(0) + 2 sum_{k<=K} gamma(k)`,
/// with `K` the first lag whose autocovariance is within two standard
/// errors of zero. Returns `(sigma2, K)`.
pub fn green_kubo(series: &[Vec<f64>]) -> (f64, usize) {
    let m = series.len();
    let n = series.iter().map(|s| s.len()).min().unwrap_or(0);
    let per_member = |k: usize| -> Vec<f64> {
        series
            .par_iter()
            .map(|s| {
                let mut acc = 0.0;
                for j in 0..n - k {
                    acc += s[j] * s[j + k];
                }
                acc / (n - k) as f64
            })
            .collect()
    };
    let mean_se = |v: &[f64]| -> (f64, f64) {
        let mf = v.len() as f64;
        let mean = v.iter().sum::<f64>() / mf;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (mf - 1.0).max(1.0);
        (mean, (var / mf).sqrt())
    };
    let (g0, _) = mean_se(&per_member(0));
    let mut sigma2 = g0;
    let k_max = (n / 10).max(1);
    let mut k_used = 0;
    for k in 1..=k_max {
        let (g, se) = mean_se(&per_member(k));
        sigma2 += 2.0 * g;
        k_used = k;
        if g.abs() < 2.0 * se || m < 2 {
            break;
        }
    }
    (sigma2, k_used)
}

/// Centres by the ensemble mean, estimates the variance, and runs the KS
/// test on `S_n / sqrt(n)`.
pub fn clt_from_series(series: Vec<Vec<f64>>) -> Result<CltReport> {
    let m = series.len();
    let n = series.first().map_or(0, |s| s.len());
    if m < 2 || n < 2 || series.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidParameter(
            "need at least two series of equal length".into(),
        ));
    }
    let mean = series.iter().map(|s| s.iter().sum::<f64>()).sum::<f64>() / (m * n) as f64;
    let centred: Vec<Vec<f64>> = series
        .into_iter()
        .map(|s| s.into_iter().map(|v| v - mean).collect())
        .collect();
    let (sigma2, gk_lag) = green_kubo(&centred);
    if !(sigma2 >= 1e-10) {
        return Err(Error::DegenerateVariance { sigma2 });
    }
    let root = (n as f64).sqrt();
    let sums: Vec<f64> = centred
        .iter()
        .map(|s| s.iter().sum::<f64>() / root)
        .collect();
    let (ks, p_value) = ks_normal(&sums, sigma2.sqrt())?;
    Ok(CltReport {
        sigma2,
        gk_lag,
        mean,
        ks,
        p_value,
        m,
        n,
        flags: Vec::new(),
        sums,
    })
}

/// CLT check for `phi` over `m` Lebesgue-random starts followed for `n`
/// steps after `burn_in`.
pub fn clt_test(
    params: &SolenoidParams,
    phi: Observable,
    m: usize,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<CltReport> {
    if m < 500 || n < 1000 {
        return Err(Error::InvalidParameter(format!(
            "need M >= 500 and n >= 1000, got M = {m}, n = {n}"
        )));
    }
    let quotient = phi.x_only();
    let series: Vec<Vec<f64>> = (0..m as u64)
        .into_par_iter()
        .map(|k| {
            let mut w = Walker::start(params, quotient, burn_in, stream_seed(seed, k));
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(phi.eval(&w.p));
                w.advance();
            }
            v
        })
        .collect();
    let mut rep = clt_from_series(series)?;
    if params.circle.gamma() >= 0.5 {
        rep.flags.push(format!(
            "outside the CLT regime: gamma = {} >= 1/2, so the return-time tail exponent 1/gamma <= 2",
            params.circle.gamma()
        ));
    }
    Ok(rep)
}

/// The same pipeline fed with i.i.d. standard normals.
pub fn clt_iid_control(m: usize, n: usize, seed: u64) -> Result<CltReport> {
    let series: Vec<Vec<f64>> = (0..m as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, k));
            (0..n)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect()
        })
        .collect();
    clt_from_series(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle_map::CircleMapParams;

    fn params(gamma: f64) -> SolenoidParams {
        SolenoidParams::new(CircleMapParams::new(gamma, 2).unwrap())
    }

    fn cfg(estimator: Estimator, orbit_len: usize, ensemble: usize) -> CorrelationConfig {
        CorrelationConfig {
            estimator,
            orbit_len,
            ensemble,
            burn_in: 1000,
            seed: 3,
            quotient: true,
        }
    }

    #[test]
    fn exact_power_law_slopes() {
        let ns: Vec<f64> = (1..=1024).map(|n| n as f64).collect();
        let v: Vec<f64> = ns.iter().map(|n| n.powi(-2)).collect();
        let f = fit_power_law(&ns, &v, (1.0, 1024.0)).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-9);
        let v7: Vec<f64> = v.iter().map(|x| 7.5 * x).collect();
        let g = fit_power_law(&ns, &v7, (1.0, 1024.0)).unwrap();
        assert!((g.slope - f.slope).abs() < 1e-9);
        let w: Vec<f64> = ns
            .iter()
            .map(|n| n.powi(-2) * (1.0 + 0.1 * n.sin()))
            .collect();
        let h = fit_power_law(&ns, &w, (16.0, 1024.0)).unwrap();
        assert!((h.slope + 2.0).abs() < 0.05);
        let mut bad = v.clone();
        bad[20] = 0.0;
        assert!(matches!(
            fit_power_law(&ns, &bad, (1.0, 1024.0)),
            Err(Error::NonpositiveValues { .. })
        ));
    }

    #[test]
    fn constant_observable_has_no_correlation() {
        let mut c = cfg(Estimator::LongOrbit, 20_000, 2);
        c.quotient = false;
        for (a, b) in [
            (Observable::DistFixed, Observable::One),
            (Observable::One, Observable::LipschitzXy),
        ] {
            let s = correlation(&params(0.5), a, b, &[0, 1, 5, 50], &c).unwrap();
            for i in 0..4 {
                assert!(
                    s.c_hat[i] <= 3.0 * s.stderr[i] + 1e-12,
                    "{i}: {} {}",
                    s.c_hat[i],
                    s.stderr[i]
                );
            }
        }
    }

    #[test]
    fn lag_zero_is_the_variance_and_symmetric() {
        let c = cfg(Estimator::LongOrbit, 50_000, 2);
        let p = params(0.5);
        let a = correlation(
            &p,
            Observable::Cos2pix,
            Observable::IndicatorHalfcircle,
            &[0, 3],
            &c,
        )
        .unwrap();
        let b = correlation(
            &p,
            Observable::IndicatorHalfcircle,
            Observable::Cos2pix,
            &[0, 3],
            &c,
        )
        .unwrap();
        assert!((a.signed[0] - b.signed[0]).abs() < 1e-12);
        let v = correlation(&p, Observable::Cos2pix, Observable::Cos2pix, &[0], &c).unwrap();
        assert!(v.signed[0] > 0.0);
    }

    #[test]
    fn short_series_is_rejected() {
        let c = cfg(Estimator::LongOrbit, 1000, 1);
        let e = correlation(
            &params(0.5),
            Observable::Cos2pix,
            Observable::Cos2pix,
            &[64],
            &c,
        );
        assert!(matches!(e, Err(Error::SeriesTooShort { .. })));
        let e = correlation(
            &params(0.5),
            Observable::DistFixed,
            Observable::Cos2pix,
            &[1],
            &c,
        );
        assert!(matches!(e, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn estimators_agree() {
        let p = params(0.5);
        let lags = [1, 4, 16, 64];
        let a = correlation(
            &p,
            Observable::Cos2pix,
            Observable::Cos2pix,
            &lags,
            &cfg(Estimator::LongOrbit, 400_000, 4),
        )
        .unwrap();
        let b = correlation(
            &p,
            Observable::Cos2pix,
            Observable::Cos2pix,
            &lags,
            &cfg(Estimator::Ensemble, 0, 20_000),
        )
        .unwrap();
        for i in 0..lags.len() {
            let se = (a.stderr[i].powi(2) + b.stderr[i].powi(2)).sqrt();
            assert!(
                (a.signed[i] - b.signed[i]).abs() < 3.0 * se + 1e-4,
                "lag {}",
                lags[i]
            );
        }
    }

    #[test]
    fn kolmogorov_tail() {
        assert_eq!(kolmogorov_q(0.1), 1.0);
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn zero_observable_is_degenerate() {
        let e = clt_from_series(vec![vec![0.0; 100]; 10]);
        assert!(matches!(e, Err(Error::DegenerateVariance { .. })));
    }

    #[test]
    fn green_kubo_ignores_constant_shift() {
        let series: Vec<Vec<f64>> = (0..50u64)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(k);
                (0..500).map(|_| rng.random::<f64>()).collect()
            })
            .collect();
        let shifted: Vec<Vec<f64>> = series
            .iter()
            .map(|s| s.iter().map(|v| v + 3.0).collect())
            .collect();
        let a = clt_from_series(series).unwrap();
        let b = clt_from_series(shifted).unwrap();
        assert!((a.sigma2 - b.sigma2).abs() < 1e-9);
        assert!((a.sigma2 - 1.0 / 12.0).abs() < 0.02);
    }

    #[test]
    fn iid_control_passes() {
        let r = clt_iid_control(500, 1000, 1).unwrap();
        assert!(r.p_value > 0.01);
        assert!((r.sigma2 - 1.0).abs() < 0.05);
    }

    #[test]
    fn clt_flags_large_gamma() {
        let r = clt_test(&params(0.6), Observable::Cos2pix, 500, 1000, 100, 1).unwrap();
        assert_eq!(r.flags.len(), 1);
        assert!(clt_test(&params(0.4), Observable::Cos2pix, 10, 1000, 0, 1).is_err());
    }

    #[test]
    fn log_lags_are_increasing() {
        let l = log_lags(8, 256, 4);
        assert_eq!(l[0], 8);
        assert_eq!(*l.last().unwrap(), 256);
        assert!(l.windows(2).all(|w| w[1] > w[0]));
    }
}
