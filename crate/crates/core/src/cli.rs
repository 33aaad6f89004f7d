//! Command-line driver: one subcommand per pipeline.
//!
//! Settings come from defaults, then an optional `key = value` file, then
//! flags. Every run writes its data files and a `manifest.json` into the
//! output directory; when a run fails the files it created are removed.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::circle_map::CircleMapParams;
use crate::coupling::{
    estimate_t_tail, run_extraction, verify_e1_e4, write_e3_csv, write_extraction_csv,
    ExtractionOptions,
};
use crate::error::{Error, Result};
use crate::induced_scheme::{
    build_base_partition, build_rstar_partition, check_expansion_distortion, delta_sequence,
    write_tails_csv, TailSeries, TruncationOptions,
};
use crate::solenoid::{birkhoff_average, random_point, Observable, SolenoidParams};
use crate::stats::{
    clt_test, correlation, fit_power_law, log_lags, trim_window, CorrelationConfig, Estimator,
    TV_FLOOR,
};
use crate::stream_seed;
use crate::tower::{find_n0_gamma0, invariant_density, tv_decay, write_tv_csv, FiniteTowerModel};

#[derive(Parser, Debug)]
#[command(
    name = "solenoid-tower",
    version,
    about = "Intermittent solenoid and Young-tower experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by all subcommands; each mirrors a key of the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// Config file of `key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub degree: Option<u32>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub orbit_len: Option<usize>,
    #[arg(long, global = true)]
    pub ensemble: Option<usize>,
    #[arg(long, global = true)]
    pub burn_in: Option<usize>,
    #[arg(long, global = true)]
    pub max_time: Option<u32>,
    #[arg(long, global = true)]
    pub min_len: Option<f64>,
    #[arg(long, global = true)]
    pub n_max: Option<usize>,
    /// Override the mixing threshold `n0` of the coupling.
    #[arg(long, global = true)]
    pub n0: Option<usize>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub i_max: Option<usize>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Number of simulated pairs.
    #[arg(long, global = true)]
    pub pairs: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    LongOrbit,
    Ensemble,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Command {
    /// Return-time tails of the base and induced partitions.
    Tails,
    /// Diameters `delta_k` of the cylinders along unstable leaves.
    Diam {
        #[arg(long, default_value_t = 256)]
        k_max: usize,
    },
    /// Correlation function of two observables.
    Correlate {
        #[arg(long, default_value = "cos2pix")]
        phi: String,
        #[arg(long, default_value = "cos2pix")]
        psi: String,
        #[arg(long, default_value_t = 8)]
        lag_min: usize,
        #[arg(long, default_value_t = 256)]
        lag_max: usize,
        #[arg(long, value_enum, default_value_t = EstimatorArg::LongOrbit)]
        estimator: EstimatorArg,
        /// Iterate the full skew product even for observables of `x` alone.
        #[arg(long)]
        full: bool,
    },
    /// Normalized Birkhoff sums against the normal law.
    Clt {
        #[arg(long, default_value = "cos2pix")]
        observable: String,
    },
    /// Exact total variation decay on a polynomial tower.
    TowerTv {
        #[arg(long, default_value_t = 64)]
        branches: usize,
        #[arg(long, default_value_t = 3.0)]
        zeta: f64,
        #[arg(long, default_value_t = 1024)]
        steps: usize,
    },
    /// Simultaneous return times of coupled pairs.
    Couple {
        #[arg(long, default_value_t = 8)]
        branches: usize,
        #[arg(long, default_value_t = 3.0)]
        zeta: f64,
    },
    /// Density extraction and the total variation bound it yields.
    E3Audit {
        #[arg(long, default_value_t = 4)]
        branches: usize,
        #[arg(long, default_value_t = 2.0)]
        zeta: f64,
    },
    /// Birkhoff averages of the distance to the fixed point for `gamma >= 1`.
    Escape {
        #[arg(long, value_delimiter = ',', default_value = "10000,100000,1000000")]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Tails => "tails",
            Command::Diam { .. } => "diam",
            Command::Correlate { .. } => "correlate",
            Command::Clt { .. } => "clt",
            Command::TowerTv { .. } => "tower-tv",
            Command::Couple { .. } => "couple",
            Command::E3Audit { .. } => "e3-audit",
            Command::Escape { .. } => "escape",
        }
    }
}

/// Resolved settings of a run.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ExperimentConfig {
    pub gamma: f64,
    pub degree: u32,
    pub seed: u64,
    pub orbit_len: usize,
    pub ensemble: usize,
    pub burn_in: usize,
    pub max_time: u32,
    pub min_len: f64,
    pub n_max: usize,
    pub n0: Option<usize>,
    pub epsilon: f64,
    pub i_max: usize,
    pub horizon: usize,
    pub pairs: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            degree: 2,
            seed: 1,
            orbit_len: 1_000_000,
            ensemble: 4,
            burn_in: 10_000,
            max_time: 1024,
            min_len: 1e-12,
            n_max: 4096,
            n0: None,
            epsilon: 0.1,
            i_max: 8,
            horizon: 500,
            pairs: 10_000,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidParameter(format!("config key `{key}`: cannot parse `{v}`")))
}

impl ExperimentConfig {
    /// Applies `key = value` lines; `#` starts a comment, and keys may use
    /// `-` or `_`.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let key = k.trim().replace('-', "_");
            let v = v.trim();
            match key.as_str() {
                "gamma" => self.gamma = parse_value(&key, v)?,
                "degree" => self.degree = parse_value(&key, v)?,
                "seed" => self.seed = parse_value(&key, v)?,
                "orbit_len" => self.orbit_len = parse_value(&key, v)?,
                "ensemble" => self.ensemble = parse_value(&key, v)?,
                "burn_in" => self.burn_in = parse_value(&key, v)?,
                "max_time" => self.max_time = parse_value(&key, v)?,
                "min_len" => self.min_len = parse_value(&key, v)?,
                "n_max" => self.n_max = parse_value(&key, v)?,
                "n0" => self.n0 = Some(parse_value(&key, v)?),
                "epsilon" => self.epsilon = parse_value(&key, v)?,
                "i_max" => self.i_max = parse_value(&key, v)?,
                "horizon" => self.horizon = parse_value(&key, v)?,
                "pairs" => self.pairs = parse_value(&key, v)?,
                "out" => self.out = PathBuf::from(v),
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "config line {}: unknown key `{}`",
                        lineno + 1,
                        k.trim()
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn apply_flags(&mut self, a: &CommonArgs) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = a.$f.clone() { self.$f = v; } )* };
        }
        take!(
            gamma, degree, seed, orbit_len, ensemble, burn_in, max_time, min_len, n_max, epsilon,
            i_max, horizon, pairs, out
        );
        if a.n0.is_some() {
            self.n0 = a.n0;
        }
    }

    pub fn resolve(a: &CommonArgs) -> Result<Self> {
        let mut c = Self::default();
        if let Some(path) = &a.config {
            let text = std::fs::read_to_string(path)?;
            c.apply_file(&text)?;
        }
        c.apply_flags(a);
        Ok(c)
    }

    pub fn validate(&self, cmd: &Command) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.degree < 2 {
            return bad(format!("degree must be at least 2, got {}", self.degree));
        }
        let positive = [
            ("orbit-len", self.orbit_len),
            ("ensemble", self.ensemble),
            ("max-time", self.max_time as usize),
            ("n-max", self.n_max),
            ("i-max", self.i_max),
            ("horizon", self.horizon),
            ("pairs", self.pairs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.min_len > 0.0) {
            return bad(format!("min-len must be positive, got {}", self.min_len));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if self.n0 == Some(0) {
            return bad("n0 must be at least 1".into());
        }
        match cmd {
            Command::Tails | Command::Diam { .. } if self.gamma >= 1.0 => bad(format!(
                "the induced scheme needs 0 < gamma < 1, got {} (use `escape` for gamma >= 1)",
                self.gamma
            )),
            Command::Escape { .. } if self.gamma < 1.0 => {
                bad(format!("escape studies gamma >= 1, got {}", self.gamma))
            }
            _ => Ok(()),
        }
    }

    fn circle(&self) -> Result<CircleMapParams> {
        CircleMapParams::new(self.gamma, self.degree)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'static str,
    command: &'a Command,
    config: &'a ExperimentConfig,
    version: &'static str,
    wall_time_s: f64,
    files: Vec<String>,
    summary: serde_json::Value,
}

/// Tracks the files a run creates so they can be removed on failure.
struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let p = self.path(name);
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        std::fs::write(p, s)?;
        Ok(())
    }

    fn cleanup(&self) {
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
    }
}

/// Runs one subcommand and writes its manifest.
pub fn run(cmd: &Command, cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate(cmd)?;
    std::fs::create_dir_all(&cfg.out)?;
    let mut outs = Outputs {
        dir: cfg.out.clone(),
        files: Vec::new(),
    };
    let start = Instant::now();
    let result = dispatch(cmd, cfg, &mut outs).and_then(|summary| {
        let manifest = Manifest {
            subcommand: cmd.name(),
            command: cmd,
            config: cfg,
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: start.elapsed().as_secs_f64(),
            files: outs
                .files
                .iter()
                .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .collect(),
            summary,
        };
        outs.write_json("manifest.json", &manifest)
    });
    if result.is_err() {
        outs.cleanup();
    }
    result
}

fn tower_model(branches: usize, zeta: f64) -> Result<FiniteTowerModel> {
    if branches == 0 || !(zeta > 0.0) {
        return Err(Error::InvalidParameter(
            "branches and zeta must be positive".into(),
        ));
    }
    FiniteTowerModel::polynomial(branches, zeta)
}

fn dispatch(
    cmd: &Command,
    cfg: &ExperimentConfig,
    outs: &mut Outputs,
) -> Result<serde_json::Value> {
    let json = |v: serde_json::Value| Ok(v);
    match cmd {
        Command::Tails => {
            let circle = cfg.circle()?;
            let (_, seq) = build_base_partition(&circle, cfg.n_max)?;
            let base = TailSeries::for_base(&seq);
            let part =
                build_rstar_partition(&circle, TruncationOptions::new(cfg.max_time, cfg.min_len))?;
            write_tails_csv(&outs.path("tails.csv"), &base, &part.tail)?;
            let report = check_expansion_distortion(&circle, &part, 17);
            outs.write_json("scheme_report.json", &report)?;
            let window = (16.0, (cfg.max_time as f64).min(cfg.n_max as f64));
            let slope = |mass: &[f64]| -> Option<f64> {
                let ns: Vec<f64> = (0..mass.len()).map(|n| n as f64).collect();
                fit_power_law(&ns, mass, window).ok().map(|f| f.slope)
            };
            json(serde_json::json!({
                "slope_R": slope(&base.mass),
                "slope_Rstar": slope(&part.tail.mass),
                "truncation_mass": part.tail.truncation_mass,
                "cells": part.cells.len(),
            }))
        }
        Command::Diam { k_max } => {
            let circle = cfg.circle()?;
            let max_time = cfg.max_time.max(2 * *k_max as u32 + 6);
            let part =
                build_rstar_partition(&circle, TruncationOptions::new(max_time, cfg.min_len))?;
            let ks = log_lags(1, *k_max, 4);
            let d = delta_sequence(&circle, &part, &ks)?;
            d.write_csv(&outs.path("delta.csv"))?;
            let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
            let fit = fit_power_law(
                &kf,
                &d.delta,
                (16.0_f64.min(*k_max as f64 / 2.0), *k_max as f64),
            )
            .ok();
            json(serde_json::json!({ "max_time": max_time, "fit": fit }))
        }
        Command::Correlate {
            phi,
            psi,
            lag_min,
            lag_max,
            estimator,
            full,
        } => {
            let phi = Observable::from_name(phi)?;
            let psi = Observable::from_name(psi)?;
            if lag_min > lag_max {
                return Err(Error::InvalidParameter("lag-min exceeds lag-max".into()));
            }
            let params = SolenoidParams::new(cfg.circle()?);
            let lags = log_lags((*lag_min).max(1), *lag_max, 4);
            let c = CorrelationConfig {
                estimator: match estimator {
                    EstimatorArg::LongOrbit => Estimator::LongOrbit,
                    EstimatorArg::Ensemble => Estimator::Ensemble,
                },
                orbit_len: cfg.orbit_len,
                ensemble: cfg.ensemble,
                burn_in: cfg.burn_in,
                seed: cfg.seed,
                quotient: !full && phi.x_only() && psi.x_only(),
            };
            let s = correlation(&params, phi, psi, &lags, &c)?;
            s.write_csv(&outs.path("correlation.csv"))?;
            let ns: Vec<f64> = lags.iter().map(|&n| n as f64).collect();
            let fit = fit_power_law(&ns, &s.c_hat, (*lag_min as f64, *lag_max as f64)).ok();
            json(serde_json::json!({
                "fit": fit,
                "predicted_slope": 1.0 - 1.0 / cfg.gamma,
                "map_evaluations": s.map_evaluations,
            }))
        }
        Command::Clt { observable } => {
            let phi = Observable::from_name(observable)?;
            let params = SolenoidParams::new(cfg.circle()?);
            let rep = clt_test(
                &params,
                phi,
                cfg.ensemble,
                cfg.orbit_len,
                cfg.burn_in,
                cfg.seed,
            )?;
            rep.write_sums_csv(&outs.path("clt.csv"))?;
            outs.write_json("clt_report.json", &rep)?;
            json(serde_json::json!({ "p_value": rep.p_value, "sigma2": rep.sigma2 }))
        }
        Command::TowerTv {
            branches,
            zeta,
            steps,
        } => {
            let model = tower_model(*branches, *zeta)?;
            model.write_csv(&outs.path("tower.csv"))?;
            let nu = invariant_density(&model)?;
            let tv = tv_decay(&model, &model.ground_density(), &nu, *steps);
            write_tv_csv(&outs.path("tv.csv"), &tv)?;
            let ns: Vec<f64> = (0..tv.len()).map(|n| n as f64).collect();
            // Past the largest return time the decay is geometric and the
            // exact curve soon reaches rounding level.
            let window = trim_window(&ns, &tv, (8.0, (*steps as f64 / 4.0).max(16.0)), TV_FLOOR);
            let fit = fit_power_law(&ns, &tv, window).ok();
            json(serde_json::json!({ "fit": fit, "window": window, "predicted_slope": 1.0 - zeta }))
        }
        Command::Couple { branches, zeta } => {
            let model = tower_model(*branches, *zeta)?;
            let n0 = match cfg.n0 {
                Some(n) => n,
                None => find_n0_gamma0(&model, 4 * *branches + 64)?.n0,
            };
            let g = model.ground_density();
            let nu = invariant_density(&model)?;
            let pairs = cfg.pairs.max(1000);
            let tail = estimate_t_tail(&model, &g, &nu, n0, pairs, cfg.horizon, cfg.seed)?;
            tail.write_csv(&outs.path("coupling_tail.csv"))?;
            let e = verify_e1_e4(
                &model,
                &g,
                &nu,
                n0,
                pairs,
                cfg.horizon,
                stream_seed(cfg.seed, 1),
            )?;
            outs.write_json("e1_e4_report.json", &e)?;
            json(serde_json::json!({
                "n0": n0,
                "censored": tail.censored,
                "eps0_hat": e.eps0_hat,
                "k0_hat": e.k0_hat,
                "k2_hat": e.k2_hat,
            }))
        }
        Command::E3Audit { branches, zeta } => {
            let model = tower_model(*branches, *zeta)?;
            let n0 = match cfg.n0 {
                Some(n) => n,
                None => find_n0_gamma0(&model, 4 * *branches + 64)?.n0,
            };
            let mut opts = ExtractionOptions::new(n0, cfg.horizon);
            opts.epsilon = cfg.epsilon;
            opts.i_max = cfg.i_max;
            let rep = run_extraction(
                &model,
                &model.ground_density(),
                &invariant_density(&model)?,
                &opts,
            )?;
            write_e3_csv(&outs.path("e3_check.csv"), &rep.e3)?;
            write_extraction_csv(&outs.path("extraction.csv"), &rep.history)?;
            json(serde_json::json!({
                "n0": n0,
                "epsilon": rep.epsilon,
                "epsilon1_hat": rep.epsilon1_hat,
                "i1": rep.i1,
                "k1": rep.e3.k1,
                "k1_fit": rep.e3.k1_fit,
                "violations": rep.e3.violations,
                "max_matching_defect": rep.max_matching_defect(),
                "max_ledger_error": rep.max_ledger_error(),
            }))
        }
        Command::Escape { lengths, seeds } => {
            let params = SolenoidParams::new(cfg.circle()?);
            let rows = escape_averages(&params, lengths, *seeds, cfg.seed, cfg.burn_in)?;
            let path = outs.path("escape.csv");
            let mut text = String::from("seed,n,average\n");
            for (s, n, v) in &rows {
                text.push_str(&format!("{s},{n},{v:.10e}\n"));
            }
            std::fs::write(path, text)?;
            let monotone = (0..*seeds)
                .filter(|&s| {
                    let v: Vec<f64> = rows.iter().filter(|r| r.0 == s).map(|r| r.2).collect();
                    v.windows(2).all(|w| w[1] < w[0])
                })
                .count();
            json(serde_json::json!({ "monotone_seeds": monotone, "seeds": seeds }))
        }
    }
}

/// `(seed index, n, average of dist_fixed over n steps)` from Lebesgue-random
/// starts.
pub fn escape_averages(
    params: &SolenoidParams,
    lengths: &[usize],
    seeds: u64,
    seed: u64,
    burn_in: usize,
) -> Result<Vec<(u64, usize, f64)>> {
    use rand::SeedableRng;
    let mut rows = Vec::new();
    for s in 0..seeds {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(stream_seed(seed, s));
        let p0 = random_point(&mut rng);
        for &n in lengths {
            rows.push((
                s,
                n,
                birkhoff_average(params, Observable::DistFixed, p0, n, burn_in)?,
            ));
        }
    }
    Ok(rows)
}

/// Parses the process arguments and runs; errors are printed verbatim.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = ExperimentConfig::resolve(&cli.common).and_then(|cfg| run(&cli.command, &cfg));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
