//! Seeded simulation suites writing one tidy row per (cell, replicate) and a summary.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::decomp::{self, start_seed, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::links::{LinkFamily, LinkSpec};
use crate::sim::{self, metrics, BlockMeanModel, BlockModelSpec, BooleanModelSpec};
use crate::tensor::{loss, BinaryTensor, DenseTensor};

use super::io::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Consistency,
    Dithering,
    RankTable,
    BlockTable,
    BooleanCompare,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Consistency,
        Suite::Dithering,
        Suite::RankTable,
        Suite::BlockTable,
        Suite::BooleanCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Consistency => "consistency",
            Suite::Dithering => "dithering",
            Suite::RankTable => "rank_table",
            Suite::BlockTable => "block_table",
            Suite::BooleanCompare => "boolean_compare",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment `{s}`")))
    }
}

/// Optimizer settings shared by every suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    pub n_starts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub alpha: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            n_starts: 3,
            max_iters: 100,
            tol: 1e-4,
            alpha: f64::INFINITY,
        }
    }
}

impl FitSettings {
    fn config(&self, rank: usize, link: LinkSpec, seed: u64) -> Result<FitConfig> {
        let mut cfg = FitConfig::new(rank, link);
        cfg.n_starts = self.n_starts;
        cfg.max_iters = self.max_iters;
        cfg.tol = self.tol;
        cfg.alpha = self.alpha;
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// How the binary tensor is drawn from the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// `1{Θ + E ≥ 0}` with noise from the generating link.
    Threshold,
    /// Independent `Bernoulli(f(θ))` cells.
    Bernoulli,
}

/// CP-signal grid used by `consistency`, `dithering` and `rank_table`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpGridConfig {
    /// Cubic tensors `d × d × d`.
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub log10_sigmas: Vec<f64>,
    pub gen_link: String,
    /// Defaults to the generating link.
    pub fit_link: Option<String>,
    /// Defaults to the generating noise level.
    pub fit_sigma: Option<f64>,
    pub sampling: Sampling,
    /// BIC search over `max(1, R − w) ..= R + w`; 0 fits at the true rank.
    pub rank_window: usize,
    pub n_sim: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub fit: FitSettings,
}

impl CpGridConfig {
    pub fn defaults(suite: Suite) -> Self {
        let base = Self {
            dims: vec![20, 30, 40, 50, 60],
            ranks: vec![1, 3, 5],
            log10_sigmas: vec![-0.5],
            gen_link: "probit".into(),
            fit_link: None,
            fit_sigma: None,
            sampling: Sampling::Threshold,
            rank_window: 0,
            n_sim: 30,
            seed: 2020,
            fit: FitSettings {
                alpha: 2.0,
                ..FitSettings::default()
            },
        };
        match suite {
            Suite::Dithering => Self {
                dims: vec![50],
                log10_sigmas: (0..8).map(|i| -3.0 + 0.5 * i as f64).collect(),
                ..base
            },
            Suite::RankTable => Self {
                dims: vec![20, 40, 60],
                ranks: vec![5, 10, 20, 40],
                log10_sigmas: vec![-1.0, -2.0],
                gen_link: "logistic".into(),
                sampling: Sampling::Bernoulli,
                rank_window: 5,
                fit: FitSettings::default(),
                ..base
            },
            _ => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub dims: Vec<usize>,
    pub models: Vec<String>,
    pub n_blocks: usize,
    pub fit_link: String,
    pub fit_sigma: f64,
    pub rank_min: usize,
    pub rank_max: usize,
    pub n_sim: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub fit: FitSettings,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            dims: vec![20, 30, 40, 50, 60],
            models: ["additive", "multiplicative", "combinatorial"].map(String::from).to_vec(),
            n_blocks: 5,
            fit_link: "logistic".into(),
            fit_sigma: 1.0,
            rank_min: 1,
            rank_max: 8,
            n_sim: 30,
            seed: 2020,
            // rank-1 fits leave the origin slowly; 1e-4 stops them on that plateau
            fit: FitSettings {
                tol: 1e-5,
                ..FitSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BooleanConfig {
    pub dims: Vec<usize>,
    pub boolean_ranks: Vec<usize>,
    pub flip_prob: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub fit_link: String,
    pub fit_sigma: f64,
    /// When both are set the fit rank is chosen by BIC over this range; otherwise
    /// the fit uses the boolean rank.
    pub rank_min: Option<usize>,
    pub rank_max: Option<usize>,
    pub n_sim: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub fit: FitSettings,
}

impl Default for BooleanConfig {
    fn default() -> Self {
        Self {
            dims: vec![50],
            boolean_ranks: vec![10, 15, 20, 25, 30],
            flip_prob: 0.1,
            beta_a: 2.0,
            beta_b: 4.0,
            fit_link: "logistic".into(),
            fit_sigma: 1.0,
            rank_min: None,
            rank_max: None,
            n_sim: 30,
            seed: 2020,
            fit: FitSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Settings {
    CpGrid(Suite, CpGridConfig),
    Block(BlockConfig),
    Boolean(BooleanConfig),
}

impl Settings {
    pub fn suite(&self) -> Suite {
        match self {
            Settings::CpGrid(s, _) => *s,
            Settings::Block(_) => Suite::BlockTable,
            Settings::Boolean(_) => Suite::BooleanCompare,
        }
    }

    pub fn defaults(suite: Suite) -> Self {
        match suite {
            Suite::BlockTable => Settings::Block(BlockConfig::default()),
            Suite::BooleanCompare => Settings::Boolean(BooleanConfig::default()),
            s => Settings::CpGrid(s, CpGridConfig::defaults(s)),
        }
    }
}

/// One replicate of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub cell: Vec<(&'static str, String)>,
    pub replicate: usize,
    pub seed: u64,
    pub metrics: Vec<(&'static str, f64)>,
}

impl Replicate {
    pub fn key(&self, name: &str) -> Option<&str> {
        self.cell.iter().find(|(k, _)| *k == name).map(|(_, v)| v.as_str())
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub cell: Vec<(&'static str, String)>,
    pub metric: &'static str,
    pub n: usize,
    pub mean: f64,
    /// Standard error of the mean; zero for a single replicate.
    pub se: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub suite: Suite,
    pub rows: Vec<Replicate>,
}

impl Report {
    /// Mean of `metric` over the rows accepted by `keep`.
    pub fn mean(&self, metric: &str, keep: impl Fn(&Replicate) -> bool) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| keep(r))
            .filter_map(|r| r.metric(metric))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Per-cell means and standard errors, cells in first-appearance order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut order: Vec<&Vec<(&'static str, String)>> = Vec::new();
        let mut groups: BTreeMap<usize, Vec<&Replicate>> = BTreeMap::new();
        for r in &self.rows {
            let i = match order.iter().position(|c| **c == r.cell) {
                Some(i) => i,
                None => {
                    order.push(&r.cell);
                    order.len() - 1
                }
            };
            groups.entry(i).or_default().push(r);
        }
        let mut out = Vec::new();
        for (i, reps) in groups {
            for &(metric, _) in &reps[0].metrics {
                let v: Vec<f64> = reps.iter().filter_map(|r| r.metric(metric)).collect();
                let n = v.len();
                let mean = v.iter().sum::<f64>() / n as f64;
                let se = if n > 1 {
                    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (var / n as f64).sqrt()
                } else {
                    0.0
                };
                out.push(SummaryRow {
                    cell: order[i].clone(),
                    metric,
                    n,
                    mean,
                    se,
                });
            }
        }
        out
    }

    /// Writes `<suite>_tidy.csv` and `<suite>_summary.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let tidy = dir.join(format!("{}_tidy.csv", self.suite));
        let summary = dir.join(format!("{}_summary.csv", self.suite));
        let mut w = csv::Writer::from_path(&tidy)?;
        if let Some(first) = self.rows.first() {
            let mut header = vec!["suite"];
            header.extend(first.cell.iter().map(|(k, _)| *k));
            header.extend(["replicate", "seed"]);
            header.extend(first.metrics.iter().map(|(k, _)| *k));
            w.write_record(&header)?;
        }
        for r in &self.rows {
            let mut rec = vec![self.suite.to_string()];
            rec.extend(r.cell.iter().map(|(_, v)| v.clone()));
            rec.push(r.replicate.to_string());
            rec.push(r.seed.to_string());
            rec.extend(r.metrics.iter().map(|&(_, v)| fmt_f64(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        let rows = self.summary();
        let mut w = csv::Writer::from_path(&summary)?;
        if let Some(first) = rows.first() {
            let mut header = vec!["suite"];
            header.extend(first.cell.iter().map(|(k, _)| *k));
            header.extend(["metric", "n", "mean", "se"]);
            w.write_record(&header)?;
        }
        for r in &rows {
            let mut rec = vec![self.suite.to_string()];
            rec.extend(r.cell.iter().map(|(_, v)| v.clone()));
            rec.extend([r.metric.to_string(), r.n.to_string(), fmt_f64(r.mean), fmt_f64(r.se)]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok((tidy, summary))
    }
}

/// Data seed of replicate `rep` in grid cell `cell`.
pub fn replicate_seed(base: u64, cell: usize, rep: usize) -> u64 {
    start_seed(start_seed(base, cell + 1), rep + 1)
}

pub fn run_suite(settings: &Settings) -> Result<Report> {
    let rows = match settings {
        Settings::CpGrid(_, c) => run_cp_grid(c)?,
        Settings::Block(c) => run_block(c)?,
        Settings::Boolean(c) => run_boolean(c)?,
    };
    Ok(Report {
        suite: settings.suite(),
        rows,
    })
}

fn link(name: &str, sigma: f64) -> Result<LinkSpec> {
    LinkSpec::new(name.parse::<LinkFamily>()?, sigma)
}

fn check_nonempty(what: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument(format!("`{what}` must not be empty or zero")));
    }
    Ok(())
}

/// Fits at `rank`, or selects by BIC when `range` is given; returns the fit and wall time.
fn fit_or_select(y: &BinaryTensor, cfg: &FitConfig, range: Option<(usize, usize)>) -> Result<(FitResult, f64)> {
    let t = Instant::now();
    let fit = match range {
        None => decomp::fit(y, cfg)?,
        Some((lo, hi)) => decomp::select_rank(y, cfg, lo, hi)?.best_fit,
    };
    Ok((fit, t.elapsed().as_secs_f64()))
}

fn fit_metrics(fit: &FitResult, seconds: f64) -> Vec<(&'static str, f64)> {
    vec![
        ("selected_rank", fit.factors.rank() as f64),
        ("final_loglik", fit.final_loglik),
        ("n_iterations", fit.n_iterations as f64),
        ("converged", if fit.converged { 1.0 } else { 0.0 }),
        ("seconds", seconds),
    ]
}

/// Runs `job` over every (cell, replicate) pair; rows come back in (cell, replicate) order.
fn run_jobs<C: Sync>(
    cells: &[C],
    n_sim: usize,
    base_seed: u64,
    job: impl Fn(&C, u64) -> Result<(Vec<(&'static str, String)>, Vec<(&'static str, f64)>)> + Sync,
) -> Result<Vec<Replicate>> {
    check_nonempty("n_sim", n_sim)?;
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..n_sim).map(move |r| (c, r)))
        .collect();
    jobs.par_iter()
        .map(|&(c, rep)| {
            let seed = replicate_seed(base_seed, c, rep);
            let (cell, metrics) = job(&cells[c], seed)?;
            Ok(Replicate {
                cell,
                replicate: rep,
                seed,
                metrics,
            })
        })
        .collect()
}

fn run_cp_grid(c: &CpGridConfig) -> Result<Vec<Replicate>> {
    check_nonempty("dims", c.dims.len())?;
    check_nonempty("ranks", c.ranks.len())?;
    check_nonempty("log10_sigmas", c.log10_sigmas.len())?;
    let mut cells = Vec::new();
    for &d in &c.dims {
        for &r in &c.ranks {
            check_nonempty("ranks", r)?;
            for &ls in &c.log10_sigmas {
                cells.push((d, r, ls));
            }
        }
    }
    let fit_name = c.fit_link.clone().unwrap_or_else(|| c.gen_link.clone());
    run_jobs(&cells, c.n_sim, c.seed, |&(d, r, ls), seed| {
        let sigma = 10f64.powf(ls);
        let gen = link(&c.gen_link, sigma)?;
        let fit_link = link(&fit_name, c.fit_sigma.unwrap_or(sigma))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = sim::gen_cp_signal(&[d, d, d], r, &mut rng)?;
        let y = match c.sampling {
            Sampling::Threshold => sim::quantize_latent(&theta, &gen, &mut rng)?,
            Sampling::Bernoulli => sim::sample_bernoulli(&theta, &gen, &mut rng)?,
        };
        let cfg = c.fit.config(r, fit_link, seed)?;
        let range = (c.rank_window > 0).then(|| (r.saturating_sub(c.rank_window).max(1), r + c.rank_window));
        let (fit, secs) = fit_or_select(&y, &cfg, range)?;
        let mut m = vec![
            ("loss", loss(&fit.theta_hat, &theta)?),
            ("loglik_true", decomp::log_likelihood(&y, &theta, &fit_link)?),
        ];
        m.extend(fit_metrics(&fit, secs));
        let cell = vec![
            ("d", d.to_string()),
            ("rank", r.to_string()),
            ("log10_sigma", ls.to_string()),
            ("gen_link", gen.family().to_string()),
            ("fit_link", fit_link.family().to_string()),
        ];
        Ok((cell, m))
    })
}

/// `Φ⁻¹(f(θ))`: the fitted tensor mapped onto the probit scale.
pub fn to_probit_scale(theta: &DenseTensor, link: &LinkSpec) -> DenseTensor {
    if link.family() == LinkFamily::Probit {
        return theta.scale(1.0 / link.sigma());
    }
    let n = Normal::standard();
    theta.map(|t| n.inverse_cdf(link.f(t).clamp(1e-300, 1.0 - 1e-16)))
}

fn run_block(c: &BlockConfig) -> Result<Vec<Replicate>> {
    check_nonempty("dims", c.dims.len())?;
    let models = c
        .models
        .iter()
        .map(|m| m.parse::<BlockMeanModel>())
        .collect::<Result<Vec<_>>>()?;
    check_nonempty("models", models.len())?;
    let fit_link = link(&c.fit_link, c.fit_sigma)?;
    let cells: Vec<(BlockMeanModel, usize)> = models
        .iter()
        .flat_map(|&m| c.dims.iter().map(move |&d| (m, d)))
        .collect();
    run_jobs(&cells, c.n_sim, c.seed, |&(model, d), seed| {
        let spec = BlockModelSpec {
            dims: vec![d, d, d],
            n_blocks: c.n_blocks,
            mean_model: model,
            seed,
        };
        let s = spec.generate()?;
        let cfg = c.fit.config(c.rank_min, fit_link, seed)?;
        let (fit, secs) = fit_or_select(&s.y, &cfg, Some((c.rank_min, c.rank_max)))?;
        let est = decomp::predict_proba(&fit, &fit_link);
        let mut m = vec![
            ("relative_loss", metrics::relative_loss(&to_probit_scale(&fit.theta_hat, &fit_link), &s.latent)?),
            ("rmse", metrics::rmse(&est, &s.prob)?),
        ];
        m.extend(fit_metrics(&fit, secs));
        Ok((vec![("model", model.to_string()), ("d", d.to_string())], m))
    })
}

fn run_boolean(c: &BooleanConfig) -> Result<Vec<Replicate>> {
    check_nonempty("dims", c.dims.len())?;
    check_nonempty("boolean_ranks", c.boolean_ranks.len())?;
    let fit_link = link(&c.fit_link, c.fit_sigma)?;
    let range = match (c.rank_min, c.rank_max) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => {
            return Err(Error::InvalidArgument(
                "rank_min and rank_max must be given together".into(),
            ))
        }
    };
    let cells: Vec<(usize, usize)> = c
        .dims
        .iter()
        .flat_map(|&d| c.boolean_ranks.iter().map(move |&r| (d, r)))
        .collect();
    run_jobs(&cells, c.n_sim, c.seed, |&(d, r), seed| {
        let spec = BooleanModelSpec {
            dims: vec![d, d, d],
            boolean_rank: r,
            beta_params: (c.beta_a, c.beta_b),
            flip_prob: c.flip_prob,
            seed,
        };
        let s = spec.generate()?;
        let cfg = c.fit.config(range.map_or(r, |(lo, _)| lo), fit_link, seed)?;
        let (fit, secs) = fit_or_select(&s.y, &cfg, range)?;
        let est = decomp::predict_proba(&fit, &fit_link);
        let mean_prob = s.prob.values().iter().sum::<f64>() / s.prob.len() as f64;
        let mut m = vec![
            ("rmse", metrics::rmse(&est, &s.prob)?),
            ("mer", metrics::mer(&est, &s.prob)?),
            ("mean_prob", mean_prob),
        ];
        m.extend(fit_metrics(&fit, secs));
        Ok((vec![("d", d.to_string()), ("boolean_rank", r.to_string())], m))
    })
}
