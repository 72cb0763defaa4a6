//! Command-line front end: file I/O, the four subcommands and the experiment suites.

pub mod config;
pub mod experiment;
pub mod io;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decomp::{self, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::links::{LinkFamily, LinkSpec};
use crate::sim::metrics::auc;
use crate::tensor::{BinaryTensor, ObservationMask};

use self::io::{Absent, FactorFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit code for a failed command: 3 for numerical failures, 2 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

#[derive(Debug, Parser)]
#[command(name = "bintensor", version, about = "Binary tensor decomposition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a rank-R decomposition and write the factors.
    Decompose(DecomposeArgs),
    /// Fit a range of ranks and pick the BIC minimizer.
    SelectRank(SelectRankArgs),
    /// Fit on a training mask and score held-out cells.
    Complete(CompleteArgs),
    /// Run one of the simulation suites from a config file.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Tensor file (dense or sparse text format).
    pub input: PathBuf,
    #[arg(long, default_value = "logistic")]
    pub link: LinkFamily,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Max-norm bound on the fitted tensor.
    #[arg(long, default_value_t = f64::INFINITY)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iters: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub starts: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// How cells missing from a sparse file are treated.
    #[arg(long, value_enum, default_value_t = Absent::Mask)]
    pub absent: Absent,
}

impl FitArgs {
    pub fn config(&self, rank: usize) -> Result<FitConfig> {
        let mut cfg = FitConfig::new(rank, LinkSpec::new(self.link, self.sigma)?);
        cfg.alpha = self.alpha;
        cfg.tol = self.tol;
        cfg.max_iters = self.max_iters as usize;
        cfg.n_starts = self.starts as usize;
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rank: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SelectRankArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rmin: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rmax: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompleteArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rank: u64,
    /// Holdout fraction in (0, 1), or a tensor file listing the held-out cells.
    #[arg(long)]
    pub holdout: String,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// consistency, dithering, rank_table, block_table or boolean_compare
    pub name: String,
    /// Config file; the `[name]` section holds the suite's settings.
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let out = match cli.command {
        Command::Decompose(a) => cmd_decompose(&a),
        Command::SelectRank(a) => cmd_select_rank(&a),
        Command::Complete(a) => cmd_complete(&a),
        Command::Experiment(a) => cmd_experiment(&a),
    };
    match out {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn write_fit(dir: &Path, fit: &FitResult, link: LinkSpec) -> Result<()> {
    FactorFile::from_fit(fit, link).write(dir)?;
    io::write_trace(&dir.join("trace.csv"), &fit.loglik_trace)
}

pub fn cmd_decompose(a: &DecomposeArgs) -> Result<()> {
    let cfg = a.fit.config(a.rank as usize)?;
    let y = io::read_tensor(&a.fit.input, a.fit.absent)?;
    let fit = decomp::fit(&y, &cfg)?;
    create_dir(&a.out_dir)?;
    write_fit(&a.out_dir, &fit, cfg.link)?;
    println!(
        "rank {} loglik {:.6} bic {:.6} iterations {}{}",
        cfg.rank,
        fit.final_loglik,
        fit.bic,
        fit.n_iterations,
        if fit.converged { "" } else { " (not converged)" }
    );
    Ok(())
}

pub fn cmd_select_rank(a: &SelectRankArgs) -> Result<()> {
    let (rmin, rmax) = (a.rmin as usize, a.rmax as usize);
    if rmin > rmax {
        return Err(Error::InvalidArgument(format!("--rmin {rmin} exceeds --rmax {rmax}")));
    }
    let cfg = a.fit.config(rmin)?;
    let y = io::read_tensor(&a.fit.input, a.fit.absent)?;
    let sel = decomp::select_rank(&y, &cfg, rmin, rmax)?;
    create_dir(&a.out_dir)?;
    io::write_bic_table(&a.out_dir.join("bic_table.csv"), &sel.table)?;
    write_fit(&a.out_dir, &sel.best_fit, cfg.link)?;
    println!("{}", sel.best_rank);
    Ok(())
}

/// Holds out `fraction` of the observed ones and, separately, of the observed zeros.
pub fn stratified_holdout(y: &BinaryTensor, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observed = (0..y.tensor().len()).filter(|&c| y.is_observed(c));
    let (mut ones, mut zeros): (Vec<usize>, Vec<usize>) = observed.partition(|&c| y.is_one(c));
    let mut cells = Vec::new();
    for class in [&mut ones, &mut zeros] {
        let n = (fraction * class.len() as f64).round() as usize;
        let (picked, _) = class.partial_shuffle(&mut rng, n);
        cells.extend_from_slice(picked);
    }
    cells.sort_unstable();
    Ok(cells)
}

/// Masks out the holdout cells (and anything already unobserved).
pub fn training_tensor(y: &BinaryTensor, holdout: &[usize]) -> Result<BinaryTensor> {
    let n = y.tensor().len();
    let mut flags: Vec<bool> = (0..n).map(|c| y.is_observed(c)).collect();
    for &c in holdout {
        flags[c] = false;
    }
    y.clone()
        .with_mask(Some(ObservationMask::new(y.dims().to_vec(), flags)?))
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub fit: FitResult,
    pub prob: crate::tensor::DenseTensor,
    pub holdout: Vec<usize>,
    pub auc: f64,
    pub rmse: f64,
    /// Holdout RMSE of the constant 0.5 predictor.
    pub baseline_rmse: f64,
}

/// Fits on everything but `holdout` and scores the held-out cells.
pub fn complete(y: &BinaryTensor, cfg: &FitConfig, holdout: Vec<usize>) -> Result<Completion> {
    if holdout.is_empty() {
        return Err(Error::InvalidArgument("holdout set is empty".into()));
    }
    let train = training_tensor(y, &holdout)?;
    let fit = decomp::fit(&train, cfg)?;
    let prob = decomp::predict_proba(&fit, &cfg.link);
    let scored: Vec<(f64, bool)> = holdout.iter().map(|&c| (prob.values()[c], y.is_one(c))).collect();
    let auc = auc(&scored)?;
    let n = scored.len() as f64;
    let mse = |pred: &dyn Fn(f64) -> f64| {
        scored
            .iter()
            .map(|&(p, t)| (pred(p) - if t { 1.0 } else { 0.0 }).powi(2))
            .sum::<f64>()
            / n
    };
    let rmse = mse(&|p| p).sqrt();
    let baseline_rmse = mse(&|_| 0.5).sqrt();
    Ok(Completion {
        fit,
        prob,
        holdout,
        auc,
        rmse,
        baseline_rmse,
    })
}

pub fn cmd_complete(a: &CompleteArgs) -> Result<()> {
    let cfg = a.fit.config(a.rank as usize)?;
    let y = io::read_tensor(&a.fit.input, a.fit.absent)?;
    let holdout = match a.holdout.parse::<f64>() {
        Ok(frac) => stratified_holdout(&y, frac, a.fit.seed)?,
        Err(_) => io::read_holdout(Path::new(&a.holdout), y.dims())?,
    };
    let c = complete(&y, &cfg, holdout)?;
    create_dir(&a.out_dir)?;
    io::write_predictions(&a.out_dir.join("predictions.csv"), y.dims(), &c.holdout, &c.prob, &y)?;
    println!("auc {:.6}\nrmse {:.6}", c.auc, c.rmse);
    Ok(())
}

pub fn cmd_experiment(a: &ExperimentArgs) -> Result<()> {
    let suite: experiment::Suite = a.name.parse()?;
    let text = match &a.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let settings = config::suite_settings(&text, suite)?;
    let report = experiment::run_suite(&settings)?;
    create_dir(&a.out_dir)?;
    let (tidy, summary) = report.write(&a.out_dir)?;
    println!("{}\n{}", tidy.display(), summary.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{gen_cp_signal, sample_bernoulli};

    #[test]
    fn stratified_split_preserves_class_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = gen_cp_signal(&[20, 20, 20], 2, &mut rng).unwrap().scale(3.0);
        let y = sample_bernoulli(&theta, &LinkSpec::logistic(1.0).unwrap(), &mut rng).unwrap();
        let hold = stratified_holdout(&y, 0.2, 1).unwrap();
        assert_eq!(hold, stratified_holdout(&y, 0.2, 1).unwrap());
        let train = training_tensor(&y, &hold).unwrap();
        let rate = |cells: &mut dyn Iterator<Item = usize>| {
            let v: Vec<usize> = cells.collect();
            v.iter().filter(|&&c| y.is_one(c)).count() as f64 / v.len() as f64
        };
        let test_rate = rate(&mut hold.iter().copied());
        let train_rate = rate(&mut (0..8000).filter(|&c| train.is_observed(c)));
        assert!((test_rate - train_rate).abs() < 0.01);
        assert_eq!(train.n_observed() + hold.len(), 8000);
        assert!(hold.iter().all(|&c| !train.is_observed(c)));
    }

    #[test]
    fn bad_holdout_fractions() {
        let y = BinaryTensor::from_bools(vec![2, 2, 2], &[true, false, true, false, true, false, true, false]).unwrap();
        for f in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(stratified_holdout(&y, f, 0), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Parse("x".into())), 2);
        assert_eq!(exit_code(&Error::DegenerateLabels), 2);
        let e = Error::AllStartsFailed {
            attempts: 2,
            last: Box::new(Error::SingularDesign),
        };
        assert_eq!(exit_code(&e), 3);
    }
}
