//! Alternating maximum-likelihood CP decomposition of a binary tensor.
//!
//! One sweep updates every factor matrix in turn by solving the independent
//! row GLMs of that mode, blends the swept factors with the previous iterate
//! along a grid line search, and renormalizes so that modes `0..K-1` carry
//! unit-norm columns and the last mode carries the component weights.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::glm::{fit_glm_with, GlmOptions, GlmProblem};
use crate::links::LinkSpec;
use crate::tensor::{
    cp_reconstruct, khatri_rao_excluding, max_norm, same_dims, unfold_slice, BinaryTensor,
    CpFactors, DenseTensor,
};

/// Slack allowed on the max-norm bound when checking feasibility.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub rank: usize,
    /// Max-norm bound on the fitted tensor; `f64::INFINITY` disables it.
    pub alpha: f64,
    pub link: LinkSpec,
    /// Relative objective increase below which the sweeps stop.
    pub tol: f64,
    pub max_iters: usize,
    pub n_starts: usize,
    /// Initial factor entries are uniform on `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Number of equally spaced line-search points on `[0, 1]`, endpoints included.
    pub line_search_grid: usize,
    pub seed: u64,
    pub glm: GlmOptions,
}

impl FitConfig {
    pub fn new(rank: usize, link: LinkSpec) -> Self {
        Self {
            rank,
            alpha: f64::INFINITY,
            link,
            tol: 1e-4,
            max_iters: 100,
            n_starts: 5,
            init_scale: 0.1,
            line_search_grid: 21,
            seed: 0,
            glm: GlmOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.rank == 0 {
            return bad("rank must be at least 1");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive (or infinite)");
        }
        if !(self.tol > 0.0) {
            return bad("tolerance must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if self.n_starts == 0 {
            return bad("n_starts must be at least 1");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be positive");
        }
        if self.line_search_grid < 2 {
            return bad("line search needs at least the two endpoints");
        }
        Ok(())
    }

    fn bound(&self) -> Option<f64> {
        self.alpha.is_finite().then_some(self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub factors: CpFactors,
    pub theta_hat: DenseTensor,
    /// Objective at the initial point and after every sweep.
    pub loglik_trace: Vec<f64>,
    pub final_loglik: f64,
    pub bic: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// Index of the winning initialization, counting replacement starts.
    pub start_index: usize,
    /// Seed that reproduces the winning start as a single-start fit.
    pub start_seed: u64,
    pub n_obs: usize,
}

/// Responses and masks unfolded once per fit.
struct Prepared {
    dims: Vec<usize>,
    responses: Vec<Vec<bool>>,
    masks: Option<Vec<Vec<bool>>>,
}

impl Prepared {
    fn new(y: &BinaryTensor) -> Self {
        let dims = y.dims().to_vec();
        let bits: Vec<bool> = y.tensor().values().iter().map(|&v| v == 1.0).collect();
        let responses = (0..dims.len())
            .map(|k| unfold_slice(&bits, &dims, k))
            .collect();
        let masks = y.mask().map(|m| {
            (0..dims.len())
                .map(|k| unfold_slice(m.flags(), &dims, k))
                .collect()
        });
        Self {
            dims,
            responses,
            masks,
        }
    }
}

/// Sum of `log f((2y − 1) θ)` over the observed cells.
pub fn log_likelihood(y: &BinaryTensor, theta: &DenseTensor, link: &LinkSpec) -> Result<f64> {
    same_dims(y.tensor(), theta)?;
    Ok(loglik_unchecked(y, theta, link))
}

fn loglik_unchecked(y: &BinaryTensor, theta: &DenseTensor, link: &LinkSpec) -> f64 {
    let t = theta.values();
    let v = y.tensor().values();
    match y.mask() {
        None => v
            .iter()
            .zip(t)
            .map(|(&yv, &th)| link.log_f_signed(yv == 1.0, th))
            .sum(),
        Some(m) => v
            .iter()
            .zip(t)
            .zip(m.flags())
            .filter(|(_, &o)| o)
            .map(|((&yv, &th), _)| link.log_f_signed(yv == 1.0, th))
            .sum(),
    }
}

fn check_factors(y: &BinaryTensor, f: &CpFactors) -> Result<()> {
    if f.dims() != y.dims() {
        return Err(Error::ShapeMismatch(format!(
            "factor dims {:?} vs tensor dims {:?}",
            f.dims(),
            y.dims()
        )));
    }
    Ok(())
}

/// Replaces every row of factor `mode` by its row-GLM fit, warm-started at the current row.
pub fn update_mode(y: &BinaryTensor, factors: &CpFactors, mode: usize, cfg: &FitConfig) -> Result<CpFactors> {
    check_factors(y, factors)?;
    if mode >= factors.order() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: factors.order(),
        });
    }
    let prepared = Prepared::new(y);
    update_mode_prepared(&prepared, factors, mode, cfg)
}

fn update_mode_prepared(p: &Prepared, factors: &CpFactors, mode: usize, cfg: &FitConfig) -> Result<CpFactors> {
    let design = khatri_rao_excluding(factors, mode)?;
    let m = design.nrows();
    let d = p.dims[mode];
    let current = factors.factor(mode);
    let response = &p.responses[mode];
    let mask = p.masks.as_ref().map(|ms| &ms[mode]);
    let rows: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let problem = GlmProblem {
                design: design.view(),
                response: &response[j * m..(j + 1) * m],
                observed: mask.map(|mk| &mk[j * m..(j + 1) * m]),
                link: cfg.link,
                coef_bound: cfg.bound(),
            };
            let init = current.row(j).to_vec();
            fit_glm_with(&problem, &init, &cfg.glm)
                .map(|s| s.coef.to_vec())
                .map_err(|e| match e {
                    Error::SingularDesign => Error::SingularRow { mode, row: j },
                    other => other,
                })
        })
        .collect::<Result<_>>()?;
    let mut out = factors.clone();
    let a = out.factor_mut(mode);
    for (j, row) in rows.into_iter().enumerate() {
        for (c, v) in row.into_iter().enumerate() {
            a[[j, c]] = v;
        }
    }
    Ok(out)
}

fn blend(old: &CpFactors, new: &CpFactors, gamma: f64) -> CpFactors {
    let mats = old
        .factors()
        .iter()
        .zip(new.factors())
        .map(|(a, b)| a * gamma + b * (1.0 - gamma))
        .collect();
    CpFactors::new(mats).expect("blend keeps shapes")
}

/// Grid search for `γ* = argmax L(γ A_old + (1 − γ) A_new)` over feasible grid points.
///
/// The blend is applied to every factor matrix jointly. Ties go to the
/// smallest γ.
pub fn line_search(
    y: &BinaryTensor,
    old: &CpFactors,
    new: &CpFactors,
    cfg: &FitConfig,
) -> Result<(f64, CpFactors)> {
    check_factors(y, old)?;
    check_factors(y, new)?;
    if cfg.line_search_grid < 2 {
        return Err(Error::InvalidArgument("line search grid needs two points".into()));
    }
    let last = (cfg.line_search_grid - 1) as f64;
    let mut best: Option<(f64, f64, CpFactors)> = None;
    for i in 0..cfg.line_search_grid {
        let gamma = i as f64 / last;
        let cand = blend(old, new, gamma);
        let theta = cp_reconstruct(&cand);
        if let Some(b) = cfg.bound() {
            if max_norm(&theta) > b + BOUND_SLACK {
                continue;
            }
        }
        let ll = loglik_unchecked(y, &theta, &cfg.link);
        if !ll.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(_, bl, _)| ll > *bl) {
            best = Some((gamma, ll, cand));
        }
    }
    best.map(|(g, _, f)| (g, f)).ok_or(Error::AllInfeasible)
}

/// Unit-norm columns in modes `0..K-1` (largest-magnitude entry positive), scales
/// and signs absorbed into the last mode, columns sorted by decreasing weight.
pub fn normalize(factors: &CpFactors) -> Result<CpFactors> {
    let k_last = factors.order() - 1;
    let r = factors.rank();
    let mut mats = factors.factors().to_vec();
    for k in 0..k_last {
        for c in 0..r {
            let (norm, pivot) = {
                let col = mats[k].column(c);
                let norm = col.dot(&col).sqrt();
                let pivot = col
                    .iter()
                    .fold(0.0f64, |p, &v| if v.abs() > p.abs() { v } else { p });
                (norm, pivot)
            };
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::DegenerateColumn { mode: k, column: c });
            }
            let s = if pivot < 0.0 { -norm } else { norm };
            mats[k].column_mut(c).mapv_inplace(|v| v / s);
            mats[k_last].column_mut(c).mapv_inplace(|v| v * s);
        }
    }
    let weights: Vec<f64> = mats[k_last]
        .columns()
        .into_iter()
        .map(|c| c.dot(&c).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    if order.iter().enumerate().any(|(i, &o)| i != o) {
        for m in &mut mats {
            *m = m.select(Axis(1), &order);
        }
    }
    CpFactors::new(mats)
}

/// Seed of the `attempt`-th initialization. Attempt 0 uses the configured seed itself.
pub fn start_seed(seed: u64, attempt: usize) -> u64 {
    if attempt == 0 {
        return seed;
    }
    let mut z = seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random factors with entries uniform on `[-scale, scale]`, normalized.
pub fn random_factors(dims: &[usize], rank: usize, scale: f64, seed: u64) -> Result<CpFactors> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mats = dims
        .iter()
        .map(|&d| Array2::from_shape_simple_fn((d, rank), || rng.random_range(-scale..=scale)))
        .collect();
    normalize(&CpFactors::new(mats)?)
}

struct StartOutcome {
    factors: CpFactors,
    theta: DenseTensor,
    trace: Vec<f64>,
    converged: bool,
}

fn run_from(y: &BinaryTensor, p: &Prepared, cfg: &FitConfig, init: CpFactors) -> Result<StartOutcome> {
    let mut factors = init;
    let mut theta = cp_reconstruct(&factors);
    if let Some(b) = cfg.bound() {
        let m = max_norm(&theta);
        if m > b {
            let k_last = factors.order() - 1;
            factors.factor_mut(k_last).mapv_inplace(|v| v * b / m);
            theta = cp_reconstruct(&factors);
        }
    }
    let mut ll = loglik_unchecked(y, &theta, &cfg.link);
    if !ll.is_finite() {
        return Err(Error::NonFinite("initial objective"));
    }
    let mut trace = vec![ll];
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let mut swept = factors.clone();
        for k in 0..factors.order() {
            swept = update_mode_prepared(p, &swept, k, cfg)?;
        }
        let (_, blended) = line_search(y, &factors, &swept, cfg)?;
        factors = normalize(&blended)?;
        theta = cp_reconstruct(&factors);
        let ll_new = loglik_unchecked(y, &theta, &cfg.link);
        if !ll_new.is_finite() {
            return Err(Error::NonFinite("objective"));
        }
        debug_assert!(ll_new >= ll - 1e-10 * ll.abs());
        let rel = if ll == 0.0 { 0.0 } else { (ll_new - ll) / ll.abs() };
        ll = ll_new;
        trace.push(ll);
        if rel < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(StartOutcome {
        factors,
        theta,
        trace,
        converged,
    })
}

fn check_input(y: &BinaryTensor, cfg: &FitConfig) -> Result<()> {
    cfg.validate()?;
    if let Some(m) = y.mask() {
        m.check_slabs()?;
    }
    Ok(())
}

fn finish(y: &BinaryTensor, cfg: &FitConfig, out: StartOutcome, start_index: usize, seed: u64) -> FitResult {
    let final_loglik = *out.trace.last().expect("trace starts non-empty");
    let n_obs = y.n_observed();
    let p_e = effective_params(y.dims(), cfg.rank).expect("rank validated");
    FitResult {
        n_iterations: out.trace.len() - 1,
        bic: bic_value(final_loglik, p_e, n_obs),
        factors: out.factors,
        theta_hat: out.theta,
        loglik_trace: out.trace,
        final_loglik,
        converged: out.converged,
        start_index,
        start_seed: seed,
        n_obs,
    }
}

/// Single run of the alternating algorithm from the given initial factors.
pub fn fit_from(y: &BinaryTensor, cfg: &FitConfig, init: CpFactors) -> Result<FitResult> {
    check_input(y, cfg)?;
    check_factors(y, &init)?;
    if init.rank() != cfg.rank {
        return Err(Error::ShapeMismatch("initial factors have the wrong rank".into()));
    }
    let p = Prepared::new(y);
    let out = run_from(y, &p, cfg, init)?;
    Ok(finish(y, cfg, out, 0, cfg.seed))
}

/// Multi-start fit; returns the start with the highest final objective.
///
/// A start that fails numerically is replaced by a fresh seeded start, up to
/// `n_starts` replacements in total.
pub fn fit(y: &BinaryTensor, cfg: &FitConfig) -> Result<FitResult> {
    check_input(y, cfg)?;
    let p = Prepared::new(y);
    let max_attempts = 2 * cfg.n_starts;
    let run = |attempt: usize| -> (usize, u64, Result<StartOutcome>) {
        let seed = start_seed(cfg.seed, attempt);
        let out = random_factors(y.dims(), cfg.rank, cfg.init_scale, seed)
            .and_then(|init| run_from(y, &p, cfg, init));
        (attempt, seed, out)
    };
    let mut successes: Vec<(usize, u64, StartOutcome)> = Vec::new();
    let mut last_err = None;
    let mut next = 0;
    while successes.len() < cfg.n_starts && next < max_attempts {
        let batch = (cfg.n_starts - successes.len()).min(max_attempts - next);
        let results: Vec<_> = (next..next + batch).into_par_iter().map(run).collect();
        next += batch;
        for (attempt, seed, r) in results {
            match r {
                Ok(o) => successes.push((attempt, seed, o)),
                Err(e) => {
                    last_err = Some(Error::StartFailed {
                        start: attempt,
                        source: Box::new(e),
                    })
                }
            }
        }
    }
    let best = successes.into_iter().fold(None::<(usize, u64, StartOutcome)>, |best, cur| match best {
        Some(b) if b.2.trace.last() >= cur.2.trace.last() => Some(b),
        _ => Some(cur),
    });
    match best {
        Some((attempt, seed, out)) => Ok(finish(y, cfg, out, attempt, seed)),
        None => Err(Error::AllStartsFailed {
            attempts: next,
            last: Box::new(last_err.unwrap_or(Error::AllInfeasible)),
        }),
    }
}

/// Free parameters of a rank-`rank` CP model after removing the scaling
/// indeterminacy (`K ≥ 3`) or the nonsingular-transform indeterminacy (`K = 2`).
pub fn effective_params(dims: &[usize], rank: usize) -> Result<i64> {
    if rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    if dims.len() < 2 {
        return Err(Error::InvalidDims("order must be at least 2".into()));
    }
    let r = rank as i64;
    let sum: i64 = dims.iter().map(|&d| d as i64).sum();
    Ok(if dims.len() == 2 {
        r * sum - r * r
    } else {
        r * (sum - dims.len() as i64 + 1)
    })
}

/// `−2 L + p_e log n`.
pub fn bic_value(loglik: f64, p_e: i64, n_obs: usize) -> f64 {
    -2.0 * loglik + p_e as f64 * (n_obs as f64).ln()
}

/// BIC of a fitted result; the sample size is the number of observed cells.
pub fn bic(y: &BinaryTensor, result: &FitResult) -> Result<f64> {
    let p_e = effective_params(y.dims(), result.factors.rank())?;
    Ok(bic_value(result.final_loglik, p_e, y.n_observed()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub rank: usize,
    pub p_e: i64,
    pub loglik: Option<f64>,
    pub bic: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RankSelection {
    pub best_rank: usize,
    pub table: Vec<RankRow>,
    pub best_fit: FitResult,
}

/// Fits every rank in `r_min..=r_max` and picks the BIC minimizer.
///
/// A rank whose fit fails is recorded in the table with its error.
pub fn select_rank(y: &BinaryTensor, cfg: &FitConfig, r_min: usize, r_max: usize) -> Result<RankSelection> {
    if r_min == 0 || r_min > r_max {
        return Err(Error::InvalidArgument(format!(
            "invalid rank range {r_min}..={r_max}"
        )));
    }
    let mut table = Vec::with_capacity(r_max - r_min + 1);
    let mut best: Option<(f64, FitResult)> = None;
    let mut last_err = None;
    for rank in r_min..=r_max {
        let rank_cfg = FitConfig {
            rank,
            ..cfg.clone()
        };
        let p_e = effective_params(y.dims(), rank)?;
        match fit(y, &rank_cfg) {
            Ok(res) => {
                table.push(RankRow {
                    rank,
                    p_e,
                    loglik: Some(res.final_loglik),
                    bic: Some(res.bic),
                    error: None,
                });
                if best.as_ref().is_none_or(|(b, _)| res.bic < *b) {
                    best = Some((res.bic, res));
                }
            }
            Err(e) => {
                table.push(RankRow {
                    rank,
                    p_e,
                    loglik: None,
                    bic: None,
                    error: Some(e.to_string()),
                });
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((_, fit)) => Ok(RankSelection {
            best_rank: fit.factors.rank(),
            table,
            best_fit: fit,
        }),
        None => Err(last_err.expect("at least one rank attempted")),
    }
}

/// Entrywise `f(θ̂)`, kept strictly inside (0, 1) when a predictor saturates.
pub fn predict_proba(result: &FitResult, link: &LinkSpec) -> DenseTensor {
    const TOP: f64 = 1.0 - f64::EPSILON / 2.0;
    result
        .theta_hat
        .map(|t| link.f(t).clamp(f64::MIN_POSITIVE, TOP))
}
