//! Synthetic data for the simulation studies: a low-rank CP signal observed
//! through 1-bit quantization, the stochastic multiway block model, and the
//! boolean OR-of-ANDs tensor model with flip contamination.

pub mod metrics;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::links::{normal_cdf, LinkSpec};
use crate::tensor::{cp_reconstruct, increment_index, max_norm, BinaryTensor, CpFactors, DenseTensor};

pub use metrics::{auc, mer, relative_loss, rmse};

/// A rank-`rank` signal with Uniform[-1, 1] factors, rescaled to max-norm 1.
///
/// The returned factors reproduce the signal; the rescaling is folded into the last mode.
pub fn gen_cp_model<R: Rng + ?Sized>(dims: &[usize], rank: usize, rng: &mut R) -> Result<(CpFactors, DenseTensor)> {
    if rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    loop {
        let mats = dims
            .iter()
            .map(|&d| Array2::from_shape_simple_fn((d, rank), || rng.random_range(-1.0..=1.0)))
            .collect();
        let mut factors = CpFactors::new(mats)?;
        let theta = cp_reconstruct(&factors);
        let m = max_norm(&theta);
        if m > 0.0 {
            let last = factors.order() - 1;
            factors.factor_mut(last).mapv_inplace(|v| v / m);
            return Ok((factors, theta.map(|v| v / m)));
        }
    }
}

pub fn gen_cp_signal<R: Rng + ?Sized>(dims: &[usize], rank: usize, rng: &mut R) -> Result<DenseTensor> {
    gen_cp_model(dims, rank, rng).map(|(_, t)| t)
}

/// `Y = 1{Θ + E ≥ 0}` with latent noise from the link's family.
pub fn quantize_latent<R: Rng + ?Sized>(theta: &DenseTensor, link: &LinkSpec, rng: &mut R) -> Result<BinaryTensor> {
    let noise = link.sample_noise(rng, theta.dims())?;
    let bits: Vec<bool> = theta
        .values()
        .iter()
        .zip(noise.values())
        .map(|(t, e)| t + e >= 0.0)
        .collect();
    BinaryTensor::from_bools(theta.dims().to_vec(), &bits)
}

/// Independent `Bernoulli(f(θ))` cells.
pub fn sample_bernoulli<R: Rng + ?Sized>(theta: &DenseTensor, link: &LinkSpec, rng: &mut R) -> Result<BinaryTensor> {
    let bits: Vec<bool> = theta
        .values()
        .iter()
        .map(|&t| rng.random::<f64>() < link.f(t))
        .collect();
    BinaryTensor::from_bools(theta.dims().to_vec(), &bits)
}

fn bernoulli_from_prob<R: Rng + ?Sized>(prob: &DenseTensor, rng: &mut R) -> Result<BinaryTensor> {
    let bits: Vec<bool> = prob.values().iter().map(|&p| rng.random::<f64>() < p).collect();
    BinaryTensor::from_bools(prob.dims().to_vec(), &bits)
}

/// Replaces each cell by `1 − y` independently with probability `p`.
pub fn flip_noise<R: Rng + ?Sized>(y: &BinaryTensor, p: f64, rng: &mut R) -> Result<BinaryTensor> {
    if !(0.0..0.5).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "flip probability must lie in [0, 0.5), got {p}"
        )));
    }
    let values: Vec<f64> = y
        .tensor()
        .values()
        .iter()
        .map(|&v| if rng.random::<f64>() < p { 1.0 - v } else { v })
        .collect();
    BinaryTensor::new(DenseTensor::new(y.dims().to_vec(), values)?, y.mask().cloned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockMeanModel {
    Combinatorial,
    Additive,
    Multiplicative,
}

impl BlockMeanModel {
    pub fn name(self) -> &'static str {
        match self {
            BlockMeanModel::Combinatorial => "combinatorial",
            BlockMeanModel::Additive => "additive",
            BlockMeanModel::Multiplicative => "multiplicative",
        }
    }
}

impl fmt::Display for BlockMeanModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BlockMeanModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "combinatorial" => Ok(BlockMeanModel::Combinatorial),
            "additive" => Ok(BlockMeanModel::Additive),
            "multiplicative" => Ok(BlockMeanModel::Multiplicative),
            other => Err(Error::Parse(format!("unknown block mean model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockModelSpec {
    pub dims: Vec<usize>,
    pub n_blocks: usize,
    pub mean_model: BlockMeanModel,
    pub seed: u64,
}

impl BlockModelSpec {
    pub fn new(d: usize, mean_model: BlockMeanModel, seed: u64) -> Self {
        Self {
            dims: vec![d, d, d],
            n_blocks: 5,
            mean_model,
            seed,
        }
    }

    /// Draws a sample from a generator seeded with `self.seed`.
    pub fn generate(&self) -> Result<BlockSample> {
        gen_block_tensor(self, &mut ChaCha8Rng::seed_from_u64(self.seed))
    }
}

#[derive(Debug, Clone)]
pub struct BlockSample {
    pub y: BinaryTensor,
    /// `Φ` of the probit-scale tensor.
    pub prob: DenseTensor,
    /// Block means expanded by the memberships (probit scale).
    pub latent: DenseTensor,
    /// Block label of every index, per mode.
    pub memberships: Vec<Vec<usize>>,
}

fn memberships<R: Rng + ?Sized>(d: usize, n_blocks: usize, rng: &mut R) -> Vec<usize> {
    loop {
        let labels: Vec<usize> = (0..d).map(|_| rng.random_range(0..n_blocks)).collect();
        let mut seen = vec![false; n_blocks];
        labels.iter().for_each(|&l| seen[l] = true);
        if seen.iter().all(|&s| s) {
            return labels;
        }
    }
}

/// Stochastic multiway block model with probit-scale block means.
pub fn gen_block_tensor<R: Rng + ?Sized>(spec: &BlockModelSpec, rng: &mut R) -> Result<BlockSample> {
    let dims = &spec.dims;
    if dims.len() < 2 {
        return Err(Error::InvalidDims("block model needs at least two modes".into()));
    }
    if spec.n_blocks == 0 || dims.iter().any(|&d| d < spec.n_blocks) {
        return Err(Error::InvalidArgument(format!(
            "{} blocks do not fit dims {:?}",
            spec.n_blocks, dims
        )));
    }
    let nb = spec.n_blocks;
    let member: Vec<Vec<usize>> = dims.iter().map(|&d| memberships(d, nb, rng)).collect();
    let core_dims = vec![nb; dims.len()];
    let core = match spec.mean_model {
        BlockMeanModel::Combinatorial => {
            DenseTensor::from_fn(core_dims, |_| rng.random_range(-1.0..=1.0))?
        }
        model => {
            let parts: Vec<Vec<f64>> = (0..dims.len())
                .map(|_| (0..nb).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect();
            DenseTensor::from_fn(core_dims, |m| {
                let vals = m.iter().enumerate().map(|(k, &b)| parts[k][b]);
                if model == BlockMeanModel::Additive {
                    vals.sum()
                } else {
                    vals.product()
                }
            })?
        }
    };
    let latent = DenseTensor::from_fn(dims.clone(), |idx| {
        let block: Vec<usize> = idx.iter().enumerate().map(|(k, &i)| member[k][i]).collect();
        core.get(&block)
    })?;
    let prob = latent.map(normal_cdf);
    let y = bernoulli_from_prob(&prob, rng)?;
    Ok(BlockSample {
        y,
        prob,
        latent,
        memberships: member,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BooleanModelSpec {
    pub dims: Vec<usize>,
    pub boolean_rank: usize,
    pub beta_params: (f64, f64),
    pub flip_prob: f64,
    pub seed: u64,
}

impl BooleanModelSpec {
    pub fn new(d: usize, boolean_rank: usize, seed: u64) -> Self {
        Self {
            dims: vec![d, d, d],
            boolean_rank,
            beta_params: (2.0, 4.0),
            flip_prob: 0.1,
            seed,
        }
    }

    pub fn generate(&self) -> Result<BooleanSample> {
        gen_boolean_tensor(self, &mut ChaCha8Rng::seed_from_u64(self.seed))
    }
}

#[derive(Debug, Clone)]
pub struct BooleanSample {
    pub y: BinaryTensor,
    /// Flip-adjusted expectation of every cell given the factor probabilities.
    pub prob: DenseTensor,
    /// Factor probabilities, one `d_k × R` matrix per mode.
    pub factor_probs: Vec<Array2<f64>>,
}

/// Boolean tensor: a cell is 1 iff some component has all its binary factor entries equal to 1.
pub fn gen_boolean_tensor<R: Rng + ?Sized>(spec: &BooleanModelSpec, rng: &mut R) -> Result<BooleanSample> {
    let r = spec.boolean_rank;
    if r == 0 {
        return Err(Error::InvalidArgument("boolean rank must be at least 1".into()));
    }
    let (a, b) = spec.beta_params;
    let beta = Beta::new(a, b).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let probs: Vec<Array2<f64>> = spec
        .dims
        .iter()
        .map(|&d| Array2::from_shape_simple_fn((d, r), || beta.sample(rng)))
        .collect();
    let bits: Vec<Array2<bool>> = probs
        .iter()
        .map(|p| p.mapv(|q| rng.random::<f64>() < q))
        .collect();
    let n: usize = spec.dims.iter().product();
    let mut idx = vec![0usize; spec.dims.len()];
    let mut clean = Vec::with_capacity(n);
    let mut expect = Vec::with_capacity(n);
    for _ in 0..n {
        let mut any = false;
        let mut none = 1.0;
        for c in 0..r {
            any |= idx.iter().enumerate().all(|(k, &i)| bits[k][[i, c]]);
            let p: f64 = idx.iter().enumerate().map(|(k, &i)| probs[k][[i, c]]).product();
            none *= 1.0 - p;
        }
        clean.push(any);
        expect.push(1.0 - none);
        increment_index(&mut idx, &spec.dims);
    }
    let f = spec.flip_prob;
    let y = flip_noise(&BinaryTensor::from_bools(spec.dims.clone(), &clean)?, f, rng)?;
    let prob = DenseTensor::new(
        spec.dims.clone(),
        expect.into_iter().map(|q| (1.0 - f) * q + f * (1.0 - q)).collect(),
    )?;
    Ok(BooleanSample {
        y,
        prob,
        factor_probs: probs,
    })
}
