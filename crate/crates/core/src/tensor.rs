//! Dense order-K tensors and the multilinear algebra used by the decomposition.
//!
//! Storage is row-major (last index fastest). Unfoldings keep that ordering for
//! the columns: the mode-k unfolding satisfies
//! `Y_(k) = A_k (A_1 ⊙ … ⊙ A_{k-1} ⊙ A_{k+1} ⊙ … ⊙ A_K)ᵀ`, where the Khatri–Rao
//! product runs the index of its right operand fastest. With this choice the
//! mode-1 unfolding is the storage itself, viewed as a `d_1 × ∏_{i>1} d_i`
//! matrix. All modes are 0-based.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// A real-valued order-K tensor with row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.len() < 2 {
        return Err(Error::InvalidDims(format!(
            "order must be at least 2, got {}",
            dims.len()
        )));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidDims(format!("zero-length mode in {dims:?}")));
    }
    Ok(dims.iter().product())
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n = check_dims(&dims)?;
        if values.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} values for dims {:?} (expected {})",
                values.len(),
                dims,
                n
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n = check_dims(&dims)?;
        Ok(Self {
            dims,
            values: vec![0.0; n],
        })
    }

    pub fn filled(dims: Vec<usize>, value: f64) -> Result<Self> {
        let n = check_dims(&dims)?;
        Ok(Self {
            dims,
            values: vec![value; n],
        })
    }

    /// Builds a tensor by evaluating `f` at every 0-based multi-index.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let n = check_dims(&dims)?;
        let mut idx = vec![0usize; dims.len()];
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f(&idx));
            increment_index(&mut idx, &dims);
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        linear_index(&self.dims, idx)
    }

    pub fn multi_index(&self, linear: usize) -> Vec<usize> {
        multi_index(&self.dims, linear)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let i = self.linear_index(idx);
        self.values[i] = value;
    }

    /// Entrywise map into a new tensor of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseTensor {
        DenseTensor {
            dims: self.dims.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> DenseTensor {
        self.map(|v| v * c)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        same_dims(self, other)?;
        Ok(DenseTensor {
            dims: self.dims.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }
}

pub(crate) fn same_dims(a: &DenseTensor, b: &DenseTensor) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::ShapeMismatch(format!(
            "dims {:?} vs {:?}",
            a.dims, b.dims
        )));
    }
    Ok(())
}

pub(crate) fn increment_index(idx: &mut [usize], dims: &[usize]) {
    for k in (0..dims.len()).rev() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return;
        }
        idx[k] = 0;
    }
}

pub fn linear_index(dims: &[usize], idx: &[usize]) -> usize {
    debug_assert_eq!(dims.len(), idx.len());
    idx.iter()
        .zip(dims)
        .fold(0, |acc, (&i, &d)| {
            debug_assert!(i < d);
            acc * d + i
        })
}

pub fn multi_index(dims: &[usize], mut linear: usize) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        idx[k] = linear % dims[k];
        linear /= dims[k];
    }
    idx
}

/// The set of observed cells of a tensor, stored as a dense flag per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    dims: Vec<usize>,
    observed: Vec<bool>,
}

impl ObservationMask {
    pub fn new(dims: Vec<usize>, observed: Vec<bool>) -> Result<Self> {
        let n = check_dims(&dims)?;
        if observed.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} cells, dims {:?} need {}",
                observed.len(),
                dims,
                n
            )));
        }
        Ok(Self { dims, observed })
    }

    pub fn full(dims: Vec<usize>) -> Result<Self> {
        let n = check_dims(&dims)?;
        Ok(Self {
            dims,
            observed: vec![true; n],
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn flags(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, linear: usize) -> bool {
        self.observed[linear]
    }

    pub fn set(&mut self, linear: usize, observed: bool) {
        self.observed[linear] = observed;
    }

    pub fn count(&self) -> usize {
        self.observed.iter().filter(|&&b| b).count()
    }

    /// Errors unless every slab `Y(:, j(k), :)` holds at least one observed cell.
    pub fn check_slabs(&self) -> Result<()> {
        for mode in 0..self.dims.len() {
            let unfolded = unfold_slice(&self.observed, &self.dims, mode);
            let cols = self.observed.len() / self.dims[mode];
            for (index, row) in unfolded.chunks(cols).enumerate() {
                if !row.iter().any(|&b| b) {
                    return Err(Error::EmptySlab { mode, index });
                }
            }
        }
        Ok(())
    }
}

/// A 0/1 tensor with an optional observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTensor {
    base: DenseTensor,
    mask: Option<ObservationMask>,
}

impl BinaryTensor {
    pub fn new(base: DenseTensor, mask: Option<ObservationMask>) -> Result<Self> {
        if let Some(bad) = base.values.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "binary tensor holds non-binary value {bad}"
            )));
        }
        if let Some(m) = &mask {
            if m.dims != base.dims {
                return Err(Error::ShapeMismatch(format!(
                    "mask dims {:?} vs tensor dims {:?}",
                    m.dims, base.dims
                )));
            }
        }
        Ok(Self { base, mask })
    }

    pub fn from_bools(dims: Vec<usize>, bits: &[bool]) -> Result<Self> {
        let values = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::new(DenseTensor::new(dims, values)?, None)
    }

    pub fn dims(&self) -> &[usize] {
        self.base.dims()
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.base
    }

    pub fn mask(&self) -> Option<&ObservationMask> {
        self.mask.as_ref()
    }

    pub fn with_mask(mut self, mask: Option<ObservationMask>) -> Result<Self> {
        if let Some(m) = &mask {
            if m.dims != self.base.dims {
                return Err(Error::ShapeMismatch("mask dims differ".into()));
            }
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn is_one(&self, linear: usize) -> bool {
        self.base.values[linear] == 1.0
    }

    pub fn is_observed(&self, linear: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m.observed[linear])
    }

    pub fn n_observed(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(self.base.len(), ObservationMask::count)
    }

    /// Complement coding `1 - Y`, keeping the mask.
    pub fn flipped(&self) -> BinaryTensor {
        BinaryTensor {
            base: self.base.map(|v| 1.0 - v),
            mask: self.mask.clone(),
        }
    }
}

/// Factor matrices of a CP decomposition, one `d_k × R` matrix per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    factors: Vec<Array2<f64>>,
}

impl CpFactors {
    pub fn new(factors: Vec<Array2<f64>>) -> Result<Self> {
        if factors.len() < 2 {
            return Err(Error::InvalidDims("need at least two factor matrices".into()));
        }
        let rank = factors[0].ncols();
        if rank == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        if factors.iter().any(|a| a.ncols() != rank || a.nrows() == 0) {
            return Err(Error::ShapeMismatch(
                "factor matrices disagree on rank or are empty".into(),
            ));
        }
        Ok(Self { factors })
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|a| a.nrows()).collect()
    }

    pub fn factor(&self, mode: usize) -> &Array2<f64> {
        &self.factors[mode]
    }

    pub fn factor_mut(&mut self, mode: usize) -> &mut Array2<f64> {
        &mut self.factors[mode]
    }

    pub fn factors(&self) -> &[Array2<f64>] {
        &self.factors
    }

    pub fn into_factors(self) -> Vec<Array2<f64>> {
        self.factors
    }

    /// Column norms of the last factor, i.e. the component weights.
    pub fn weights(&self) -> Vec<f64> {
        let last = &self.factors[self.factors.len() - 1];
        last.columns()
            .into_iter()
            .map(|c| c.dot(&c).sqrt())
            .collect()
    }
}

fn check_mode(mode: usize, order: usize) -> Result<()> {
    if mode >= order {
        return Err(Error::ModeOutOfRange { mode, order });
    }
    Ok(())
}

/// Mode unfolding of a row-major flat buffer, returned row-major.
pub(crate) fn unfold_slice<T: Copy>(values: &[T], dims: &[usize], mode: usize) -> Vec<T> {
    let d = dims[mode];
    let outer: usize = dims[..mode].iter().product();
    let inner: usize = dims[mode + 1..].iter().product();
    let cols = outer * inner;
    let mut out = Vec::with_capacity(values.len());
    for i in 0..d {
        for o in 0..outer {
            let start = (o * d + i) * inner;
            out.extend_from_slice(&values[start..start + inner]);
        }
    }
    debug_assert_eq!(out.len(), d * cols);
    out
}

/// Mode-`mode` unfolding, a `d_mode × ∏_{i≠mode} d_i` matrix.
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Array2<f64>> {
    check_mode(mode, t.order())?;
    let d = t.dims[mode];
    let cols = t.len() / d;
    let flat = unfold_slice(&t.values, &t.dims, mode);
    Ok(Array2::from_shape_vec((d, cols), flat).expect("unfold shape"))
}

/// Inverse of [`unfold`].
pub fn fold(m: ArrayView2<'_, f64>, mode: usize, dims: &[usize]) -> Result<DenseTensor> {
    let n = check_dims(dims)?;
    check_mode(mode, dims.len())?;
    let d = dims[mode];
    if m.nrows() != d || m.ncols() * d != n {
        return Err(Error::ShapeMismatch(format!(
            "matrix {}×{} cannot fold into {:?} at mode {}",
            m.nrows(),
            m.ncols(),
            dims,
            mode
        )));
    }
    let outer: usize = dims[..mode].iter().product();
    let inner: usize = dims[mode + 1..].iter().product();
    let mut values = vec![0.0; n];
    for i in 0..d {
        let row = m.row(i);
        for o in 0..outer {
            let dst = (o * d + i) * inner;
            for (c, v) in values[dst..dst + inner].iter_mut().enumerate() {
                *v = row[o * inner + c];
            }
        }
    }
    DenseTensor::new(dims.to_vec(), values)
}

/// Khatri–Rao product of every factor except `mode`, ordered to match [`unfold`].
pub fn khatri_rao_excluding(f: &CpFactors, mode: usize) -> Result<Array2<f64>> {
    check_mode(mode, f.order())?;
    let r = f.rank();
    let mut acc = Array2::<f64>::ones((1, r));
    for (k, a) in f.factors.iter().enumerate() {
        if k == mode {
            continue;
        }
        let (p_rows, q_rows) = (acc.nrows(), a.nrows());
        let mut next = Array2::<f64>::zeros((p_rows * q_rows, r));
        for p in 0..p_rows {
            for q in 0..q_rows {
                let row = p * q_rows + q;
                for c in 0..r {
                    next[[row, c]] = acc[[p, c]] * a[[q, c]];
                }
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// `θ_{i_1…i_K} = Σ_r ∏_k A_k[i_k, r]`.
pub fn cp_reconstruct(f: &CpFactors) -> DenseTensor {
    let kr = khatri_rao_excluding(f, 0).expect("mode 0 exists");
    let m = f.factors[0].dot(&kr.t());
    let dims = f.dims();
    let values = m.as_standard_layout().iter().copied().collect();
    DenseTensor { dims, values }
}

/// Dimension-normalized Frobenius distance `(∏ d_k)^{-1/2} ‖a − b‖_F`.
pub fn loss(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    same_dims(a, b)?;
    let ss: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((ss / a.len() as f64).sqrt())
}

pub fn max_norm(t: &DenseTensor) -> f64 {
    t.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    t.values.iter().map(|v| v * v).sum::<f64>().sqrt()
}
