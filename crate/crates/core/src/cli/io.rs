//! Text formats for tensors, fitted factors and the CSV reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::decomp::{FitResult, RankRow};
use crate::error::{Error, Result};
use crate::links::{LinkFamily, LinkSpec};
use crate::tensor::{multi_index, BinaryTensor, CpFactors, DenseTensor, ObservationMask};

/// How cells missing from a sparse file are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Absent {
    /// Absent cells are unobserved.
    #[default]
    Mask,
    /// Absent cells are observed zeros.
    Zero,
}

/// Floats are written with 17 significant digits so that reading them back is exact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: `{tok}` is not a number")))
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| Error::Parse(format!("line {line}: `{tok}` is not a non-negative integer")))
}

fn check_binary(v: f64, line: usize) -> Result<bool> {
    if v == 0.0 || v == 1.0 {
        Ok(v == 1.0)
    } else {
        Err(Error::Parse(format!("line {line}: binary tensor value {v} is not 0 or 1")))
    }
}

/// Parses a tensor file.
///
/// Line 1 is `K d_1 … d_K`, optionally followed by the word `sparse`. A dense body
/// lists one value per line in row-major order; a sparse body lists `i_1 … i_K v`
/// with 1-based indices. Blank lines and lines starting with `#` are ignored.
pub fn parse_tensor(text: &str, absent: Absent) -> Result<BinaryTensor> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty tensor file".into()))?;
    let mut toks: Vec<&str> = header.split_whitespace().collect();
    let sparse = toks.last() == Some(&"sparse");
    if sparse {
        toks.pop();
    }
    let order = parse_usize(toks[0], hline)?;
    if toks.len() != order + 1 {
        return Err(Error::Parse(format!(
            "line {hline}: header declares order {order} but lists {} dimensions",
            toks.len() - 1
        )));
    }
    let dims = toks[1..]
        .iter()
        .map(|t| parse_usize(t, hline))
        .collect::<Result<Vec<_>>>()?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Parse(format!("line {hline}: dimensions must be positive")));
    }
    let n: usize = dims.iter().product();
    if !sparse {
        let bits = lines
            .map(|(i, l)| parse_f64(l, i).and_then(|v| check_binary(v, i)))
            .collect::<Result<Vec<_>>>()?;
        if bits.len() != n {
            return Err(Error::Parse(format!(
                "dense body has {} values, header declares {n}",
                bits.len()
            )));
        }
        return BinaryTensor::from_bools(dims, &bits);
    }
    let mut bits = vec![false; n];
    let mut seen = vec![false; n];
    for (i, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != order + 1 {
            return Err(Error::Parse(format!("line {i}: expected {} fields", order + 1)));
        }
        let mut idx = Vec::with_capacity(order);
        for (k, t) in toks[..order].iter().enumerate() {
            let v = parse_usize(t, i)?;
            if v == 0 || v > dims[k] {
                return Err(Error::Parse(format!(
                    "line {i}: index {v} out of range 1..={} in mode {}",
                    dims[k],
                    k + 1
                )));
            }
            idx.push(v - 1);
        }
        let lin = crate::tensor::linear_index(&dims, &idx);
        if seen[lin] {
            return Err(Error::Parse(format!("line {i}: duplicate cell")));
        }
        seen[lin] = true;
        bits[lin] = check_binary(parse_f64(toks[order], i)?, i)?;
    }
    let y = BinaryTensor::from_bools(dims.clone(), &bits)?;
    match absent {
        Absent::Zero => Ok(y),
        Absent::Mask => y.with_mask(Some(ObservationMask::new(dims, seen)?)),
    }
}

pub fn read_tensor(path: &Path, absent: Absent) -> Result<BinaryTensor> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_tensor(&text, absent)
}

/// Dense layout for fully observed tensors, sparse layout listing the observed cells otherwise.
pub fn format_tensor(y: &BinaryTensor) -> String {
    let dims = y.dims();
    let mut out = String::new();
    let header: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    let sparse = y.mask().is_some();
    let _ = writeln!(
        out,
        "{} {}{}",
        dims.len(),
        header.join(" "),
        if sparse { " sparse" } else { "" }
    );
    for (lin, &v) in y.tensor().values().iter().enumerate() {
        if !sparse {
            let _ = writeln!(out, "{}", v as u8);
        } else if y.is_observed(lin) {
            for i in multi_index(dims, lin) {
                let _ = write!(out, "{} ", i + 1);
            }
            let _ = writeln!(out, "{}", v as u8);
        }
    }
    out
}

pub fn write_tensor(path: &Path, y: &BinaryTensor) -> Result<()> {
    fs::write(path, format_tensor(y))?;
    Ok(())
}

/// Fitted factors on disk: unit-norm columns per mode and the component weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorFile {
    pub factors: Vec<Array2<f64>>,
    pub lambda: Vec<f64>,
    pub link: LinkSpec,
    pub final_loglik: f64,
    pub bic: f64,
}

impl FactorFile {
    pub fn from_fit(fit: &FitResult, link: LinkSpec) -> Self {
        let lambda = fit.factors.weights();
        let mut factors = fit.factors.factors().to_vec();
        let last = factors.len() - 1;
        for (c, &w) in lambda.iter().enumerate() {
            if w > 0.0 {
                factors[last].column_mut(c).mapv_inplace(|v| v / w);
            }
        }
        Self {
            factors,
            lambda,
            link,
            final_loglik: fit.final_loglik,
            bic: fit.bic,
        }
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    /// Factors with the weights folded back into the last mode.
    pub fn to_cp(&self) -> Result<CpFactors> {
        let mut mats = self.factors.clone();
        let last = mats.len() - 1;
        for (c, &w) in self.lambda.iter().enumerate() {
            mats[last].column_mut(c).mapv_inplace(|v| v * w);
        }
        CpFactors::new(mats)
    }

    pub fn files(&self, dir: &Path) -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = (1..=self.factors.len())
            .map(|k| dir.join(format!("mode_{k}.csv")))
            .collect();
        v.push(dir.join("lambda.csv"));
        v.push(dir.join("manifest.txt"));
        v
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (k, m) in self.factors.iter().enumerate() {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_path(dir.join(format!("mode_{}.csv", k + 1)))?;
            for row in m.rows() {
                w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
            }
            w.flush()?;
        }
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(dir.join("lambda.csv"))?;
        for &l in &self.lambda {
            w.write_record([fmt_f64(l)])?;
        }
        w.flush()?;
        let dims: Vec<String> = self.factors.iter().map(|m| m.nrows().to_string()).collect();
        let manifest = format!(
            "link={}\nsigma={}\nrank={}\ndims={}\nfinal_loglik={}\nbic={}\n",
            self.link.family(),
            fmt_f64(self.link.sigma()),
            self.rank(),
            dims.join(","),
            fmt_f64(self.final_loglik),
            fmt_f64(self.bic)
        );
        fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest = fs::read_to_string(dir.join("manifest.txt"))?;
        let get = |key: &str| -> Result<String> {
            manifest
                .lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("manifest is missing `{key}`")))
        };
        let family: LinkFamily = get("link")?.parse()?;
        let sigma = parse_f64(&get("sigma")?, 2)?;
        let rank = parse_usize(&get("rank")?, 3)?;
        let dims = get("dims")?
            .split(',')
            .map(|t| parse_usize(t, 4))
            .collect::<Result<Vec<_>>>()?;
        let final_loglik = parse_f64(&get("final_loglik")?, 5)?;
        let bic = parse_f64(&get("bic")?, 6)?;
        let factors = dims
            .iter()
            .enumerate()
            .map(|(k, &d)| read_matrix(&dir.join(format!("mode_{}.csv", k + 1)), d, rank))
            .collect::<Result<Vec<_>>>()?;
        let lambda = read_matrix(&dir.join("lambda.csv"), rank, 1)?.into_raw_vec_and_offset().0;
        Ok(Self {
            factors,
            lambda,
            link: LinkSpec::new(family, sigma)?,
            final_loglik,
            bic,
        })
    }
}

fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut values = Vec::with_capacity(rows * cols);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::Parse(format!(
                "{}: row {} has {} columns, expected {cols}",
                path.display(),
                i + 1,
                rec.len()
            )));
        }
        for t in rec.iter() {
            values.push(parse_f64(t.trim(), i + 1)?);
        }
    }
    Array2::from_shape_vec((values.len() / cols.max(1), cols), values)
        .ok()
        .filter(|m| m.nrows() == rows)
        .ok_or_else(|| Error::Parse(format!("{}: expected {rows} rows", path.display())))
}

pub fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "loglik"])?;
    for (i, &l) in trace.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(l)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bic_table(path: &Path, table: &[RankRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "loglik", "p_e", "bic"])?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for row in table {
        w.write_record([row.rank.to_string(), opt(row.loglik), row.p_e.to_string(), opt(row.bic)])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per held-out cell: 1-based indices, predicted probability, observed value.
pub fn write_predictions(path: &Path, dims: &[usize], cells: &[usize], prob: &DenseTensor, truth: &BinaryTensor) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=dims.len()).map(|k| format!("i_{k}")).collect();
    header.push("prob".into());
    header.push("truth".into());
    w.write_record(&header)?;
    for &c in cells {
        let mut rec: Vec<String> = multi_index(dims, c).iter().map(|i| (i + 1).to_string()).collect();
        rec.push(fmt_f64(prob.values()[c]));
        rec.push((truth.is_one(c) as u8).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Cells listed in a holdout file (tensor-file syntax; listed cells form the holdout).
pub fn read_holdout(path: &Path, dims: &[usize]) -> Result<Vec<usize>> {
    let y = read_tensor(path, Absent::Mask)?;
    if y.dims() != dims {
        return Err(Error::ShapeMismatch(format!(
            "holdout dims {:?} differ from tensor dims {:?}",
            y.dims(),
            dims
        )));
    }
    Ok((0..y.tensor().len()).filter(|&c| y.is_observed(c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip() {
        let y = BinaryTensor::from_bools(vec![2, 3, 2], &[true, false, true, true, false, false, true, false, false, true, true, true]).unwrap();
        let text = format_tensor(&y);
        assert!(text.starts_with("3 2 3 2\n"));
        assert_eq!(parse_tensor(&text, Absent::Mask).unwrap(), y);
    }

    #[test]
    fn sparse_mask_and_zero_semantics() {
        let text = "3 2 2 2 sparse\n1 1 1 1\n2 2 2 0\n";
        let masked = parse_tensor(text, Absent::Mask).unwrap();
        assert_eq!(masked.n_observed(), 2);
        assert!(masked.is_one(0));
        assert_eq!(parse_tensor(&format_tensor(&masked), Absent::Mask).unwrap(), masked);
        let zero = parse_tensor(text, Absent::Zero).unwrap();
        assert_eq!(zero.n_observed(), 8);
        assert_eq!(zero.tensor().values().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn malformed_files_are_rejected() {
        for bad in [
            "",
            "3 2 2\n",
            "2 2 2\n0\n1\n1\n",
            "2 2 2\n0\n1\n1\n0.5\n",
            "2 2 2 sparse\n3 1 1\n",
            "2 2 2 sparse\n1 1 1\n1 1 0\n",
            "2 2 x\n",
        ] {
            assert!(matches!(parse_tensor(bad, Absent::Mask), Err(Error::Parse(_))), "{bad:?}");
        }
    }

    #[test]
    fn factor_file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ff = FactorFile {
            factors: vec![
                Array2::from_shape_fn((3, 2), |(i, j)| (i as f64 + 0.1) / (j as f64 + 3.0)),
                Array2::from_shape_fn((4, 2), |(i, j)| std::f64::consts::PI * i as f64 - j as f64 / 7.0),
            ],
            lambda: vec![1.0 / 3.0, 2.0f64.sqrt()],
            link: LinkSpec::probit(0.1).unwrap(),
            final_loglik: -123.456_789_012_345_67,
            bic: 1e-300,
        };
        ff.write(dir.path()).unwrap();
        assert_eq!(FactorFile::read(dir.path()).unwrap(), ff);
        assert!(ff.files(dir.path()).iter().all(|p| p.exists()));
    }
}
