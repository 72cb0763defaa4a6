//! Evaluation metrics for estimated probability and parameter tensors.

use crate::error::{Error, Result};
use crate::tensor::{frobenius_norm, loss, same_dims, DenseTensor};

/// Root mean square error between two probability tensors.
pub fn rmse(est_prob: &DenseTensor, true_prob: &DenseTensor) -> Result<f64> {
    loss(est_prob, true_prob)
}

/// Fraction of cells whose 0.5-thresholded classification disagrees.
pub fn mer(est_prob: &DenseTensor, true_prob: &DenseTensor) -> Result<f64> {
    same_dims(est_prob, true_prob)?;
    let wrong = est_prob
        .values()
        .iter()
        .zip(true_prob.values())
        .filter(|(&e, &t)| (e >= 0.5) != (t >= 0.5))
        .count();
    Ok(wrong as f64 / est_prob.len() as f64)
}

/// `‖θ̂ − θ‖_F / ‖θ‖_F`.
pub fn relative_loss(theta_hat: &DenseTensor, theta_true: &DenseTensor) -> Result<f64> {
    let denom = frobenius_norm(theta_true);
    if denom == 0.0 {
        return Err(Error::InvalidArgument(
            "relative loss against a zero tensor".into(),
        ));
    }
    Ok(frobenius_norm(&theta_hat.sub(theta_true)?) / denom)
}

/// Area under the ROC curve as the Mann–Whitney statistic, ties credited 1/2.
pub fn auc(scores: &[(f64, bool)]) -> Result<f64> {
    let n_pos = scores.iter().filter(|s| s.1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    if scores.iter().any(|s| s.0.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sum of midranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].0 == sorted[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos = sorted[i..=j].iter().filter(|s| s.1).count();
        rank_sum += midrank * pos as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}
