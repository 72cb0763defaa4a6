//! Recover a stochastic multiway block model with a logistic fit and BIC-selected rank.

use bintensor::cli::experiment::to_probit_scale;
use bintensor::decomp::{predict_proba, select_rank, FitConfig};
use bintensor::sim::{relative_loss, rmse, BlockMeanModel, BlockModelSpec};
use bintensor::LinkSpec;

fn main() -> bintensor::Result<()> {
    let link = LinkSpec::logistic(1.0)?;
    for model in [BlockMeanModel::Multiplicative, BlockMeanModel::Additive] {
        let s = BlockModelSpec::new(20, model, 5).generate()?;
        let mut cfg = FitConfig::new(1, link);
        cfg.n_starts = 2;
        cfg.tol = 1e-5;
        let sel = select_rank(&s.y, &cfg, 1, 4)?;
        let est = to_probit_scale(&sel.best_fit.theta_hat, &link);
        println!(
            "{model:<15} rank {}  relative loss {:.3}  prob rmse {:.3}",
            sel.best_rank,
            relative_loss(&est, &s.latent)?,
            rmse(&predict_proba(&sel.best_fit, &link), &s.prob)?
        );
    }
    Ok(())
}
