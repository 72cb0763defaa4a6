//! Hold out 20% of the cells (stratified by label), fit on the rest, score the holdout.

use bintensor::cli::{complete, stratified_holdout};
use bintensor::decomp::FitConfig;
use bintensor::sim::{gen_cp_signal, quantize_latent};
use bintensor::LinkSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bintensor::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let link = LinkSpec::probit(10f64.powf(-0.5))?;
    let theta = gen_cp_signal(&[20, 20, 20], 2, &mut rng)?;
    let y = quantize_latent(&theta, &link, &mut rng)?;

    let holdout = stratified_holdout(&y, 0.2, 1)?;
    let mut cfg = FitConfig::new(2, link);
    cfg.n_starts = 2;
    let c = complete(&y, &cfg, holdout)?;
    println!("held-out cells {}", c.holdout.len());
    println!("auc            {:.4}", c.auc);
    println!("rmse           {:.4} (all-0.5 baseline {:.4})", c.rmse, c.baseline_rmse);
    Ok(())
}
