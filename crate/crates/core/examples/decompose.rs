//! Simulate a rank-2 binary tensor, fit it, and compare the estimate with the truth.

use bintensor::decomp::{fit, log_likelihood, FitConfig};
use bintensor::sim::{gen_cp_signal, quantize_latent};
use bintensor::tensor::loss;
use bintensor::LinkSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bintensor::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let link = LinkSpec::probit(0.3)?;
    let theta = gen_cp_signal(&[25, 25, 25], 2, &mut rng)?;
    let y = quantize_latent(&theta, &link, &mut rng)?;

    let mut cfg = FitConfig::new(2, link);
    cfg.alpha = 2.0;
    cfg.n_starts = 3;
    let res = fit(&y, &cfg)?;

    println!("iterations     {}", res.n_iterations);
    println!("loglik (fit)   {:.3}", res.final_loglik);
    println!("loglik (truth) {:.3}", log_likelihood(&y, &theta, &link)?);
    println!("bic            {:.3}", res.bic);
    println!("loss           {:.4}", loss(&res.theta_hat, &theta)?);
    println!("weights        {:?}", res.factors.weights());
    Ok(())
}
