//! Estimation error against the latent noise level: too little noise hurts as much as too much.

use bintensor::decomp::{fit, FitConfig};
use bintensor::sim::{gen_cp_signal, quantize_latent};
use bintensor::tensor::loss;
use bintensor::LinkSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bintensor::Result<()> {
    let theta = gen_cp_signal(&[20, 20, 20], 1, &mut ChaCha8Rng::seed_from_u64(1))?;
    println!("log10(sigma)  loss");
    for ls in [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5] {
        let link = LinkSpec::probit(10f64.powf(ls))?;
        let y = quantize_latent(&theta, &link, &mut ChaCha8Rng::seed_from_u64(2))?;
        let mut cfg = FitConfig::new(1, link);
        cfg.alpha = 2.0;
        cfg.n_starts = 1;
        let res = fit(&y, &cfg)?;
        println!("{ls:>12.1}  {:.4}", loss(&res.theta_hat, &theta)?);
    }
    Ok(())
}
