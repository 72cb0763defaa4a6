//! Choose the rank by BIC over a grid around the truth.

use bintensor::decomp::{select_rank, FitConfig};
use bintensor::sim::{gen_cp_signal, sample_bernoulli};
use bintensor::LinkSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bintensor::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let link = LinkSpec::logistic(0.1)?;
    let theta = gen_cp_signal(&[25, 25, 25], 3, &mut rng)?;
    let y = sample_bernoulli(&theta, &link, &mut rng)?;

    let mut cfg = FitConfig::new(1, link);
    cfg.n_starts = 2;
    let sel = select_rank(&y, &cfg, 1, 5)?;
    println!("rank  p_e        loglik          bic");
    for row in &sel.table {
        println!(
            "{:>4}  {:>4}  {:>12.2}  {:>12.2}",
            row.rank,
            row.p_e,
            row.loglik.unwrap_or(f64::NAN),
            row.bic.unwrap_or(f64::NAN)
        );
    }
    println!("selected rank: {}", sel.best_rank);
    Ok(())
}
