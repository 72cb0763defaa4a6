//! Write a tensor and a fitted factor set to disk and read both back.

use bintensor::cli::io::{format_tensor, parse_tensor, Absent, FactorFile};
use bintensor::decomp::{fit, FitConfig};
use bintensor::sim::{gen_cp_signal, sample_bernoulli};
use bintensor::LinkSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bintensor::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let link = LinkSpec::logistic(0.5)?;
    let y = sample_bernoulli(&gen_cp_signal(&[6, 5, 4], 1, &mut rng)?, &link, &mut rng)?;

    let text = format_tensor(&y);
    println!("header: {}", text.lines().next().unwrap_or_default());
    assert_eq!(parse_tensor(&text, Absent::Mask)?, y);

    let sparse = parse_tensor("3 2 2 2 sparse\n1 1 1 1\n2 1 2 0\n", Absent::Mask)?;
    println!("sparse file: {} of {} cells observed", sparse.n_observed(), sparse.tensor().len());

    let res = fit(&y, &FitConfig::new(1, link))?;
    let dir = std::env::temp_dir().join("bintensor-example-factors");
    let ff = FactorFile::from_fit(&res, link);
    ff.write(&dir)?;
    assert_eq!(FactorFile::read(&dir)?, ff);
    for p in ff.files(&dir) {
        println!("wrote {}", p.display());
    }
    Ok(())
}
