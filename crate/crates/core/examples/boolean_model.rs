//! Fit a logistic CP model to a noisy boolean (OR-of-ANDs) tensor and report RMSE and MER.

use bintensor::decomp::{fit, predict_proba, FitConfig};
use bintensor::sim::{mer, rmse, BooleanModelSpec};
use bintensor::LinkSpec;

fn main() -> bintensor::Result<()> {
    let link = LinkSpec::logistic(1.0)?;
    println!("R   mean prob  rmse    mer");
    for r in [2, 4, 6] {
        let s = BooleanModelSpec::new(20, r, 42).generate()?;
        let mut cfg = FitConfig::new(r, link);
        cfg.n_starts = 1;
        let est = predict_proba(&fit(&s.y, &cfg)?, &link);
        let mean = s.prob.values().iter().sum::<f64>() / s.prob.len() as f64;
        println!("{r:<3} {mean:.3}      {:.4}  {:.4}", rmse(&est, &s.prob)?, mer(&est, &s.prob)?);
    }
    Ok(())
}
