//! The three link families: probabilities, scores, Fisher weights and the L_α / γ_α constants.

use bintensor::{LinkFamily, LinkSpec};

fn main() -> bintensor::Result<()> {
    for family in LinkFamily::ALL {
        let l = LinkSpec::new(family, 1.0)?;
        println!("{family}");
        for t in [-30.0, -2.0, 0.0, 2.0] {
            println!(
                "  θ={t:>5}  f={:.6e}  log f={:>10.4}  score(1)={:.4}  weight={:.4e}",
                l.f(t),
                l.log_f(t),
                l.score(true, t),
                l.fisher_weight(t)
            );
        }
        println!("  L_2 = {:.4}  γ_2 = {:.4}", l.steepness(2.0), l.convexity(2.0));
    }
    Ok(())
}
