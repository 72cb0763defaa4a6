//! Link functions for the Bernoulli model and the matching latent-noise laws.
//!
//! Every family is a symmetric CDF `F` applied to the standardized predictor
//! `x = θ/σ`, so `f(θ) = F(θ/σ)` and `1 − f(θ) = f(−θ)`. All log-likelihood
//! terms go through `log F` evaluated on the signed predictor, which avoids
//! forming `1 − f` by subtraction.

use std::f64::consts::{LN_2, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// `ln √(2π)`
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this standardized predictor the probit tail switches to the Mills ratio.
const PROBIT_TAIL: f64 = -8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkFamily {
    Logistic,
    Probit,
    Laplacian,
}

impl LinkFamily {
    pub const ALL: [LinkFamily; 3] = [LinkFamily::Logistic, LinkFamily::Probit, LinkFamily::Laplacian];

    pub fn name(self) -> &'static str {
        match self {
            LinkFamily::Logistic => "logistic",
            LinkFamily::Probit => "probit",
            LinkFamily::Laplacian => "laplace",
        }
    }
}

impl fmt::Display for LinkFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" | "logit" => Ok(LinkFamily::Logistic),
            "probit" | "gaussian" | "normal" => Ok(LinkFamily::Probit),
            "laplace" | "laplacian" => Ok(LinkFamily::Laplacian),
            other => Err(Error::Parse(format!("unknown link family `{other}`"))),
        }
    }
}

/// A link family together with its scale `σ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    family: LinkFamily,
    sigma: f64,
}

impl LinkSpec {
    pub fn new(family: LinkFamily, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "link scale must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { family, sigma })
    }

    pub fn logistic(sigma: f64) -> Result<Self> {
        Self::new(LinkFamily::Logistic, sigma)
    }

    pub fn probit(sigma: f64) -> Result<Self> {
        Self::new(LinkFamily::Probit, sigma)
    }

    pub fn laplacian(sigma: f64) -> Result<Self> {
        Self::new(LinkFamily::Laplacian, sigma)
    }

    pub fn family(&self) -> LinkFamily {
        self.family
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Success probability `f(θ)`.
    pub fn f(&self, theta: f64) -> f64 {
        let x = theta / self.sigma;
        match self.family {
            LinkFamily::Logistic => logistic_cdf(x),
            LinkFamily::Probit => normal_cdf(x),
            LinkFamily::Laplacian => {
                if x < 0.0 {
                    0.5 * x.exp()
                } else {
                    1.0 - 0.5 * (-x).exp()
                }
            }
        }
    }

    /// Derivative `ḟ(θ)` with respect to θ.
    pub fn density(&self, theta: f64) -> f64 {
        let x = theta / self.sigma;
        let d = match self.family {
            LinkFamily::Logistic => {
                let p = logistic_cdf(x);
                p * logistic_cdf(-x)
            }
            LinkFamily::Probit => INV_SQRT_2PI * (-0.5 * x * x).exp(),
            LinkFamily::Laplacian => 0.5 * (-x.abs()).exp(),
        };
        d / self.sigma
    }

    /// `log f(θ)`, accurate far into both tails.
    pub fn log_f(&self, theta: f64) -> f64 {
        let x = theta / self.sigma;
        match self.family {
            LinkFamily::Logistic => {
                if x >= 0.0 {
                    -(-x).exp().ln_1p()
                } else {
                    x - x.exp().ln_1p()
                }
            }
            LinkFamily::Probit => log_normal_cdf(x),
            LinkFamily::Laplacian => {
                if x < 0.0 {
                    x - LN_2
                } else {
                    (-0.5 * (-x).exp()).ln_1p()
                }
            }
        }
    }

    /// `log f((2y − 1) θ)`, the per-cell log-likelihood.
    #[inline]
    pub fn log_f_signed(&self, y: bool, theta: f64) -> f64 {
        self.log_f(if y { theta } else { -theta })
    }

    /// `ḟ(x)/f(x)` on the standardized scale.
    fn ratio(&self, x: f64) -> f64 {
        match self.family {
            LinkFamily::Logistic => logistic_cdf(-x),
            LinkFamily::Probit => {
                if x < PROBIT_TAIL {
                    1.0 / mills_ratio(-x)
                } else {
                    INV_SQRT_2PI * (-0.5 * x * x).exp() / normal_cdf(x)
                }
            }
            LinkFamily::Laplacian => {
                if x < 0.0 {
                    1.0
                } else {
                    let e = (-x).exp();
                    e / (2.0 - e)
                }
            }
        }
    }

    /// Derivative of [`log_f_signed`](Self::log_f_signed) with respect to θ.
    #[inline]
    pub fn score(&self, y: bool, theta: f64) -> f64 {
        let x = theta / self.sigma;
        if y {
            self.ratio(x) / self.sigma
        } else {
            -self.ratio(-x) / self.sigma
        }
    }

    /// Expected information `ḟ² / (f (1 − f))` of one Bernoulli cell.
    #[inline]
    pub fn fisher_weight(&self, theta: f64) -> f64 {
        let x = theta / self.sigma;
        let w = match self.family {
            LinkFamily::Logistic => logistic_cdf(x) * logistic_cdf(-x),
            LinkFamily::Probit => self.ratio(x) * self.ratio(-x),
            LinkFamily::Laplacian => {
                let e = (-x.abs()).exp();
                e / (2.0 - e)
            }
        };
        w / (self.sigma * self.sigma)
    }

    /// Steepness constant `L_α`: exact for logistic, the upper bound otherwise.
    pub fn steepness(&self, alpha: f64) -> f64 {
        let s = self.sigma;
        match self.family {
            LinkFamily::Logistic => 1.0 / s,
            LinkFamily::Probit => 2.0 / s * (alpha / s + 1.0),
            LinkFamily::Laplacian => 2.0 / s,
        }
    }

    /// Convexity constant `γ_α`: exact for logistic, the lower bound otherwise.
    ///
    /// The probit bound is evaluated at the edge of the range, `|θ| = α`.
    pub fn convexity(&self, alpha: f64) -> f64 {
        let s = self.sigma;
        let a = alpha / s;
        match self.family {
            // e^a / (1 + e^a)^2 written without overflow
            LinkFamily::Logistic => logistic_cdf(a) * logistic_cdf(-a) / (s * s),
            LinkFamily::Probit => INV_SQRT_2PI / (s * s) * (a + 1.0 / 6.0) * (-a * a).exp(),
            LinkFamily::Laplacian => (-a).exp() / (2.0 * s * s),
        }
    }

    /// One standardized latent-noise draw (scale 1).
    pub fn sample_standard<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            LinkFamily::Probit => StandardNormal.sample(rng),
            LinkFamily::Logistic => {
                let u = open_unit(rng);
                (u / (1.0 - u)).ln()
            }
            LinkFamily::Laplacian => {
                let u = open_unit(rng) - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }

    /// I.i.d. latent noise with `P(ε < θ) = 1 − f(−θ)`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R, dims: &[usize]) -> Result<DenseTensor> {
        let mut t = DenseTensor::zeros(dims.to_vec())?;
        for v in t.values_mut() {
            *v = self.sigma * self.sample_standard(rng);
        }
        Ok(t)
    }
}

impl fmt::Display for LinkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(sigma={})", self.family, self.sigma)
    }
}

/// Uniform draw on the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

#[inline]
pub(crate) fn logistic_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `(1 − Φ(t)) / φ(t)` for `t ≥ 8`, by backward evaluation of the continued fraction
/// `1 / (t + 1/(t + 2/(t + 3/(t + …))))`.
fn mills_ratio(t: f64) -> f64 {
    let mut tail = t;
    for n in (1..=60).rev() {
        tail = t + n as f64 / tail;
    }
    1.0 / tail
}

/// `log Φ(x)` without forming a raw near-zero probability.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x < PROBIT_TAIL {
        -0.5 * x * x - LN_SQRT_2PI + mills_ratio(-x).ln()
    } else if x > 0.0 {
        // erfc of the positive argument is relative-accurate
        (-0.5 * libm::erfc(x / SQRT_2)).ln_1p()
    } else {
        normal_cdf(x).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all(sigma: f64) -> Vec<LinkSpec> {
        LinkFamily::ALL
            .iter()
            .map(|&f| LinkSpec::new(f, sigma).unwrap())
            .collect()
    }

    /// Complement `1 − f(θ)` from each family's own closed form.
    fn complement(link: &LinkSpec, theta: f64) -> f64 {
        let x = theta / link.sigma();
        match link.family() {
            LinkFamily::Logistic => 1.0 / (1.0 + x.exp()),
            LinkFamily::Probit => 0.5 * libm::erfc(x / SQRT_2),
            LinkFamily::Laplacian => {
                if x < 0.0 {
                    1.0 - 0.5 * x.exp()
                } else {
                    0.5 * (-x).exp()
                }
            }
        }
    }

    #[test]
    fn half_at_zero() {
        for sigma in [0.1, 1.0, 3.0] {
            for l in all(sigma) {
                assert_eq!(l.f(0.0), 0.5);
                assert!((l.log_f_signed(true, 0.0) - 0.5f64.ln()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hand_values() {
        let l = LinkSpec::logistic(1.0).unwrap();
        assert!((l.f(3f64.ln()) - 0.75).abs() < 1e-15);
        let lap = LinkSpec::laplacian(1.0).unwrap();
        assert!((lap.f(-(2f64.ln())) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn two_branch_identity() {
        for sigma in [0.5, 1.0, 2.0] {
            for l in all(sigma) {
                for i in 0..=120 {
                    let theta = sigma * (-30.0 + 0.5 * i as f64);
                    for y in [false, true] {
                        let direct = if y {
                            l.f(theta).ln()
                        } else {
                            complement(&l, theta).ln()
                        };
                        let got = l.log_f_signed(y, theta);
                        assert!(
                            (got - direct).abs() <= 1e-12 * direct.abs().max(1.0),
                            "{l} y={y} theta={theta}: {got} vs {direct}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn large_predictors_stay_finite() {
        let l = LinkSpec::logistic(1.0).unwrap();
        let v = l.log_f_signed(false, 50.0);
        assert!((v + 50.0).abs() < 1e-12, "{v}");
        for l in all(1.0) {
            for theta in [-700.0, 700.0] {
                for y in [false, true] {
                    assert!(l.log_f_signed(y, theta).is_finite());
                    assert!(l.score(y, theta).is_finite());
                }
            }
        }
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn log_normal_cdf_reference_values() {
        // 40-digit reference evaluations
        let cases = [
            (-40.0, -804.608_442_013_753_788_166_6),
            (-37.5, -707.668_989_317_507_191_07),
            (-20.0, -203.917_155_371_097_263_94),
            (-9.5, -48.306_019_298_965_230_282),
            (-8.0001, -35.014_249_301_654_147_745),
            (-7.9999, -35.012_625_028_031_703_211),
            (-3.0, -6.607_726_221_510_349_543_3),
            (0.5, -0.368_946_415_288_656_393_07),
            (5.5, -1.898_956_264_618_946_298_9e-8),
            (9.0, -1.128_588_405_953_840_647_8e-19),
        ];
        for (x, want) in cases {
            let got = log_normal_cdf(x);
            assert!((got - want).abs() <= 1e-13 * want.abs(), "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn logistic_canonical_identities() {
        let l = LinkSpec::logistic(1.0).unwrap();
        for i in 0..41 {
            let t = -4.0 + 0.2 * i as f64;
            let p = l.f(t);
            assert!((l.score(true, t) - (1.0 - p)).abs() < 1e-14);
            assert!((l.score(false, t) + p).abs() < 1e-14);
            assert!((l.fisher_weight(t) - p * (1.0 - p)).abs() < 1e-15);
        }
    }

    #[test]
    fn score_symmetric_at_zero() {
        for l in all(0.7) {
            let up = l.score(true, 0.0);
            let down = l.score(false, 0.0);
            assert!((up + down).abs() < 1e-15);
            assert!((up - 2.0 * l.density(0.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn fisher_weight_matches_definition() {
        for l in all(1.3) {
            for i in 0..31 {
                let t = -3.0 + 0.2 * i as f64;
                let f = l.f(t);
                let d = l.density(t);
                let w = d * d / (f * (1.0 - f));
                assert!((l.fisher_weight(t) - w).abs() < 1e-12 * w.max(1.0), "{l} {t}");
                assert!(l.fisher_weight(t) > 0.0);
            }
        }
    }

    #[test]
    fn constants() {
        let l = LinkSpec::logistic(1.0).unwrap();
        for a in [0.0, 1.0, 5.0] {
            assert_eq!(l.steepness(a), 1.0);
        }
        assert!((l.convexity(0.0) - 0.25).abs() < 1e-15);
        let lap = LinkSpec::laplacian(1.0).unwrap();
        assert!((lap.convexity(1.0) - (-1f64).exp() / 2.0).abs() < 1e-15);
        for link in all(0.5) {
            for a in [0.0, 0.5, 2.0, 10.0] {
                assert!(link.steepness(a) > 0.0);
                assert!(link.convexity(a) > 0.0);
            }
        }
    }

    #[test]
    fn probit_constants_bound_the_true_curvature() {
        // γ_α = inf_{|x|≤a} r(x)^2 + x r(x) for the probit, r = φ/Φ.
        let p = LinkSpec::probit(1.0).unwrap();
        for a in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let mut inf = f64::INFINITY;
            let mut sup: f64 = 0.0;
            for i in 0..=400 {
                let x = -a + 2.0 * a * i as f64 / 400.0;
                let r = p.ratio(x);
                inf = inf.min(r * r + x * r);
                sup = sup.max(p.density(x) / (p.f(x) * (1.0 - p.f(x))));
            }
            assert!(p.convexity(a) <= inf, "a={a}");
            assert!(p.steepness(a) >= sup, "a={a}");
        }
    }

    #[test]
    fn noise_seed_and_scale() {
        for fam in LinkFamily::ALL {
            let l1 = LinkSpec::new(fam, 1.0).unwrap();
            let l2 = LinkSpec::new(fam, 2.0).unwrap();
            let a = l1.sample_noise(&mut ChaCha8Rng::seed_from_u64(7), &[3, 4, 5]).unwrap();
            let b = l1.sample_noise(&mut ChaCha8Rng::seed_from_u64(7), &[3, 4, 5]).unwrap();
            let c = l2.sample_noise(&mut ChaCha8Rng::seed_from_u64(7), &[3, 4, 5]).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.scale(2.0), c);
        }
    }

    #[test]
    fn parse_family_names() {
        assert_eq!("laplace".parse::<LinkFamily>().unwrap(), LinkFamily::Laplacian);
        assert_eq!("Probit".parse::<LinkFamily>().unwrap(), LinkFamily::Probit);
        assert!("cauchy".parse::<LinkFamily>().is_err());
        assert!(LinkSpec::logistic(0.0).is_err());
        assert!(LinkSpec::logistic(f64::NAN).is_err());
    }
}
