use bintensor::decomp::{
    fit, fit_from, line_search, log_likelihood, normalize, random_factors, update_mode, FitConfig,
};
use bintensor::glm::{fit_glm, GlmProblem};
use bintensor::sim::{gen_cp_signal, quantize_latent};
use bintensor::tensor::{
    cp_reconstruct, fold, frobenius_norm, khatri_rao_excluding, multi_index, unfold,
};
use bintensor::{BinaryTensor, CpFactors, DenseTensor, LinkFamily, LinkSpec, ObservationMask};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_cp(dims: &[usize], rank: usize, seed: u64) -> CpFactors {
    let mut r = rng(seed);
    CpFactors::new(
        dims.iter()
            .map(|&d| Array2::from_shape_simple_fn((d, rank), || r.random_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

fn random_binary(dims: &[usize], r: &mut ChaCha8Rng) -> BinaryTensor {
    let n: usize = dims.iter().product();
    let bits: Vec<bool> = (0..n).map(|_| r.random()).collect();
    BinaryTensor::from_bools(dims.to_vec(), &bits).unwrap()
}

fn links() -> Vec<LinkSpec> {
    LinkFamily::ALL
        .iter()
        .map(|&f| LinkSpec::new(f, 0.7).unwrap())
        .collect()
}

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 2..5)
}

proptest! {
    #[test]
    fn fold_inverts_unfold(dims in dims_strategy(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = DenseTensor::from_fn(dims.clone(), |_| r.random::<f64>() - 0.5).unwrap();
        for k in 0..dims.len() {
            let back = fold(unfold(&t, k).unwrap().view(), k, &dims).unwrap();
            prop_assert_eq!(&back, &t);
        }
    }

    #[test]
    fn unfold_matches_khatri_rao(dims in dims_strategy(), rank in 1usize..4, seed in any::<u64>()) {
        let f = random_cp(&dims, rank, seed);
        let t = cp_reconstruct(&f);
        for k in 0..dims.len() {
            let want = f.factor(k).dot(&khatri_rao_excluding(&f, k).unwrap().t());
            let got = unfold(&t, k).unwrap();
            let err = (&got - &want).mapv(|v| v * v).sum().sqrt();
            let scale = want.mapv(|v| v * v).sum().sqrt().max(1e-300);
            prop_assert!(err <= 1e-12 * scale.max(1.0), "mode {}: {}", k, err);
        }
    }

    #[test]
    fn reconstruct_is_multilinear(dims in dims_strategy(), rank in 1usize..4, seed in any::<u64>(), c in -3.0f64..3.0) {
        let f = random_cp(&dims, rank, seed);
        let mode = (seed % dims.len() as u64) as usize;
        let col = (seed / 7 % rank as u64) as usize;
        let mut scaled = f.clone();
        scaled.factor_mut(mode).column_mut(col).mapv_inplace(|v| v * c);
        // isolate the rank-1 term of `col`
        let mut only = f.clone();
        for k in 0..dims.len() {
            for j in 0..rank {
                if j != col {
                    only.factor_mut(k).column_mut(j).fill(0.0);
                }
            }
        }
        let term = cp_reconstruct(&only);
        let diff = cp_reconstruct(&scaled).sub(&cp_reconstruct(&f)).unwrap();
        let want = term.scale(c - 1.0);
        prop_assert!(frobenius_norm(&diff.sub(&want).unwrap()) <= 1e-12 * (1.0 + frobenius_norm(&want)));
    }
}

#[test]
fn reconstruct_matches_triple_loop() {
    let f = random_cp(&[3, 4, 5], 2, 9);
    let t = cp_reconstruct(&f);
    for lin in 0..t.len() {
        let [i, j, k] = multi_index(&[3, 4, 5], lin)[..] else { unreachable!() };
        let want: f64 = (0..2)
            .map(|r| f.factor(0)[[i, r]] * f.factor(1)[[j, r]] * f.factor(2)[[k, r]])
            .sum();
        assert!((t.values()[lin] - want).abs() < 1e-14);
    }
}

#[test]
fn link_symmetry_monotonicity_and_log_concavity() {
    for l in links() {
        let mut prev = f64::NEG_INFINITY;
        for i in -400..=400 {
            let t = i as f64 * 0.02;
            assert!((l.f(-t) - (1.0 - l.f(t))).abs() <= 1e-12);
            // f rounds to 1 in the upper tail, so strictness is checked on log f(t) for
            // t ≤ 0 and on −log f(−t) above, which covers the whole line by symmetry
            let v = if t <= 0.0 { l.log_f(t) } else { -l.log_f(-t) };
            assert!(v > prev, "{:?} not increasing at {t}", l.family());
            prev = v;
            if l.family() == LinkFamily::Laplacian && t.abs() < 0.05 {
                continue;
            }
            // second central difference of log f
            let h = 1e-3;
            let d2 = (l.log_f(t + h) - 2.0 * l.log_f(t) + l.log_f(t - h)) / (h * h);
            if l.family() == LinkFamily::Laplacian && t > 0.0 {
                // log f is strictly concave on θ > 0 and linear on θ < 0
                assert!(d2 < 0.0, "{t}: {d2}");
            } else if l.family() != LinkFamily::Laplacian {
                assert!(d2 < 0.0, "{:?} at {t}: {d2}", l.family());
            }
        }
        for alpha in [0.0, 0.5, 1.0, 3.0, 10.0] {
            assert!(l.steepness(alpha) > 0.0);
            assert!(l.convexity(alpha) > 0.0);
        }
    }
}

#[test]
fn score_matches_finite_differences() {
    let h = 1e-5;
    for l in links() {
        for i in -100..=100 {
            let x = i as f64 * 0.05;
            let t = x * l.sigma();
            for y in [false, true] {
                let fd = (l.log_f_signed(y, t + h) - l.log_f_signed(y, t - h)) / (2.0 * h);
                let s = l.score(y, t);
                // the Laplacian score jumps at 0; skip the kink
                if l.family() == LinkFamily::Laplacian && t.abs() < 2.0 * h {
                    continue;
                }
                assert!((s - fd).abs() <= 1e-6 * s.abs().max(1.0), "{:?} y={y} θ={t}: {s} vs {fd}", l.family());
            }
        }
    }
}

fn glm_problem(seed: u64, n: usize) -> (Array2<f64>, Vec<bool>) {
    let mut r = rng(seed);
    let x = Array2::from_shape_simple_fn((n, 2), || r.random_range(-1.0..1.0));
    // responses with both classes so the MLE is finite with high probability
    let beta: [f64; 2] = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
    let y = (0..n)
        .map(|i| r.random::<f64>() < 1.0 / (1.0 + (-(x[[i, 0]] * beta[0] + x[[i, 1]] * beta[1])).exp()))
        .collect();
    (x, y)
}

#[test]
fn glm_beats_grid_oracle() {
    let link = LinkSpec::logistic(1.0).unwrap();
    for seed in 0..20 {
        let (x, y) = glm_problem(seed, 8);
        let p = GlmProblem {
            design: x.view(),
            response: &y,
            observed: None,
            link,
            coef_bound: None,
        };
        let sol = fit_glm(&p, &[0.0, 0.0]).unwrap();
        let ll = |b: [f64; 2]| -> f64 {
            (0..8)
                .map(|i| link.log_f_signed(y[i], x[[i, 0]] * b[0] + x[[i, 1]] * b[1]))
                .sum()
        };
        let mut best = f64::NEG_INFINITY;
        for i in 0..201 {
            for j in 0..201 {
                best = best.max(ll([-3.0 + 0.03 * i as f64, -3.0 + 0.03 * j as f64]));
            }
        }
        assert!(sol.loglik >= best - 1e-8, "seed {seed}: {} < {best}", sol.loglik);
        assert!(sol.loglik_path.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn glm_gradient_vanishes_and_matches_gradient_descent() {
    let link = LinkSpec::logistic(1.0).unwrap();
    let mut checked = 0;
    for seed in 100..140 {
        let (x, y) = glm_problem(seed, 60);
        let p = GlmProblem {
            design: x.view(),
            response: &y,
            observed: None,
            link,
            coef_bound: None,
        };
        let sol = fit_glm(&p, &[0.0, 0.0]).unwrap();
        if !sol.converged {
            continue;
        }
        let grad = |b: &Array1<f64>| -> Array1<f64> {
            let mut g = Array1::zeros(2);
            for (row, &yi) in x.rows().into_iter().zip(&y) {
                g = g + &row * link.score(yi, row.dot(b));
            }
            g
        };
        let g = grad(&sol.coef);
        assert!(g.iter().all(|v| v.abs() <= 1e-6 * 60.0), "seed {seed}: {g}");
        // plain gradient ascent with a step below 4/λ_max(XᵀX) converges to the same point
        let mut b = Array1::zeros(2);
        for _ in 0..200_000 {
            let step = grad(&b) * 0.05;
            b += &step;
            if step.iter().all(|v| v.abs() < 1e-13) {
                break;
            }
        }
        assert!((&b - &sol.coef).iter().all(|v| v.abs() < 1e-6), "seed {seed}: {b} vs {}", sol.coef);
        checked += 1;
    }
    assert!(checked >= 30);
}

#[test]
fn glm_flip_equivariance_is_exact() {
    for l in links() {
        for seed in 0..10 {
            let (x, y) = glm_problem(seed + 500, 20);
            let flipped: Vec<bool> = y.iter().map(|v| !v).collect();
            let mk = |resp| GlmProblem {
                design: x.view(),
                response: resp,
                observed: None,
                link: l,
                coef_bound: Some(4.0),
            };
            let a = fit_glm(&mk(&y), &[0.1, -0.2]).unwrap();
            let b = fit_glm(&mk(&flipped), &[-0.1, 0.2]).unwrap();
            assert_eq!(a.coef, b.coef.mapv(|v| -v));
            assert_eq!(a.loglik_path, b.loglik_path);
        }
    }
}

#[test]
fn likelihood_flip_invariance_is_exact() {
    let mut r = rng(1);
    for l in links() {
        for _ in 0..20 {
            let y = random_binary(&[4, 3, 5], &mut r);
            let theta = DenseTensor::from_fn(vec![4, 3, 5], |_| r.random_range(-40.0..40.0)).unwrap();
            assert_eq!(
                log_likelihood(&y.flipped(), &theta.scale(-1.0), &l).unwrap(),
                log_likelihood(&y, &theta, &l).unwrap()
            );
        }
    }
}

#[test]
fn flipped_fit_follows_the_same_trace() {
    let mut r = rng(2);
    let link = LinkSpec::logistic(1.0).unwrap();
    let theta = gen_cp_signal(&[8, 7, 6], 2, &mut r).unwrap().scale(3.0);
    let y = quantize_latent(&theta, &link, &mut r).unwrap();
    let cfg = FitConfig::new(2, link);
    let init = random_factors(y.dims(), 2, 0.5, 3).unwrap();
    let mut neg = init.clone();
    neg.factor_mut(0).mapv_inplace(|v| -v);
    let a = fit_from(&y, &cfg, init).unwrap();
    let b = fit_from(&y.flipped(), &cfg, neg).unwrap();
    assert_eq!(a.loglik_trace.len(), b.loglik_trace.len());
    for (u, v) in a.loglik_trace.iter().zip(&b.loglik_trace) {
        assert!((u - v).abs() <= 1e-8 * u.abs().max(1.0));
    }
    let sum = a.theta_hat.values().iter().zip(b.theta_hat.values()).map(|(p, q)| (p + q).abs()).fold(0.0, f64::max);
    assert!(sum < 1e-6);
}

#[test]
fn normalize_keeps_reconstruction() {
    for seed in 0..50 {
        let f = random_cp(&[5, 4, 6], 3, seed);
        let before = cp_reconstruct(&f);
        let after = cp_reconstruct(&normalize(&f).unwrap());
        assert!(frobenius_norm(&after.sub(&before).unwrap()) <= 1e-12 * frobenius_norm(&before));
    }
}

#[test]
fn masked_cells_have_no_influence() {
    let mut r = rng(4);
    let dims = [6, 5, 4];
    let link = LinkSpec::probit(1.0).unwrap();
    let y = random_binary(&dims, &mut r);
    let flags: Vec<bool> = (0..120).map(|_| r.random::<f64>() < 0.7).collect();
    let mask = ObservationMask::new(dims.to_vec(), flags.clone()).unwrap();
    let a = y.clone().with_mask(Some(mask.clone())).unwrap();
    // rewrite every unobserved cell at random
    let values: Vec<f64> = (0..120)
        .map(|c| if flags[c] { y.tensor().values()[c] } else { r.random_range(0..2) as f64 })
        .collect();
    let b = BinaryTensor::new(DenseTensor::new(dims.to_vec(), values).unwrap(), Some(mask)).unwrap();
    let cfg = FitConfig::new(2, link);
    let f = random_factors(&dims, 2, 0.3, 5).unwrap();
    for k in 0..3 {
        assert_eq!(update_mode(&a, &f, k, &cfg).unwrap(), update_mode(&b, &f, k, &cfg).unwrap());
    }
    let mut small = cfg.clone();
    small.n_starts = 2;
    assert_eq!(fit(&a, &small).unwrap(), fit(&b, &small).unwrap());
}

#[test]
fn true_factors_are_a_fixed_point_of_a_separable_instance() {
    // ±1 factors: every predictor sits at the bound and y = 1{θ > 0} is perfectly fit
    let mut r = rng(6);
    let f = CpFactors::new(
        (0..3)
            .map(|_| Array2::from_shape_simple_fn((4, 1), || if r.random() { 1.0 } else { -1.0 }))
            .collect(),
    )
    .unwrap();
    let theta = cp_reconstruct(&f);
    let bits: Vec<bool> = theta.values().iter().map(|&t| t > 0.0).collect();
    let y = BinaryTensor::from_bools(vec![4, 4, 4], &bits).unwrap();
    let mut cfg = FitConfig::new(1, LinkSpec::logistic(0.5).unwrap());
    cfg.alpha = 1.0;
    for k in 0..3 {
        let up = update_mode(&y, &f, k, &cfg).unwrap();
        let drift = (up.factor(k) - f.factor(k)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(drift < 1e-8, "mode {k}: {drift}");
    }
}

#[test]
fn line_search_matches_fine_grid_oracle() {
    let mut r = rng(7);
    let link = LinkSpec::logistic(1.0).unwrap();
    for seed in 0..10 {
        let theta = gen_cp_signal(&[6, 6, 6], 2, &mut r).unwrap().scale(4.0);
        let y = quantize_latent(&theta, &link, &mut r).unwrap();
        let old = random_cp(&[6, 6, 6], 2, seed);
        let new = random_cp(&[6, 6, 6], 2, seed + 100);
        let cfg = FitConfig::new(2, link);
        let (gamma, blended) = line_search(&y, &old, &new, &cfg).unwrap();
        let at = |g: f64| {
            let mats = old
                .factors()
                .iter()
                .zip(new.factors())
                .map(|(a, b)| a * g + b * (1.0 - g))
                .collect();
            log_likelihood(&y, &cp_reconstruct(&CpFactors::new(mats).unwrap()), &link).unwrap()
        };
        assert_eq!(log_likelihood(&y, &cp_reconstruct(&blended), &link).unwrap(), at(gamma));
        let coarse: Vec<f64> = (0..21).map(|i| at(i as f64 / 20.0)).collect();
        assert!(coarse.iter().all(|&v| v <= at(gamma)));
        let (g_fine, _) = (0..2001)
            .map(|i| (i as f64 / 2000.0, at(i as f64 / 2000.0)))
            .fold((0.0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        assert!((g_fine - gamma).abs() <= 1.0 / 20.0 + 1e-12, "seed {seed}: {gamma} vs {g_fine}");
    }
}

#[test]
fn fit_reaches_the_truth_likelihood() {
    let link = LinkSpec::probit(10f64.powf(-0.5)).unwrap();
    let mut wins = 0;
    for seed in 0..30 {
        let mut r = rng(1000 + seed);
        let theta = gen_cp_signal(&[20, 20, 20], 1, &mut r).unwrap();
        let y = quantize_latent(&theta, &link, &mut r).unwrap();
        let mut cfg = FitConfig::new(1, link);
        cfg.n_starts = 1;
        cfg.seed = seed;
        let res = fit(&y, &cfg).unwrap();
        if res.final_loglik >= log_likelihood(&y, &theta, &link).unwrap() {
            wins += 1;
        }
    }
    assert!(wins >= 24, "{wins}/30");
}

#[test]
fn winning_seed_reproduces_the_fit() {
    let mut r = rng(8);
    let link = LinkSpec::logistic(1.0).unwrap();
    let theta = gen_cp_signal(&[10, 9, 8], 2, &mut r).unwrap().scale(4.0);
    let y = quantize_latent(&theta, &link, &mut r).unwrap();
    let mut cfg = FitConfig::new(2, link);
    cfg.seed = 12;
    let multi = fit(&y, &cfg).unwrap();
    let mut single = cfg.clone();
    single.n_starts = 1;
    single.seed = multi.start_seed;
    let again = fit(&y, &single).unwrap();
    assert_eq!(again.theta_hat, multi.theta_hat);
    assert_eq!(again.loglik_trace, multi.loglik_trace);
    assert_eq!(fit(&y, &cfg).unwrap(), multi);
}

#[test]
fn predictions_stay_inside_the_unit_interval() {
    let mut r = rng(9);
    let link = LinkSpec::logistic(0.01).unwrap();
    let theta = gen_cp_signal(&[8, 8, 8], 1, &mut r).unwrap();
    let y = quantize_latent(&theta, &link, &mut r).unwrap();
    let mut cfg = FitConfig::new(1, link);
    cfg.n_starts = 1;
    let res = fit(&y, &cfg).unwrap();
    let p = bintensor::decomp::predict_proba(&res, &link);
    assert!(p.values().iter().all(|&v| v > 0.0 && v < 1.0));
}
