//! Bernoulli GLM solver used for every factor-row update.
//!
//! Fisher scoring on the expected information with step halving. Every
//! accepted step leaves the log-likelihood no smaller than before, and an
//! optional bound on the fitted linear predictors implements the max-norm
//! constraint at row level.

use ndarray::{Array1, ArrayView2};

use crate::error::{Error, Result};
use crate::links::LinkSpec;

/// Iteration controls for [`fit_glm_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmOptions {
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Relative log-likelihood change below which the fit has converged.
    pub rel_tol: f64,
    /// Step norm below which the fit has converged.
    pub step_tol: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            max_halvings: 30,
            rel_tol: 1e-10,
            step_tol: 1e-8,
        }
    }
}

/// One row regression: binary responses on an `n × R` design.
#[derive(Debug, Clone, Copy)]
pub struct GlmProblem<'a> {
    pub design: ArrayView2<'a, f64>,
    pub response: &'a [bool],
    pub observed: Option<&'a [bool]>,
    pub link: LinkSpec,
    /// Bound on `|x_iᵀβ|` over the observed rows.
    pub coef_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmSolution {
    pub coef: Array1<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub hit_bound: bool,
    /// Log-likelihood after the initial point and after every accepted step.
    pub loglik_path: Vec<f64>,
}

pub fn fit_glm(p: &GlmProblem<'_>, init: &[f64]) -> Result<GlmSolution> {
    fit_glm_with(p, init, &GlmOptions::default())
}

pub fn fit_glm_with(p: &GlmProblem<'_>, init: &[f64], opts: &GlmOptions) -> Result<GlmSolution> {
    let n = p.design.nrows();
    let r = p.design.ncols();
    if n == 0 || r == 0 {
        return Err(Error::InvalidArgument("empty design".into()));
    }
    if p.response.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} responses for {} design rows",
            p.response.len(),
            n
        )));
    }
    if init.len() != r || init.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "initial coefficients must be finite and match the design width".into(),
        ));
    }
    let active: Vec<usize> = match p.observed {
        Some(obs) => {
            if obs.len() != n {
                return Err(Error::ShapeMismatch("observation flags length".into()));
            }
            (0..n).filter(|&i| obs[i]).collect()
        }
        None => (0..n).collect(),
    };
    if active.is_empty() {
        return Err(Error::InvalidArgument("no observed responses".into()));
    }
    if let Some(b) = p.coef_bound {
        if !(b > 0.0) {
            return Err(Error::InvalidArgument("coefficient bound must be positive".into()));
        }
    }

    let design = p.design.as_standard_layout();
    let x = design.as_slice().expect("standard layout");
    let row = |i: usize| &x[i * r..(i + 1) * r];
    let link = p.link;
    let y = p.response;
    let weight_floor = 1e-10 * link.fisher_weight(0.0);

    let mut beta = init.to_vec();
    let mut eta = vec![0.0; n];
    for &i in &active {
        eta[i] = dot(row(i), &beta);
    }
    let mut hit_bound = false;
    if let Some(bound) = p.coef_bound {
        let m = active.iter().fold(0.0f64, |m, &i| m.max(eta[i].abs()));
        if m > bound {
            let c = bound / m;
            beta.iter_mut().for_each(|b| *b *= c);
            for &i in &active {
                eta[i] *= c;
            }
            hit_bound = true;
        }
    }
    let loglik_of = |eta: &[f64]| -> f64 { active.iter().map(|&i| link.log_f_signed(y[i], eta[i])).sum() };
    let mut ll = loglik_of(&eta);
    if !ll.is_finite() {
        return Err(Error::NonFinite("initial log-likelihood"));
    }
    let mut path = vec![ll];

    let mut hess = vec![0.0; r * r];
    let mut grad = vec![0.0; r];
    let mut d_eta = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        hess.iter_mut().for_each(|v| *v = 0.0);
        grad.iter_mut().for_each(|v| *v = 0.0);
        for &i in &active {
            let xi = row(i);
            let s = link.score(y[i], eta[i]);
            let w = link.fisher_weight(eta[i]).max(weight_floor);
            for a in 0..r {
                grad[a] += s * xi[a];
                let wa = w * xi[a];
                for b in 0..=a {
                    hess[a * r + b] += wa * xi[b];
                }
            }
        }
        if grad.iter().chain(hess.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Fisher information"));
        }
        let delta = solve_spd(&mut hess, &grad, r)?;
        let delta_norm = dot(&delta, &delta).sqrt();
        for &i in &active {
            d_eta[i] = dot(row(i), &delta);
        }

        let mut step = 1.0;
        let mut limited = false;
        if let Some(bound) = p.coef_bound {
            let mut t_max = f64::INFINITY;
            for &i in &active {
                let de = d_eta[i];
                if de != 0.0 {
                    let room = (bound - eta[i] * de.signum()).max(0.0);
                    t_max = t_max.min(room / de.abs());
                }
            }
            if t_max < 1.0 {
                step = t_max;
                limited = true;
            }
        }
        if step * delta_norm < opts.step_tol {
            converged = true;
            hit_bound |= limited;
            break;
        }

        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            for &i in &active {
                cand[i] = eta[i] + step * d_eta[i];
            }
            let ll_c = loglik_of(&cand);
            if ll_c.is_finite() && ll_c >= ll {
                accepted = Some(ll_c);
                break;
            }
            step *= 0.5;
            limited = false;
        }
        let Some(ll_new) = accepted else {
            // no ascent along the scoring direction within the halving budget
            break;
        };
        for (b, d) in beta.iter_mut().zip(&delta) {
            *b += step * d;
        }
        std::mem::swap(&mut eta, &mut cand);
        hit_bound |= limited;
        iterations += 1;
        let rel = if ll == 0.0 {
            0.0
        } else {
            (ll_new - ll).abs() / ll.abs()
        };
        debug_assert!(ll_new >= ll);
        ll = ll_new;
        path.push(ll);
        if rel < opts.rel_tol || step * delta_norm < opts.step_tol {
            converged = true;
            break;
        }
    }

    Ok(GlmSolution {
        coef: Array1::from(beta),
        loglik: ll,
        iterations,
        converged,
        hit_bound,
        loglik_path: path,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cholesky in place on the lower triangle; `false` if a pivot is not clearly positive.
fn cholesky(a: &mut [f64], r: usize) -> bool {
    for j in 0..r {
        let mut d = a[j * r + j];
        for k in 0..j {
            d -= a[j * r + k] * a[j * r + k];
        }
        let scale = a[j * r + j].abs();
        if !(d.is_finite() && d > 1e-14 * scale && d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * r + j] = d;
        for i in j + 1..r {
            let mut s = a[i * r + j];
            for k in 0..j {
                s -= a[i * r + k] * a[j * r + k];
            }
            a[i * r + j] = s / d;
        }
    }
    true
}

/// Solves `H Δ = g` for symmetric positive definite `H` given by its lower triangle.
///
/// On a failed factorization `1e-10 · trace(H)` is added to the diagonal once.
fn solve_spd(h: &mut [f64], g: &[f64], r: usize) -> Result<Vec<f64>> {
    let original = h.to_vec();
    if !cholesky(h, r) {
        h.copy_from_slice(&original);
        let trace: f64 = (0..r).map(|j| original[j * r + j]).sum();
        let jitter = 1e-10 * trace;
        for j in 0..r {
            h[j * r + j] += jitter;
        }
        if !(jitter > 0.0) || !cholesky(h, r) {
            return Err(Error::SingularDesign);
        }
    }
    let mut z = g.to_vec();
    for i in 0..r {
        let mut s = z[i];
        for k in 0..i {
            s -= h[i * r + k] * z[k];
        }
        z[i] = s / h[i * r + i];
    }
    for i in (0..r).rev() {
        let mut s = z[i];
        for k in i + 1..r {
            s -= h[k * r + i] * z[k];
        }
        z[i] = s / h[i * r + i];
    }
    Ok(z)
}
