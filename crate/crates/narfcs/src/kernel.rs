//! Least-squares and logistic fitting plus the Bayesian posterior draws that
//! power the univariate imputers.
//!
//! Both fits are deterministic; randomness enters only through the draw
//! functions, which consume a caller-owned stream. The linear solve is a
//! Cholesky factorization with an escalating diagonal-jitter fallback; the
//! factor contracts (`xtx_inv_factor`, `cov_factor`) are what the imputers
//! rely on, the factorization route is an internal detail.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Ridge applied automatically when an unpenalized fit hits a singular or
/// separable system.
pub const DEFAULT_RIDGE: f64 = 1e-5;

/// An ordinary-least-squares fit of `y` on the columns of `X`.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Solution of `(X'X + ridge I) b = X'y`.
    pub beta_hat: DVector<f64>,
    /// Residual sum of squares at `beta_hat`.
    pub rss: f64,
    /// Residual degrees of freedom, `max(1, n - k)`.
    pub df_resid: usize,
    /// Lower-triangular `L` with `L L' = (X'X + ridge I)^-1`.
    pub xtx_inv_factor: DMatrix<f64>,
}

/// A penalized logistic regression fit.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub beta_hat: DVector<f64>,
    /// Lower-triangular `L` with `L L'` the estimated coefficient covariance
    /// `(X'WX + ridge I)^-1` at `beta_hat`.
    pub cov_factor: DMatrix<f64>,
    /// Whether the penalized-gradient max-norm dropped below tolerance.
    pub converged: bool,
    pub iterations: usize,
}

pub fn expit(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn check_finite(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite value in design matrix or response"));
    }
    Ok(())
}

/// Cholesky with escalating diagonal jitter. Returns the factorization and
/// the jitter that was needed (0.0 in the normal case).
fn cholesky_jitter(a: &DMatrix<f64>) -> Option<(Cholesky<f64, nalgebra::Dyn>, f64)> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        return Some((ch, 0.0));
    }
    let scale = a.diagonal().amax().max(1.0);
    let mut jitter = scale * 1e-12;
    for _ in 0..12 {
        let mut aj = a.clone();
        for i in 0..aj.nrows() {
            aj[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(aj) {
            return Some((ch, jitter));
        }
        jitter *= 100.0;
    }
    None
}

/// Lower-triangular factor `L` with `L L' = A^-1`, given a factorization of
/// the positive-definite `A`.
fn inverse_factor(ch: &Cholesky<f64, nalgebra::Dyn>) -> Result<DMatrix<f64>> {
    let a_inv = ch.inverse();
    let (f, _) = cholesky_jitter(&a_inv)
        .ok_or_else(|| Error::numeric("covariance inverse is not positive definite"))?;
    Ok(f.l())
}

/// Ridge-penalized least squares.
///
/// `beta_hat` solves `(X'X + ridge I) b = X'y`. With `ridge = 0` the system
/// must be well posed: at least `k` rows and a non-singular `X'X`
/// (a singular unpenalized system is reported as an error so the caller can
/// retry with [`DEFAULT_RIDGE`]).
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<OlsFit> {
    let (n, k) = (x.nrows(), x.ncols());
    if n != y.len() {
        return Err(Error::numeric(format!("design has {n} rows but response has {}", y.len())));
    }
    if k == 0 {
        return Err(Error::numeric("design matrix has no columns"));
    }
    check_finite(x, y)?;
    if ridge < 0.0 {
        return Err(Error::numeric("ridge must be nonnegative"));
    }
    if ridge == 0.0 && n < k {
        return Err(Error::numeric(format!(
            "need at least {k} rows for an unpenalized fit with {k} coefficients, have {n}"
        )));
    }

    let mut xtx = x.transpose() * x;
    for i in 0..k {
        xtx[(i, i)] += ridge;
    }
    let xty = x.transpose() * y;

    let ch = if ridge == 0.0 {
        match Cholesky::new(xtx) {
            Some(ch) => ch,
            None => {
                return Err(Error::numeric(
                    "singular normal equations; retry with a nonzero ridge",
                ))
            }
        }
    } else {
        cholesky_jitter(&xtx)
            .ok_or_else(|| Error::numeric("normal equations not factorizable even with jitter"))?
            .0
    };

    let beta_hat = ch.solve(&xty);
    let resid = y - x * &beta_hat;
    let rss = resid.dot(&resid).max(0.0);
    let df_resid = n.saturating_sub(k).max(1);
    let xtx_inv_factor = inverse_factor(&ch)?;

    Ok(OlsFit { beta_hat, rss, df_resid, xtx_inv_factor })
}

/// One draw from the standard Bayesian posterior of a Gaussian linear model.
///
/// Draws `g ~ chi2(df_resid)`, sets `sigma*^2 = rss / g`, and returns
/// `beta* = beta_hat + sigma* L u` with `u` standard normal. A perfect fit
/// (`rss = 0`) degenerates to `sigma* = 0`, `beta* = beta_hat`; the stream is
/// consumed identically either way.
pub fn draw_ols_posterior<R: Rng>(fit: &OlsFit, rng: &mut R) -> (DVector<f64>, f64) {
    let chi = ChiSquared::new(fit.df_resid as f64).expect("df_resid >= 1");
    let g: f64 = chi.sample(rng);
    let sigma_star = if fit.rss == 0.0 { 0.0 } else { (fit.rss / g).sqrt() };
    let k = fit.beta_hat.len();
    let u = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta_star = &fit.beta_hat + (&fit.xtx_inv_factor * u) * sigma_star;
    (beta_star, sigma_star)
}

fn penalized_loglik(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, ridge: f64) -> f64 {
    let lp = x * beta;
    let mut ll = 0.0;
    for i in 0..y.len() {
        let t = lp[i];
        // log(1 + e^t) computed stably
        let log1pexp = if t > 30.0 { t } else { (1.0 + t.exp()).ln() };
        ll += y[i] * t - log1pexp;
    }
    ll - 0.5 * ridge * beta.dot(beta)
}

/// Ridge-penalized logistic regression by Newton (IRLS) iterations.
///
/// Iterates until the penalized-gradient max-norm drops below `tol` or
/// `max_iter` is reached; a non-converged fit is returned with
/// `converged = false` rather than as an error, since chained-equations
/// callers prefer to proceed (with a warning) over aborting a chain.
pub fn logistic_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    ridge: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LogisticFit> {
    let (n, k) = (x.nrows(), x.ncols());
    if n != y.len() {
        return Err(Error::numeric(format!("design has {n} rows but response has {}", y.len())));
    }
    if k == 0 {
        return Err(Error::numeric("design matrix has no columns"));
    }
    check_finite(x, y)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::numeric("logistic response must be 0/1"));
    }
    if ridge < 0.0 {
        return Err(Error::numeric("ridge must be nonnegative"));
    }

    let mut beta = DVector::zeros(k);
    let mut ll = penalized_loglik(x, y, &beta, ridge);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_ch: Option<Cholesky<f64, nalgebra::Dyn>> = None;

    for iter in 0..max_iter {
        iterations = iter + 1;
        let lp = x * &beta;
        let p = lp.map(expit);
        let grad = x.transpose() * (y - &p) - ridge * &beta;
        if grad.amax() < tol {
            converged = true;
            iterations = iter;
            break;
        }
        // weighted information with floored weights
        let mut info = DMatrix::zeros(k, k);
        for i in 0..n {
            let w = (p[i] * (1.0 - p[i])).max(1e-10);
            let row = x.row(i);
            for a in 0..k {
                let wa = w * row[a];
                for b in a..k {
                    info[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
            info[(a, a)] += ridge;
        }
        let Some((ch, _)) = cholesky_jitter(&info) else {
            return Err(Error::numeric("logistic information matrix not factorizable"));
        };
        let step = ch.solve(&grad);
        last_ch = Some(ch);

        // step-halving keeps the penalized log-likelihood nondecreasing
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..8 {
            let cand = &beta + &step * scale;
            let cand_ll = penalized_loglik(x, y, &cand, ridge);
            if cand_ll >= ll - 1e-12 {
                beta = cand;
                ll = cand_ll;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }

    if converged {
        // refresh the factorization at the final beta
        let lp = x * &beta;
        let p = lp.map(expit);
        let mut info = DMatrix::zeros(k, k);
        for i in 0..n {
            let w = (p[i] * (1.0 - p[i])).max(1e-10);
            let row = x.row(i);
            for a in 0..k {
                let wa = w * row[a];
                for b in a..k {
                    info[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
            info[(a, a)] += ridge;
        }
        last_ch = cholesky_jitter(&info).map(|(ch, _)| ch);
    }

    let cov_factor = match last_ch {
        Some(ch) => inverse_factor(&ch)?,
        None => return Err(Error::numeric("logistic fit produced no information matrix")),
    };
    if cov_factor.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("logistic covariance factor is non-finite"));
    }

    Ok(LogisticFit { beta_hat: beta, cov_factor, converged, iterations })
}

/// Normal-approximation posterior draw for a logistic fit:
/// `beta* = beta_hat + L u` with `u` standard normal.
pub fn draw_logistic_posterior<R: Rng>(fit: &LogisticFit, rng: &mut R) -> Result<DVector<f64>> {
    if !fit.converged {
        return Err(Error::numeric("posterior draw requested from a non-converged logistic fit"));
    }
    let k = fit.beta_hat.len();
    let u = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(&fit.beta_hat + &fit.cov_factor * u)
}
