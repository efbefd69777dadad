//! Univariate imputation methods.
//!
//! Each imputer fits its model on the target's originally-observed rows only,
//! draws parameters from the (approximate) posterior, then draws one value per
//! originally-missing row. The `mnar.*` variants add a user-supplied offset —
//! to the drawn values for `norm`, to the linear predictor for `logreg` — and
//! consume exactly the same random stream as their MAR counterparts (the
//! offset itself uses no randomness). That makes zero-delta equivalence and
//! constant-offset additivity exact, bit for bit, rather than statistical.
//!
//! Stream consumption order is part of the contract: posterior parameters
//! first, then per-row noise in row order; an imputer with no missing rows
//! consumes nothing.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, VarKind};
use crate::error::{Error, Result};
use crate::kernel::{self, DEFAULT_RIDGE};
use crate::ums::BoundUms;

/// Everything a univariate imputer needs for one visit to one variable.
pub struct UnivariateContext<'a> {
    /// Column index of the imputation target.
    pub target: usize,
    pub target_name: &'a str,
    pub target_kind: VarKind,
    /// Design columns in order (indices into `columns`), excluding the target.
    pub predictors: &'a [usize],
    /// Current completed working columns; only the target's `miss_rows`
    /// entries are conceptually "working values", everything else is data.
    pub columns: &'a [Vec<f64>],
    /// Rows where the target was originally observed.
    pub obs_rows: &'a [usize],
    /// Rows where the target was originally missing.
    pub miss_rows: &'a [usize],
    /// Extra design columns appended after the predictors (used for other
    /// variables' missingness indicators when that option is enabled).
    pub extra_columns: &'a [Vec<f64>],
    /// Offset expression for the `mnar.*` variants.
    pub ums: Option<&'a BoundUms>,
}

/// Imputed values plus an optional warning (e.g. a logistic fit that was used
/// without reaching convergence).
pub struct ImputeOutcome {
    pub values: Vec<f64>,
    pub warning: Option<String>,
}

impl UnivariateContext<'_> {
    fn design(&self, rows: &[usize]) -> DMatrix<f64> {
        let k = 1 + self.predictors.len() + self.extra_columns.len();
        DMatrix::from_fn(rows.len(), k, |i, j| {
            if j == 0 {
                1.0
            } else if j <= self.predictors.len() {
                self.columns[self.predictors[j - 1]][rows[i]]
            } else {
                self.extra_columns[j - 1 - self.predictors.len()][rows[i]]
            }
        })
    }

    fn response(&self, rows: &[usize]) -> DVector<f64> {
        DVector::from_fn(rows.len(), |i, _| self.columns[self.target][rows[i]])
    }

    fn offsets(&self) -> Vec<f64> {
        match self.ums {
            Some(b) => b.evaluate_columns(self.columns, self.miss_rows),
            None => vec![0.0; self.miss_rows.len()],
        }
    }
}

fn fit_ols_with_fallback(ctx: &UnivariateContext<'_>) -> Result<kernel::OlsFit> {
    let x = ctx.design(ctx.obs_rows);
    let y = ctx.response(ctx.obs_rows);
    match kernel::ols_fit(&x, &y, 0.0) {
        Ok(fit) => Ok(fit),
        Err(_) => kernel::ols_fit(&x, &y, DEFAULT_RIDGE).map_err(|e| {
            Error::numeric(format!(
                "imputation model for '{}' failed even with ridge fallback: {e}",
                ctx.target_name
            ))
        }),
    }
}

/// Ridge escalation for logistic fits that a plain [`DEFAULT_RIDGE`] cannot
/// stabilize (separation or one-class data leave the gradient criterion
/// satisfied while the covariance explodes).
const LOGISTIC_RIDGE_LADDER: [f64; 3] = [DEFAULT_RIDGE, 1e-3, 1e-1];
/// A fit is only used for posterior draws if every coefficient's posterior
/// variance stays below this (log-odds scale).
const MAX_POSTERIOR_VAR: f64 = 25.0;
/// ... and if at least one observed row keeps a non-saturated weight.
const MIN_MAX_WEIGHT: f64 = 1e-4;

fn logistic_usable(fit: &kernel::LogisticFit, x: &DMatrix<f64>) -> bool {
    if !fit.converged {
        return false;
    }
    let max_w = (x * &fit.beta_hat)
        .iter()
        .map(|&t| {
            let p = kernel::expit(t);
            p * (1.0 - p)
        })
        .fold(0.0f64, f64::max);
    if max_w < MIN_MAX_WEIGHT {
        return false;
    }
    let k = fit.beta_hat.len();
    let max_var = (0..k)
        .map(|j| fit.cov_factor.row(j).iter().map(|v| v * v).sum::<f64>())
        .fold(0.0f64, f64::max);
    max_var <= MAX_POSTERIOR_VAR
}

fn fit_logistic_with_fallback(
    ctx: &UnivariateContext<'_>,
) -> Result<(kernel::LogisticFit, Option<String>)> {
    let x = ctx.design(ctx.obs_rows);
    let y = ctx.response(ctx.obs_rows);
    if let Ok(fit) = kernel::logistic_fit(&x, &y, 0.0, 1e-8, 25) {
        if logistic_usable(&fit, &x) {
            return Ok((fit, None));
        }
    }
    let mut last: Option<kernel::LogisticFit> = None;
    for ridge in LOGISTIC_RIDGE_LADDER {
        if let Ok(fit) = kernel::logistic_fit(&x, &y, ridge, 1e-8, 100) {
            if logistic_usable(&fit, &x) {
                return Ok((fit, None));
            }
            last = Some(fit);
        }
    }
    match last {
        Some(fit) => {
            let warning = format!(
                "logistic imputation model for '{}' stayed degenerate or non-converged \
                 after ridge escalation; using the most stabilized fit",
                ctx.target_name
            );
            Ok((fit, Some(warning)))
        }
        None => Err(Error::numeric(format!(
            "imputation model for '{}' failed even with ridge fallback",
            ctx.target_name
        ))),
    }
}

/// `beta_hat + L u` without the convergence gate; chains proceed on a flagged
/// non-converged fit rather than aborting.
fn draw_logistic_lenient<R: Rng>(fit: &kernel::LogisticFit, rng: &mut R) -> DVector<f64> {
    let u = DVector::from_fn(fit.beta_hat.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    &fit.beta_hat + &fit.cov_factor * u
}

fn norm_draw<R: Rng>(ctx: &UnivariateContext<'_>, rng: &mut R) -> Result<Vec<f64>> {
    let fit = fit_ols_with_fallback(ctx)?;
    let (beta_star, sigma_star) = kernel::draw_ols_posterior(&fit, rng);
    let x_miss = ctx.design(ctx.miss_rows);
    let mean = x_miss * beta_star;
    let mut out = Vec::with_capacity(ctx.miss_rows.len());
    for i in 0..ctx.miss_rows.len() {
        let z: f64 = rng.sample(StandardNormal);
        out.push(mean[i] + sigma_star * z);
    }
    Ok(out)
}

/// Bayesian linear-regression imputation (`norm`).
pub fn impute_norm<R: Rng>(ctx: &UnivariateContext<'_>, rng: &mut R) -> Result<ImputeOutcome> {
    if ctx.miss_rows.is_empty() {
        return Ok(ImputeOutcome { values: Vec::new(), warning: None });
    }
    Ok(ImputeOutcome { values: norm_draw(ctx, rng)?, warning: None })
}

/// Delta-adjusted linear imputation (`mnar.norm`): the `norm` draw plus the
/// evaluated offset, added value by value after the draw.
pub fn impute_mnar_norm<R: Rng>(ctx: &UnivariateContext<'_>, rng: &mut R) -> Result<ImputeOutcome> {
    if ctx.miss_rows.is_empty() {
        return Ok(ImputeOutcome { values: Vec::new(), warning: None });
    }
    let mut values = norm_draw(ctx, rng)?;
    let offsets = ctx.offsets();
    for (v, o) in values.iter_mut().zip(&offsets) {
        *v += o;
    }
    Ok(ImputeOutcome { values, warning: None })
}

fn logreg_draw<R: Rng>(
    ctx: &UnivariateContext<'_>,
    rng: &mut R,
    offsets: &[f64],
) -> Result<ImputeOutcome> {
    let (fit, warning) = fit_logistic_with_fallback(ctx)?;
    let beta_star = draw_logistic_lenient(&fit, rng);
    let x_miss = ctx.design(ctx.miss_rows);
    let lp = x_miss * beta_star;
    let mut values = Vec::with_capacity(ctx.miss_rows.len());
    for i in 0..ctx.miss_rows.len() {
        let p = kernel::expit(lp[i] + offsets[i]);
        let u: f64 = rng.random();
        values.push(if u < p { 1.0 } else { 0.0 });
    }
    Ok(ImputeOutcome { values, warning })
}

/// Bayesian logistic-regression imputation (`logreg`).
pub fn impute_logreg<R: Rng>(ctx: &UnivariateContext<'_>, rng: &mut R) -> Result<ImputeOutcome> {
    if ctx.miss_rows.is_empty() {
        return Ok(ImputeOutcome { values: Vec::new(), warning: None });
    }
    let offsets = vec![0.0; ctx.miss_rows.len()];
    logreg_draw(ctx, rng, &offsets)
}

/// Delta-adjusted logistic imputation (`mnar.logreg`): the offset shifts the
/// linear predictor (log-odds) of each row being imputed.
pub fn impute_mnar_logreg<R: Rng>(
    ctx: &UnivariateContext<'_>,
    rng: &mut R,
) -> Result<ImputeOutcome> {
    if ctx.miss_rows.is_empty() {
        return Ok(ImputeOutcome { values: Vec::new(), warning: None });
    }
    let offsets = ctx.offsets();
    logreg_draw(ctx, rng, &offsets)
}

/// Initial fill: every masked cell is replaced by a uniform draw (with
/// replacement) from that variable's observed values. Consumes the stream in
/// column order, then row order within a column.
pub fn initial_fill<R: Rng>(ds: &Dataset, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let mut columns = Vec::with_capacity(ds.n_vars());
    for c in 0..ds.n_vars() {
        let mut col: Vec<f64> =
            (0..ds.n_rows()).map(|r| ds.value(r, c).unwrap_or(f64::NAN)).collect();
        if ds.is_incomplete(c) {
            let observed = ds.observed_values(c);
            if observed.is_empty() {
                return Err(Error::data(format!(
                    "variable '{}' has no observed values to draw an initial fill from",
                    ds.meta()[c].name
                )));
            }
            for r in 0..ds.n_rows() {
                if ds.is_missing(r, c) {
                    col[r] = observed[rng.random_range(0..observed.len())];
                }
            }
        }
        columns.push(col);
    }
    Ok(columns)
}
