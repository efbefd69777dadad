//! Per-imputation analysis fits and Rubin's-rules pooling.
//!
//! The normative formulas used throughout this crate, per coefficient over
//! `m` imputations with estimates `q_i` and squared standard errors `v_i`:
//!
//! ```text
//! qbar = mean(q_i)
//! W    = mean(v_i)                       (within-imputation variance)
//! B    = sum((q_i - qbar)^2) / (m - 1)   (between-imputation variance)
//! T    = W + (1 + 1/m) B                 (total variance)
//! ```
//!
//! Degrees of freedom use the Barnard-Rubin small-sample adjustment with
//! complete-data degrees of freedom `nu_com = n - k`:
//!
//! ```text
//! lambda = (1 + 1/m) B / T
//! nu_old = (m - 1) / lambda^2
//! nu_obs = ((nu_com + 1) / (nu_com + 3)) * nu_com * (1 - lambda)
//! nu     = 1 / (1/nu_old + 1/nu_obs)     (nu = nu_obs when lambda = 0)
//! ```
//!
//! and the interval is `qbar +/- t(nu, 1 - alpha/2) * sqrt(T)`.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::Dataset;
use crate::engine::MultiImputation;
use crate::error::{Error, Result};
use crate::kernel;

/// The target analysis: a linear model of `outcome` on `terms` (main effects,
/// intercept implicit).
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisModel {
    pub outcome: String,
    pub terms: Vec<String>,
}

impl AnalysisModel {
    pub fn new(outcome: impl Into<String>, terms: Vec<String>) -> Self {
        AnalysisModel { outcome: outcome.into(), terms }
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        ds.var_index(&self.outcome)?;
        for t in &self.terms {
            ds.var_index(t)?;
            if *t == self.outcome {
                return Err(Error::config(format!(
                    "analysis outcome '{}' cannot also be a model term",
                    self.outcome
                )));
            }
        }
        Ok(())
    }

    /// Coefficient names: intercept first, then the terms.
    pub fn coef_names(&self) -> Vec<String> {
        let mut names = vec!["(intercept)".to_string()];
        names.extend(self.terms.iter().cloned());
        names
    }
}

/// Per-imputation estimates and squared standard errors for one analysis
/// model, ready for pooling.
#[derive(Debug, Clone)]
pub struct TargetFits {
    pub coef_names: Vec<String>,
    /// `estimates[i][j]`: coefficient `j` in imputation `i`.
    pub estimates: Vec<Vec<f64>>,
    /// Squared standard errors, same layout.
    pub variances: Vec<Vec<f64>>,
    /// Complete-data residual degrees of freedom, `n - k`.
    pub df_com: f64,
}

/// Fit the analysis model to a set of completed datasets by OLS.
///
/// The per-coefficient variance is `sigma^2 (X'X)^-1_jj` with
/// `sigma^2 = rss / (n - k)`.
pub fn fit_completed(datasets: &[Dataset], model: &AnalysisModel) -> Result<TargetFits> {
    if datasets.is_empty() {
        return Err(Error::config("no datasets to analyze"));
    }
    model.validate(&datasets[0])?;
    let k = model.terms.len() + 1;
    let mut estimates = Vec::with_capacity(datasets.len());
    let mut variances = Vec::with_capacity(datasets.len());
    let mut df_com = 1.0;
    for ds in datasets {
        let n = ds.n_rows();
        if n < k + 1 {
            return Err(Error::data(format!(
                "analysis model needs more than {k} rows, dataset has {n}"
            )));
        }
        let ycol = ds.var_index(&model.outcome)?;
        let y = DVector::from_fn(n, |i, _| {
            ds.value(i, ycol).expect("completed dataset has no missing cells")
        });
        let cols: Vec<usize> =
            model.terms.iter().map(|t| ds.var_index(t)).collect::<Result<_>>()?;
        let x = DMatrix::from_fn(n, k, |i, j| {
            if j == 0 {
                1.0
            } else {
                ds.value(i, cols[j - 1]).expect("completed dataset has no missing cells")
            }
        });
        let fit = kernel::ols_fit(&x, &y, 0.0)
            .map_err(|e| Error::numeric(format!("target analysis failed: {e}")))?;
        let sigma2 = fit.rss / fit.df_resid as f64;
        // diag((X'X)^-1) from the factor: squared row norms of L
        let var: Vec<f64> = (0..k)
            .map(|j| {
                let row = fit.xtx_inv_factor.row(j);
                sigma2 * row.iter().map(|v| v * v).sum::<f64>()
            })
            .collect();
        estimates.push(fit.beta_hat.iter().copied().collect());
        variances.push(var);
        df_com = fit.df_resid as f64;
    }
    Ok(TargetFits { coef_names: model.coef_names(), estimates, variances, df_com })
}

/// Fit the analysis model to every completed dataset of a run.
pub fn fit_target(mi: &MultiImputation, model: &AnalysisModel) -> Result<TargetFits> {
    fit_completed(&mi.completed, model)
}

/// One pooled coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledCoef {
    pub name: String,
    pub qbar: f64,
    pub w: f64,
    /// Between-imputation variance; NaN when `m = 1` (see
    /// [`PooledResult::between_defined`]).
    pub b: f64,
    pub t: f64,
    pub df: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Rubin's-rules combination of per-imputation fits.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledResult {
    pub m: usize,
    pub alpha: f64,
    /// `false` when `m = 1`: B is undefined and T = W was used.
    pub between_defined: bool,
    pub coefs: Vec<PooledCoef>,
}

impl PooledResult {
    pub fn coef(&self, name: &str) -> Option<&PooledCoef> {
        self.coefs.iter().find(|c| c.name == name)
    }
}

/// Pool per-imputation estimates with Rubin's rules at confidence level
/// `1 - alpha`.
pub fn pool(fits: &TargetFits, alpha: f64) -> Result<PooledResult> {
    let m = fits.estimates.len();
    if m == 0 {
        return Err(Error::config("cannot pool zero imputations"));
    }
    if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
        return Err(Error::config(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let k = fits.coef_names.len();
    for (est, var) in fits.estimates.iter().zip(&fits.variances) {
        if est.len() != k || var.len() != k {
            return Err(Error::config("ragged per-imputation estimates"));
        }
    }
    let between_defined = m >= 2;
    let mf = m as f64;
    let nu_com = fits.df_com;

    let mut coefs = Vec::with_capacity(k);
    for j in 0..k {
        let qs: Vec<f64> = fits.estimates.iter().map(|e| e[j]).collect();
        let vs: Vec<f64> = fits.variances.iter().map(|v| v[j]).collect();
        let qbar = qs.iter().sum::<f64>() / mf;
        let w = vs.iter().sum::<f64>() / mf;
        let (b, t_var) = if between_defined {
            let b = qs.iter().map(|q| (q - qbar).powi(2)).sum::<f64>() / (mf - 1.0);
            (b, w + (1.0 + 1.0 / mf) * b)
        } else {
            (f64::NAN, w)
        };

        let lambda = if between_defined && t_var > 0.0 && b > 0.0 {
            ((1.0 + 1.0 / mf) * b / t_var).min(1.0)
        } else {
            0.0
        };
        let nu_obs = (nu_com + 1.0) / (nu_com + 3.0) * nu_com * (1.0 - lambda);
        let df = if lambda > 0.0 {
            let nu_old = (mf - 1.0) / (lambda * lambda);
            1.0 / (1.0 / nu_old + 1.0 / nu_obs)
        } else {
            nu_obs
        };
        // lambda = 1 (W = 0 with positive B) degenerates to df = 0; floor it
        // so the t quantile stays defined
        let df = df.max(1.0);

        let tq = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::numeric(format!("t distribution with df {df}: {e}")))?
            .inverse_cdf(1.0 - alpha / 2.0);
        let half = tq * t_var.sqrt();
        coefs.push(PooledCoef {
            name: fits.coef_names[j].clone(),
            qbar,
            w,
            b,
            t: t_var,
            df,
            ci_low: qbar - half,
            ci_high: qbar + half,
        });
    }
    Ok(PooledResult { m, alpha, between_defined, coefs })
}

/// Recommended number of imputations for a given percentage of incomplete
/// cases: at least the percentage itself, never fewer than 5.
pub fn recommend_m(pct_incomplete_cases: f64) -> Result<usize> {
    if !(0.0..=100.0).contains(&pct_incomplete_cases) {
        return Err(Error::config(format!(
            "percentage of incomplete cases must be in [0, 100], got {pct_incomplete_cases}"
        )));
    }
    Ok((pct_incomplete_cases.ceil() as usize).max(5))
}
