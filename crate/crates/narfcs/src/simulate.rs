//! Synthetic cohort generation with configurable missingness mechanisms, and
//! a replicate-study harness for verifying the imputation methods against a
//! known truth.
//!
//! The generator produces a twelve-variable child-cohort-style dataset with a
//! fixed causal structure: a block of complete confounders, a latent `U`
//! acting on the incomplete confounders and the exposure, a binary exposure,
//! and a continuous outcome whose exposure coefficient (`beta1`) is the
//! target parameter. Missingness is generated per incomplete variable from a
//! logistic model with an exposed coefficient for every arrow: a latent `W`
//! shared across indicators, the variable's own (pre-masking) value — the
//! not-at-random arrow — and any observed-variable arrows. Intercepts are
//! auto-tuned by bisection on the realized sample so the marginal missingness
//! rates hit their targets.
//!
//! The generative coefficients for the data model itself are fixed,
//! versioned defaults ([`SCHEMA_VERSION`]); the knobs that matter for
//! missing-data experiments (effect size, latent strengths, every missingness
//! arrow, target rates) are configuration.
//!
//! Value draws and mask draws use separate derived streams, so masking a
//! dataset never perturbs its values: two configs differing only in their
//! missingness models share the identical pre-masking data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{Dataset, VarKind, VarRole, VariableMeta};
use crate::engine::{run_fcs, run_narfcs, MiceSpec};
use crate::error::{Error, Result};
use crate::kernel::expit;
use crate::pool::{fit_completed, fit_target, pool, AnalysisModel};
use crate::rng::{chain_stream, derive_seed, salt, Stream};

/// Version tag of the built-in generative coefficients, echoed in truth
/// sidecars so downstream results can be traced to the exact data model.
pub const SCHEMA_VERSION: &str = "cohort-default-v1";

/// The missingness model of one incomplete variable:
/// `logit P(M=1) = intercept + w_coef*W + self_coef*value + sum(arrows)`,
/// with the intercept tuned to hit `target_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessModel {
    pub variable: String,
    /// Target marginal missingness rate in `[0, 1)`; 0 disables missingness.
    pub target_rate: f64,
    /// Coefficient on the latent `W` shared by all missingness indicators.
    pub w_coef: f64,
    /// Coefficient on the variable's own pre-masking value. Nonzero makes the
    /// mechanism missing-not-at-random.
    pub self_coef: f64,
    /// Coefficients on other variables' pre-masking values.
    pub arrows: Vec<(String, f64)>,
}

impl MissingnessModel {
    pub fn mcar(variable: impl Into<String>, target_rate: f64) -> Self {
        MissingnessModel {
            variable: variable.into(),
            target_rate,
            w_coef: 0.0,
            self_coef: 0.0,
            arrows: Vec::new(),
        }
    }
}

/// Configuration of one synthetic cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    /// True exposure coefficient in the outcome model (the target parameter).
    pub beta1: f64,
    /// Scale of the latent common cause of the exposure and the incomplete
    /// confounders (1.0 = the default strength).
    pub u_strength: f64,
    /// Residual standard deviation of the outcome model.
    pub outcome_sd: f64,
    pub missingness: Vec<MissingnessModel>,
}

impl SimConfig {
    /// The default cohort: realistic missingness rates on two confounder
    /// binaries, one confounder score, the exposure and the outcome, all
    /// missing-at-random (no self arrows; complete-confounder and latent-W
    /// arrows only).
    pub fn cohort_default(n: usize, seed: u64) -> SimConfig {
        let mar = |variable: &str, rate: f64| MissingnessModel {
            variable: variable.into(),
            target_rate: rate,
            w_coef: 0.8,
            self_coef: 0.0,
            arrows: vec![("finhard".into(), 0.3), ("matedu".into(), -0.3)],
        };
        SimConfig {
            n,
            seed,
            beta1: 0.65,
            u_strength: 1.0,
            outcome_sd: 3.5,
            missingness: vec![
                mar("matsmok", 0.16),
                mar("matalc", 0.18),
                mar("physfunc", 0.15),
                mar("matmhw1", 0.15),
                mar("sdqw3", 0.23),
            ],
        }
    }

    /// A missing-not-at-random mechanism on the outcome only: missingness of
    /// `sdqw3` depends on its own value and (differentially) on the exposure.
    pub fn mnar_on_outcome(n: usize, seed: u64) -> SimConfig {
        SimConfig {
            n,
            seed,
            beta1: 0.65,
            u_strength: 1.0,
            outcome_sd: 3.5,
            missingness: vec![MissingnessModel {
                variable: "sdqw3".into(),
                target_rate: 0.30,
                w_coef: 0.0,
                self_coef: 0.082,
                arrows: vec![("matmhw1".into(), 1.0), ("finhard".into(), 0.3)],
            }],
        }
    }

    /// Missingness completely at random at the given per-variable rates.
    pub fn mcar(n: usize, seed: u64, rates: &[(&str, f64)]) -> SimConfig {
        SimConfig {
            n,
            seed,
            beta1: 0.65,
            u_strength: 1.0,
            outcome_sd: 3.5,
            missingness: rates.iter().map(|(v, r)| MissingnessModel::mcar(*v, *r)).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let names = schema_names();
        for m in &self.missingness {
            if !names.contains(&m.variable.as_str()) {
                return Err(Error::config(format!(
                    "missingness model references unknown variable '{}'",
                    m.variable
                )));
            }
            if !(0.0..1.0).contains(&m.target_rate) {
                return Err(Error::config(format!(
                    "target missingness rate for '{}' must be in [0, 1), got {}",
                    m.variable, m.target_rate
                )));
            }
            for (a, _) in &m.arrows {
                if !names.contains(&a.as_str()) {
                    return Err(Error::config(format!(
                        "missingness arrow references unknown variable '{a}'"
                    )));
                }
            }
        }
        if self.outcome_sd <= 0.0 {
            return Err(Error::config("outcome_sd must be positive"));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.missingness {
            if !seen.insert(m.variable.as_str()) {
                return Err(Error::config(format!(
                    "two missingness models for '{}'",
                    m.variable
                )));
            }
        }
        Ok(())
    }
}

/// Truth for one incomplete variable, recomputable from the pre-masking data.
#[derive(Debug, Clone)]
pub struct VariableTruth {
    pub variable: String,
    pub realized_rate: f64,
    /// Marginal difference (mean or proportion) between rows with and
    /// without missingness, in the pre-masking values.
    pub implied_msp: f64,
    /// Conditional difference: the coefficient of the missingness indicator
    /// in a regression of the variable on all other variables plus the
    /// indicator, fitted to the pre-masking data. This is the
    /// pattern-mixture delta the mechanism implies (log-odds scale for
    /// binary variables).
    pub implied_delta: f64,
}

/// What is true about a generated dataset.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub beta1: f64,
    pub schema_version: String,
    pub per_variable: Vec<VariableTruth>,
}

const SCHEMA: [(&str, VarKind, VarRole); 12] = [
    ("sex", VarKind::Binary, VarRole::Confounder),
    ("siblings", VarKind::Binary, VarRole::Confounder),
    ("matedu", VarKind::Binary, VarRole::Confounder),
    ("matage", VarKind::Continuous, VarRole::Confounder),
    ("conspar", VarKind::Continuous, VarRole::Confounder),
    ("finhard", VarKind::Binary, VarRole::Confounder),
    ("basesdq", VarKind::Continuous, VarRole::Confounder),
    ("matsmok", VarKind::Binary, VarRole::Confounder),
    ("matalc", VarKind::Binary, VarRole::Confounder),
    ("physfunc", VarKind::Continuous, VarRole::Confounder),
    ("matmhw1", VarKind::Binary, VarRole::Exposure),
    ("sdqw3", VarKind::Continuous, VarRole::Outcome),
];

pub fn schema_meta() -> Vec<VariableMeta> {
    SCHEMA.iter().map(|(n, k, r)| VariableMeta::new(*n, *k, *r)).collect()
}

fn schema_names() -> Vec<&'static str> {
    SCHEMA.iter().map(|(n, _, _)| *n).collect()
}

fn col(name: &str) -> usize {
    SCHEMA.iter().position(|(n, _, _)| *n == name).expect("schema variable")
}

fn bern(rng: &mut Stream, p: f64) -> f64 {
    f64::from(rng.random::<f64>() < p)
}

fn normal(rng: &mut Stream, mean: f64, sd: f64) -> f64 {
    mean + sd * rng.sample::<f64, _>(StandardNormal)
}

/// Pre-masking values plus the latent `W` draw per row.
fn generate_values(cfg: &SimConfig) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = cfg.n;
    let mut rng = chain_stream(derive_seed(cfg.seed, salt::SIM_VALUES), 0);
    let u_s = cfg.u_strength;
    let mut columns = vec![Vec::with_capacity(n); SCHEMA.len()];
    let mut w_latent = Vec::with_capacity(n);
    for _ in 0..n {
        let sex = bern(&mut rng, 0.51);
        let siblings = bern(&mut rng, 0.89);
        let matedu = bern(&mut rng, 0.59);
        let matage = normal(&mut rng, 35.1, 5.2);
        let conspar = normal(&mut rng, 4.05, 0.66);
        let finhard = bern(&mut rng, 0.53);
        let basesdq = (normal(&mut rng, 9.35, 4.8)).max(0.0);
        let u = normal(&mut rng, 0.0, 1.0);

        let matsmok = bern(
            &mut rng,
            expit(-1.9 - 0.6 * matedu + 0.5 * finhard + 0.03 * basesdq + 0.8 * u_s * u),
        );
        let matalc =
            bern(&mut rng, expit(-3.3 + 0.2 * matedu + 0.4 * finhard + 0.5 * u_s * u));
        let physfunc = normal(
            &mut rng,
            85.0 + 1.5 * sex - 0.25 * basesdq - 2.0 * u_s * u,
            9.0,
        );

        let matmhw1 = bern(
            &mut rng,
            expit(
                -2.1 + 0.6 * finhard - 0.3 * matedu + 0.04 * basesdq - 0.2 * sex
                    + 0.5 * matsmok
                    + 0.4 * matalc
                    - 0.008 * (physfunc - 83.0)
                    + 0.7 * u_s * u,
            ),
        );
        let sdqw3 = 4.0 + cfg.beta1 * matmhw1 + 0.1 * sex + 0.15 * siblings - 0.3 * matedu
            - 0.02 * matage
            - 0.45 * conspar
            + 0.5 * finhard
            + 0.45 * basesdq
            + 0.5 * matsmok
            + 0.3 * matalc
            - 0.01 * (physfunc - 83.0)
            + normal(&mut rng, 0.0, cfg.outcome_sd);

        let w = normal(&mut rng, 0.0, 1.0);
        w_latent.push(w);
        for (j, v) in [
            sex, siblings, matedu, matage, conspar, finhard, basesdq, matsmok, matalc, physfunc,
            matmhw1, sdqw3,
        ]
        .into_iter()
        .enumerate()
        {
            columns[j].push(v);
        }
    }
    (columns, w_latent)
}

/// Tune the intercept so the mean of `expit(t + lp)` hits the target rate.
fn tune_intercept(lp: &[f64], target: f64) -> Result<f64> {
    let mean_rate = |t: f64| lp.iter().map(|&l| expit(t + l)).sum::<f64>() / lp.len() as f64;
    let (mut lo, mut hi) = (-40.0, 40.0);
    if mean_rate(lo) > target || mean_rate(hi) < target {
        return Err(Error::numeric(format!(
            "target missingness rate {target} unreachable for the given coefficients"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn marginal_diff(values: &[f64], mask: &[bool]) -> f64 {
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (v, &m) in values.iter().zip(mask) {
        if m {
            s1 += v;
            n1 += 1;
        } else {
            s0 += v;
            n0 += 1;
        }
    }
    if n1 == 0 || n0 == 0 {
        return f64::NAN;
    }
    s1 / n1 as f64 - s0 / n0 as f64
}

/// Coefficient of the missingness indicator in a regression of `target` on
/// all other schema variables plus the indicator, over the pre-masking data.
fn conditional_delta(columns: &[Vec<f64>], target: usize, mask: &[bool]) -> f64 {
    let n = columns[0].len();
    let others: Vec<usize> = (0..SCHEMA.len()).filter(|&c| c != target).collect();
    let k = others.len() + 2; // intercept + others + indicator
    let x = DMatrix::from_fn(n, k, |i, j| {
        if j == 0 {
            1.0
        } else if j <= others.len() {
            columns[others[j - 1]][i]
        } else {
            f64::from(mask[i])
        }
    });
    let y = DVector::from_fn(n, |i, _| columns[target][i]);
    let result = match SCHEMA[target].1 {
        VarKind::Continuous => {
            crate::kernel::ols_fit(&x, &y, 0.0).map(|f| f.beta_hat[k - 1])
        }
        VarKind::Binary => {
            crate::kernel::logistic_fit(&x, &y, 0.0, 1e-8, 50).map(|f| f.beta_hat[k - 1])
        }
    };
    result.unwrap_or(f64::NAN)
}

/// Generate one masked dataset and its truth.
pub fn generate(cfg: &SimConfig) -> Result<(Dataset, SimTruth)> {
    cfg.validate()?;
    let (columns, w_latent) = generate_values(cfg);
    let n = cfg.n;

    let mut mask = vec![vec![false; n]; SCHEMA.len()];
    let mut per_variable = Vec::with_capacity(cfg.missingness.len());
    let mut mask_rng = chain_stream(derive_seed(cfg.seed, salt::SIM_MASK), 0);

    for model in &cfg.missingness {
        let target = col(&model.variable);
        if model.target_rate == 0.0 || n == 0 {
            per_variable.push(VariableTruth {
                variable: model.variable.clone(),
                realized_rate: 0.0,
                implied_msp: f64::NAN,
                implied_delta: f64::NAN,
            });
            continue;
        }
        let mut lp = vec![0.0; n];
        for i in 0..n {
            let mut v = model.w_coef * w_latent[i] + model.self_coef * columns[target][i];
            for (arrow, coef) in &model.arrows {
                v += coef * columns[col(arrow)][i];
            }
            lp[i] = v;
        }
        let intercept = tune_intercept(&lp, model.target_rate)
            .map_err(|e| Error::numeric(format!("variable '{}': {e}", model.variable)))?;
        let mut missing = 0usize;
        for i in 0..n {
            if mask_rng.random::<f64>() < expit(intercept + lp[i]) {
                mask[target][i] = true;
                missing += 1;
            }
        }
        per_variable.push(VariableTruth {
            variable: model.variable.clone(),
            realized_rate: missing as f64 / n as f64,
            implied_msp: marginal_diff(&columns[target], &mask[target]),
            implied_delta: conditional_delta(&columns, target, &mask[target]),
        });
    }

    let data_columns: Vec<Vec<Option<f64>>> = (0..SCHEMA.len())
        .map(|c| {
            (0..n)
                .map(|i| if mask[c][i] { None } else { Some(columns[c][i]) })
                .collect()
        })
        .collect();
    let ds = Dataset::from_columns(schema_meta(), data_columns)?;
    let truth =
        SimTruth { beta1: cfg.beta1, schema_version: SCHEMA_VERSION.into(), per_variable };
    Ok((ds, truth))
}

/// The default analysis for a generated cohort: outcome on exposure plus all
/// confounders.
pub fn default_analysis_model() -> AnalysisModel {
    let terms = SCHEMA
        .iter()
        .filter(|(n, _, _)| *n != "sdqw3")
        .map(|(n, _, _)| n.to_string())
        .collect();
    AnalysisModel::new("sdqw3", terms)
}

/// Estimation strategies compared by [`replicate_study`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMethod {
    /// Discard incomplete rows, fit once.
    CompleteCase,
    /// MAR chained-equations imputation, pooled.
    Fcs,
    /// Delta-adjusted imputation using the implied pattern-mixture delta of
    /// each self-dependent variable, estimated from a large pilot sample.
    NarfcsTrueDelta,
}

impl StudyMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            StudyMethod::CompleteCase => "complete_case",
            StudyMethod::Fcs => "fcs",
            StudyMethod::NarfcsTrueDelta => "narfcs_true_delta",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplicateOptions {
    pub m: usize,
    pub maxit: usize,
    pub alpha: f64,
    /// Pilot-sample size for estimating the implied deltas.
    pub pilot_n: usize,
}

impl Default for ReplicateOptions {
    fn default() -> Self {
        ReplicateOptions { m: 5, maxit: 5, alpha: 0.05, pilot_n: 100_000 }
    }
}

/// Bias/coverage summary of one method over the replicates.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: StudyMethod,
    pub reps: usize,
    pub mean_estimate: f64,
    /// `mean_estimate - beta1`.
    pub bias: f64,
    /// Monte Carlo standard error of the mean estimate.
    pub mc_se: f64,
    /// Fraction of replicates whose interval covered the true `beta1`.
    pub coverage: f64,
}

fn complete_case_estimate(
    ds: &Dataset,
    model: &AnalysisModel,
    alpha: f64,
) -> Result<(f64, f64, f64)> {
    let complete_rows: Vec<usize> = (0..ds.n_rows())
        .filter(|&i| (0..ds.n_vars()).all(|c| !ds.is_missing(i, c)))
        .collect();
    if complete_rows.len() < model.terms.len() + 3 {
        return Err(Error::data("too few complete cases for the target analysis"));
    }
    let sub_cols: Vec<Vec<Option<f64>>> = (0..ds.n_vars())
        .map(|c| complete_rows.iter().map(|&i| ds.value(i, c)).collect())
        .collect();
    let sub = Dataset::from_columns(ds.meta().to_vec(), sub_cols)?;
    let fits = fit_completed(&[sub], model)?;
    let idx = fits
        .coef_names
        .iter()
        .position(|n| n == "matmhw1")
        .ok_or_else(|| Error::config("exposure not in analysis model"))?;
    let est = fits.estimates[0][idx];
    let se = fits.variances[0][idx].sqrt();
    let tq = StudentsT::new(0.0, 1.0, fits.df_com)
        .map_err(|e| Error::numeric(format!("t distribution: {e}")))?
        .inverse_cdf(1.0 - alpha / 2.0);
    Ok((est, est - tq * se, est + tq * se))
}

/// Run `reps` replicates: generate, estimate with every requested method, and
/// summarize bias and coverage against the configured `beta1`.
pub fn replicate_study(
    cfg: &SimConfig,
    reps: usize,
    methods: &[StudyMethod],
    options: &ReplicateOptions,
) -> Result<Vec<MethodSummary>> {
    if reps < 1 {
        return Err(Error::config("reps must be at least 1"));
    }
    if methods.is_empty() {
        return Err(Error::config("no study methods requested"));
    }
    cfg.validate()?;
    let model = default_analysis_model();

    // implied deltas from one large pilot, shared by all replicates
    let implied: Vec<(String, f64)> = if methods.contains(&StudyMethod::NarfcsTrueDelta) {
        let pilot_cfg = SimConfig {
            n: options.pilot_n,
            seed: derive_seed(cfg.seed, salt::SIM_PILOT),
            ..cfg.clone()
        };
        let (_, truth) = generate(&pilot_cfg)?;
        cfg.missingness
            .iter()
            .filter(|m| m.self_coef != 0.0 && m.target_rate > 0.0)
            .map(|m| {
                let t = truth
                    .per_variable
                    .iter()
                    .find(|v| v.variable == m.variable)
                    .expect("pilot truth covers every missingness model");
                if !t.implied_delta.is_finite() {
                    return Err(Error::numeric(format!(
                        "implied delta for '{}' could not be estimated from the pilot",
                        m.variable
                    )));
                }
                Ok((m.variable.clone(), t.implied_delta))
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    struct RepOut {
        estimates: Vec<f64>,
        covered: Vec<bool>,
    }

    let results: Vec<Result<RepOut>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let rep_cfg = SimConfig {
                seed: derive_seed(cfg.seed, salt::REPLICATE.wrapping_add(rep as u64)),
                ..cfg.clone()
            };
            let (ds, _) = generate(&rep_cfg)?;
            let mut estimates = Vec::with_capacity(methods.len());
            let mut covered = Vec::with_capacity(methods.len());
            for method in methods {
                let (est, lo, hi) = match method {
                    StudyMethod::CompleteCase => {
                        complete_case_estimate(&ds, &model, options.alpha)?
                    }
                    StudyMethod::Fcs => {
                        let mut spec = MiceSpec::mar_default(&ds, rep_cfg.seed)?;
                        spec.m = options.m;
                        spec.maxit = options.maxit;
                        let mi = run_fcs(&ds, &spec)?;
                        let fits = fit_target(&mi, &model)?;
                        let pooled = pool(&fits, options.alpha)?;
                        let c = pooled
                            .coef("matmhw1")
                            .ok_or_else(|| Error::config("exposure not pooled"))?;
                        (c.qbar, c.ci_low, c.ci_high)
                    }
                    StudyMethod::NarfcsTrueDelta => {
                        let mut spec = MiceSpec::mar_default(&ds, rep_cfg.seed)?;
                        spec.m = options.m;
                        spec.maxit = options.maxit;
                        for (var, delta) in &implied {
                            spec.set_mnar(&ds, var, &format!("{delta}"))?;
                        }
                        let mi = run_narfcs(&ds, &spec)?;
                        let fits = fit_target(&mi, &model)?;
                        let pooled = pool(&fits, options.alpha)?;
                        let c = pooled
                            .coef("matmhw1")
                            .ok_or_else(|| Error::config("exposure not pooled"))?;
                        (c.qbar, c.ci_low, c.ci_high)
                    }
                };
                estimates.push(est);
                covered.push(lo <= cfg.beta1 && cfg.beta1 <= hi);
            }
            Ok(RepOut { estimates, covered })
        })
        .collect();

    let mut per_rep = Vec::with_capacity(reps);
    for r in results {
        per_rep.push(r?);
    }

    Ok(methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let ests: Vec<f64> = per_rep.iter().map(|r| r.estimates[j]).collect();
            let mean = ests.iter().sum::<f64>() / reps as f64;
            let mc_se = if reps < 2 {
                f64::NAN
            } else {
                (ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
                    / (reps as f64 - 1.0)
                    / reps as f64)
                    .sqrt()
            };
            let coverage =
                per_rep.iter().filter(|r| r.covered[j]).count() as f64 / reps as f64;
            MethodSummary {
                method,
                reps,
                mean_estimate: mean,
                bias: mean - cfg.beta1,
                mc_se,
                coverage,
            }
        })
        .collect())
}
