//! The chained-equations driver.
//!
//! One run is `m` independent chains. A chain starts from a random initial
//! fill and then performs `maxit` iterations; each iteration visits every
//! incomplete variable in the visit sequence, refits that variable's
//! univariate model on its originally-observed rows against the current
//! completed data, and redraws the originally-missing cells.
//!
//! Chains are embarrassingly parallel: chain `c` owns the ChaCha stream `c`
//! of the run seed, and results are assembled in chain order, so the output
//! is identical regardless of thread count. Within a chain the algorithm is
//! sequential by construction.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::{Dataset, VarKind};
use crate::error::{Error, Result};
use crate::impute::{
    impute_logreg, impute_mnar_logreg, impute_mnar_norm, impute_norm, initial_fill,
    UnivariateContext,
};
use crate::pool::recommend_m;
use crate::rng::chain_stream;
use crate::ums::{BoundUms, UmsExpression};

/// A univariate imputation method, named as in the config format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// `""` — the variable is complete and never imputed.
    None,
    /// `norm` — Bayesian linear regression.
    Norm,
    /// `logreg` — Bayesian logistic regression.
    Logreg,
    /// `mnar.norm` — delta-adjusted linear regression.
    MnarNorm,
    /// `mnar.logreg` — delta-adjusted logistic regression.
    MnarLogreg,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "" => Ok(Method::None),
            "norm" => Ok(Method::Norm),
            "logreg" => Ok(Method::Logreg),
            "mnar.norm" => Ok(Method::MnarNorm),
            "mnar.logreg" => Ok(Method::MnarLogreg),
            other => Err(Error::config(format!(
                "unknown method '{other}' (expected \"\", norm, logreg, mnar.norm, mnar.logreg)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::None => "",
            Method::Norm => "norm",
            Method::Logreg => "logreg",
            Method::MnarNorm => "mnar.norm",
            Method::MnarLogreg => "mnar.logreg",
        }
    }

    pub fn is_mnar(&self) -> bool {
        matches!(self, Method::MnarNorm | Method::MnarLogreg)
    }

    fn expected_kind(&self) -> Option<VarKind> {
        match self {
            Method::None => None,
            Method::Norm | Method::MnarNorm => Some(VarKind::Continuous),
            Method::Logreg | Method::MnarLogreg => Some(VarKind::Binary),
        }
    }
}

/// 0/1 matrix declaring which column variables (columns) enter the imputation
/// model of each row variable. The diagonal is structurally zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorMatrix {
    names: Vec<String>,
    cells: Vec<Vec<u8>>,
}

impl PredictorMatrix {
    /// The default: every variable predicts every other variable.
    pub fn all_predictors(ds: &Dataset) -> PredictorMatrix {
        let n = ds.n_vars();
        let cells = (0..n)
            .map(|r| (0..n).map(|c| u8::from(r != c)).collect())
            .collect();
        PredictorMatrix { names: ds.var_names().map(str::to_string).collect(), cells }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row][col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) -> Result<()> {
        if value > 1 {
            return Err(Error::config("predictor matrix entries must be 0 or 1"));
        }
        if row == col && value != 0 {
            return Err(Error::config("predictor matrix diagonal must stay zero"));
        }
        self.cells[row][col] = value;
        Ok(())
    }

    pub fn set_by_name(&mut self, row: &str, col: &str, value: u8) -> Result<()> {
        let r = self.index_of(row)?;
        let c = self.index_of(col)?;
        self.set(r, c, value)
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::config(format!("predictor matrix: unknown variable '{name}'")))
    }

    pub fn n_ones(&self) -> usize {
        self.cells.iter().flatten().filter(|&&v| v == 1).count()
    }
}

/// Convenience wrapper mirroring the usual workflow.
pub fn make_predictor_matrix(ds: &Dataset) -> PredictorMatrix {
    PredictorMatrix::all_predictors(ds)
}

/// The full imputation plan: how many chains, how many iterations, which
/// method and predictors per variable, and the per-variable offset ("ums")
/// expressions for the `mnar.*` methods.
#[derive(Debug, Clone)]
pub struct MiceSpec {
    /// Number of chains / completed datasets.
    pub m: usize,
    /// Iterations per chain.
    pub maxit: usize,
    pub seed: u64,
    /// Method per variable; variables not listed get `""`.
    pub methods: BTreeMap<String, Method>,
    /// `None` means all-predictors.
    pub predictor_matrix: Option<PredictorMatrix>,
    /// `None` means incomplete variables in dataset column order.
    pub visit_sequence: Option<Vec<String>>,
    /// Offset expression per variable; allowed (and required) exactly for the
    /// `mnar.*` methods.
    pub ums_map: BTreeMap<String, String>,
    /// Include the missingness indicators of *other* incomplete variables as
    /// predictors in every univariate model. Off by default.
    pub include_other_indicators: bool,
}

impl MiceSpec {
    /// A MAR plan for this dataset: `norm`/`logreg` by variable kind,
    /// `maxit = 10`, and `m = max(5, ceil(% incomplete cases))`.
    pub fn mar_default(ds: &Dataset, seed: u64) -> Result<MiceSpec> {
        let summary = ds.summarize_missingness();
        let mut methods = BTreeMap::new();
        for c in ds.incomplete_columns() {
            let meta = &ds.meta()[c];
            let method = match meta.kind {
                VarKind::Continuous => Method::Norm,
                VarKind::Binary => Method::Logreg,
            };
            methods.insert(meta.name.clone(), method);
        }
        Ok(MiceSpec {
            m: recommend_m(summary.pct_incomplete_cases())?,
            maxit: 10,
            seed,
            methods,
            predictor_matrix: None,
            visit_sequence: None,
            ums_map: BTreeMap::new(),
            include_other_indicators: false,
        })
    }

    /// Switch one variable to its delta-adjusted method with the given ums.
    pub fn set_mnar(&mut self, ds: &Dataset, var: &str, ums: &str) -> Result<()> {
        let col = ds.var_index(var)?;
        let method = match ds.meta()[col].kind {
            VarKind::Continuous => Method::MnarNorm,
            VarKind::Binary => Method::MnarLogreg,
        };
        self.methods.insert(var.to_string(), method);
        self.ums_map.insert(var.to_string(), ums.to_string());
        Ok(())
    }

    pub fn method_for(&self, var: &str) -> Method {
        self.methods.get(var).copied().unwrap_or(Method::None)
    }

    /// Validate against a dataset without running.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        self.plan(ds).map(|_| ())
    }

    fn plan(&self, ds: &Dataset) -> Result<Plan> {
        if self.m < 1 {
            return Err(Error::config("m must be at least 1"));
        }
        if self.maxit < 1 {
            return Err(Error::config("maxit must be at least 1"));
        }
        for name in self.methods.keys().chain(self.ums_map.keys()) {
            ds.var_index(name).map_err(|_| {
                Error::config(format!("spec references unknown variable '{name}'"))
            })?;
        }

        let n = ds.n_vars();
        let mut methods = vec![Method::None; n];
        for (name, method) in &self.methods {
            methods[ds.var_index(name)?] = *method;
        }

        for c in 0..n {
            let meta = &ds.meta()[c];
            let incomplete = ds.is_incomplete(c);
            let method = methods[c];
            if incomplete && method == Method::None {
                return Err(Error::config(format!(
                    "incomplete variable '{}' has no imputation method",
                    meta.name
                )));
            }
            if !incomplete && method != Method::None {
                return Err(Error::config(format!(
                    "complete variable '{}' must use the empty method, got '{}'",
                    meta.name,
                    method.as_str()
                )));
            }
            if let Some(kind) = method.expected_kind() {
                if kind != meta.kind {
                    return Err(Error::config(format!(
                        "method '{}' cannot impute {} variable '{}'",
                        method.as_str(),
                        meta.kind,
                        meta.name
                    )));
                }
            }
            let has_ums = self.ums_map.contains_key(&meta.name);
            if method.is_mnar() && !has_ums {
                return Err(Error::config(format!(
                    "variable '{}' uses '{}' but has no ums expression",
                    meta.name,
                    method.as_str()
                )));
            }
            if !method.is_mnar() && has_ums {
                return Err(Error::config(format!(
                    "variable '{}' has a ums expression but method '{}' is not mnar.*",
                    meta.name,
                    method.as_str()
                )));
            }
        }

        // visit sequence: exactly the incomplete variables, each once
        let incomplete = ds.incomplete_columns();
        let visit: Vec<usize> = match &self.visit_sequence {
            None => incomplete.clone(),
            Some(seq) => {
                let mut cols = Vec::with_capacity(seq.len());
                for name in seq {
                    let c = ds.var_index(name).map_err(|_| {
                        Error::config(format!("visit sequence: unknown variable '{name}'"))
                    })?;
                    if !ds.is_incomplete(c) {
                        return Err(Error::config(format!(
                            "visit sequence: variable '{name}' is complete"
                        )));
                    }
                    if cols.contains(&c) {
                        return Err(Error::config(format!(
                            "visit sequence: variable '{name}' listed twice"
                        )));
                    }
                    cols.push(c);
                }
                if cols.len() != incomplete.len() {
                    return Err(Error::config(
                        "visit sequence must cover every incomplete variable",
                    ));
                }
                cols
            }
        };

        let pm = match &self.predictor_matrix {
            Some(pm) => {
                let expected: Vec<String> = ds.var_names().map(str::to_string).collect();
                if pm.names != expected {
                    return Err(Error::config(
                        "predictor matrix variables do not match the dataset",
                    ));
                }
                pm.clone()
            }
            None => PredictorMatrix::all_predictors(ds),
        };

        let mut predictors = Vec::with_capacity(n);
        for r in 0..n {
            predictors.push((0..n).filter(|&c| c != r && pm.get(r, c) == 1).collect());
        }

        let mut ums = vec![None; n];
        for (name, text) in &self.ums_map {
            let col = ds.var_index(name)?;
            let expr = UmsExpression::parse_for(ds, name, text)
                .map_err(|e| Error::config(format!("ums for '{name}': {e}")))?;
            ums[col] = Some(expr.bind(ds)?);
        }

        let mut extra = vec![Vec::new(); n];
        if self.include_other_indicators {
            let indicator: Vec<Vec<f64>> = (0..n)
                .map(|c| ds.mask_column(c).iter().map(|&m| f64::from(u8::from(m))).collect())
                .collect();
            for &r in &visit {
                for &c in &incomplete {
                    if c != r {
                        extra[r].push(indicator[c].clone());
                    }
                }
            }
        }

        let obs_rows: Vec<Vec<usize>> = (0..n)
            .map(|c| (0..ds.n_rows()).filter(|&i| !ds.is_missing(i, c)).collect())
            .collect();
        let miss_rows: Vec<Vec<usize>> = (0..n).map(|c| ds.missing_rows(c)).collect();

        Ok(Plan { methods, visit, predictors, ums, extra, obs_rows, miss_rows })
    }
}

struct Plan {
    methods: Vec<Method>,
    visit: Vec<usize>,
    predictors: Vec<Vec<usize>>,
    ums: Vec<Option<BoundUms>>,
    extra: Vec<Vec<Vec<f64>>>,
    obs_rows: Vec<Vec<usize>>,
    miss_rows: Vec<Vec<usize>>,
}

/// Mean and sample standard deviation of one variable's imputed cells after
/// one iteration of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub chain: usize,
    pub iteration: usize,
    pub variable: String,
    pub mean_imputed: f64,
    pub sd_imputed: f64,
}

/// The result of a run: `m` completed datasets plus trace statistics and any
/// warnings, with the spec echoed for reproducibility.
#[derive(Debug, Clone)]
pub struct MultiImputation {
    pub completed: Vec<Dataset>,
    pub trace: Vec<TraceRow>,
    pub warnings: Vec<String>,
    pub spec: MiceSpec,
}

impl MultiImputation {
    pub fn m(&self) -> usize {
        self.completed.len()
    }
}

/// Per-iteration mean/sd of imputed cells, one row per
/// chain x iteration x incomplete variable.
pub fn trace_statistics(mi: &MultiImputation) -> &[TraceRow] {
    &mi.trace
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    };
    (mean, sd)
}

fn run_chain(
    ds: &Dataset,
    spec: &MiceSpec,
    plan: &Plan,
    chain: usize,
) -> Result<(Vec<Vec<f64>>, Vec<TraceRow>, Vec<String>)> {
    let mut rng = chain_stream(spec.seed, chain);
    let mut columns = initial_fill(ds, &mut rng)?;
    let mut trace = Vec::with_capacity(spec.maxit * plan.visit.len());
    let mut warnings = Vec::new();

    for iteration in 1..=spec.maxit {
        for &target in &plan.visit {
            let meta = &ds.meta()[target];
            let ctx = UnivariateContext {
                target,
                target_name: &meta.name,
                target_kind: meta.kind,
                predictors: &plan.predictors[target],
                columns: &columns,
                obs_rows: &plan.obs_rows[target],
                miss_rows: &plan.miss_rows[target],
                extra_columns: &plan.extra[target],
                ums: plan.ums[target].as_ref(),
            };
            let outcome = match plan.methods[target] {
                Method::Norm => impute_norm(&ctx, &mut rng),
                Method::Logreg => impute_logreg(&ctx, &mut rng),
                Method::MnarNorm => impute_mnar_norm(&ctx, &mut rng),
                Method::MnarLogreg => impute_mnar_logreg(&ctx, &mut rng),
                Method::None => unreachable!("complete variables are never visited"),
            }
            .map_err(|e| {
                Error::numeric(format!(
                    "chain {chain}, iteration {iteration}, variable '{}': {e}",
                    meta.name
                ))
            })?;
            if let Some(w) = outcome.warning {
                warnings.push(format!("chain {chain}, iteration {iteration}: {w}"));
            }
            for (k, &row) in plan.miss_rows[target].iter().enumerate() {
                columns[target][row] = outcome.values[k];
            }
            let (mean_imputed, sd_imputed) = mean_sd(&outcome.values);
            trace.push(TraceRow {
                chain,
                iteration,
                variable: meta.name.clone(),
                mean_imputed,
                sd_imputed,
            });
        }
    }
    Ok((columns, trace, warnings))
}

fn run(ds: &Dataset, spec: &MiceSpec) -> Result<MultiImputation> {
    let plan = spec.plan(ds)?;
    let results: Vec<Result<_>> = (0..spec.m)
        .into_par_iter()
        .map(|chain| run_chain(ds, spec, &plan, chain))
        .collect();

    let mut completed = Vec::with_capacity(spec.m);
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    for result in results {
        let (columns, chain_trace, chain_warnings) = result?;
        completed.push(ds.with_completed_columns(columns));
        trace.extend(chain_trace);
        warnings.extend(chain_warnings);
    }
    Ok(MultiImputation { completed, trace, warnings, spec: spec.clone() })
}

/// Run standard (MAR) chained-equations imputation. The spec must not use
/// `mnar.*` methods; see [`run_narfcs`] for delta-adjusted runs.
pub fn run_fcs(ds: &Dataset, spec: &MiceSpec) -> Result<MultiImputation> {
    if let Some((name, method)) = spec.methods.iter().find(|(_, m)| m.is_mnar()) {
        return Err(Error::config(format!(
            "run_fcs cannot use mnar method '{}' on '{name}'; use run_narfcs",
            method.as_str()
        )));
    }
    run(ds, spec)
}

/// Run delta-adjusted (not-at-random) chained-equations imputation: identical
/// to [`run_fcs`] except that `mnar.*` methods apply their ums offsets to the
/// rows being imputed.
pub fn run_narfcs(ds: &Dataset, spec: &MiceSpec) -> Result<MultiImputation> {
    run(ds, spec)
}
