//! Sensitivity-parameter sweeps and marginal-to-conditional calibration.
//!
//! A sweep reruns the delta-adjusted imputation over a grid of sensitivity
//! parameters and pools the target analysis in every cell. Each cell derives
//! its own seed from the run seed and the cell index, so cells are
//! independent yet reproducible, and the all-zero cell matches a plain MAR
//! run under the cell's seed.
//!
//! Calibration inverts the marginal sensitivity parameter (MSP): given an
//! elicited marginal difference between missing and observed values (a
//! difference in means for continuous variables, in proportions for binary
//! ones), it finds the conditional delta (CSP) whose imputations achieve that
//! difference. The sign convention: MSP > 0 means missing values are larger
//! on average than observed ones. The solver is Gauss-Seidel across target
//! variables; each univariate solve is a bracketing secant/bisection hybrid
//! on Monte Carlo estimates from `R` short runs with common random numbers,
//! which makes the objective deterministic across evaluations.

use rayon::prelude::*;

use crate::data::{Dataset, VarKind};
use crate::engine::{run_narfcs, MiceSpec, MultiImputation};
use crate::error::{Error, Result};
use crate::pool::{fit_target, pool, AnalysisModel, PooledResult};
use crate::rng::{derive_seed, salt};

/// One axis of a sweep grid: the variable and its ordered list of deltas
/// (plain intercept values or full ums expressions).
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaAxis {
    pub variable: String,
    pub deltas: Vec<String>,
}

/// Ordered per-variable delta lists; the cartesian product defines the cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeltaGrid {
    pub axes: Vec<DeltaAxis>,
}

impl DeltaGrid {
    pub fn new() -> Self {
        DeltaGrid { axes: Vec::new() }
    }

    pub fn add_intercepts(&mut self, variable: impl Into<String>, deltas: &[f64]) -> &mut Self {
        self.axes.push(DeltaAxis {
            variable: variable.into(),
            deltas: deltas.iter().map(|d| format!("{d}")).collect(),
        });
        self
    }

    pub fn add_ums(&mut self, variable: impl Into<String>, deltas: Vec<String>) -> &mut Self {
        self.axes.push(DeltaAxis { variable: variable.into(), deltas });
        self
    }

    fn validate(&self, ds: &Dataset, spec: &MiceSpec) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::config("sweep grid has no variables"));
        }
        for axis in &self.axes {
            ds.var_index(&axis.variable)?;
            if axis.deltas.is_empty() {
                return Err(Error::config(format!(
                    "sweep grid for '{}' has no delta values",
                    axis.variable
                )));
            }
            if !spec.method_for(&axis.variable).is_mnar() {
                return Err(Error::config(format!(
                    "sweep variable '{}' does not use an mnar.* method",
                    axis.variable
                )));
            }
        }
        Ok(())
    }

    /// Cells in lexicographic order of grid indices (last axis fastest).
    fn joint_cells(&self) -> Vec<Vec<usize>> {
        let mut cells = vec![Vec::new()];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(cells.len() * axis.deltas.len());
            for cell in &cells {
                for i in 0..axis.deltas.len() {
                    let mut c = cell.clone();
                    c.push(i);
                    next.push(c);
                }
            }
            cells = next;
        }
        cells
    }
}

/// Whether sweep cells vary all deltas jointly (cartesian product) or one
/// variable at a time with the others pinned to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepMode {
    #[default]
    Joint,
    OneAtATime,
}

/// One sweep cell: the delta assigned to each grid variable, the derived
/// seed, and the full pooled analysis.
#[derive(Debug, Clone)]
pub struct SweepCell {
    /// Delta text per grid variable, aligned with `SweepResult::grid_vars`.
    pub deltas: Vec<String>,
    pub seed: u64,
    pub pooled: PooledResult,
}

/// Sweep output: one cell per delta combination, with a designated
/// coefficient for reporting.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub grid_vars: Vec<String>,
    /// The coefficient the sweep was run for (heatmap and summary rows).
    pub coef: String,
    pub cells: Vec<SweepCell>,
}

/// A flat row for the designated coefficient.
#[derive(Debug, Clone)]
pub struct SweepRow<'a> {
    pub deltas: &'a [String],
    pub seed: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SweepResult {
    pub fn coef_rows(&self) -> Vec<SweepRow<'_>> {
        self.cells
            .iter()
            .map(|cell| {
                let c = cell.pooled.coef(&self.coef).expect("designated coefficient pooled");
                SweepRow {
                    deltas: &cell.deltas,
                    seed: cell.seed,
                    estimate: c.qbar,
                    ci_low: c.ci_low,
                    ci_high: c.ci_high,
                }
            })
            .collect()
    }
}

/// Marginal difference achieved by a run: mean (continuous) or proportion
/// (binary) of the imputed cells at originally-missing rows, pooled over all
/// chains, minus the same statistic over the observed cells.
pub fn achieved_msp(mi: &MultiImputation, ds: &Dataset, var: &str) -> Result<f64> {
    let col = ds.var_index(var)?;
    let miss_rows = ds.missing_rows(col);
    if miss_rows.is_empty() {
        return Err(Error::data(format!("variable '{var}' is complete; no MSP is defined")));
    }
    let observed = ds.observed_values(col);
    let obs_mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for comp in &mi.completed {
        for &r in &miss_rows {
            sum += comp.value(r, col).expect("completed dataset");
            count += 1;
        }
    }
    Ok(sum / count as f64 - obs_mean)
}

fn cell_spec(spec: &MiceSpec, grid_vars: &[String], deltas: &[String], seed: u64) -> MiceSpec {
    let mut s = spec.clone();
    s.seed = seed;
    for (var, delta) in grid_vars.iter().zip(deltas) {
        s.ums_map.insert(var.clone(), delta.clone());
    }
    s
}

/// Run the delta-adjusted analysis over every cell of the grid and pool the
/// target model in each. `coef` names the coefficient reported by
/// [`SweepResult::coef_rows`]; the pooled results keep every coefficient.
pub fn run_sweep(
    ds: &Dataset,
    spec: &MiceSpec,
    grid: &DeltaGrid,
    model: &AnalysisModel,
    coef: &str,
    mode: SweepMode,
    alpha: f64,
) -> Result<SweepResult> {
    grid.validate(ds, spec)?;
    model.validate(ds)?;
    if !model.coef_names().iter().any(|n| n == coef) {
        return Err(Error::config(format!(
            "designated coefficient '{coef}' is not in the analysis model"
        )));
    }
    let grid_vars: Vec<String> = grid.axes.iter().map(|a| a.variable.clone()).collect();

    // textual deltas per cell, lexicographic
    let cell_deltas: Vec<Vec<String>> = match mode {
        SweepMode::Joint => grid
            .joint_cells()
            .into_iter()
            .map(|idx| {
                idx.iter()
                    .enumerate()
                    .map(|(axis, &i)| grid.axes[axis].deltas[i].clone())
                    .collect()
            })
            .collect(),
        SweepMode::OneAtATime => {
            let mut cells = Vec::new();
            for (axis_i, axis) in grid.axes.iter().enumerate() {
                for delta in &axis.deltas {
                    let mut deltas = vec!["0".to_string(); grid.axes.len()];
                    deltas[axis_i] = delta.clone();
                    cells.push(deltas);
                }
            }
            cells
        }
    };

    let results: Vec<Result<SweepCell>> = cell_deltas
        .into_par_iter()
        .enumerate()
        .map(|(index, deltas)| {
            let seed = derive_seed(spec.seed, salt::SWEEP_CELL.wrapping_add(index as u64));
            let s = cell_spec(spec, &grid_vars, &deltas, seed);
            let run = || -> Result<SweepCell> {
                let mi = run_narfcs(ds, &s)?;
                let fits = fit_target(&mi, model)?;
                let pooled = pool(&fits, alpha)?;
                Ok(SweepCell { deltas: deltas.clone(), seed, pooled })
            };
            run().map_err(|e| {
                Error::numeric(format!(
                    "sweep cell {index} ({}): {e}",
                    grid_vars
                        .iter()
                        .zip(&deltas)
                        .map(|(v, d)| format!("{v}={d}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            })
        })
        .collect();

    let mut cells = Vec::with_capacity(results.len());
    for r in results {
        cells.push(r?);
    }
    Ok(SweepResult { grid_vars, coef: coef.to_string(), cells })
}

/// An elicited marginal sensitivity parameter for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTarget {
    pub variable: String,
    /// Difference in means (continuous) or proportions (binary) between
    /// missing and observed values; positive means missing values are larger.
    pub msp: f64,
}

/// Tuning knobs for [`calibrate_msp_to_csp`].
#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    /// Short runs averaged per objective evaluation (common random numbers).
    pub eval_runs: usize,
    /// Chains per short run.
    pub eval_m: usize,
    /// Iterations per short run.
    pub eval_maxit: usize,
    /// Full Gauss-Seidel passes before giving up.
    pub max_passes: usize,
    /// Objective evaluations allowed per univariate solve.
    pub max_evals_per_solve: usize,
    /// Continuous tolerance as a fraction of the observed standard deviation.
    pub tol_continuous_sd_frac: f64,
    /// Binary tolerance on the proportion scale.
    pub tol_proportion: f64,
    /// Continuous search range as a multiple of the observed sd.
    pub range_continuous_sd_mult: f64,
    /// Binary search range on the log-odds scale.
    pub range_logodds: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            eval_runs: 5,
            eval_m: 5,
            eval_maxit: 5,
            max_passes: 10,
            max_evals_per_solve: 24,
            tol_continuous_sd_frac: 0.02,
            tol_proportion: 0.01,
            range_continuous_sd_mult: 10.0,
            range_logodds: 5.0,
        }
    }
}

/// Calibration output for one variable.
#[derive(Debug, Clone)]
pub struct VariableCalibration {
    pub variable: String,
    pub target_msp: f64,
    /// The conditional sensitivity parameter (intercept delta).
    pub delta: f64,
    pub achieved_msp: f64,
    /// Monte Carlo standard error of the achieved MSP at the solution.
    pub mc_se: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub rows: Vec<VariableCalibration>,
    pub passes: usize,
}

struct Objective<'a> {
    ds: &'a Dataset,
    spec: &'a MiceSpec,
    target_cols: Vec<usize>,
    eval_seeds: Vec<u64>,
    eval_m: usize,
    eval_maxit: usize,
}

impl Objective<'_> {
    /// Achieved MSP per target variable at the given deltas: mean over the
    /// short runs, plus the per-run spread for Monte Carlo standard errors.
    fn evaluate(&self, deltas: &[f64], vars: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
        let runs: Vec<Result<Vec<f64>>> = self
            .eval_seeds
            .par_iter()
            .map(|&seed| {
                let mut s = self.spec.clone();
                s.seed = seed;
                s.m = self.eval_m;
                s.maxit = self.eval_maxit;
                for (var, delta) in vars.iter().zip(deltas) {
                    s.ums_map.insert(var.clone(), format!("{delta}"));
                }
                let mi = run_narfcs(self.ds, &s)?;
                self.target_cols
                    .iter()
                    .map(|&col| achieved_msp(&mi, self.ds, &self.ds.meta()[col].name))
                    .collect()
            })
            .collect();
        let mut per_run: Vec<Vec<f64>> = Vec::with_capacity(runs.len());
        for r in runs {
            per_run.push(r?);
        }
        let r = per_run.len() as f64;
        let k = self.target_cols.len();
        let means: Vec<f64> =
            (0..k).map(|j| per_run.iter().map(|v| v[j]).sum::<f64>() / r).collect();
        let ses: Vec<f64> = (0..k)
            .map(|j| {
                if per_run.len() < 2 {
                    0.0
                } else {
                    let m = means[j];
                    let var = per_run.iter().map(|v| (v[j] - m).powi(2)).sum::<f64>() / (r - 1.0);
                    (var / r).sqrt()
                }
            })
            .collect();
        Ok((means, ses))
    }
}

/// Calibrate elicited marginal sensitivity parameters to conditional deltas.
///
/// Every target variable must be incomplete and use an `mnar.*` method in
/// `spec`; the calibrated deltas are intercept-only ums values. Gauss-Seidel
/// passes solve one variable at a time (bracketing secant on the
/// common-random-numbers objective) until every achieved MSP is within
/// tolerance of its target, erroring out if a bracket cannot be found inside
/// the search range or the passes run out.
pub fn calibrate_msp_to_csp(
    ds: &Dataset,
    spec: &MiceSpec,
    targets: &[CalibrationTarget],
    options: &CalibrationOptions,
) -> Result<CalibrationResult> {
    if targets.is_empty() {
        return Err(Error::config("no calibration targets"));
    }
    if options.eval_runs == 0 || options.eval_m == 0 || options.eval_maxit == 0 {
        return Err(Error::config("calibration evaluation settings must be positive"));
    }
    let mut target_cols = Vec::with_capacity(targets.len());
    let mut tols = Vec::with_capacity(targets.len());
    let mut ranges = Vec::with_capacity(targets.len());
    let mut steps = Vec::with_capacity(targets.len());
    for t in targets {
        let col = ds.var_index(&t.variable)?;
        if !ds.is_incomplete(col) {
            return Err(Error::data(format!("calibration target '{}' is complete", t.variable)));
        }
        if !spec.method_for(&t.variable).is_mnar() {
            return Err(Error::config(format!(
                "calibration target '{}' does not use an mnar.* method",
                t.variable
            )));
        }
        match ds.meta()[col].kind {
            VarKind::Continuous => {
                let obs = ds.observed_values(col);
                let mean = obs.iter().sum::<f64>() / obs.len() as f64;
                let sd = (obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (obs.len().max(2) as f64 - 1.0))
                    .sqrt()
                    .max(1e-12);
                tols.push(options.tol_continuous_sd_frac * sd);
                ranges.push(options.range_continuous_sd_mult * sd);
                steps.push(0.5 * sd);
            }
            VarKind::Binary => {
                if t.msp.abs() >= 1.0 {
                    return Err(Error::config(format!(
                        "binary MSP target for '{}' must be a proportion difference in (-1, 1)",
                        t.variable
                    )));
                }
                tols.push(options.tol_proportion);
                ranges.push(options.range_logodds);
                steps.push(0.5);
            }
        }
        target_cols.push(col);
    }
    spec.validate(ds)?;

    let vars: Vec<String> = targets.iter().map(|t| t.variable.clone()).collect();
    let objective = Objective {
        ds,
        spec,
        target_cols,
        eval_seeds: (0..options.eval_runs)
            .map(|r| derive_seed(spec.seed, salt::CALIBRATION_EVAL.wrapping_add(r as u64)))
            .collect(),
        eval_m: options.eval_m,
        eval_maxit: options.eval_maxit,
    };

    let k = targets.len();
    let mut deltas = vec![0.0; k];
    let mut achieved = vec![f64::NAN; k];
    let mut ses = vec![0.0; k];
    let mut evals = vec![0usize; k];
    let mut passes = 0;

    for pass in 1..=options.max_passes {
        passes = pass;
        for j in 0..k {
            let solve = solve_univariate(
                &objective,
                &vars,
                &mut deltas,
                j,
                targets[j].msp,
                tols[j],
                ranges[j],
                steps[j],
                options.max_evals_per_solve,
            )?;
            achieved[j] = solve.0;
            ses[j] = solve.1;
            evals[j] += solve.2;
        }
        // one fresh joint evaluation decides convergence of the pass
        let (all, all_se) = objective.evaluate(&deltas, &vars)?;
        let done = all
            .iter()
            .zip(targets)
            .zip(&tols)
            .all(|((a, t), tol)| (a - t.msp).abs() <= *tol);
        achieved.copy_from_slice(&all);
        ses.copy_from_slice(&all_se);
        if done {
            let rows = (0..k)
                .map(|j| VariableCalibration {
                    variable: vars[j].clone(),
                    target_msp: targets[j].msp,
                    delta: deltas[j],
                    achieved_msp: achieved[j],
                    mc_se: ses[j],
                    evaluations: evals[j] + 1,
                })
                .collect();
            return Ok(CalibrationResult { rows, passes });
        }
    }
    Err(Error::numeric(format!(
        "calibration did not converge after {passes} passes; residuals {:?}",
        achieved.iter().zip(targets).map(|(a, t)| a - t.msp).collect::<Vec<_>>()
    )))
}

/// Solve `g(delta_j) = target` for one variable, holding the other deltas
/// fixed. Returns (achieved, mc_se, evaluations) at the solution.
#[allow(clippy::too_many_arguments)]
fn solve_univariate(
    objective: &Objective<'_>,
    vars: &[String],
    deltas: &mut [f64],
    j: usize,
    target: f64,
    tol: f64,
    range: f64,
    step0: f64,
    max_evals: usize,
) -> Result<(f64, f64, usize)> {
    let mut evals = 0usize;
    let eval_at = |d: f64, deltas: &mut [f64], evals: &mut usize| -> Result<(f64, f64)> {
        deltas[j] = d;
        *evals += 1;
        let (means, ses) = objective.evaluate(deltas, vars)?;
        Ok((means[j], ses[j]))
    };

    let d0 = deltas[j];
    let (g0, se0) = eval_at(d0, deltas, &mut evals)?;
    let r0 = g0 - target;
    if r0.abs() <= tol {
        return Ok((g0, se0, evals));
    }

    // expand a bracket in the direction of the target (g increases with delta)
    let dir = if r0 < 0.0 { 1.0 } else { -1.0 };
    let mut lo = (d0, r0);
    let mut step = step0;
    let mut hi = None;
    while evals < max_evals {
        let cand = lo.0 + dir * step;
        if cand.abs() > range {
            break;
        }
        let (g, se) = eval_at(cand, deltas, &mut evals)?;
        let r = g - target;
        if r.abs() <= tol {
            return Ok((g, se, evals));
        }
        if r.signum() != r0.signum() {
            hi = Some((cand, r));
            break;
        }
        lo = (cand, r);
        step *= 2.0;
    }
    let Some(mut hi) = hi else {
        return Err(Error::numeric(format!(
            "calibration bracket for '{}' not found within range +/-{range:.4}",
            vars[j]
        )));
    };
    // keep lo below the root, hi above (in residual sign)
    if lo.1 > 0.0 {
        std::mem::swap(&mut lo, &mut hi);
    }

    // regula falsi with bisection safeguard
    while evals < max_evals {
        let span = hi.0 - lo.0;
        let mut cand = lo.0 - lo.1 * span / (hi.1 - lo.1);
        let frac = (cand - lo.0) / span;
        if !(0.1..=0.9).contains(&frac) || !cand.is_finite() {
            cand = lo.0 + span / 2.0;
        }
        let (g, se) = eval_at(cand, deltas, &mut evals)?;
        let r = g - target;
        if r.abs() <= tol {
            return Ok((g, se, evals));
        }
        if r < 0.0 {
            lo = (cand, r);
        } else {
            hi = (cand, r);
        }
    }
    // out of evaluations: keep the best end of the bracket and let the pass
    // loop decide whether the joint residuals are acceptable
    let best = if lo.1.abs() <= hi.1.abs() { lo } else { hi };
    let (g, se) = eval_at(best.0, deltas, &mut evals)?;
    Ok((g, se, evals))
}
