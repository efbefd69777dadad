//! The command-line front end.
//!
//! The binary is a thin dispatcher: each subcommand loads the configuration,
//! validates everything up front (a validation failure produces no output
//! files at all), runs the corresponding library entry points and writes the
//! reports. Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numerical failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::engine::{run_fcs, run_narfcs, MiceSpec, MultiImputation};
use crate::error::{Error, Result};
use crate::pool::{fit_target, pool};
use crate::report;
use crate::sensitivity::{calibrate_msp_to_csp, run_sweep};
use crate::simulate;

#[derive(Parser)]
#[command(
    name = "narfcs",
    version,
    about = "Multiple imputation by chained equations with delta-adjusted sensitivity analysis"
)]
pub struct Cli {
    /// Run configuration file (sections of key = value).
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,

    /// Override the seed from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,

    /// Override the output directory from the configuration.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Missingness summary of the dataset (console + missingness.csv).
    Summarize,
    /// Impute: write completed datasets, trace statistics and a manifest.
    Impute,
    /// Impute, fit the target analysis per dataset and pool (pooled.csv).
    Analyze,
    /// Rerun the analysis over a sensitivity-parameter grid
    /// (sweep.csv + heatmap.svg).
    Sweep,
    /// Calibrate marginal sensitivity parameters to conditional deltas
    /// (calibration.csv).
    Calibrate,
    /// Generate a synthetic cohort (dataset.csv + truth.txt).
    Simulate,
    /// Impute and write trace statistics only.
    Trace,
}

/// Entry point used by `main`; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(threads) = cli.threads {
        // ignore the error if a global pool already exists (tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

/// Console output that tolerates a closed pipe (`narfcs ... | head`): a
/// broken pipe ends the process quietly with the conventional success code.
fn emit(text: std::fmt::Arguments<'_>) {
    use std::io::Write;
    let mut out = std::io::stdout();
    if out.write_fmt(text).is_err() || out.flush().is_err() {
        std::process::exit(0);
    }
}

macro_rules! say {
    ($($arg:tt)*) => { emit(format_args!("{}\n", format_args!($($arg)*))) };
}

/// Run the imputation described by the spec, dispatching on whether any
/// delta-adjusted methods are present.
fn run_engine(ds: &Dataset, spec: &MiceSpec) -> Result<MultiImputation> {
    if spec.methods.values().any(|m| m.is_mnar()) {
        run_narfcs(ds, spec)
    } else {
        run_fcs(ds, spec)
    }
}

fn report_warnings(mi: &MultiImputation) {
    for w in &mi.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = RunConfig::load(&cli.config)?;
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| config.out_dir.clone());
    let echo = config.manifest_echo();

    match cli.command {
        Command::Summarize => {
            let ds = config.load_dataset()?;
            let summary = ds.summarize_missingness();
            emit(format_args!("{}", report::missingness_table(&summary)));
            ensure_dir(&out_dir)?;
            report::write_missingness(&out_dir, &summary)
        }
        Command::Impute => {
            let ds = config.load_dataset()?;
            let spec = config.mice_spec(&ds, cli.seed)?;
            let mi = run_engine(&ds, &spec)?;
            report_warnings(&mi);
            ensure_dir(&out_dir)?;
            report::write_manifest(&out_dir, "impute", Some(&spec), Some(&ds), &echo)?;
            let names = report::write_completed_datasets(&out_dir, &mi)?;
            report::write_trace(&out_dir, &mi)?;
            say!("wrote {} completed datasets to {}", names.len(), out_dir.display());
            Ok(())
        }
        Command::Analyze => {
            let ds = config.load_dataset()?;
            let spec = config.mice_spec(&ds, cli.seed)?;
            let model = config.analysis_model(&ds)?;
            let alpha = config.alpha()?;
            let mi = run_engine(&ds, &spec)?;
            report_warnings(&mi);
            let fits = fit_target(&mi, &model)?;
            let pooled = pool(&fits, alpha)?;
            ensure_dir(&out_dir)?;
            report::write_manifest(&out_dir, "analyze", Some(&spec), Some(&ds), &echo)?;
            report::write_completed_datasets(&out_dir, &mi)?;
            report::write_trace(&out_dir, &mi)?;
            report::write_pooled(&out_dir, &pooled)?;
            for c in &pooled.coefs {
                say!(
                    "{:<16} {:>10.4}  [{:>8.4}, {:>8.4}]",
                    c.name, c.qbar, c.ci_low, c.ci_high
                );
            }
            Ok(())
        }
        Command::Sweep => {
            let ds = config.load_dataset()?;
            let spec = config.mice_spec(&ds, cli.seed)?;
            let model = config.analysis_model(&ds)?;
            let alpha = config.alpha()?;
            let coef = config.designated_coef()?;
            let (grid, mode, scale) = config.sweep()?;
            let sweep = run_sweep(&ds, &spec, &grid, &model, &coef, mode, alpha)?;
            ensure_dir(&out_dir)?;
            report::write_manifest(&out_dir, "sweep", Some(&spec), Some(&ds), &echo)?;
            report::write_sweep(&out_dir, &sweep)?;
            if sweep.grid_vars.len() <= 2 {
                report::write_heatmap(&out_dir, &sweep, scale)?;
            } else {
                eprintln!(
                    "note: no heatmap for a {}-variable grid; sweep.csv is complete",
                    sweep.grid_vars.len()
                );
            }
            say!("swept {} cells for {}", sweep.cells.len(), sweep.coef);
            Ok(())
        }
        Command::Calibrate => {
            let ds = config.load_dataset()?;
            let spec = config.mice_spec(&ds, cli.seed)?;
            let (targets, options) = config.calibration()?;
            let result = calibrate_msp_to_csp(&ds, &spec, &targets, &options)?;
            ensure_dir(&out_dir)?;
            report::write_manifest(&out_dir, "calibrate", Some(&spec), Some(&ds), &echo)?;
            report::write_calibration(&out_dir, &result)?;
            for row in &result.rows {
                say!(
                    "{:<16} target {:>8.4} -> delta {:>8.4} (achieved {:.4}, mc_se {:.4})",
                    row.variable, row.target_msp, row.delta, row.achieved_msp, row.mc_se
                );
            }
            Ok(())
        }
        Command::Simulate => {
            let cfg = config.simulation(cli.seed)?;
            let (ds, truth) = simulate::generate(&cfg)?;
            ensure_dir(&out_dir)?;
            ds.write_csv(out_dir.join("dataset.csv"))?;
            std::fs::write(
                out_dir.join("truth.txt"),
                report::truth_sidecar(&truth, cfg.n, cfg.seed),
            )
            .map_err(|e| Error::io(out_dir.join("truth.txt").display().to_string(), e))?;
            for v in &truth.per_variable {
                say!("{:<16} realized rate {:.4}", v.variable, v.realized_rate);
            }
            Ok(())
        }
        Command::Trace => {
            let ds = config.load_dataset()?;
            let spec = config.mice_spec(&ds, cli.seed)?;
            let mi = run_engine(&ds, &spec)?;
            report_warnings(&mi);
            ensure_dir(&out_dir)?;
            report::write_manifest(&out_dir, "trace", Some(&spec), Some(&ds), &echo)?;
            report::write_trace(&out_dir, &mi)?;
            say!("wrote {} trace rows", mi.trace.len());
            Ok(())
        }
    }
}
