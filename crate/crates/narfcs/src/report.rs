//! Report emission: CSV files, the run manifest, truth sidecars and the
//! sweep heatmap SVG.
//!
//! Every writer builds its full output as a string and writes it in one shot,
//! with no timestamps or environment-dependent content, so a rerun of the
//! same configuration produces byte-identical files regardless of thread
//! count. Numbers are formatted with Rust's shortest-round-trip formatting,
//! so values parse back exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{Dataset, MissingnessSummary};
use crate::engine::{MiceSpec, MultiImputation, TraceRow};
use crate::error::{Error, Result};
use crate::pool::PooledResult;
use crate::sensitivity::{CalibrationResult, SweepResult};
use crate::simulate::SimTruth;

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn missingness_csv(summary: &MissingnessSummary) -> String {
    let mut out = String::from("variable,n_missing,pct_missing\n");
    for v in &summary.per_variable {
        let _ = writeln!(out, "{},{},{}", v.name, v.n_missing, v.pct_missing);
    }
    let _ = writeln!(
        out,
        "(complete cases),{},{}",
        summary.n_complete_cases, summary.pct_complete_cases
    );
    out
}

/// Console rendering of the missingness summary.
pub fn missingness_table(summary: &MissingnessSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>10} {:>8}", "variable", "missing", "%");
    for v in &summary.per_variable {
        let _ = writeln!(out, "{:<16} {:>10} {:>7.1}%", v.name, v.n_missing, v.pct_missing);
    }
    let _ = writeln!(
        out,
        "{:<16} {:>10} {:>7.1}%  of {} rows",
        "complete cases", summary.n_complete_cases, summary.pct_complete_cases, summary.n_rows
    );
    out
}

pub fn write_missingness(dir: &Path, summary: &MissingnessSummary) -> Result<()> {
    write_file(&dir.join("missingness.csv"), &missingness_csv(summary))
}

/// `imp_001.csv` ... `imp_<m>.csv`.
pub fn write_completed_datasets(dir: &Path, mi: &MultiImputation) -> Result<Vec<String>> {
    let mut names = Vec::with_capacity(mi.m());
    for (i, ds) in mi.completed.iter().enumerate() {
        let name = format!("imp_{:03}.csv", i + 1);
        ds.write_csv(dir.join(&name))?;
        names.push(name);
    }
    Ok(names)
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("chain,iteration,variable,mean_imputed,sd_imputed\n");
    for t in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            t.chain, t.iteration, t.variable, t.mean_imputed, t.sd_imputed
        );
    }
    out
}

pub fn write_trace(dir: &Path, mi: &MultiImputation) -> Result<()> {
    write_file(&dir.join("trace.csv"), &trace_csv(&mi.trace))
}

pub fn pooled_csv(pooled: &PooledResult) -> String {
    let mut out = String::from("coefficient,estimate,se,ci_low,ci_high,df,w,b,m\n");
    for c in &pooled.coefs {
        let b = if pooled.between_defined { format!("{}", c.b) } else { "NA".to_string() };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.name,
            c.qbar,
            c.t.sqrt(),
            c.ci_low,
            c.ci_high,
            c.df,
            c.w,
            b,
            pooled.m
        );
    }
    out
}

pub fn write_pooled(dir: &Path, pooled: &PooledResult) -> Result<()> {
    write_file(&dir.join("pooled.csv"), &pooled_csv(pooled))
}

/// Long format: one row per cell per coefficient.
pub fn sweep_csv(sweep: &SweepResult) -> String {
    let mut out = String::new();
    for var in &sweep.grid_vars {
        let _ = write!(out, "delta_{var},");
    }
    out.push_str("coefficient,estimate,ci_low,ci_high,seed\n");
    for cell in &sweep.cells {
        for coef in &cell.pooled.coefs {
            for d in &cell.deltas {
                let _ = write!(out, "{d},");
            }
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                coef.name, coef.qbar, coef.ci_low, coef.ci_high, cell.seed
            );
        }
    }
    out
}

pub fn write_sweep(dir: &Path, sweep: &SweepResult) -> Result<()> {
    write_file(&dir.join("sweep.csv"), &sweep_csv(sweep))
}

pub fn calibration_csv(result: &CalibrationResult) -> String {
    let mut out = String::from("variable,target_msp,delta,achieved_msp,mc_se,evaluations,passes\n");
    for row in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.variable,
            row.target_msp,
            row.delta,
            row.achieved_msp,
            row.mc_se,
            row.evaluations,
            result.passes
        );
    }
    out
}

pub fn write_calibration(dir: &Path, result: &CalibrationResult) -> Result<()> {
    write_file(&dir.join("calibration.csv"), &calibration_csv(result))
}

pub fn truth_sidecar(truth: &SimTruth, cfg_n: usize, cfg_seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "schema_version={}", truth.schema_version);
    let _ = writeln!(out, "n={cfg_n}");
    let _ = writeln!(out, "seed={cfg_seed}");
    let _ = writeln!(out, "beta1={}", truth.beta1);
    for v in &truth.per_variable {
        let _ = writeln!(out, "realized_rate.{}={}", v.variable, v.realized_rate);
        let _ = writeln!(out, "implied_msp.{}={}", v.variable, v.implied_msp);
        let _ = writeln!(out, "implied_delta.{}={}", v.variable, v.implied_delta);
    }
    out
}

/// Plain-text key=value manifest: version, command, the effective spec, and
/// an echo of the configuration. No timestamps — reruns must be
/// byte-identical.
pub fn manifest(
    command: &str,
    spec: Option<&MiceSpec>,
    ds: Option<&Dataset>,
    config_echo: &[(String, String)],
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "tool=narfcs {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "command={command}");
    if let Some(ds) = ds {
        let _ = writeln!(out, "data.n_rows={}", ds.n_rows());
        let names: Vec<&str> = ds.var_names().collect();
        let _ = writeln!(out, "data.columns={}", names.join(","));
    }
    if let Some(spec) = spec {
        let _ = writeln!(out, "spec.m={}", spec.m);
        let _ = writeln!(out, "spec.maxit={}", spec.maxit);
        let _ = writeln!(out, "spec.seed={}", spec.seed);
        let _ = writeln!(
            out,
            "spec.include_other_indicators={}",
            spec.include_other_indicators
        );
        for (var, method) in &spec.methods {
            let _ = writeln!(out, "spec.method.{var}={}", method.as_str());
        }
        for (var, ums) in &spec.ums_map {
            let _ = writeln!(out, "spec.ums.{var}={ums}");
        }
        if let Some(seq) = &spec.visit_sequence {
            let _ = writeln!(out, "spec.visit_sequence={}", seq.join(","));
        }
    }
    for (key, value) in config_echo {
        let _ = writeln!(out, "config.{key}={value}");
    }
    out
}

pub fn write_manifest(
    dir: &Path,
    command: &str,
    spec: Option<&MiceSpec>,
    ds: Option<&Dataset>,
    config_echo: &[(String, String)],
) -> Result<()> {
    write_file(&dir.join("manifest.txt"), &manifest(command, spec, ds, config_echo))
}

// --- heatmap -------------------------------------------------------------

fn scale_color(value: f64, min: f64, max: f64) -> String {
    // light to dark blue
    let t = if max > min { ((value - min) / (max - min)).clamp(0.0, 1.0) } else { 0.5 };
    let lerp = |a: f64, b: f64| (a + t * (b - a)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

fn text_color(value: f64, min: f64, max: f64) -> &'static str {
    let t = if max > min { ((value - min) / (max - min)).clamp(0.0, 1.0) } else { 0.5 };
    if t > 0.55 {
        "#ffffff"
    } else {
        "#111111"
    }
}

/// Render the sweep's designated coefficient as an SVG heatmap.
///
/// The first grid variable indexes rows, the second (if any) columns; grids
/// with more than two variables have no 2-D rendering and are rejected. Each
/// cell prints the estimate with its interval; the color scale bounds are
/// either supplied or taken from the data range, and are printed in the
/// legend either way.
pub fn heatmap_svg(sweep: &SweepResult, scale: Option<(f64, f64)>) -> Result<String> {
    if sweep.grid_vars.is_empty() || sweep.grid_vars.len() > 2 {
        return Err(Error::config(format!(
            "heatmap needs a 1- or 2-variable grid, got {}",
            sweep.grid_vars.len()
        )));
    }
    let rows = sweep.coef_rows();
    // row labels: first axis values in order of appearance; column labels:
    // second axis values
    let mut row_labels: Vec<String> = Vec::new();
    let mut col_labels: Vec<String> = Vec::new();
    for r in &rows {
        let rl = r.deltas[0].clone();
        if !row_labels.contains(&rl) {
            row_labels.push(rl);
        }
        let cl = if r.deltas.len() > 1 { r.deltas[1].clone() } else { String::new() };
        if !col_labels.contains(&cl) {
            col_labels.push(cl);
        }
    }

    let (min, max) = match scale {
        Some((a, b)) => (a, b),
        None => {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for r in &rows {
                min = min.min(r.estimate);
                max = max.max(r.estimate);
            }
            (min, max)
        }
    };

    let cell_w = 130.0;
    let cell_h = 52.0;
    let left = 110.0;
    let top = 60.0;
    let legend_h = 70.0;
    let width = left + cell_w * col_labels.len() as f64 + 30.0;
    let height = top + cell_h * row_labels.len() as f64 + legend_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(svg, r##"<rect width="{width}" height="{height}" fill="#ffffff"/>"##);
    let title = format!("{} estimate (95% CI)", sweep.coef);
    let _ = writeln!(svg, r#"<text x="{left}" y="20" font-size="14">{title}</text>"#);

    // axis titles
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="40">delta_{}</text>"#,
        if sweep.grid_vars.len() > 1 { sweep.grid_vars[1].as_str() } else { "" }
    );
    let _ = writeln!(
        svg,
        r#"<text x="8" y="{}">delta_{}</text>"#,
        top - 8.0,
        sweep.grid_vars[0]
    );

    for (j, cl) in col_labels.iter().enumerate() {
        let x = left + cell_w * j as f64 + cell_w / 2.0;
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle">{cl}</text>"#,
            top - 8.0 + 20.0
        );
    }

    for r in &rows {
        let i = row_labels.iter().position(|l| *l == r.deltas[0]).unwrap();
        let j = if r.deltas.len() > 1 {
            col_labels.iter().position(|l| *l == r.deltas[1]).unwrap()
        } else {
            0
        };
        let x = left + cell_w * j as f64;
        let y = top + 20.0 + cell_h * i as f64;
        let fill = scale_color(r.estimate, min, max);
        let tc = text_color(r.estimate, min, max);
        let _ = writeln!(
            svg,
            r##"<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="{fill}" stroke="#cccccc"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{tc}">{:.2}</text>"#,
            x + cell_w / 2.0,
            y + cell_h / 2.0 - 4.0,
            r.estimate
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{tc}" font-size="10">({:.2}, {:.2})</text>"#,
            x + cell_w / 2.0,
            y + cell_h / 2.0 + 12.0,
            r.ci_low,
            r.ci_high
        );
    }

    // row labels
    for (i, rl) in row_labels.iter().enumerate() {
        let y = top + 20.0 + cell_h * i as f64 + cell_h / 2.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{y:.1}" text-anchor="end">{rl}</text>"#,
            left - 8.0
        );
    }

    // legend: gradient bar plus the scale bounds
    let ly = top + 20.0 + cell_h * row_labels.len() as f64 + 24.0;
    let steps = 24;
    let bar_w = 180.0;
    for s in 0..steps {
        let v = min + (max - min) * s as f64 / (steps - 1) as f64;
        let x = left + bar_w * s as f64 / steps as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.1}" y="{ly}" width="{:.1}" height="12" fill="{}"/>"#,
            bar_w / steps as f64 + 0.5,
            scale_color(v, min, max)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{min:.2}</text>"#,
        left - 6.0,
        ly + 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="10">{max:.2}</text>"#,
        left + bar_w + 6.0,
        ly + 10.0
    );
    let bounds_kind = if scale.is_some() { "configured" } else { "data range" };
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="{}" font-size="10">color scale: linear in the point estimate, bounds {bounds_kind} [{min:.2}, {max:.2}]</text>"#,
        ly + 30.0
    );
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

pub fn write_heatmap(dir: &Path, sweep: &SweepResult, scale: Option<(f64, f64)>) -> Result<()> {
    write_file(&dir.join("heatmap.svg"), &heatmap_svg(sweep, scale)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{VarKind, VarRole, VariableMeta};
    use crate::pool::{PooledCoef, PooledResult};
    use crate::sensitivity::SweepCell;

    fn pooled_one(name: &str, est: f64) -> PooledResult {
        PooledResult {
            m: 3,
            alpha: 0.05,
            between_defined: true,
            coefs: vec![PooledCoef {
                name: name.into(),
                qbar: est,
                w: 0.5,
                b: 0.1,
                t: 0.6333,
                df: 12.0,
                ci_low: est - 1.0,
                ci_high: est + 1.0,
            }],
        }
    }

    fn sweep_2x2() -> SweepResult {
        let mut cells = Vec::new();
        for (i, dy) in ["-0.5", "0.5"].iter().enumerate() {
            for (j, dx) in ["0", "0.3"].iter().enumerate() {
                cells.push(SweepCell {
                    deltas: vec![dy.to_string(), dx.to_string()],
                    seed: (i * 2 + j) as u64,
                    pooled: pooled_one("x", 0.4 + 0.1 * (i * 2 + j) as f64),
                });
            }
        }
        SweepResult {
            grid_vars: vec!["y".into(), "x".into()],
            coef: "x".into(),
            cells,
        }
    }

    #[test]
    fn sweep_csv_layout() {
        let csv = sweep_csv(&sweep_2x2());
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "delta_y,delta_x,coefficient,estimate,ci_low,ci_high,seed");
        let first = lines.next().unwrap();
        assert!(first.starts_with("-0.5,0,x,0.4,"), "{first}");
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn heatmap_labels_match_csv_values() {
        let sweep = sweep_2x2();
        let svg = heatmap_svg(&sweep, None).unwrap();
        for row in sweep.coef_rows() {
            let label = format!(">{:.2}</text>", row.estimate);
            assert!(svg.contains(&label), "missing {label}");
            let ci = format!("({:.2}, {:.2})", row.ci_low, row.ci_high);
            assert!(svg.contains(&ci), "missing {ci}");
        }
        // scale bounds printed in the legend
        assert!(svg.contains("bounds data range"));
        let svg2 = heatmap_svg(&sweep, Some((0.0, 1.0))).unwrap();
        assert!(svg2.contains("bounds configured [0.00, 1.00]"));
    }

    #[test]
    fn heatmap_rejects_3d_grids() {
        let mut sweep = sweep_2x2();
        sweep.grid_vars.push("w".into());
        assert!(heatmap_svg(&sweep, None).is_err());
    }

    #[test]
    fn single_axis_heatmap_is_one_row() {
        let cells = vec![
            SweepCell { deltas: vec!["0".into()], seed: 1, pooled: pooled_one("x", 0.3) },
            SweepCell { deltas: vec!["1".into()], seed: 2, pooled: pooled_one("x", 0.6) },
        ];
        let sweep = SweepResult { grid_vars: vec!["y".into()], coef: "x".into(), cells };
        let svg = heatmap_svg(&sweep, None).unwrap();
        assert!(svg.contains("0.30") && svg.contains("0.60"));
    }

    #[test]
    fn pooled_csv_handles_m_one() {
        let mut p = pooled_one("x", 1.0);
        p.m = 1;
        p.between_defined = false;
        let csv = pooled_csv(&p);
        assert!(csv.lines().nth(1).unwrap().contains(",NA,"));
    }

    #[test]
    fn missingness_csv_includes_complete_cases() {
        let ds = Dataset::from_columns(
            vec![VariableMeta::new("a", VarKind::Continuous, VarRole::Outcome)],
            vec![vec![Some(1.0), None, Some(2.0)]],
        )
        .unwrap();
        let summary = ds.summarize_missingness();
        let csv = missingness_csv(&summary);
        assert!(csv.contains("a,1,"));
        assert!(csv.contains("(complete cases),2,"));
        let table = missingness_table(&summary);
        assert!(table.contains("complete cases"));
    }

    #[test]
    fn manifest_has_version_and_no_timestamps() {
        let text = manifest("impute", None, None, &[("data.path".into(), "x.csv".into())]);
        assert!(text.starts_with("tool=narfcs "));
        assert!(text.contains("command=impute"));
        assert!(text.contains("config.data.path=x.csv"));
        // the same call yields the same bytes
        assert_eq!(text, manifest("impute", None, None, &[("data.path".into(), "x.csv".into())]));
    }
}
