//! The run-configuration file format.
//!
//! Flat sections of `key = value` pairs; lists are comma-separated; `#`
//! starts a comment. Key order inside a section is preserved (sweep axes are
//! ordered by appearance). A full example:
//!
//! ```text
//! [data]
//! path = data.csv
//! variables = sex:binary:confounder, matmhw1:binary:exposure, sdqw3:continuous:outcome
//!
//! [impute]
//! m = 40
//! maxit = 10
//! seed = 3857814
//! methods = matmhw1:mnar.logreg, sdqw3:mnar.norm
//!
//! [ums]
//! sdqw3 = 0.78 + 0.2*matage
//! matmhw1 = 0.11
//!
//! [analysis]
//! outcome = sdqw3
//! terms = matmhw1, sex
//! coef = matmhw1
//! alpha = 0.05
//!
//! [sweep]
//! vary = joint
//! sdqw3 = -0.22, 0.78, 3.8
//! matmhw1 = -0.15, 0.11, 0.47
//!
//! [calibrate]
//! targets = sdqw3:2.0, matmhw1:0.4
//!
//! [simulate]
//! preset = cohort
//! n = 4882
//! seed = 20240001
//!
//! [output]
//! dir = out
//! ```

use std::path::{Path, PathBuf};

use crate::data::{Dataset, VarKind, VarRole, VariableMeta};
use crate::engine::{Method, MiceSpec};
use crate::error::{Error, Result};
use crate::pool::AnalysisModel;
use crate::sensitivity::{CalibrationOptions, CalibrationTarget, DeltaGrid, SweepMode};
use crate::simulate::{MissingnessModel, SimConfig};

/// Raw parsed file: sections in order, keys in order within each section.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut sections: Vec<(String, Vec<(String, String)>)> = Vec::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(i) => &raw_line[..i],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| {
                        Error::config(format!("line {}: unterminated section header", lineno + 1))
                    })?
                    .trim()
                    .to_string();
                if sections.iter().any(|(s, _)| *s == name) {
                    return Err(Error::config(format!(
                        "line {}: duplicate section [{name}]",
                        lineno + 1
                    )));
                }
                sections.push((name, Vec::new()));
            } else if let Some(eq) = line.find('=') {
                let key = line[..eq].trim().to_string();
                let value = line[eq + 1..].trim().to_string();
                if key.is_empty() {
                    return Err(Error::config(format!("line {}: empty key", lineno + 1)));
                }
                let Some(section) = sections.last_mut() else {
                    return Err(Error::config(format!(
                        "line {}: key '{key}' outside any [section]",
                        lineno + 1
                    )));
                };
                if section.1.iter().any(|(k, _)| *k == key) {
                    return Err(Error::config(format!(
                        "line {}: duplicate key '{key}' in [{}]",
                        lineno + 1,
                        section.0
                    )));
                }
                section.1.push((key, value));
            } else {
                return Err(Error::config(format!(
                    "line {}: expected 'key = value' or '[section]', got '{line}'",
                    lineno + 1
                )));
            }
        }
        Ok(RawConfig { sections })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RawConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        RawConfig::parse(&text)
    }

    fn section(&self, name: &str) -> Option<&[(String, String)]> {
        self.sections.iter().find(|(s, _)| s == name).map(|(_, kv)| kv.as_slice())
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.section(section)?.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key).ok_or_else(|| {
            Error::config(format!("missing '{key}' in [{section}]"))
        })
    }

    fn require_section(&self, name: &str) -> Result<&[(String, String)]> {
        self.section(name)
            .ok_or_else(|| Error::config(format!("missing [{name}] section")))
    }
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::config(format!("[{section}] {key}: cannot parse '{value}'"))
    })
}

fn split_list(value: &str) -> Vec<&str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// `name:value` pairs from a comma-separated list.
fn parse_pairs(section: &str, key: &str, value: &str) -> Result<Vec<(String, String)>> {
    split_list(value)
        .into_iter()
        .map(|item| {
            let (name, v) = item.split_once(':').ok_or_else(|| {
                Error::config(format!(
                    "[{section}] {key}: expected 'name:value', got '{item}'"
                ))
            })?;
            Ok((name.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// The fully validated run configuration for one CLI invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    raw: RawConfig,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let raw = RawConfig::load(path)?;
        let out_dir =
            PathBuf::from(raw.get("output", "dir").unwrap_or("out"));
        Ok(RunConfig { raw, out_dir })
    }

    pub fn from_text(text: &str) -> Result<RunConfig> {
        let raw = RawConfig::parse(text)?;
        let out_dir =
            PathBuf::from(raw.get("output", "dir").unwrap_or("out"));
        Ok(RunConfig { raw, out_dir })
    }

    pub fn dataset_path(&self) -> Result<PathBuf> {
        Ok(PathBuf::from(self.raw.require("data", "path")?))
    }

    /// Variable metadata from `[data] variables = name:kind:role, ...`.
    pub fn variables(&self) -> Result<Vec<VariableMeta>> {
        let value = self.raw.require("data", "variables")?;
        let mut out = Vec::new();
        for item in split_list(value) {
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::config(format!(
                    "[data] variables: expected 'name:kind:role', got '{item}'"
                )));
            }
            let kind = match parts[1] {
                "continuous" => VarKind::Continuous,
                "binary" => VarKind::Binary,
                other => {
                    return Err(Error::config(format!(
                        "[data] variables: unknown kind '{other}' for '{}'",
                        parts[0]
                    )))
                }
            };
            let role = match parts[2] {
                "outcome" => VarRole::Outcome,
                "exposure" => VarRole::Exposure,
                "confounder" => VarRole::Confounder,
                "auxiliary" => VarRole::Auxiliary,
                other => {
                    return Err(Error::config(format!(
                        "[data] variables: unknown role '{other}' for '{}'",
                        parts[0]
                    )))
                }
            };
            out.push(VariableMeta::new(parts[0], kind, role));
        }
        if out.is_empty() {
            return Err(Error::config("[data] variables: empty list"));
        }
        Ok(out)
    }

    /// Load the dataset named by `[data]`.
    pub fn load_dataset(&self) -> Result<Dataset> {
        Dataset::load_csv(self.dataset_path()?, &self.variables()?)
    }

    /// Build the imputation spec from `[impute]` and `[ums]`, validated
    /// against the dataset. `seed_override` comes from the CLI flag.
    pub fn mice_spec(&self, ds: &Dataset, seed_override: Option<u64>) -> Result<MiceSpec> {
        let sec = self.raw.require_section("impute")?;
        let _ = sec;
        let mut spec = MiceSpec::mar_default(ds, 0)?;
        spec.methods.clear();

        let seed = match seed_override {
            Some(s) => s,
            None => parse_num("impute", "seed", self.raw.require("impute", "seed")?)?,
        };
        spec.seed = seed;
        if let Some(v) = self.raw.get("impute", "m") {
            spec.m = parse_num("impute", "m", v)?;
        }
        if let Some(v) = self.raw.get("impute", "maxit") {
            spec.maxit = parse_num("impute", "maxit", v)?;
        }
        if let Some(v) = self.raw.get("impute", "include_other_indicators") {
            spec.include_other_indicators = match v {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::config(format!(
                        "[impute] include_other_indicators: expected true/false, got '{other}'"
                    )))
                }
            };
        }
        for (name, method) in parse_pairs(
            "impute",
            "methods",
            self.raw.require("impute", "methods")?,
        )? {
            spec.methods.insert(name, Method::parse(&method)?);
        }
        if let Some(v) = self.raw.get("impute", "visit_sequence") {
            spec.visit_sequence =
                Some(split_list(v).into_iter().map(str::to_string).collect());
        }
        if let Some(kv) = self.raw.section("ums") {
            for (name, expr) in kv {
                spec.ums_map.insert(name.clone(), expr.clone());
            }
        }
        spec.validate(ds)?;
        Ok(spec)
    }

    /// The target analysis from `[analysis]`.
    pub fn analysis_model(&self, ds: &Dataset) -> Result<AnalysisModel> {
        let outcome = self.raw.require("analysis", "outcome")?;
        let terms = split_list(self.raw.require("analysis", "terms")?)
            .into_iter()
            .map(str::to_string)
            .collect();
        let model = AnalysisModel::new(outcome, terms);
        model.validate(ds)?;
        Ok(model)
    }

    pub fn alpha(&self) -> Result<f64> {
        match self.raw.get("analysis", "alpha") {
            Some(v) => parse_num("analysis", "alpha", v),
            None => Ok(0.05),
        }
    }

    /// The designated coefficient for sweeps.
    pub fn designated_coef(&self) -> Result<String> {
        Ok(self.raw.require("analysis", "coef")?.to_string())
    }

    /// Sweep grid and mode from `[sweep]`: every key other than the reserved
    /// ones is a variable axis, in file order.
    pub fn sweep(&self) -> Result<(DeltaGrid, SweepMode, Option<(f64, f64)>)> {
        let kv = self.raw.require_section("sweep")?;
        let mut grid = DeltaGrid::new();
        let mut mode = SweepMode::Joint;
        let mut scale_min = None;
        let mut scale_max = None;
        for (key, value) in kv {
            match key.as_str() {
                "vary" => {
                    mode = match value.as_str() {
                        "joint" => SweepMode::Joint,
                        "one_at_a_time" => SweepMode::OneAtATime,
                        other => {
                            return Err(Error::config(format!(
                                "[sweep] vary: expected joint or one_at_a_time, got '{other}'"
                            )))
                        }
                    }
                }
                "scale_min" => scale_min = Some(parse_num("sweep", "scale_min", value)?),
                "scale_max" => scale_max = Some(parse_num("sweep", "scale_max", value)?),
                var => {
                    let deltas: Vec<String> =
                        split_list(value).into_iter().map(str::to_string).collect();
                    grid.add_ums(var, deltas);
                }
            }
        }
        let scale = match (scale_min, scale_max) {
            (Some(a), Some(b)) if a < b => Some((a, b)),
            (None, None) => None,
            (Some(_), Some(_)) => {
                return Err(Error::config("[sweep] scale_min must be below scale_max"))
            }
            _ => return Err(Error::config("[sweep] scale_min and scale_max come together")),
        };
        Ok((grid, mode, scale))
    }

    /// Calibration targets and options from `[calibrate]`.
    pub fn calibration(&self) -> Result<(Vec<CalibrationTarget>, CalibrationOptions)> {
        let targets = parse_pairs(
            "calibrate",
            "targets",
            self.raw.require("calibrate", "targets")?,
        )?
        .into_iter()
        .map(|(variable, v)| {
            Ok(CalibrationTarget {
                variable,
                msp: v.parse().map_err(|_| {
                    Error::config(format!("[calibrate] targets: bad number '{v}'"))
                })?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
        let mut options = CalibrationOptions::default();
        if let Some(v) = self.raw.get("calibrate", "eval_runs") {
            options.eval_runs = parse_num("calibrate", "eval_runs", v)?;
        }
        if let Some(v) = self.raw.get("calibrate", "eval_m") {
            options.eval_m = parse_num("calibrate", "eval_m", v)?;
        }
        if let Some(v) = self.raw.get("calibrate", "eval_maxit") {
            options.eval_maxit = parse_num("calibrate", "eval_maxit", v)?;
        }
        if let Some(v) = self.raw.get("calibrate", "max_passes") {
            options.max_passes = parse_num("calibrate", "max_passes", v)?;
        }
        if let Some(v) = self.raw.get("calibrate", "tol_continuous_sd_frac") {
            options.tol_continuous_sd_frac = parse_num("calibrate", "tol_continuous_sd_frac", v)?;
        }
        if let Some(v) = self.raw.get("calibrate", "tol_proportion") {
            options.tol_proportion = parse_num("calibrate", "tol_proportion", v)?;
        }
        Ok((targets, options))
    }

    /// Simulation config from `[simulate]`.
    pub fn simulation(&self, seed_override: Option<u64>) -> Result<SimConfig> {
        let kv = self.raw.require_section("simulate")?;
        let _ = kv;
        let n: usize = parse_num("simulate", "n", self.raw.require("simulate", "n")?)?;
        let seed = match seed_override {
            Some(s) => s,
            None => parse_num("simulate", "seed", self.raw.require("simulate", "seed")?)?,
        };
        let mut cfg = match self.raw.get("simulate", "preset") {
            None | Some("mcar") => SimConfig::mcar(n, seed, &[]),
            Some("cohort") => SimConfig::cohort_default(n, seed),
            Some("mnar_outcome") => SimConfig::mnar_on_outcome(n, seed),
            Some(other) => {
                return Err(Error::config(format!(
                    "[simulate] preset: expected cohort, mnar_outcome or mcar, got '{other}'"
                )))
            }
        };
        if let Some(v) = self.raw.get("simulate", "beta1") {
            cfg.beta1 = parse_num("simulate", "beta1", v)?;
        }
        if let Some(v) = self.raw.get("simulate", "u_strength") {
            cfg.u_strength = parse_num("simulate", "u_strength", v)?;
        }
        if let Some(v) = self.raw.get("simulate", "outcome_sd") {
            cfg.outcome_sd = parse_num("simulate", "outcome_sd", v)?;
        }
        if let Some(v) = self.raw.get("simulate", "rates") {
            for (var, rate) in parse_pairs("simulate", "rates", v)? {
                let rate: f64 = rate.parse().map_err(|_| {
                    Error::config(format!("[simulate] rates: bad number '{rate}'"))
                })?;
                match cfg.missingness.iter_mut().find(|m| m.variable == var) {
                    Some(m) => m.target_rate = rate,
                    None => cfg.missingness.push(MissingnessModel::mcar(var, rate)),
                }
            }
        }
        for (key, field) in [("w_coef", 0), ("self_coef", 1)] {
            if let Some(v) = self.raw.get("simulate", key) {
                for (var, coef) in parse_pairs("simulate", key, v)? {
                    let coef: f64 = coef.parse().map_err(|_| {
                        Error::config(format!("[simulate] {key}: bad number '{coef}'"))
                    })?;
                    let model = cfg
                        .missingness
                        .iter_mut()
                        .find(|m| m.variable == var)
                        .ok_or_else(|| {
                            Error::config(format!(
                                "[simulate] {key}: '{var}' has no missingness rate"
                            ))
                        })?;
                    if field == 0 {
                        model.w_coef = coef;
                    } else {
                        model.self_coef = coef;
                    }
                }
            }
        }
        if let Some(v) = self.raw.get("simulate", "arrows") {
            // var:source:coef triplets replace the arrow list of each
            // variable they mention
            let mut replaced: Vec<String> = Vec::new();
            for item in split_list(v) {
                let parts: Vec<&str> = item.split(':').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(Error::config(format!(
                        "[simulate] arrows: expected 'var:source:coef', got '{item}'"
                    )));
                }
                let coef: f64 = parts[2].parse().map_err(|_| {
                    Error::config(format!("[simulate] arrows: bad number '{}'", parts[2]))
                })?;
                let model = cfg
                    .missingness
                    .iter_mut()
                    .find(|m| m.variable == parts[0])
                    .ok_or_else(|| {
                        Error::config(format!(
                            "[simulate] arrows: '{}' has no missingness rate",
                            parts[0]
                        ))
                    })?;
                if !replaced.iter().any(|r| r == parts[0]) {
                    model.arrows.clear();
                    replaced.push(parts[0].to_string());
                }
                model.arrows.push((parts[1].to_string(), coef));
            }
        }
        Ok(cfg)
    }

    /// Echo lines for the run manifest, ordered and stable.
    pub fn manifest_echo(&self) -> Vec<(String, String)> {
        let mut lines = Vec::new();
        for (section, kv) in &self.raw.sections {
            for (key, value) in kv {
                lines.push((format!("{section}.{key}"), value.clone()));
            }
        }
        lines
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
# a config
[data]
path = data.csv
variables = z:continuous:confounder, x:binary:exposure, y:continuous:outcome

[impute]
m = 4
maxit = 3
seed = 99
methods = x:mnar.logreg, y:mnar.norm

[ums]
x = 0.11
y = 0.78 + 0.2*z

[analysis]
outcome = y
terms = x, z
coef = x
alpha = 0.05

[sweep]
vary = joint
y = -0.5, 0, 0.5
x = 0, 0.3

[calibrate]
targets = y:1.0, x:0.1
eval_runs = 2

[simulate]
preset = cohort
n = 100
seed = 7

[output]
dir = my_out
"#;

    fn toy_ds() -> Dataset {
        Dataset::from_columns(
            vec![
                VariableMeta::new("z", VarKind::Continuous, VarRole::Confounder),
                VariableMeta::new("x", VarKind::Binary, VarRole::Exposure),
                VariableMeta::new("y", VarKind::Continuous, VarRole::Outcome),
            ],
            vec![
                vec![Some(0.1), Some(0.4), Some(-0.3), Some(0.9), Some(1.4)],
                vec![Some(1.0), None, Some(0.0), Some(1.0), Some(0.0)],
                vec![Some(2.0), Some(1.0), None, Some(3.0), Some(2.5)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn parses_the_full_example() {
        let cfg = RunConfig::from_text(GOOD).unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("my_out"));
        assert_eq!(cfg.dataset_path().unwrap(), PathBuf::from("data.csv"));
        let vars = cfg.variables().unwrap();
        assert_eq!(vars.len(), 3);
        assert_eq!(vars[1].kind, VarKind::Binary);

        let ds = toy_ds();
        let spec = cfg.mice_spec(&ds, None).unwrap();
        assert_eq!(spec.m, 4);
        assert_eq!(spec.maxit, 3);
        assert_eq!(spec.seed, 99);
        assert_eq!(spec.ums_map["y"], "0.78 + 0.2*z");

        let spec2 = cfg.mice_spec(&ds, Some(123)).unwrap();
        assert_eq!(spec2.seed, 123);

        let model = cfg.analysis_model(&ds).unwrap();
        assert_eq!(model.outcome, "y");
        assert_eq!(cfg.designated_coef().unwrap(), "x");

        let (grid, mode, scale) = cfg.sweep().unwrap();
        assert_eq!(mode, SweepMode::Joint);
        assert!(scale.is_none());
        assert_eq!(grid.axes.len(), 2);
        assert_eq!(grid.axes[0].variable, "y");
        assert_eq!(grid.axes[0].deltas, vec!["-0.5", "0", "0.5"]);

        let (targets, options) = cfg.calibration().unwrap();
        assert_eq!(targets.len(), 2);
        assert_eq!(options.eval_runs, 2);

        let sim = cfg.simulation(None).unwrap();
        assert_eq!(sim.n, 100);
        assert_eq!(sim.seed, 7);
        let sim2 = cfg.simulation(Some(8)).unwrap();
        assert_eq!(sim2.seed, 8);
    }

    #[test]
    fn parse_errors_are_config_errors() {
        for bad in [
            "key = value\n",                       // key outside section
            "[data\npath = x\n",                   // unterminated header
            "[data]\npath\n",                      // no equals
            "[data]\npath = a\npath = b\n",        // duplicate key
            "[data]\nx = 1\n[data]\ny = 2\n",      // duplicate section
        ] {
            let err = RawConfig::parse(bad).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad:?}");
        }
    }

    #[test]
    fn missing_required_keys() {
        let cfg = RunConfig::from_text("[data]\npath = x.csv\n").unwrap();
        assert!(cfg.variables().is_err());
        assert!(cfg.mice_spec(&toy_ds(), None).is_err());
        assert!(cfg.sweep().is_err());
        assert!(cfg.calibration().is_err());
        assert!(cfg.simulation(None).is_err());
    }

    #[test]
    fn spec_validation_failures_propagate() {
        let text = r#"
[data]
path = d.csv
variables = z:continuous:confounder, x:binary:exposure, y:continuous:outcome
[impute]
seed = 1
methods = x:norm, y:norm
"#;
        let cfg = RunConfig::from_text(text).unwrap();
        // norm on a binary variable
        assert!(cfg.mice_spec(&toy_ds(), None).is_err());
    }

    #[test]
    fn simulate_overrides() {
        let text = r#"
[simulate]
n = 50
seed = 3
rates = sdqw3:0.3, matmhw1:0.1
self_coef = sdqw3:0.08
w_coef = sdqw3:0.5
arrows = sdqw3:matmhw1:1.0, sdqw3:finhard:0.3
"#;
        let cfg = RunConfig::from_text(text).unwrap();
        let sim = cfg.simulation(None).unwrap();
        assert_eq!(sim.missingness.len(), 2);
        let y = sim.missingness.iter().find(|m| m.variable == "sdqw3").unwrap();
        assert_eq!(y.target_rate, 0.3);
        assert_eq!(y.self_coef, 0.08);
        assert_eq!(y.w_coef, 0.5);
        assert_eq!(y.arrows.len(), 2);

        let bad = "[simulate]\nn = 10\nseed = 1\nself_coef = ghost:0.1\n";
        assert!(RunConfig::from_text(bad).unwrap().simulation(None).is_err());
    }

    #[test]
    fn manifest_echo_preserves_order() {
        let cfg = RunConfig::from_text(GOOD).unwrap();
        let echo = cfg.manifest_echo();
        assert_eq!(echo[0].0, "data.path");
        assert!(echo.iter().any(|(k, v)| k == "ums.y" && v == "0.78 + 0.2*z"));
    }
}
