//! Typed rectangular datasets with an explicit missingness mask.
//!
//! A [`Dataset`] stores one `f64` column per variable plus a boolean mask with
//! `true` marking missing cells. Masked cells carry no information: reads go
//! through [`Dataset::value`], which returns `None` for them, and the stored
//! payload under a masked cell is never exposed. Binary variables are plain
//! `{0,1}`-valued columns; there is no factor machinery.
//!
//! On disk a dataset is a comma-separated file with a header row; missing
//! cells are written as `NA` and read back from either `NA` or an empty field.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    Outcome,
    Exposure,
    Confounder,
    Auxiliary,
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKind::Continuous => write!(f, "continuous"),
            VarKind::Binary => write!(f, "binary"),
        }
    }
}

impl fmt::Display for VarRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarRole::Outcome => write!(f, "outcome"),
            VarRole::Exposure => write!(f, "exposure"),
            VarRole::Confounder => write!(f, "confounder"),
            VarRole::Auxiliary => write!(f, "auxiliary"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableMeta {
    pub name: String,
    pub kind: VarKind,
    pub role: VarRole,
}

impl VariableMeta {
    pub fn new(name: impl Into<String>, kind: VarKind, role: VarRole) -> Self {
        VariableMeta { name: name.into(), kind, role }
    }
}

/// Column-typed rectangular data with a missingness mask (`true` = missing).
///
/// Column order is the file order on load and is authoritative for the
/// engine's default visit sequence. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    meta: Vec<VariableMeta>,
    n_rows: usize,
    /// Per-column values; the payload under a masked cell is NaN and must
    /// never be read (all access goes through `value`).
    values: Vec<Vec<f64>>,
    /// Per-column missingness, `true` = missing.
    mask: Vec<Vec<bool>>,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Build a dataset from per-column optional values (`None` = missing).
    ///
    /// Validates column lengths, unique names, finite values, and the
    /// `{0,1}` domain of binary columns.
    pub fn from_columns(meta: Vec<VariableMeta>, columns: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if meta.len() != columns.len() {
            return Err(Error::data(format!(
                "{} variables declared but {} columns provided",
                meta.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, |c| c.len());
        let mut index = HashMap::new();
        for (j, m) in meta.iter().enumerate() {
            if index.insert(m.name.clone(), j).is_some() {
                return Err(Error::data(format!("duplicate variable name '{}'", m.name)));
            }
        }
        let mut values = Vec::with_capacity(columns.len());
        let mut mask = Vec::with_capacity(columns.len());
        for (m, col) in meta.iter().zip(&columns) {
            if col.len() != n_rows {
                return Err(Error::data(format!(
                    "column '{}' has {} rows, expected {}",
                    m.name,
                    col.len(),
                    n_rows
                )));
            }
            let mut vals = Vec::with_capacity(n_rows);
            let mut mis = Vec::with_capacity(n_rows);
            for (i, cell) in col.iter().enumerate() {
                match cell {
                    None => {
                        vals.push(f64::NAN);
                        mis.push(true);
                    }
                    Some(v) => {
                        validate_cell(m, *v, i)?;
                        vals.push(*v);
                        mis.push(false);
                    }
                }
            }
            values.push(vals);
            mask.push(mis);
        }
        Ok(Dataset { meta, n_rows, values, mask, index })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_vars(&self) -> usize {
        self.meta.len()
    }

    pub fn meta(&self) -> &[VariableMeta] {
        &self.meta
    }

    pub fn var_names(&self) -> impl Iterator<Item = &str> {
        self.meta.iter().map(|m| m.name.as_str())
    }

    /// Column index of a variable.
    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::data(format!("unknown variable '{name}'")))
    }

    pub fn kind(&self, col: usize) -> VarKind {
        self.meta[col].kind
    }

    /// `true` if the cell at (row, col) is missing.
    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.mask[col][row]
    }

    /// Observed value at (row, col), `None` if the cell is missing.
    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        if self.mask[col][row] {
            None
        } else {
            Some(self.values[col][row])
        }
    }

    /// Missingness mask of one column (`true` = missing).
    pub fn mask_column(&self, col: usize) -> &[bool] {
        &self.mask[col]
    }

    /// The observed values of one column, in row order.
    pub fn observed_values(&self, col: usize) -> Vec<f64> {
        self.values[col]
            .iter()
            .zip(&self.mask[col])
            .filter(|(_, &m)| !m)
            .map(|(v, _)| *v)
            .collect()
    }

    /// Row indices where the column is missing, ascending.
    pub fn missing_rows(&self, col: usize) -> Vec<usize> {
        self.mask[col]
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn n_missing(&self, col: usize) -> usize {
        self.mask[col].iter().filter(|&&m| m).count()
    }

    /// Whether the column has at least one missing cell.
    pub fn is_incomplete(&self, col: usize) -> bool {
        self.mask[col].iter().any(|&m| m)
    }

    /// Indices of incomplete columns, in column order.
    pub fn incomplete_columns(&self) -> Vec<usize> {
        (0..self.n_vars()).filter(|&c| self.is_incomplete(c)).collect()
    }

    /// Missingness indicator for a variable: element `i` is 1 iff the cell is
    /// missing at row `i`.
    pub fn missingness_indicator(&self, var: &str) -> Result<Vec<u8>> {
        let col = self.var_index(var)?;
        Ok(self.mask[col].iter().map(|&m| m as u8).collect())
    }

    /// Replace a dataset's cells with fully observed columns, keeping the
    /// metadata. Used by the engine to publish completed datasets.
    pub(crate) fn with_completed_columns(&self, columns: Vec<Vec<f64>>) -> Dataset {
        debug_assert_eq!(columns.len(), self.n_vars());
        let mask = vec![vec![false; self.n_rows]; self.n_vars()];
        Dataset {
            meta: self.meta.clone(),
            n_rows: self.n_rows,
            values: columns,
            mask,
            index: self.index.clone(),
        }
    }

    /// Raw completed column, valid only when the dataset has no missing cells
    /// in that column.
    pub fn completed_column(&self, col: usize) -> Result<&[f64]> {
        if self.is_incomplete(col) {
            return Err(Error::data(format!(
                "variable '{}' has missing cells; no completed column available",
                self.meta[col].name
            )));
        }
        Ok(&self.values[col])
    }

    /// Load a dataset from a CSV file with a header row.
    ///
    /// Header names must match `meta` exactly as a set (order-insensitive);
    /// the file's column order becomes the dataset's column order. Empty
    /// fields and the literal `NA` are missing; everything else must parse as
    /// a finite number, restricted to `{0,1}` for binary variables.
    pub fn load_csv(path: impl AsRef<Path>, meta: &[VariableMeta]) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(file);

        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::data(format!("{}: cannot read header: {e}", path.display())))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();

        let by_name: HashMap<&str, &VariableMeta> =
            meta.iter().map(|m| (m.name.as_str(), m)).collect();
        if by_name.len() != meta.len() {
            return Err(Error::data("duplicate variable name in metadata".to_string()));
        }
        let mut file_meta = Vec::with_capacity(headers.len());
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for h in &headers {
            let m = by_name.get(h.as_str()).ok_or_else(|| {
                Error::data(format!("{}: unknown column '{h}' in header", path.display()))
            })?;
            if seen.insert(h.as_str(), ()).is_some() {
                return Err(Error::data(format!(
                    "{}: duplicate column '{h}' in header",
                    path.display()
                )));
            }
            file_meta.push((*m).clone());
        }
        if file_meta.len() != meta.len() {
            let missing: Vec<&str> = meta
                .iter()
                .map(|m| m.name.as_str())
                .filter(|n| !headers.iter().any(|h| h == n))
                .collect();
            return Err(Error::data(format!(
                "{}: missing columns {:?}",
                path.display(),
                missing
            )));
        }

        let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); file_meta.len()];
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| {
                Error::data(format!("{}: row {}: {e}", path.display(), i + 2))
            })?;
            if record.len() != file_meta.len() {
                return Err(Error::data(format!(
                    "{}: row {}: {} fields, expected {}",
                    path.display(),
                    i + 2,
                    record.len(),
                    file_meta.len()
                )));
            }
            for (j, field) in record.iter().enumerate() {
                let field = field.trim();
                if field.is_empty() || field == "NA" {
                    columns[j].push(None);
                } else {
                    let v: f64 = field.parse().map_err(|_| {
                        Error::data(format!(
                            "{}: row {}, column '{}': non-numeric value '{field}'",
                            path.display(),
                            i + 2,
                            file_meta[j].name
                        ))
                    })?;
                    columns[j].push(Some(v));
                }
            }
        }

        Dataset::from_columns(file_meta, columns).map_err(|e| match e {
            Error::Data(msg) => Error::data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Write the dataset as CSV; missing cells become `NA`. Values round-trip
    /// bit-exactly through `load_csv`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        let names: Vec<&str> = self.var_names().collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for i in 0..self.n_rows {
            for (j, _) in self.meta.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                match self.value(i, j) {
                    None => out.push_str("NA"),
                    Some(v) => out.push_str(&format!("{v}")),
                }
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn summarize_missingness(&self) -> MissingnessSummary {
        let per_variable = self
            .meta
            .iter()
            .enumerate()
            .map(|(c, m)| {
                let missing = self.n_missing(c);
                VariableMissingness {
                    name: m.name.clone(),
                    n_missing: missing,
                    pct_missing: pct(missing, self.n_rows),
                }
            })
            .collect();
        let complete = (0..self.n_rows)
            .filter(|&i| (0..self.n_vars()).all(|c| !self.mask[c][i]))
            .count();
        MissingnessSummary {
            n_rows: self.n_rows,
            per_variable,
            n_complete_cases: complete,
            pct_complete_cases: pct(complete, self.n_rows),
        }
    }
}

fn pct(count: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * count as f64 / n as f64
    }
}

fn validate_cell(meta: &VariableMeta, v: f64, row: usize) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::data(format!(
            "variable '{}', row {}: non-finite value {v}",
            meta.name,
            row + 1
        )));
    }
    if meta.kind == VarKind::Binary && v != 0.0 && v != 1.0 {
        return Err(Error::data(format!(
            "variable '{}', row {}: value {v} outside {{0,1}} for a binary variable",
            meta.name,
            row + 1
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableMissingness {
    pub name: String,
    pub n_missing: usize,
    pub pct_missing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessSummary {
    pub n_rows: usize,
    pub per_variable: Vec<VariableMissingness>,
    pub n_complete_cases: usize,
    pub pct_complete_cases: f64,
}

impl MissingnessSummary {
    pub fn for_variable(&self, name: &str) -> Option<&VariableMissingness> {
        self.per_variable.iter().find(|v| v.name == name)
    }

    /// Percentage of rows with at least one missing cell.
    pub fn pct_incomplete_cases(&self) -> f64 {
        if self.n_rows == 0 {
            0.0
        } else {
            100.0 - self.pct_complete_cases
        }
    }
}
