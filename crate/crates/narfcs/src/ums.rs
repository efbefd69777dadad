//! The offset-expression ("ums") mini-language for delta adjustment.
//!
//! An expression is a flat signed sum in which every term is either a bare
//! number or `number*variable`; exactly one bare number must appear (anywhere)
//! and is the intercept delta. Whitespace is insignificant and numbers may use
//! scientific notation. There is no precedence, no parentheses and no
//! variable-times-variable term.
//!
//! ```text
//! "0.78"                intercept 0.78
//! "0.78 + 0.2*matage"   intercept 0.78, one term
//! "-0.22 - 0.1*sex"     intercept -0.22, term (-0.1, sex)
//! ```

use std::collections::HashSet;
use std::fmt;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// A parsed delta-adjustment expression: the intercept shift plus optional
/// `coefficient * variable` terms.
#[derive(Debug, Clone, PartialEq)]
pub struct UmsExpression {
    pub intercept: f64,
    pub terms: Vec<(f64, String)>,
}

#[derive(Debug, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '+' {
            tokens.push(Token::Plus);
            i += 1;
        } else if c == '-' {
            tokens.push(Token::Minus);
            i += 1;
        } else if c == '*' {
            tokens.push(Token::Star);
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part, including its sign
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let raw: String = chars[start..i].iter().collect();
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::config(format!("ums: malformed number '{raw}'")))?;
            if !v.is_finite() {
                return Err(Error::config(format!("ums: non-finite number '{raw}'")));
            }
            tokens.push(Token::Number(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            tokens.push(Token::Ident(chars[start..i].iter().collect()));
        } else {
            return Err(Error::config(format!("ums: unexpected character '{c}'")));
        }
    }
    Ok(tokens)
}

/// Parse a ums expression against the set of dataset variables.
///
/// `target` is the variable being imputed; it may not appear in a term.
pub fn parse_ums(text: &str, known_vars: &HashSet<&str>, target: &str) -> Result<UmsExpression> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(Error::config("ums: empty expression"));
    }

    let mut intercept: Option<f64> = None;
    let mut terms: Vec<(f64, String)> = Vec::new();
    let mut pos = 0;

    loop {
        // optional sign before the very first term; mandatory +/- thereafter
        let mut sign = 1.0;
        match tokens.get(pos) {
            Some(Token::Plus) => {
                pos += 1;
            }
            Some(Token::Minus) => {
                sign = -1.0;
                pos += 1;
            }
            _ => {
                if pos > 0 {
                    // the previous term ended and there is neither an
                    // operator nor end-of-input
                    if pos < tokens.len() {
                        return Err(Error::config("ums: expected '+' or '-' between terms"));
                    }
                }
            }
        }
        let number = match tokens.get(pos) {
            Some(Token::Number(v)) => sign * v,
            Some(Token::Ident(name)) => {
                return Err(Error::config(format!(
                    "ums: term must start with a coefficient, found identifier '{name}'"
                )))
            }
            Some(_) | None => return Err(Error::config("ums: dangling operator")),
        };
        pos += 1;

        if let Some(Token::Star) = tokens.get(pos) {
            pos += 1;
            match tokens.get(pos) {
                Some(Token::Ident(name)) => {
                    if name == target {
                        return Err(Error::config(format!(
                            "ums: term variable '{name}' is the imputation target"
                        )));
                    }
                    if !known_vars.contains(name.as_str()) {
                        return Err(Error::config(format!("ums: unknown variable '{name}'")));
                    }
                    terms.push((number, name.clone()));
                    pos += 1;
                }
                _ => return Err(Error::config("ums: expected a variable name after '*'")),
            }
        } else {
            if intercept.is_some() {
                return Err(Error::config(
                    "ums: more than one bare number; exactly one intercept term is allowed",
                ));
            }
            intercept = Some(number);
        }

        if pos >= tokens.len() {
            break;
        }
    }

    match intercept {
        Some(intercept) => Ok(UmsExpression { intercept, terms }),
        None => Err(Error::config(
            "ums: no intercept; the expression must include exactly one bare number",
        )),
    }
}

impl UmsExpression {
    /// An intercept-only expression.
    pub fn constant(delta: f64) -> Self {
        UmsExpression { intercept: delta, terms: Vec::new() }
    }

    /// Convenience parse against a dataset's variables.
    pub fn parse_for(ds: &Dataset, target: &str, text: &str) -> Result<Self> {
        let known: HashSet<&str> = ds.var_names().collect();
        parse_ums(text, &known, target)
    }

    /// Canonical text: intercept first, then terms in order. Reparsing the
    /// canonical text reproduces the expression exactly.
    pub fn canonical(&self) -> String {
        let mut s = format!("{}", self.intercept);
        for (coef, var) in &self.terms {
            if coef.is_sign_negative() {
                s.push_str(&format!(" - {}*{var}", -coef));
            } else {
                s.push_str(&format!(" + {coef}*{var}"));
            }
        }
        s
    }

    /// Resolve term variables to column indices of a dataset.
    pub fn bind(&self, ds: &Dataset) -> Result<BoundUms> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (coef, var) in &self.terms {
            terms.push((*coef, ds.var_index(var)?));
        }
        Ok(BoundUms { intercept: self.intercept, terms })
    }

    /// Evaluate over the given rows of a completed dataset:
    /// `out[i] = intercept + sum coef * value(rows[i], var)`.
    pub fn evaluate(&self, completed: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
        let bound = self.bind(completed)?;
        let mut out = vec![0.0; rows.len()];
        for (k, &row) in rows.iter().enumerate() {
            let mut v = bound.intercept;
            for (coef, col) in &bound.terms {
                let cell = completed.value(row, *col).ok_or_else(|| {
                    Error::data(format!(
                        "ums: variable '{}' is missing at row {row}",
                        completed.meta()[*col].name
                    ))
                })?;
                v += coef * cell;
            }
            out[k] = v;
        }
        Ok(out)
    }
}

impl fmt::Display for UmsExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.canonical())
    }
}

/// A ums expression with term variables resolved to column indices, for
/// evaluation against raw working columns inside the engine.
#[derive(Debug, Clone)]
pub struct BoundUms {
    pub intercept: f64,
    pub terms: Vec<(f64, usize)>,
}

impl BoundUms {
    pub fn evaluate_columns(&self, columns: &[Vec<f64>], rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|&row| {
                let mut v = self.intercept;
                for (coef, col) in &self.terms {
                    v += coef * columns[*col][row];
                }
                v
            })
            .collect()
    }
}
