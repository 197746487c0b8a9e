//! Operator and candidate files (TOML).
//!
//! Operator file:
//!
//! ```toml
//! dim = 3
//! Q = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
//! A = [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]
//! ```
//!
//! Candidate file, one table per candidate:
//!
//! ```toml
//! [[candidate]]
//! label = "x3"
//! kind = "affine"          # affine | quadratic | counterexample
//! b = [0.0, 0.0, 1.0]
//! c = 0.0
//! growth = { kind = "exponential", c0 = 1.0 }   # optional
//! non_negative = false                          # optional
//! ```
//!
//! Quadratic candidates take `m` (square, symmetrized on load) and optional
//! `b`, `c`. Counterexample candidates take `a`, `q` and, above dimension one,
//! the direction `ell`. Without `growth`, polynomials get an exponential
//! certificate derived from their coefficients (bounded for constants) and
//! counterexamples a bounded one.

use std::path::Path;

use serde::Deserialize;

use crate::config::Config;
use crate::error::{LabError, Result};
use crate::growth::{GrowthCertificate, GrowthKind};
use crate::harmonic::{polynomial_certificate, Affine, ErfLift, HarmonicCandidate, Quadratic};
use crate::linalg::{spectral_norm, Mat, Vector};
use crate::operator::OperatorSpec;

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))
}

fn parse_toml(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| LabError::Parse(e.to_string().trim_end().to_string()))
}

fn number(v: &toml::Value, what: &str) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => Err(LabError::Parse(format!("{what}: expected a number, found {}", other.type_str()))),
    }
}

fn matrix(table: &toml::Table, key: &str, dim: usize) -> Result<Mat> {
    let rows = table
        .get(key)
        .ok_or_else(|| LabError::Parse(format!("missing matrix `{key}`")))?
        .as_array()
        .ok_or_else(|| LabError::Parse(format!("`{key}` must be an array of rows")))?;
    if rows.len() != dim {
        return Err(LabError::Parse(format!("`{key}` has {} rows, dim = {dim}", rows.len())));
    }
    let mut m = Mat::zeros(dim, dim);
    for (i, row) in rows.iter().enumerate() {
        let what = format!("`{key}` row {}", i + 1);
        let row = row.as_array().ok_or_else(|| LabError::Parse(format!("{what}: expected an array")))?;
        if row.len() != dim {
            return Err(LabError::Parse(format!("{what}: expected {dim} entries, found {}", row.len())));
        }
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = number(v, &format!("{what}, column {}", j + 1))?;
        }
    }
    Ok(m)
}

/// Parse and validate an operator document.
pub fn parse_operator(text: &str, cfg: &Config) -> Result<OperatorSpec> {
    let table = parse_toml(text)?;
    if let Some(k) = table.keys().find(|k| !matches!(k.as_str(), "dim" | "Q" | "A")) {
        return Err(LabError::Parse(format!("unknown key `{k}` in operator file")));
    }
    let dim = match table.get("dim") {
        Some(toml::Value::Integer(d)) if *d >= 1 => *d as usize,
        Some(_) => return Err(LabError::Parse("`dim` must be a positive integer".into())),
        None => return Err(LabError::Parse("missing `dim`".into())),
    };
    let q = matrix(&table, "Q", dim)?;
    let a = matrix(&table, "A", dim)?;
    OperatorSpec::new(q, a, cfg)
}

pub fn load_operator(path: &Path, cfg: &Config) -> Result<OperatorSpec> {
    parse_operator(&read_to_string(path)?, cfg).map_err(|e| match e {
        LabError::Parse(m) => LabError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn format_matrix(m: &Mat) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Inverse of [`parse_operator`]; every entry is written in shortest
/// round-trip form.
pub fn operator_to_toml(spec: &OperatorSpec) -> String {
    format!("dim = {}\nQ = {}\nA = {}\n", spec.dim(), format_matrix(spec.q()), format_matrix(spec.a()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateFile {
    #[serde(default)]
    candidate: Vec<RawCandidate>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Affine,
    Quadratic,
    Counterexample,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrowth {
    kind: GrowthKind,
    c0: f64,
    delta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCandidate {
    label: String,
    kind: RawKind,
    b: Option<Vec<f64>>,
    c: Option<f64>,
    m: Option<Vec<Vec<f64>>>,
    a: Option<f64>,
    q: Option<f64>,
    ell: Option<Vec<f64>>,
    growth: Option<RawGrowth>,
    non_negative: Option<bool>,
}

fn vector(v: Option<&Vec<f64>>, dim: usize, what: &str) -> Result<Vector> {
    match v {
        None => Ok(Vector::zeros(dim)),
        Some(v) if v.len() == dim => Ok(Vector::from_column_slice(v)),
        Some(v) => Err(LabError::Parse(format!("{what} has {} entries, dim = {dim}", v.len()))),
    }
}

fn build_candidate(raw: &RawCandidate, dim: usize) -> Result<HarmonicCandidate> {
    let ctx = |m: String| LabError::Parse(format!("candidate {:?}: {m}", raw.label));
    let declared = raw.growth.as_ref().map(|g| GrowthCertificate::new(g.kind, g.c0, g.delta)).transpose()?;
    let c = raw.c.unwrap_or(0.0);
    let b = vector(raw.b.as_ref(), dim, "b").map_err(|e| ctx(e.to_string()))?;
    let candidate = match raw.kind {
        RawKind::Affine => {
            if raw.m.is_some() || raw.a.is_some() || raw.q.is_some() || raw.ell.is_some() {
                return Err(ctx("affine candidates take only b and c".into()));
            }
            let constant = b.iter().all(|&v| v == 0.0);
            let growth = match declared {
                Some(g) => g,
                None if constant => GrowthCertificate::bounded(c.abs())?,
                None => polynomial_certificate(0.0, b.norm(), c)?,
            };
            let non_negative = raw.non_negative.unwrap_or(constant && c >= 0.0);
            HarmonicCandidate::new(raw.label.clone(), Affine { b, c }, Some(growth), non_negative)
        }
        RawKind::Quadratic => {
            if raw.a.is_some() || raw.q.is_some() || raw.ell.is_some() {
                return Err(ctx("quadratic candidates take only m, b and c".into()));
            }
            let rows = raw.m.as_ref().ok_or_else(|| ctx("missing m".into()))?;
            if rows.len() != dim {
                return Err(ctx(format!("m has {} rows, dim = {dim}", rows.len())));
            }
            let mut m = Mat::zeros(dim, dim);
            for (i, row) in rows.iter().enumerate() {
                if row.len() != dim {
                    return Err(ctx(format!("m row {}: expected {dim} entries, found {}", i + 1, row.len())));
                }
                for (j, &v) in row.iter().enumerate() {
                    m[(i, j)] = v;
                }
            }
            let growth = match declared {
                Some(g) => g,
                None => polynomial_certificate(spectral_norm(&m), b.norm(), c)?,
            };
            let field = Quadratic::new(m, b, c).map_err(|e| ctx(e.to_string()))?;
            HarmonicCandidate::new(raw.label.clone(), field, Some(growth), raw.non_negative.unwrap_or(false))
        }
        RawKind::Counterexample => {
            if raw.m.is_some() || raw.b.is_some() || raw.c.is_some() {
                return Err(ctx("counterexample candidates take only a, q and ell".into()));
            }
            let a = raw.a.ok_or_else(|| ctx("missing a".into()))?;
            let q = raw.q.ok_or_else(|| ctx("missing q".into()))?;
            let ell = match (&raw.ell, dim) {
                (None, 1) => Vector::from_element(1, 1.0),
                (None, _) => return Err(ctx("ell is required above dimension one".into())),
                (Some(v), _) => vector(Some(v), dim, "ell").map_err(|e| ctx(e.to_string()))?,
            };
            let lift = ErfLift::new(ell, a, q).map_err(|e| ctx(e.to_string()))?;
            let growth = match declared {
                Some(g) => g,
                None => GrowthCertificate::bounded(lift.range())?,
            };
            HarmonicCandidate::new(raw.label.clone(), lift, Some(growth), raw.non_negative.unwrap_or(true))
        }
    };
    Ok(candidate)
}

/// Parse a candidate document for operators of dimension `dim`.
pub fn parse_candidates(text: &str, dim: usize) -> Result<Vec<HarmonicCandidate>> {
    let file: CandidateFile = toml::from_str(text).map_err(|e| LabError::Parse(e.to_string().trim_end().to_string()))?;
    if file.candidate.is_empty() {
        return Err(LabError::Parse("no [[candidate]] entries".into()));
    }
    file.candidate.iter().map(|raw| build_candidate(raw, dim)).collect()
}

pub fn load_candidates(path: &Path, dim: usize) -> Result<Vec<HarmonicCandidate>> {
    parse_candidates(&read_to_string(path)?, dim).map_err(|e| match e {
        LabError::Parse(m) => LabError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}
