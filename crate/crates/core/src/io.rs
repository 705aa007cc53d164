//! JSON and CSV formats for correlation files.
//!
//! PM JSON: `{"type":"pm","N":..,"M":..,"K":..,"p":[[[..]]]}` indexed `[x][y][b]`.
//! Bell JSON: `{"type":"bell","XA":..,"YB":..,"A":..,"B":..,"r":[[[[..]]]]}` indexed `[x][y][a][b]`.
//! PM CSV: header `x,y,b,p`, one row per entry; absent entries are zero.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BellCorrelation, Labels, PmCorrelation, SimplexWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    /// Pick a format from a file extension, falling back to sniffing the content.
    pub fn detect(path: Option<&Path>, content: &str) -> Format {
        if let Some(ext) = path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            if ext.eq_ignore_ascii_case("csv") {
                return Format::Csv;
            }
            if ext.eq_ignore_ascii_case("json") {
                return Format::Json;
            }
        }
        if content.trim_start().starts_with(['{', '[']) {
            Format::Json
        } else {
            Format::Csv
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PmFile {
    #[serde(rename = "type")]
    kind: String,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "K")]
    k: usize,
    p: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Labels>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BellFile {
    #[serde(rename = "type")]
    kind: String,
    #[serde(rename = "XA")]
    settings_a: usize,
    #[serde(rename = "YB")]
    settings_b: usize,
    #[serde(rename = "A")]
    outcomes_a: usize,
    #[serde(rename = "B")]
    outcomes_b: usize,
    r: Vec<Vec<Vec<Vec<f64>>>>,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
}

fn check_type(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::parse(
            "field \"type\"",
            format!("expected \"{expected}\", found \"{found}\""),
        ));
    }
    Ok(())
}

/// Parse a PM correlation from JSON text.
pub fn pm_from_json(text: &str, tol: f64) -> Result<PmCorrelation> {
    let file: PmFile = serde_json::from_str(text).map_err(json_error)?;
    check_type(&file.kind, "pm")?;
    if let Some(labels) = &file.labels {
        for (name, list, len) in [("x", &labels.x, file.n), ("y", &labels.y, file.m), ("b", &labels.b, file.k)] {
            if let Some(list) = list {
                if list.len() != len {
                    return Err(Error::ShapeMismatch(format!(
                        "labels.{name} has {} entries, expected {len}",
                        list.len()
                    )));
                }
            }
        }
    }
    Ok(PmCorrelation::from_nested(file.n, file.m, file.k, &file.p, tol)?.with_labels(file.labels))
}

/// Serialize a PM correlation to canonical JSON.
pub fn pm_to_json(p: &PmCorrelation) -> String {
    let file = PmFile {
        kind: "pm".into(),
        n: p.n_preparations(),
        m: p.n_measurements(),
        k: p.n_outcomes(),
        p: p.to_nested(),
        labels: p.labels().cloned(),
    };
    serde_json::to_string(&file).expect("PM correlation serializes")
}

/// Parse a PM correlation from CSV with header `x,y,b,p`.
///
/// Dimensions are taken from `dims` when given, otherwise inferred as one past
/// the largest index seen. Every `(x, y)` slice must have at least one row.
pub fn pm_from_csv(
    text: &str,
    dims: Option<(usize, usize, usize)>,
    tol: f64,
) -> Result<PmCorrelation> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse("line 1", e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != ["x", "y", "b", "p"] {
        return Err(Error::parse(
            "line 1",
            format!("expected header x,y,b,p, found {}", names.join(",")),
        ));
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::parse(format!("line {line}"), e.to_string()))?;
        if record.len() != 4 {
            return Err(Error::parse(
                format!("line {line}"),
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let index = |col: usize, name: &str| -> Result<usize> {
            record[col].parse::<usize>().map_err(|e| {
                Error::parse(format!("line {line} field {name}"), format!("{:?}: {e}", &record[col]))
            })
        };
        let (x, y, b) = (index(0, "x")?, index(1, "y")?, index(2, "b")?);
        let value = record[3].parse::<f64>().map_err(|e| {
            Error::parse(format!("line {line} field p"), format!("{:?}: {e}", &record[3]))
        })?;
        rows.push((line, x, y, b, value));
    }
    if rows.is_empty() {
        return Err(Error::parse("line 2", "no data rows"));
    }

    let (n, m, k) = dims.unwrap_or_else(|| {
        rows.iter().fold((0, 0, 0), |(n, m, k), &(_, x, y, b, _)| {
            (n.max(x + 1), m.max(y + 1), k.max(b + 1))
        })
    });
    if n == 0 || m == 0 || k == 0 {
        return Err(Error::ShapeMismatch(format!(
            "dimensions must be positive, got N={n}, M={m}, K={k}"
        )));
    }

    let mut flat = vec![0.0; n * m * k];
    let mut seen = HashSet::new();
    let mut slices = vec![false; n * m];
    for &(line, x, y, b, value) in &rows {
        if x >= n || y >= m || b >= k {
            return Err(Error::parse(
                format!("line {line}"),
                format!("index ({x},{y},{b}) outside N={n}, M={m}, K={k}"),
            ));
        }
        if !seen.insert((x, y, b)) {
            return Err(Error::parse(
                format!("line {line}"),
                format!("duplicate entry ({x},{y},{b})"),
            ));
        }
        flat[(x * m + y) * k + b] = value;
        slices[x * m + y] = true;
    }
    if let Some(missing) = slices.iter().position(|&s| !s) {
        return Err(Error::parse(
            format!("row {}", rows.len() + 1),
            format!(
                "{} rows cover fewer than N*M={} slices; no rows for (x={}, y={})",
                rows.len(),
                n * m,
                missing / m,
                missing % m
            ),
        ));
    }
    PmCorrelation::new(n, m, k, flat, tol)
}

/// Serialize a PM correlation as CSV (every entry, including zeros).
pub fn pm_to_csv(p: &PmCorrelation) -> String {
    let mut out = String::from("x,y,b,p\n");
    for x in 0..p.n_preparations() {
        for y in 0..p.n_measurements() {
            for b in 0..p.n_outcomes() {
                out.push_str(&format!("{x},{y},{b},{:?}\n", p.prob(x, y, b)));
            }
        }
    }
    out
}

/// Parse a PM correlation in the given format.
pub fn load_pm(text: &str, format: Format, tol: f64) -> Result<PmCorrelation> {
    match format {
        Format::Json => pm_from_json(text, tol),
        Format::Csv => pm_from_csv(text, None, tol),
    }
}

/// Read a PM correlation from a path, or stdin when the path is `-`.
pub fn load_pm_path(path: &Path, tol: f64) -> Result<PmCorrelation> {
    let text = read_input(path)?;
    let hint = (path != Path::new("-")).then_some(path);
    load_pm(&text, Format::detect(hint, &text), tol)
}

pub fn bell_from_json(text: &str, tol: f64) -> Result<BellCorrelation> {
    let file: BellFile = serde_json::from_str(text).map_err(json_error)?;
    check_type(&file.kind, "bell")?;
    BellCorrelation::from_nested(
        file.settings_a,
        file.settings_b,
        file.outcomes_a,
        file.outcomes_b,
        &file.r,
        tol,
    )
}

pub fn bell_to_json(r: &BellCorrelation) -> String {
    let file = BellFile {
        kind: "bell".into(),
        settings_a: r.n_settings_a(),
        settings_b: r.n_settings_b(),
        outcomes_a: r.n_outcomes_a(),
        outcomes_b: r.n_outcomes_b(),
        r: r.to_nested(),
    };
    serde_json::to_string(&file).expect("Bell correlation serializes")
}

/// Read simplex weights from JSON: either a bare array or `{"weights": [...]}`.
pub fn weights_from_json(text: &str, tol: f64) -> Result<SimplexWeights> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum WeightsFile {
        Bare(Vec<f64>),
        Wrapped { weights: Vec<f64> },
    }
    let file: WeightsFile = serde_json::from_str(text).map_err(json_error)?;
    let w = match file {
        WeightsFile::Bare(w) | WeightsFile::Wrapped { weights: w } => w,
    };
    SimplexWeights::new(w, tol)
}

/// Read a whole file, or stdin for `-`.
pub fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        Ok(std::fs::read_to_string(path)?)
    }
}
