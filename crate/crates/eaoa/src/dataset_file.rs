//! Plain-text feature datasets.
//!
//! ```text
//! eaoa-dataset v1 dim=3 classes=4
//! 0.25,-1.5,3,2
//! 1.0,0.5,-0.75,0
//! ```
//!
//! One example per line: `dim` comma-separated features followed by an
//! integer class id below `classes`. Blank lines are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use eaoa_core::pool::{Dataset, Pool, SplitConfig};
use eaoa_core::Matrix;

use crate::{Error, Result};

const MAGIC: &str = "eaoa-dataset";
const VERSION: &str = "v1";

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn header_field(path: &Path, token: Option<&str>, key: &str) -> Result<usize> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(path, 1, format!("header is missing `{key}=<n>`")))
}

/// Parses dataset text; `path` is only used in error messages.
pub fn parse_dataset(path: &Path, text: &str) -> Result<Dataset> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some(MAGIC) || tokens.next() != Some(VERSION) {
        return Err(parse_err(
            path,
            1,
            format!("expected `{MAGIC} {VERSION} dim=<n> classes=<n>`"),
        ));
    }
    let dim = header_field(path, tokens.next(), "dim")?;
    let classes = header_field(path, tokens.next(), "classes")?;
    if dim == 0 || classes < 2 {
        return Err(parse_err(path, 1, "need dim >= 1 and classes >= 2"));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (offset, line) in lines.enumerate() {
        let lineno = offset + 2;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, found {}", dim + 1, fields.len()),
            ));
        }
        let row = labels.len();
        for f in &fields[..dim] {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad feature `{f}`")))?;
            if !v.is_finite() {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("non-finite feature in row {row}"),
                ));
            }
            data.push(v);
        }
        let label: usize = fields[dim]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad label `{}`", fields[dim])))?;
        if label >= classes {
            return Err(parse_err(
                path,
                lineno,
                format!("label {label} out of range for {classes} classes"),
            ));
        }
        labels.push(label);
    }
    let features = Matrix::from_vec(labels.len(), dim, data)?;
    Ok(Dataset::new(features, labels, classes)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(path, &text)
}

/// Loads a dataset file and splits it into an open-set pool.
pub fn load_feature_dataset(path: &Path, split: &SplitConfig) -> Result<Pool> {
    Ok(Pool::from_dataset(load_dataset(path)?, split)?)
}

pub fn format_dataset(dataset: &Dataset) -> String {
    let features = dataset.features();
    let mut out = format!(
        "{MAGIC} {VERSION} dim={} classes={}\n",
        features.cols(),
        dataset.classes()
    );
    for (row, label) in features.iter_rows().zip(dataset.labels()) {
        for v in row {
            write!(out, "{v},").expect("writing to a String");
        }
        writeln!(out, "{label}").expect("writing to a String");
    }
    out
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    fs::write(path, format_dataset(dataset)).map_err(|e| Error::io(path, e))
}
