//! UCR archive `.tsv`: one series per row, label first, tab-separated.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array3;

use super::{index_labels, is_missing, TimeSeriesDataset, MISSING};
use crate::{Error, Result};

pub fn load_ucr_tsv(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("ucr")
        .to_string();
    parse_ucr_tsv(&text, &name)
}

fn parse_cell(cell: &str, line: usize) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") || cell == "?" {
        return Ok(MISSING);
    }
    cell.parse::<f64>()
        .map_err(|_| Error::parse(line, format!("non-numeric cell {cell:?}")))
}

/// Parse UCR tab-separated text. Empty cells, `NaN` and `?` become missing markers.
pub fn parse_ucr_tsv(text: &str, name: &str) -> Result<TimeSeriesDataset> {
    let mut raw_labels = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split('\t');
        let label = cells.next().unwrap_or_default().trim();
        if label.is_empty() {
            return Err(Error::parse(lineno, "missing label"));
        }
        let before = values.len();
        for cell in cells {
            values.push(parse_cell(cell, lineno)?);
        }
        let t = values.len() - before;
        match width {
            None if t == 0 => return Err(Error::parse(lineno, "row has no values")),
            None => width = Some(t),
            Some(w) if w != t => {
                return Err(Error::parse(
                    lineno,
                    format!("ragged row: {t} values, expected {w}"),
                ))
            }
            Some(_) => {}
        }
        raw_labels.push(label.to_string());
    }
    let t = width.ok_or_else(|| Error::parse(0, "empty file"))?;
    let n = raw_labels.len();
    let samples =
        Array3::from_shape_vec((n, t, 1), values).map_err(|e| Error::Shape(e.to_string()))?;
    let (labels, classes) = index_labels(&raw_labels);
    TimeSeriesDataset::new(name, samples, Some(labels), classes)
}

/// Serialise a univariate dataset in UCR layout. Missing values are written as `NaN`.
pub fn write_ucr_tsv(ds: &TimeSeriesDataset) -> Result<String> {
    if ds.n_channels() != 1 {
        return Err(Error::Shape(format!(
            "UCR format is univariate, dataset has {} channels",
            ds.n_channels()
        )));
    }
    let mut out = String::new();
    for i in 0..ds.n_samples() {
        let label = match &ds.labels {
            Some(l) => ds.class_names[l[i]].clone(),
            None => "0".to_string(),
        };
        out.push_str(&label);
        for v in ds.sample(i).column(0) {
            if is_missing(*v) {
                out.push_str("\tNaN");
            } else {
                let _ = write!(out, "\t{v:?}");
            }
        }
        out.push('\n');
    }
    Ok(out)
}
