//! sktime-style `.ts` files: `@`-prefixed header, then one case per line with
//! channels separated by `:` and the class label last.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array3;

use super::{is_missing, TimeSeriesDataset, MISSING};
use crate::{Error, Result};

pub fn load_uea_ts(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_uea_ts(&text)
}

#[derive(Default)]
struct Header {
    problem_name: Option<String>,
    dimensions: Option<usize>,
    univariate: Option<bool>,
    class_labels: Option<Vec<String>>,
}

fn parse_bool(v: &str, line: usize) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::parse(
            line,
            format!("expected true/false, got {v:?}"),
        )),
    }
}

pub fn parse_uea_ts(text: &str) -> Result<TimeSeriesDataset> {
    let mut header = Header::default();
    let mut lines = text.lines().enumerate();
    let mut saw_data = false;

    for (idx, raw) in lines.by_ref() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let Some(directive) = line.strip_prefix('@') else {
            return Err(Error::parse(lineno, "data before @data"));
        };
        let mut parts = directive.split_whitespace();
        let key = parts.next().unwrap_or_default().to_ascii_lowercase();
        let rest: Vec<&str> = parts.collect();
        let first = rest.first().copied().unwrap_or_default();
        match key.as_str() {
            "problemname" => header.problem_name = Some(rest.join(" ")),
            "timestamps" => {
                if parse_bool(first, lineno)? {
                    return Err(Error::parse(lineno, "timestamped series are not supported"));
                }
            }
            "univariate" => header.univariate = Some(parse_bool(first, lineno)?),
            "dimensions" | "dimension" => {
                let d = first
                    .parse::<usize>()
                    .map_err(|_| Error::parse(lineno, format!("bad dimension count {first:?}")))?;
                if d == 0 {
                    return Err(Error::parse(lineno, "dimension count must be positive"));
                }
                header.dimensions = Some(d);
            }
            "classlabel" => {
                if parse_bool(first, lineno)? {
                    let labels: Vec<String> = rest[1..].iter().map(|s| s.to_string()).collect();
                    if labels.is_empty() {
                        return Err(Error::parse(lineno, "@classLabel true without labels"));
                    }
                    header.class_labels = Some(labels);
                } else {
                    header.class_labels = Some(Vec::new());
                }
            }
            "data" => {
                saw_data = true;
                break;
            }
            // @missing, @equalLength, @seriesLength and unknown keys are informational.
            _ => {}
        }
    }

    if !saw_data {
        return Err(Error::parse(0, "missing @data section"));
    }
    let name = header
        .problem_name
        .ok_or_else(|| Error::parse(0, "missing @problemName"))?;
    let classes = header
        .class_labels
        .ok_or_else(|| Error::parse(0, "missing @classLabel"))?;
    let dims = match (header.dimensions, header.univariate) {
        (Some(d), _) => d,
        (None, Some(true)) => 1,
        _ => return Err(Error::parse(0, "missing @dimensions")),
    };
    let has_labels = !classes.is_empty();

    let mut cases: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut labels = Vec::new();
    for (idx, raw) in lines {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields: Vec<&str> = line.split(':').collect();
        if has_labels {
            let label = fields.pop().unwrap_or_default().trim();
            let li = classes
                .iter()
                .position(|c| c == label)
                .ok_or_else(|| Error::parse(lineno, format!("undeclared class label {label:?}")))?;
            labels.push(li);
        }
        if fields.len() != dims {
            return Err(Error::parse(
                lineno,
                format!("{} channels, header declares {dims}", fields.len()),
            ));
        }
        let mut channels = Vec::with_capacity(dims);
        for f in fields {
            let ch = f
                .split(',')
                .map(|c| {
                    let c = c.trim();
                    if c == "?" || c.is_empty() || c.eq_ignore_ascii_case("nan") {
                        Ok(MISSING)
                    } else {
                        c.parse::<f64>()
                            .map_err(|_| Error::parse(lineno, format!("non-numeric value {c:?}")))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            channels.push(ch);
        }
        cases.push(channels);
    }
    if cases.is_empty() {
        return Err(Error::parse(0, "no cases after @data"));
    }

    let t_max = cases
        .iter()
        .flat_map(|c| c.iter().map(Vec::len))
        .max()
        .unwrap_or(0);
    let mut samples = Array3::from_elem((cases.len(), t_max, dims), MISSING);
    for (i, case) in cases.iter().enumerate() {
        for (c, ch) in case.iter().enumerate() {
            for (t, v) in ch.iter().enumerate() {
                samples[[i, t, c]] = *v;
            }
        }
    }
    let labels = has_labels.then_some(labels);
    TimeSeriesDataset::new(name, samples, labels, classes)
}

/// Serialise in `.ts` layout. Trailing all-missing timestamps are dropped per case.
pub fn write_uea_ts(ds: &TimeSeriesDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "@problemName {}", ds.name);
    out.push_str("@timeStamps false\n@missing true\n");
    let _ = writeln!(out, "@univariate {}", ds.n_channels() == 1);
    let _ = writeln!(out, "@dimensions {}", ds.n_channels());
    if ds.labels.is_some() {
        let _ = writeln!(out, "@classLabel true {}", ds.class_names.join(" "));
    } else {
        out.push_str("@classLabel false\n");
    }
    out.push_str("@data\n");
    for i in 0..ds.n_samples() {
        let x = ds.sample(i);
        let len = ds.valid_len(i);
        let chans: Vec<String> = (0..ds.n_channels())
            .map(|c| {
                x.column(c)
                    .iter()
                    .take(len)
                    .map(|v| {
                        if is_missing(*v) {
                            "?".into()
                        } else {
                            format!("{v:?}")
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        out.push_str(&chans.join(":"));
        if let Some(l) = &ds.labels {
            out.push(':');
            out.push_str(&ds.class_names[l[i]]);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
# comment
@problemName Small
@timeStamps false
@univariate false
@dimensions 2
@equalLength false
@classLabel true a b
@data
1,2,3:4,5,6:a
1,2:3,4:b
7,8,9:1,1,1:a
";

    #[test]
    fn parses_multivariate_with_padding() {
        let ds = parse_uea_ts(SMALL).unwrap();
        assert_eq!(ds.n_samples(), 3);
        assert_eq!(ds.n_channels(), 2);
        assert_eq!(ds.series_len(), 3);
        assert_eq!(ds.labels.as_deref(), Some(&[0, 1, 0][..]));
        assert!(ds.samples[[1, 2, 0]].is_nan());
        assert_eq!(ds.samples[[0, 1, 1]], 5.0);
        assert_eq!(ds.valid_len(1), 2);
    }

    #[test]
    fn dimension_mismatch() {
        let bad = SMALL.replace("1,2:3,4:b", "1,2:3,4:5,6:b");
        assert!(parse_uea_ts(&bad).is_err());
    }

    #[test]
    fn missing_header_fields() {
        assert!(parse_uea_ts(&SMALL.replace("@dimensions 2\n", "")).is_err());
        assert!(parse_uea_ts(&SMALL.replace("@classLabel true a b\n", "")).is_err());
        assert!(parse_uea_ts(&SMALL.replace("@problemName Small\n", "")).is_err());
        assert!(parse_uea_ts(&SMALL.replace("@data\n", "")).is_err());
    }

    #[test]
    fn undeclared_label() {
        assert!(parse_uea_ts(&SMALL.replace(":b\n", ":z\n")).is_err());
    }

    #[test]
    fn round_trip_preserves_missing() {
        let src = SMALL.replace("7,8,9", "7,?,9");
        let ds = parse_uea_ts(&src).unwrap();
        let back = parse_uea_ts(&write_uea_ts(&ds)).unwrap();
        assert_eq!(back.labels, ds.labels);
        assert!(back.samples[[2, 1, 0]].is_nan());
        let a: Vec<String> = ds.samples.iter().map(|v| format!("{v:?}")).collect();
        let b: Vec<String> = back.samples.iter().map(|v| format!("{v:?}")).collect();
        assert_eq!(a, b);
    }
}
