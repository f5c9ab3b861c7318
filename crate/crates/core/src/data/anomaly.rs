use std::path::Path;

use serde::Deserialize;

use crate::{Error, Result};

/// A univariate series with point-wise anomaly labels and a train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalySeries {
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
    /// 1 marks an anomalous point.
    pub labels: Vec<u8>,
    /// `[0, train_end)` is the training half.
    pub train_end: usize,
}

impl AnomalySeries {
    pub fn new(
        timestamps: Vec<i64>,
        values: Vec<f64>,
        labels: Vec<u8>,
        train_end: usize,
    ) -> Result<Self> {
        let s = Self {
            timestamps,
            values,
            labels,
            train_end,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let l = self.values.len();
        if self.timestamps.len() != l || self.labels.len() != l {
            return Err(Error::Shape(
                "timestamps, values and labels differ in length".into(),
            ));
        }
        if let Some(w) = self.timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "timestamps not strictly increasing at index {}",
                w + 1
            )));
        }
        if self.labels.iter().any(|&v| v > 1) {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        if self.train_end > l {
            return Err(Error::InvalidInput(format!(
                "train_end {} > length {l}",
                self.train_end
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Deserialize)]
struct Row {
    timestamp: i64,
    value: String,
    label: i64,
}

pub fn load_anomaly_csv(path: impl AsRef<Path>, split_fraction: f64) -> Result<AnomalySeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_anomaly_csv(&text, split_fraction)
}

/// Parse `timestamp,value,label` CSV; `train_end = floor(L * split_fraction)`.
pub fn parse_anomaly_csv(text: &str, split_fraction: f64) -> Result<AnomalySeries> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction {split_fraction} outside (0, 1)"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let (mut ts, mut vs, mut ls) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in reader.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        let value = if row.value.is_empty() || row.value.eq_ignore_ascii_case("nan") {
            f64::NAN
        } else {
            row.value
                .parse::<f64>()
                .map_err(|_| Error::parse(line, format!("non-numeric value {:?}", row.value)))?
        };
        let label = match row.label {
            0 => 0,
            1 => 1,
            other => return Err(Error::parse(line, format!("label {other} not in {{0, 1}}"))),
        };
        if let Some(&prev) = ts.last() {
            if row.timestamp <= prev {
                return Err(Error::parse(line, "timestamps must be strictly increasing"));
            }
        }
        ts.push(row.timestamp);
        vs.push(value);
        ls.push(label);
    }
    let train_end = (ts.len() as f64 * split_fraction).floor() as usize;
    AnomalySeries::new(ts, vs, ls, train_end)
}

pub fn write_anomaly_csv(series: &AnomalySeries) -> String {
    let mut out = String::from("timestamp,value,label\n");
    for ((t, v), l) in series
        .timestamps
        .iter()
        .zip(&series.values)
        .zip(&series.labels)
    {
        if v.is_nan() {
            out.push_str(&format!("{t},NaN,{l}\n"));
        } else {
            out.push_str(&format!("{t},{v:?},{l}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_of(n: usize) -> String {
        let mut s = String::from("timestamp,value,label\n");
        for i in 0..n {
            s.push_str(&format!("{i},{}.5,{}\n", i, (i == 3) as u8));
        }
        s
    }

    #[test]
    fn split_is_floor() {
        assert_eq!(parse_anomaly_csv(&csv_of(100), 0.5).unwrap().train_end, 50);
        assert_eq!(parse_anomaly_csv(&csv_of(101), 0.5).unwrap().train_end, 50);
    }

    #[test]
    fn rejects_bad_labels_and_order() {
        let bad = csv_of(5).replace("4,4.5,0", "4,4.5,2");
        assert!(parse_anomaly_csv(&bad, 0.5).is_err());
        let bad = csv_of(5).replace("4,4.5,0", "2,4.5,0");
        assert!(parse_anomaly_csv(&bad, 0.5).is_err());
        assert!(parse_anomaly_csv(&csv_of(5), 1.0).is_err());
    }

    #[test]
    fn round_trip() {
        let s = parse_anomaly_csv(&csv_of(10), 0.3).unwrap();
        let back = parse_anomaly_csv(&write_anomaly_csv(&s), 0.3).unwrap();
        assert_eq!(s, back);
    }
}
