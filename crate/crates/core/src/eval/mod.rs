//! Downstream evaluation on frozen representations.

pub mod anomaly;
pub mod classify;
pub mod compare;
pub mod forecast;
pub mod svm;

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{segment_long_series, TimeSeriesDataset};
use crate::encoder::{Encoder, MaskMode};
use crate::{Error, Result};

pub use anomaly::{anomaly_eval, anomaly_scores, cold_start_eval, AnomalyConfig};
pub use classify::{classify_eval, SvmClassifier};
pub use compare::{compare_models, AccuracyTable, ComparisonReport, PairStats};
pub use forecast::{forecast_eval, ForecastConfig};

const BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Anomaly,
    ColdStartAnomaly,
    Forecasting,
    Geometry,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string));
        f.write_str(s.as_deref().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub task: Task,
    pub metrics: BTreeMap<String, f64>,
    pub dataset: String,
    pub seed: u64,
    pub config_digest: String,
}

impl EvalResult {
    pub fn new(task: Task, metrics: BTreeMap<String, f64>) -> Self {
        Self {
            task,
            metrics,
            dataset: String::new(),
            seed: 0,
            config_digest: String::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dataset(mut self, name: impl Into<String>) -> Self {
        self.dataset = name.into();
        self
    }

    pub fn with_config<T: Serialize>(mut self, config: &T) -> Result<Self> {
        self.config_digest = config_digest(config)?;
        Ok(self)
    }

    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain data serialises")
    }

    /// `task dataset key=value ...` for terminals.
    pub fn summary(&self) -> String {
        let mut out = format!("{} {}", self.task, self.dataset);
        for (k, v) in &self.metrics {
            out.push_str(&format!(" {k}={v:.4}"));
        }
        out
    }
}

/// SHA-256 of the compact JSON form of `config`, hex encoded.
pub fn config_digest<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config).map_err(|e| Error::Config(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn all_true(b: usize, t: usize) -> Array2<bool> {
    Array2::from_elem((b, t), true)
}

/// Instance features: every series is encoded without masking over its valid
/// prefix and max-pooled over time. Series longer than `max_len` are encoded in
/// segments and pooled across all of them.
pub fn encode_instances(
    encoder: &Encoder,
    dataset: &TimeSeriesDataset,
    max_len: usize,
) -> Result<Array2<f64>> {
    if dataset.n_channels() != encoder.config.input_dims {
        return Err(Error::Shape(format!(
            "dataset has {} channels, encoder expects {}",
            dataset.n_channels(),
            encoder.config.input_dims
        )));
    }
    let n = dataset.n_samples();
    let m = encoder.config.output_dims;
    let mut out = Array2::from_elem((n, m), f64::NEG_INFINITY);
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let v = dataset.valid_len(i).max(1);
        by_len.entry(v).or_default().push(i);
    }
    for (len, idx) in by_len {
        for chunk in idx.chunks(BATCH) {
            let x = dataset.samples.select(Axis(0), chunk);
            let x = x.slice(s![.., ..len, ..]);
            if len <= max_len {
                let (z, _) = encoder.forward_with_mask(x, &all_true(chunk.len(), len))?;
                for (row, zi) in chunk.iter().zip(z.outer_iter()) {
                    pool_into(out.row_mut(*row), zi);
                }
            } else {
                for (k, &row) in chunk.iter().enumerate() {
                    for seg in segment_long_series(x.index_axis(Axis(0), k), max_len)? {
                        let t = seg.nrows();
                        let seg3 = seg.insert_axis(Axis(0));
                        let (z, _) = encoder.forward_with_mask(seg3.view(), &all_true(1, t))?;
                        pool_into(out.row_mut(row), z.index_axis(Axis(0), 0));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn pool_into(mut acc: ndarray::ArrayViewMut1<'_, f64>, z: ArrayView2<'_, f64>) {
    for row in z.rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            if v > *a {
                *a = v;
            }
        }
    }
}

/// Representation of the last timestamp of the trailing `window` ending at every
/// `t` of `x` (`L × N`). Windows reaching before the start are left-padded with
/// missing markers. `mode` is `AllTrue` or `MaskLast`.
pub fn encode_trailing_windows(
    encoder: &Encoder,
    x: ArrayView2<'_, f64>,
    window: usize,
    mode: MaskMode,
) -> Result<Array2<f64>> {
    if window == 0 {
        return Err(Error::InvalidInput("window must be >= 1".into()));
    }
    if mode == MaskMode::Binomial {
        return Err(Error::InvalidInput(
            "trailing-window encoding is deterministic".into(),
        ));
    }
    let (len, n) = x.dim();
    let m = encoder.config.output_dims;
    let mut out = Array2::zeros((len, m));
    let mut keep = all_true(BATCH, window);
    if mode == MaskMode::MaskLast {
        keep.column_mut(window - 1).fill(false);
    }
    let mut start = 0;
    while start < len {
        let end = (start + BATCH).min(len);
        let b = end - start;
        let mut batch = Array3::from_elem((b, window, n), f64::NAN);
        for (k, t) in (start..end).enumerate() {
            let first = (t + 1).saturating_sub(window);
            let offset = window - (t + 1 - first);
            batch
                .slice_mut(s![k, offset.., ..])
                .assign(&x.slice(s![first..=t, ..]));
        }
        let (z, _) =
            encoder.forward_with_mask(batch.view(), &keep.slice(s![..b, ..]).to_owned())?;
        out.slice_mut(s![start..end, ..])
            .assign(&z.slice(s![.., window - 1, ..]));
        start = end;
    }
    Ok(out)
}

fn l2_normalized(features: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut f = features.to_owned();
    for mut r in f.rows_mut() {
        let n = r.dot(&r).sqrt();
        if n > 0.0 {
            r /= n;
        }
    }
    f
}

/// `log mean_{i≠j} exp(−2‖ẑ_i − ẑ_j‖²)` over L2-normalised rows.
pub fn uniformity(features: ArrayView2<'_, f64>) -> Result<f64> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(
            "uniformity needs at least two rows".into(),
        ));
    }
    let z = l2_normalized(features);
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d2: f64 = z
                    .row(i)
                    .iter()
                    .zip(z.row(j))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                sum += (-2.0 * d2).exp();
            }
        }
    }
    Ok((sum / (n * (n - 1)) as f64).ln())
}

/// Mean cosine similarity over same-class ordered pairs `i ≠ j`.
pub fn tolerance(features: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput(
            "tolerance needs at least two rows".into(),
        ));
    }
    let z = l2_normalized(features);
    let (mut sum, mut pairs) = (0.0, 0usize);
    for i in 0..n {
        for j in 0..n {
            if i != j && labels[i] == labels[j] {
                sum += z.row(i).dot(&z.row(j));
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(Error::InvalidInput("no class has two members".into()));
    }
    Ok(sum / pairs as f64)
}
