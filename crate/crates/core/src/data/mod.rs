//! Dataset types, loaders and preprocessing.
//!
//! Missing values are stored as `NaN` throughout; the encoder zero-fills them and
//! masks the corresponding timestamps.

mod anomaly;
mod crop;
mod ucr;
mod uea;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use anomaly::{load_anomaly_csv, parse_anomaly_csv, write_anomaly_csv, AnomalySeries};
pub use crop::{sample_crop_pair, CropPair};
pub use ucr::{load_ucr_tsv, parse_ucr_tsv, write_ucr_tsv};
pub use uea::{load_uea_ts, parse_uea_ts, write_uea_ts};

/// Marker for a missing observation.
pub const MISSING: f64 = f64::NAN;

/// Default segment length for long training series.
pub const DEFAULT_MAX_LEN: usize = 3000;

#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

/// `n` series of shape `T × N`, optionally labelled.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub name: String,
    /// `n × T × N`; padded or absent observations are [`MISSING`].
    pub samples: Array3<f64>,
    /// Class index per sample, in `0..class_names.len()`.
    pub labels: Option<Vec<usize>>,
    /// Original label strings, indexed by class index.
    pub class_names: Vec<String>,
}

impl TimeSeriesDataset {
    pub fn new(
        name: impl Into<String>,
        samples: Array3<f64>,
        labels: Option<Vec<usize>>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            samples,
            labels,
            class_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Unlabelled dataset.
    pub fn unlabeled(name: impl Into<String>, samples: Array3<f64>) -> Self {
        Self {
            name: name.into(),
            samples,
            labels: None,
            class_names: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(labels) = &self.labels {
            if labels.len() != self.n_samples() {
                return Err(Error::Shape(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    self.n_samples()
                )));
            }
            let k = self.class_names.len();
            if let Some(bad) = labels.iter().find(|&&l| l >= k) {
                return Err(Error::InvalidInput(format!("label {bad} outside [0, {k})")));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len_of(Axis(0))
    }

    pub fn series_len(&self) -> usize {
        self.samples.len_of(Axis(1))
    }

    pub fn n_channels(&self) -> usize {
        self.samples.len_of(Axis(2))
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Total observed timestamps `n × T`, the size used by the epoch rule.
    pub fn total_timestamps(&self) -> usize {
        self.n_samples() * self.series_len()
    }

    pub fn sample(&self, i: usize) -> ArrayView2<'_, f64> {
        self.samples.index_axis(Axis(0), i)
    }

    /// Number of leading timestamps before the trailing run of all-missing rows.
    pub fn valid_len(&self, i: usize) -> usize {
        valid_len(self.sample(i))
    }

    /// Re-index labels to follow `classes` (typically the training split's order).
    pub fn with_class_order(mut self, classes: &[String]) -> Result<Self> {
        if let Some(labels) = &mut self.labels {
            for l in labels.iter_mut() {
                let name = &self.class_names[*l];
                *l = classes.iter().position(|c| c == name).ok_or_else(|| {
                    Error::InvalidInput(format!("class {name:?} not present in reference classes"))
                })?;
            }
        }
        self.class_names = classes.to_vec();
        Ok(self)
    }

    /// Subset of the samples at `idx`, preserving label mapping.
    pub fn select(&self, idx: &[usize]) -> Self {
        let samples = self.samples.select(Axis(0), idx);
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect());
        Self {
            name: self.name.clone(),
            samples,
            labels,
            class_names: self.class_names.clone(),
        }
    }
}

/// Length of the prefix of `x` (`T × N`) that precedes trailing all-missing rows.
pub fn valid_len(x: ArrayView2<'_, f64>) -> usize {
    let t = x.nrows();
    (0..t)
        .rev()
        .find(|&r| x.row(r).iter().any(|v| !is_missing(*v)))
        .map_or(0, |r| r + 1)
}

/// Map raw label strings onto contiguous class indices.
///
/// Labels sort numerically when every label parses as a number, lexicographically
/// otherwise.
pub(crate) fn index_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut classes: Vec<String> = raw.to_vec();
    classes.sort();
    classes.dedup();
    let numeric: Option<Vec<f64>> = classes.iter().map(|c| c.parse::<f64>().ok()).collect();
    if let Some(vals) = numeric {
        let mut pairs: Vec<(f64, String)> = vals.into_iter().zip(classes).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        classes = pairs.into_iter().map(|p| p.1).collect();
    }
    let labels = raw
        .iter()
        .map(|r| classes.iter().position(|c| c == r).expect("label indexed"))
        .collect();
    (labels, classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    #[default]
    ZscorePerChannel,
    None,
}

impl std::str::FromStr for NormalizeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zscore_per_channel" | "zscore" => Ok(Self::ZscorePerChannel),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown normalize mode {other:?}"))),
        }
    }
}

const MIN_STD: f64 = 1e-8;

/// Per-channel mean and standard deviation, ignoring missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn fit(samples: &Array3<f64>) -> Self {
        let n_ch = samples.len_of(Axis(2));
        let mut mean = vec![0.0; n_ch];
        let mut std = vec![1.0; n_ch];
        for c in 0..n_ch {
            let lane = samples.index_axis(Axis(2), c);
            let (m, s) = masked_moments(lane.iter().copied());
            mean[c] = m;
            std[c] = if s < MIN_STD { 1.0 } else { s };
        }
        Self { mean, std }
    }

    pub fn apply(&self, samples: &mut Array3<f64>) {
        for (c, mut lane) in samples.axis_iter_mut(Axis(2)).enumerate() {
            let (m, s) = (self.mean[c], self.std[c]);
            lane.mapv_inplace(|v| (v - m) / s);
        }
    }
}

/// Mean and population std of the non-missing values; `(0, 0)` when none.
pub(crate) fn masked_moments(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for v in values.filter(|v| !is_missing(*v)) {
        n += 1;
        sum += v;
        sq += v * v;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean).max(0.0);
    (mean, var.sqrt())
}

/// Normalise a dataset with statistics computed from itself.
pub fn normalize(dataset: &TimeSeriesDataset, mode: NormalizeMode) -> TimeSeriesDataset {
    let mut out = dataset.clone();
    if mode == NormalizeMode::ZscorePerChannel {
        ChannelStats::fit(&dataset.samples).apply(&mut out.samples);
    }
    out
}

/// Normalise `train` and `test` with statistics from `train` only.
pub fn normalize_pair(
    train: &TimeSeriesDataset,
    test: &TimeSeriesDataset,
    mode: NormalizeMode,
) -> (TimeSeriesDataset, TimeSeriesDataset, Option<ChannelStats>) {
    let (mut tr, mut te) = (train.clone(), test.clone());
    if mode == NormalizeMode::None {
        return (tr, te, None);
    }
    let stats = ChannelStats::fit(&train.samples);
    stats.apply(&mut tr.samples);
    stats.apply(&mut te.samples);
    (tr, te, Some(stats))
}

/// Split a `T × N` series into consecutive non-overlapping windows of at most `max_len`.
pub fn segment_long_series(x: ArrayView2<'_, f64>, max_len: usize) -> Result<Vec<Array2<f64>>> {
    if max_len < 2 {
        return Err(Error::Config(format!(
            "max_len must be >= 2, got {max_len}"
        )));
    }
    let t = x.nrows();
    Ok((0..t.max(1))
        .step_by(max_len)
        .map(|start| x.slice(s![start..(start + max_len).min(t), ..]).to_owned())
        .collect())
}

/// Split every sample longer than `max_len` into windows, padding the last window
/// of each sample with [`MISSING`]. Returns the dataset unchanged when `T <= max_len`.
pub fn segment_dataset(ds: &TimeSeriesDataset, max_len: usize) -> Result<TimeSeriesDataset> {
    let t = ds.series_len();
    if t <= max_len {
        return Ok(ds.clone());
    }
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..ds.n_samples() {
        for w in segment_long_series(ds.sample(i), max_len)? {
            if w.iter().all(|v| is_missing(*v)) {
                continue;
            }
            windows.push(w);
            if let Some(l) = &ds.labels {
                labels.push(l[i]);
            }
        }
    }
    let n_ch = ds.n_channels();
    let mut samples = Array3::from_elem((windows.len(), max_len, n_ch), MISSING);
    for (i, w) in windows.iter().enumerate() {
        samples.slice_mut(s![i, ..w.nrows(), ..]).assign(w);
    }
    Ok(TimeSeriesDataset {
        name: ds.name.clone(),
        samples,
        labels: ds.labels.as_ref().map(|_| labels),
        class_names: ds.class_names.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    fn ds_from(values: Vec<f64>, n: usize, t: usize, c: usize) -> TimeSeriesDataset {
        TimeSeriesDataset::unlabeled("t", Array::from_shape_vec((n, t, c), values).unwrap())
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let ds = ds_from(vec![3.0; 12], 2, 6, 1);
        let out = normalize(&ds, NormalizeMode::ZscorePerChannel);
        assert!(out.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zscore_centres_channel() {
        let ds = ds_from(vec![1.0, 3.0, 1.0, 3.0], 1, 4, 1);
        let out = normalize(&ds, NormalizeMode::ZscorePerChannel);
        let mean: f64 = out.samples.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert_eq!(out.samples.as_slice().unwrap(), &[-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn mode_none_is_identity() {
        let ds = ds_from(vec![1.0, 5.0, MISSING, 2.0], 1, 4, 1);
        let out = normalize(&ds, NormalizeMode::None);
        assert_eq!(format!("{:?}", out.samples), format!("{:?}", ds.samples));
    }

    #[test]
    fn zscore_ignores_missing_and_keeps_marker() {
        let ds = ds_from(vec![1.0, MISSING, 3.0, 1.0, 3.0, 0.0], 1, 3, 2);
        let out = normalize(&ds, NormalizeMode::ZscorePerChannel);
        assert!(out.samples[[0, 0, 1]].is_nan());
        // channel 0: [1, 3, 3] channel 1: [nan, 1, 0]
        let stats = ChannelStats::fit(&ds.samples);
        assert!((stats.mean[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn test_split_uses_train_statistics() {
        let train = ds_from(vec![0.0, 2.0], 1, 2, 1);
        let test = ds_from(vec![4.0, 4.0], 1, 2, 1);
        let (_, te, _) = normalize_pair(&train, &test, NormalizeMode::ZscorePerChannel);
        assert_eq!(te.samples.as_slice().unwrap(), &[3.0, 3.0]);
    }

    #[test]
    fn segments_cover_series() {
        let x = Array2::<f64>::zeros((7000, 1));
        let lens: Vec<_> = segment_long_series(x.view(), 3000)
            .unwrap()
            .iter()
            .map(|w| w.nrows())
            .collect();
        assert_eq!(lens, vec![3000, 3000, 1000]);
        let x = Array2::<f64>::zeros((100, 2));
        assert_eq!(segment_long_series(x.view(), 3000).unwrap().len(), 1);
        let x = Array2::<f64>::zeros((3000, 1));
        let w = segment_long_series(x.view(), 3000).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].nrows(), 3000);
        assert!(segment_long_series(x.view(), 1).is_err());
    }

    #[test]
    fn segment_dataset_pads_tail() {
        let ds = ds_from((0..10).map(f64::from).collect(), 1, 10, 1);
        let seg = segment_dataset(&ds, 4).unwrap();
        assert_eq!(seg.samples.dim(), (3, 4, 1));
        assert_eq!(seg.samples[[2, 1, 0]], 9.0);
        assert!(seg.samples[[2, 2, 0]].is_nan());
        assert_eq!(seg.valid_len(2), 2);
    }

    #[test]
    fn labels_index_numerically() {
        let raw: Vec<String> = ["10", "2", "-1", "2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let (labels, classes) = index_labels(&raw);
        assert_eq!(classes, vec!["-1", "2", "10"]);
        assert_eq!(labels, vec![2, 1, 0, 1]);
    }

    #[test]
    fn class_order_alignment() {
        let ds = TimeSeriesDataset::new(
            "t",
            Array3::zeros((2, 1, 1)),
            Some(vec![0, 1]),
            vec!["b".into(), "c".into()],
        )
        .unwrap();
        let classes = vec!["a".to_string(), "b".into(), "c".into()];
        let aligned = ds.clone().with_class_order(&classes).unwrap();
        assert_eq!(aligned.labels.unwrap(), vec![1, 2]);
        assert!(ds.with_class_order(&classes[..2]).is_err());
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let r = TimeSeriesDataset::new(
            "t",
            Array3::zeros((1, 1, 1)),
            Some(vec![3]),
            vec!["a".into()],
        );
        assert!(r.is_err());
    }
}
