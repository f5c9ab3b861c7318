//! Streaming anomaly scoring and delay-adjusted point metrics.

use std::collections::BTreeMap;

use ndarray::{Array2, Array3, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{encode_trailing_windows, EvalResult, Task};
use crate::data::{AnomalySeries, TimeSeriesDataset};
use crate::encoder::{Encoder, EncoderConfig, MaskMode};
use crate::trainer::{train, TrainConfig, TrainHistory};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyConfig {
    /// Context length fed to the encoder for each timestamp.
    pub window: usize,
    /// Number of previous scores in the local normaliser.
    pub z: usize,
    /// Alarm threshold in standard deviations above the training mean.
    pub k_sigma: f64,
    pub delay: usize,
    pub eps: f64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        Self {
            window: 64,
            z: 21,
            k_sigma: 3.0,
            delay: 7,
            eps: 1e-8,
        }
    }
}

/// Raw scores: L1 distance between the final-timestamp representations of each
/// trailing window encoded with and without the last point masked.
pub fn anomaly_scores(encoder: &Encoder, series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(Error::InvalidInput("window must be >= 2".into()));
    }
    if series.len() < window {
        return Err(Error::InvalidInput(format!(
            "series of length {} is shorter than window {window}",
            series.len()
        )));
    }
    if encoder.config.input_dims != 1 {
        return Err(Error::Shape(
            "anomaly scoring needs a univariate encoder".into(),
        ));
    }
    let x = Array2::from_shape_vec((series.len(), 1), series.to_vec()).expect("column");
    let full = encode_trailing_windows(encoder, x.view(), window, MaskMode::AllTrue)?;
    let masked = encode_trailing_windows(encoder, x.view(), window, MaskMode::MaskLast)?;
    Ok(full
        .rows()
        .into_iter()
        .zip(masked.rows())
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum())
        .collect())
}

/// `(α_t − m_t) / max(m_t, eps)` where `m_t` is the mean of up to `z` previous raw
/// scores. The first score has no history and normalises to 0.
pub fn normalize_scores(raw: &[f64], z: usize, eps: f64) -> Vec<f64> {
    let z = z.max(1);
    let mut out = Vec::with_capacity(raw.len());
    let mut sum = 0.0;
    for t in 0..raw.len() {
        if t == 0 {
            out.push(0.0);
        } else {
            let n = t.min(z);
            let mean = sum / n as f64;
            out.push((raw[t] - mean) / mean.max(eps));
        }
        sum += raw[t];
        if t >= z {
            sum -= raw[t - z];
        }
    }
    out
}

/// Contiguous runs of `true` as half-open ranges.
pub fn segments(labels: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().chain(std::iter::once(&false)).enumerate() {
        match (l, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// A ground-truth segment counts as detected when an alarm fires in its first
/// `delay` points; detected segments are filled, missed ones cleared.
pub fn delay_adjust(pred: &[bool], labels: &[bool], delay: usize) -> Vec<bool> {
    let mut out = pred.to_vec();
    for (s, e) in segments(labels) {
        let hit = pred[s..e.min(s + delay)].iter().any(|&p| p);
        out[s..e].iter_mut().for_each(|p| *p = hit);
    }
    out
}

/// `(precision, recall, f1)`; precision is 0 when nothing is predicted.
pub fn point_metrics(pred: &[bool], labels: &[bool]) -> (f64, f64, f64) {
    let tp = pred.iter().zip(labels).filter(|(p, l)| **p && **l).count() as f64;
    let fp = pred.iter().zip(labels).filter(|(p, l)| **p && !**l).count() as f64;
    let fn_ = pred.iter().zip(labels).filter(|(p, l)| !**p && **l).count() as f64;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

/// Threshold normalised scores at mean + k·std of `[0, train_end)`, delay-adjust
/// and score `[train_end, L)`.
pub fn anomaly_eval_with(
    scores: &[f64],
    labels: &[u8],
    train_end: usize,
    cfg: &AnomalyConfig,
) -> Result<EvalResult> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if train_end == 0 || train_end >= scores.len() {
        return Err(Error::InvalidInput(format!(
            "train_end {train_end} leaves an empty split"
        )));
    }
    let train = &scores[..train_end];
    let mean = train.iter().sum::<f64>() / train.len() as f64;
    let std = (train.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / train.len() as f64).sqrt();
    let threshold = mean + cfg.k_sigma * std;

    let truth: Vec<bool> = labels[train_end..].iter().map(|&l| l != 0).collect();
    if !truth.iter().any(|&t| t) {
        return Err(Error::InvalidInput(
            "no anomalies in the test split; recall is undefined".into(),
        ));
    }
    let raw_pred: Vec<bool> = scores[train_end..].iter().map(|&s| s > threshold).collect();
    let pred = delay_adjust(&raw_pred, &truth, cfg.delay);
    let (precision, recall, f1) = point_metrics(&pred, &truth);
    let mut metrics = BTreeMap::new();
    metrics.insert("f1".to_string(), f1);
    metrics.insert("precision".to_string(), precision);
    metrics.insert("recall".to_string(), recall);
    metrics.insert("threshold".to_string(), threshold);
    Ok(EvalResult::new(Task::Anomaly, metrics))
}

pub fn anomaly_eval(
    scores: &[f64],
    labels: &[u8],
    train_end: usize,
    delay: usize,
) -> Result<EvalResult> {
    anomaly_eval_with(
        scores,
        labels,
        train_end,
        &AnomalyConfig {
            delay,
            ..AnomalyConfig::default()
        },
    )
}

/// Series standardised with the statistics of its training split.
pub fn standardize_series(series: &AnomalySeries) -> Vec<f64> {
    let train = &series.values[..series.train_end.max(1).min(series.len())];
    let mean = train.iter().sum::<f64>() / train.len() as f64;
    let std = (train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / train.len() as f64).sqrt();
    let std = if std < 1e-8 { 1.0 } else { std };
    series.values.iter().map(|v| (v - mean) / std).collect()
}

/// Train an encoder on the standardised training split of `series`.
pub fn train_on_series(
    series: &AnomalySeries,
    encoder_config: &EncoderConfig,
    train_config: &TrainConfig,
) -> Result<(Encoder, TrainHistory)> {
    if series.train_end < 2 {
        return Err(Error::InvalidInput("training split is too short".into()));
    }
    let values = standardize_series(series);
    let x = Array3::from_shape_vec(
        (1, series.train_end, 1),
        values[..series.train_end].to_vec(),
    )
    .expect("shape");
    train(
        &TimeSeriesDataset::unlabeled("anomaly-train", x),
        encoder_config,
        train_config,
    )
}

/// Score and evaluate `series` with an already trained encoder. Used for both
/// the normal path and the cold-start path, where the encoder was trained elsewhere.
pub fn evaluate_series(
    encoder: &Encoder,
    series: &AnomalySeries,
    cfg: &AnomalyConfig,
) -> Result<(EvalResult, Vec<f64>)> {
    let values = standardize_series(series);
    let raw = anomaly_scores(encoder, &values, cfg.window)?;
    let norm = normalize_scores(&raw, cfg.z, cfg.eps);
    let result = anomaly_eval_with(&norm, &series.labels, series.train_end, cfg)?;
    Ok((result, norm))
}

/// Cold-start evaluation: no training on `series`.
pub fn cold_start_eval(
    pretrained: &Encoder,
    series: &AnomalySeries,
    cfg: &AnomalyConfig,
) -> Result<EvalResult> {
    let (mut r, _) = evaluate_series(pretrained, series, cfg)?;
    r.task = Task::ColdStartAnomaly;
    Ok(r)
}

/// Index of the largest score, first on ties.
pub fn argmax(scores: ArrayView1<'_, f64>) -> usize {
    scores
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |b, (i, &s)| if s > b.1 { (i, s) } else { b },
        )
        .0
}
