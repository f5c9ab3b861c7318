//! Forecasting protocol: ridge heads from the representation at `t` to the
//! next `H` standardised values.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{encode_trailing_windows, EvalResult, Task};
use crate::encoder::{Encoder, MaskMode};
use crate::{Error, Result};

pub const RIDGE_GRID: [f64; 5] = [0.1, 1.0, 10.0, 100.0, 1000.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    pub horizons: Vec<usize>,
    /// Fractions of the series used for training and validation; the rest is test.
    pub train_frac: f64,
    pub val_frac: f64,
    /// Trailing context length used to build the representation at `t`.
    pub window: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            horizons: vec![24, 48, 168, 336, 720],
            train_frac: 0.6,
            val_frac: 0.2,
            window: 200,
        }
    }
}

struct Split {
    train: (usize, usize),
    val: (usize, usize),
    test: (usize, usize),
}

fn split(len: usize, train_frac: f64, val_frac: f64) -> Result<Split> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::Config(format!(
            "invalid split {train_frac}/{val_frac}"
        )));
    }
    let a = (len as f64 * train_frac).floor() as usize;
    let b = (len as f64 * (train_frac + val_frac)).floor() as usize;
    Ok(Split {
        train: (0, a),
        val: (a, b),
        test: (b, len),
    })
}

/// Rows `t ∈ [lo, hi − h)` of `features` paired with `values[t+1 ..= t+h]`.
fn design(
    features: ArrayView2<'_, f64>,
    values: &[f64],
    (lo, hi): (usize, usize),
    h: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = (hi - lo).saturating_sub(h);
    let m = features.ncols();
    let x = DMatrix::from_fn(n, m, |r, c| features[[lo + r, c]]);
    let y = DMatrix::from_fn(n, h, |r, c| values[lo + r + 1 + c]);
    (x, y)
}

struct Ridge {
    w: DMatrix<f64>,
    x_mean: DVector<f64>,
    y_mean: DVector<f64>,
}

impl Ridge {
    fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        let x_mean = x.row_mean().transpose();
        let y_mean = y.row_mean().transpose();
        let mut xc = x.clone();
        for mut r in xc.row_iter_mut() {
            r -= x_mean.transpose();
        }
        let mut yc = y.clone();
        for mut r in yc.row_iter_mut() {
            r -= y_mean.transpose();
        }
        let mut gram = xc.transpose() * &xc;
        for i in 0..gram.nrows() {
            gram[(i, i)] += lambda;
        }
        let rhs = xc.transpose() * &yc;
        let w = gram
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| Error::InvalidInput("ridge system is not positive definite".into()))?;
        Ok(Self { w, x_mean, y_mean })
    }

    fn mse(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        let mut err = 0.0;
        for r in 0..x.nrows() {
            let xr = x.row(r).transpose() - &self.x_mean;
            let pred = self.w.transpose() * xr + &self.y_mean;
            for c in 0..y.ncols() {
                err += (pred[c] - y[(r, c)]).powi(2);
            }
        }
        err / (x.nrows() * y.ncols()) as f64
    }
}

/// Test MSE per horizon from arbitrary per-timestamp features (`L × M`) of a
/// standardised series.
pub fn forecast_from_features(
    features: ArrayView2<'_, f64>,
    values: &[f64],
    horizons: &[usize],
    train_frac: f64,
    val_frac: f64,
) -> Result<BTreeMap<usize, f64>> {
    if features.nrows() != values.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} values",
            features.nrows(),
            values.len()
        )));
    }
    let sp = split(values.len(), train_frac, val_frac)?;
    let mut out = BTreeMap::new();
    for &h in horizons {
        if h == 0 {
            return Err(Error::InvalidInput("horizon must be >= 1".into()));
        }
        for (name, (lo, hi)) in [
            ("test", sp.test),
            ("validation", sp.val),
            ("train", sp.train),
        ] {
            if hi - lo <= h {
                return Err(Error::InvalidInput(format!(
                    "horizon {h} exceeds the {name} split length {}",
                    hi - lo
                )));
            }
        }
        let (xt, yt) = design(features, values, sp.train, h);
        let (xv, yv) = design(features, values, sp.val, h);
        let (xs, ys) = design(features, values, sp.test, h);
        let mut best: Option<(f64, Ridge)> = None;
        for &lambda in &RIDGE_GRID {
            let model = Ridge::fit(&xt, &yt, lambda)?;
            let v = model.mse(&xv, &yv);
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, model));
            }
        }
        let (_, model) = best.expect("non-empty grid");
        out.insert(h, model.mse(&xs, &ys));
    }
    Ok(out)
}

/// Standardise with training-split statistics.
pub fn standardize(values: &[f64], train_len: usize) -> Vec<f64> {
    let train = &values[..train_len.clamp(1, values.len())];
    let mean = train.iter().sum::<f64>() / train.len() as f64;
    let std = (train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / train.len() as f64).sqrt();
    let std = if std < 1e-8 { 1.0 } else { std };
    values.iter().map(|v| (v - mean) / std).collect()
}

pub fn forecast_eval(
    encoder: &Encoder,
    series: &[f64],
    cfg: &ForecastConfig,
) -> Result<EvalResult> {
    if encoder.config.input_dims != 1 {
        return Err(Error::Shape(
            "forecasting needs a univariate encoder".into(),
        ));
    }
    if series.is_empty() {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let train_len = (series.len() as f64 * cfg.train_frac).floor() as usize;
    let values = standardize(series, train_len);
    let x = Array2::from_shape_vec((values.len(), 1), values.clone()).expect("column");
    let window = cfg.window.min(values.len()).max(1);
    let features = encode_trailing_windows(encoder, x.view(), window, MaskMode::AllTrue)?;
    let mses = forecast_from_features(
        features.view(),
        &values,
        &cfg.horizons,
        cfg.train_frac,
        cfg.val_frac,
    )?;
    let metrics = mses
        .into_iter()
        .map(|(h, m)| (format!("mse_h{h}"), m))
        .collect();
    Ok(EvalResult::new(Task::Forecasting, metrics))
}
