//! Run configuration: everything needed to reproduce a command, serialised as
//! the `config.json` snapshot written next to every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use timehut::data::NormalizeMode;
use timehut::encoder::{EncoderConfig, MaskMode};
use timehut::eval::{AnomalyConfig, ForecastConfig};
use timehut::hpo::{SearchSpace, Strategy};
use timehut::trainer::TrainConfig;
use timehut::{Error, Result};

pub const DATA_DIR_ENV: &str = "TIMEHUT_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSettings {
    pub hidden_dims: usize,
    pub output_dims: usize,
    pub depth: usize,
    pub mask_mode: MaskMode,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        let e = EncoderConfig::new(1);
        Self {
            hidden_dims: e.hidden_dims,
            output_dims: e.output_dims,
            depth: e.depth,
            mask_mode: e.mask_mode,
        }
    }
}

impl EncoderSettings {
    pub fn for_input(&self, input_dims: usize) -> EncoderConfig {
        EncoderConfig {
            input_dims,
            hidden_dims: self.hidden_dims,
            output_dims: self.output_dims,
            depth: self.depth,
            mask_mode: self.mask_mode,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Anomaly / forecasting CSV.
    pub series: Option<PathBuf>,
    /// Pretrained checkpoint (classification, cold-start anomaly, forecasting).
    pub model: Option<PathBuf>,
    /// Accuracy table for `compare`.
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HpoSettings {
    pub budget: usize,
    pub strategy: Strategy,
    pub workers: usize,
    pub space: SearchSpace,
}

impl Default for HpoSettings {
    fn default() -> Self {
        Self {
            budget: 20,
            strategy: Strategy::Random,
            workers: 1,
            space: SearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataPaths,
    pub output_dir: PathBuf,
    pub normalize: NormalizeMode,
    pub encoder: EncoderSettings,
    pub train: TrainConfig,
    pub anomaly: AnomalyConfig,
    /// Fraction of an anomaly series used for training and threshold calibration.
    pub anomaly_split: f64,
    pub forecast: ForecastConfig,
    pub hpo: HpoSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataPaths::default(),
            output_dir: PathBuf::from("timehut-out"),
            normalize: NormalizeMode::default(),
            encoder: EncoderSettings::default(),
            train: TrainConfig::default(),
            anomaly: AnomalyConfig::default(),
            anomaly_split: 0.5,
            forecast: ForecastConfig::default(),
            hpo: HpoSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serialises")
    }

    /// Propagate the top-level seed and check the nested settings.
    pub fn finalize(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        self.train.validate()?;
        self.encoder.for_input(1).validate()?;
        if !(self.anomaly_split > 0.0 && self.anomaly_split < 1.0) {
            return Err(Error::Config(format!(
                "anomaly_split must be in (0, 1), got {}",
                self.anomaly_split
            )));
        }
        Ok(self)
    }
}

/// Resolve a dataset path: as given when it exists, otherwise relative to
/// `TIMEHUT_DATA_DIR` when that is set.
pub fn resolve_data_path(p: &Path) -> PathBuf {
    if p.is_relative() && !p.exists() {
        if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&root).join(p);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    p.to_path_buf()
}

/// `key=value` with a numeric value.
pub fn parse_key_value(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("value of {k:?} is not a number"))?;
    Ok((k.trim().to_string(), v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = RunConfig::from_json(r#"{"seed": 4, "train": {"epochs": 3}}"#).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.train.epochs, Some(3));
        assert_eq!(c.train.batch_size, 8);
        assert_eq!(c.finalize().unwrap().train.seed, 4);
    }

    #[test]
    fn rejects_unknown_shapes() {
        assert!(RunConfig::from_json(r#"{"seed": "x"}"#).is_err());
        assert!(RunConfig::from_json("[").is_err());
    }

    #[test]
    fn key_values() {
        assert_eq!(
            parse_key_value("decay=0.9").unwrap(),
            ("decay".to_string(), 0.9)
        );
        assert!(parse_key_value("decay").is_err());
        assert!(parse_key_value("decay=x").is_err());
    }
}
