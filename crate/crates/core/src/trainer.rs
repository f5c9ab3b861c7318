//! Training loop: shuffled batches, one crop pair per batch, binomial masking,
//! scheduled temperature per epoch, Adam updates.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    sample_crop_pair, segment_dataset, CropPair, TimeSeriesDataset, DEFAULT_MAX_LEN,
};
use crate::encoder::{generate_batch_mask, Encoder, EncoderConfig};
use crate::losses::{total_loss, LossConfig, TotalLoss};
use crate::optim::Adam;
use crate::schedulers::{tau_at, SchedulerConfig};
use crate::{Error, Result};

/// Below this many total timestamps (`n × T`) the short epoch budget applies.
pub const EPOCH_RULE_THRESHOLD: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: Option<usize>,
    pub loss: LossConfig,
    pub scheduler: SchedulerConfig,
    pub seed: u64,
    pub max_train_length: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: None,
            loss: LossConfig::default(),
            scheduler: SchedulerConfig::default(),
            seed: 0,
            max_train_length: DEFAULT_MAX_LEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.max_train_length < 2 {
            return Err(Error::Config("max_train_length must be >= 2".into()));
        }
        self.loss.validate()?;
        self.scheduler.validate()
    }

    pub fn resolve_epochs(&self, dataset: &TimeSeriesDataset) -> usize {
        self.epochs.unwrap_or_else(|| default_epochs(dataset))
    }
}

pub fn default_epochs(dataset: &TimeSeriesDataset) -> usize {
    if dataset.total_timestamps() < EPOCH_RULE_THRESHOLD {
        200
    } else {
        600
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub tau: f64,
    pub total: f64,
    pub sched: f64,
    pub angular: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,tau,total,sched,angular,seconds\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.tau, r.total, r.sched, r.angular, r.seconds
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Forward both crops, evaluate the loss, backpropagate and apply one optimizer
/// update. Returns the loss as computed by [`total_loss`].
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    encoder: &mut Encoder,
    optimizer: &mut Adam,
    batch: &Array3<f64>,
    crop: &CropPair,
    keep1: &Array2<bool>,
    keep2: &Array2<bool>,
    tau: f64,
    loss: &LossConfig,
) -> Result<TotalLoss> {
    let x1 = batch.slice(s![.., crop.a1..crop.b1, ..]);
    let x2 = batch.slice(s![.., crop.a2..crop.b2, ..]);
    let (z1, c1) = encoder.forward_with_mask(x1, keep1)?;
    let (z2, c2) = encoder.forward_with_mask(x2, keep2)?;
    let out = total_loss(z1.view(), z2.view(), crop, tau, loss)?;
    if out.total.is_finite() {
        let mut grad = encoder.zeros_like();
        encoder.backward(&c1, out.grad_z1.view(), &mut grad)?;
        encoder.backward(&c2, out.grad_z2.view(), &mut grad)?;
        optimizer.step(encoder, &grad);
    }
    Ok(out)
}

/// Train a freshly initialised encoder on `dataset`.
pub fn train(
    dataset: &TimeSeriesDataset,
    encoder_config: &EncoderConfig,
    config: &TrainConfig,
) -> Result<(Encoder, TrainHistory)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let encoder = Encoder::new(encoder_config.clone(), &mut rng)?;
    train_encoder(encoder, dataset, config, &mut rng)
}

/// Continue training `encoder` with an explicit RNG stream.
pub fn train_encoder(
    mut encoder: Encoder,
    dataset: &TimeSeriesDataset,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Encoder, TrainHistory)> {
    config.validate()?;
    if dataset.n_samples() == 0 {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if dataset.n_channels() != encoder.config.input_dims {
        return Err(Error::Shape(format!(
            "dataset has {} channels, encoder expects {}",
            dataset.n_channels(),
            encoder.config.input_dims
        )));
    }
    let epochs = config.resolve_epochs(dataset);
    let data = if dataset.series_len() > config.max_train_length {
        segment_dataset(dataset, config.max_train_length)?
    } else {
        dataset.clone()
    };
    let valid: Vec<usize> = (0..data.n_samples()).map(|i| data.valid_len(i)).collect();
    let mut order: Vec<usize> = (0..data.n_samples()).filter(|&i| valid[i] > 0).collect();
    if order.is_empty() {
        return Err(Error::InvalidInput(
            "every training series is entirely missing".into(),
        ));
    }

    let mut optimizer = Adam::new(&encoder, config.learning_rate)?;
    let mut history = TrainHistory::default();
    let mask_mode = encoder.config.mask_mode;
    for epoch in 0..epochs {
        let start = Instant::now();
        let tau = tau_at(&config.scheduler, epoch as f64)?;
        order.shuffle(rng);
        let (mut total, mut sched, mut angular) = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let t = idx
                .iter()
                .map(|&i| valid[i])
                .min()
                .expect("non-empty batch");
            let batch = data
                .samples
                .select(Axis(0), idx)
                .slice_move(s![.., ..t, ..]);
            let crop = if t >= 2 {
                sample_crop_pair(t, rng)?
            } else {
                CropPair::identity(t)
            };
            let keep1 = generate_batch_mask(idx.len(), crop.len1(), mask_mode, rng)?;
            let keep2 = generate_batch_mask(idx.len(), crop.len2(), mask_mode, rng)?;
            let out = train_step(
                &mut encoder,
                &mut optimizer,
                &batch,
                &crop,
                &keep1,
                &keep2,
                tau,
                &config.loss,
            )?;
            if !out.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    value: out.total,
                    epoch,
                    batch: bi,
                    tau: config.loss.effective_tau(tau),
                });
            }
            total += out.total;
            sched += out.sched;
            angular += out.angular;
            batches += 1;
        }
        let n = batches as f64;
        let record = EpochRecord {
            epoch,
            tau,
            total: total / n,
            sched: sched / n,
            angular: angular / n,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::debug!("epoch {epoch} tau {tau:.4} loss {:.5}", record.total);
        history.records.push(record);
    }
    Ok((encoder, history))
}
