//! Self-supervised time-series representation learning with temperature-scheduled
//! hierarchical contrasting and hierarchical angular-margin losses.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: dataset loaders (UCR `.tsv`, UEA `.ts`, anomaly CSV), normalisation,
//!   segmentation and overlapping crop sampling.
//! - [`encoder`]: projection, timestamp masking and a dilated residual convolution
//!   stack with a hand-written backward pass.
//! - [`losses`]: temporal/instance contrastive and angular-margin losses and their
//!   max-pooled hierarchies, each returning analytic gradients.
//! - [`schedulers`]: temperature schedules (`cos²` plus comparison families).
//! - [`trainer`]: the training loop with Adam updates.
//! - [`eval`]: classification, anomaly detection, forecasting, embedding diagnostics
//!   and model comparison statistics.
//! - [`hpo`]: random and MCMC hyperparameter search.
//! - [`checkpoint`]: the versioned model file format.

pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod hpo;
pub mod losses;
pub mod optim;
pub mod schedulers;
pub mod trainer;

pub use error::{Error, Result};
