//! Temperature schedules `τ(σ)`.
//!
//! `σ` is the epoch index. Every kind is clamped into `[tau_min, tau_max]`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    CosineSquared,
    Exponential,
    Sigmoid,
    WarmupCosine,
    SawtoothCyclic,
    Logarithmic,
    StepDecay,
    CosineRestarts,
    Tanh,
    Constant,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 10] = [
        Self::CosineSquared,
        Self::Exponential,
        Self::Sigmoid,
        Self::WarmupCosine,
        Self::SawtoothCyclic,
        Self::Logarithmic,
        Self::StepDecay,
        Self::CosineRestarts,
        Self::Tanh,
        Self::Constant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CosineSquared => "cosine_squared",
            Self::Exponential => "exponential",
            Self::Sigmoid => "sigmoid",
            Self::WarmupCosine => "warmup_cosine",
            Self::SawtoothCyclic => "sawtooth_cyclic",
            Self::Logarithmic => "logarithmic",
            Self::StepDecay => "step_decay",
            Self::CosineRestarts => "cosine_restarts",
            Self::Tanh => "tanh",
            Self::Constant => "constant",
        }
    }

    /// Kind-specific parameter names.
    fn param_names(self) -> &'static [&'static str] {
        match self {
            Self::Exponential => &["decay"],
            Self::Sigmoid | Self::Tanh => &["steepness"],
            Self::WarmupCosine => &["warmup"],
            Self::SawtoothCyclic => &["cycle"],
            Self::Logarithmic => &["offset"],
            Self::StepDecay => &["gamma"],
            Self::CosineRestarts => &["restart"],
            Self::CosineSquared | Self::Constant => &[],
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown scheduler kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Oscillation period (epochs) for the `cos²` schedule; horizon for the others.
    pub period: f64,
    pub extra: BTreeMap<String, f64>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            kind: SchedulerKind::CosineSquared,
            tau_min: 0.1,
            tau_max: 0.75,
            period: 10.0,
            extra: BTreeMap::new(),
        }
    }
}

impl SchedulerConfig {
    pub fn cosine_squared(tau_min: f64, tau_max: f64, period: f64) -> Self {
        Self {
            tau_min,
            tau_max,
            period,
            ..Self::default()
        }
    }

    pub fn with_kind(mut self, kind: SchedulerKind) -> Self {
        self.kind = kind;
        self
    }

    /// Set a kind-specific parameter, rejecting names the kind does not use.
    pub fn with_param(mut self, key: &str, value: f64) -> Result<Self> {
        if !self.kind.param_names().contains(&key) {
            return Err(Error::Config(format!(
                "scheduler {} has no parameter {key:?} (expected one of {:?})",
                self.kind,
                self.kind.param_names()
            )));
        }
        self.extra.insert(key.to_string(), value);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau_max && self.tau_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < tau_min <= tau_max, got tau_min={} tau_max={}",
                self.tau_min, self.tau_max
            )));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Config(format!(
                "period must be positive, got {}",
                self.period
            )));
        }
        for key in self.extra.keys() {
            if !self.kind.param_names().contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "scheduler {} has no parameter {key:?}",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    fn param(&self, key: &str) -> f64 {
        if let Some(v) = self.extra.get(key) {
            return *v;
        }
        // Defaults follow the single hyperparameter reported per comparison scheduler.
        match key {
            "decay" => 0.95,
            "steepness" if self.kind == SchedulerKind::Tanh => 2.0,
            "steepness" => 1.0,
            "warmup" => 2.0,
            "cycle" => self.period / 3.0,
            "offset" => 1.0,
            "gamma" => 0.5,
            "restart" => 5.0,
            _ => unreachable!("unknown scheduler parameter {key}"),
        }
    }

    fn raw_tau(&self, sigma: f64) -> f64 {
        let (lo, hi) = (self.tau_min, self.tau_max);
        let span = hi - lo;
        // Δτ·cos²(ωσ/2) + τ_min written via the double-angle identity, which keeps the
        // extremes and the quarter-period point exact in floating point.
        let cos_sq = |period: f64| {
            let omega = 2.0 * PI / period;
            let c = (omega * sigma).cos();
            if c == 1.0 {
                hi
            } else if c == -1.0 {
                lo
            } else {
                0.5 * (hi + lo) + 0.5 * span * c
            }
        };
        match self.kind {
            SchedulerKind::CosineSquared => cos_sq(self.period),
            SchedulerKind::CosineRestarts => cos_sq(self.param("restart")),
            SchedulerKind::Exponential => lo + span * self.param("decay").powf(sigma),
            SchedulerKind::Sigmoid => {
                let z = self.param("steepness") * (sigma - self.period / 2.0);
                lo + span * (1.0 - 1.0 / (1.0 + (-z).exp()))
            }
            SchedulerKind::WarmupCosine => {
                let warmup = self.param("warmup");
                if sigma < warmup {
                    lo + span * sigma / warmup
                } else if sigma >= self.period || self.period <= warmup {
                    lo
                } else {
                    let p = (sigma - warmup) / (self.period - warmup);
                    lo + span * 0.5 * (1.0 + (PI * p).cos())
                }
            }
            SchedulerKind::SawtoothCyclic => {
                let cycle = self.param("cycle");
                hi - span * sigma.rem_euclid(cycle) / cycle
            }
            SchedulerKind::Logarithmic => {
                let off = self.param("offset");
                hi - span * (1.0 + sigma / off).ln() / (1.0 + self.period / off).ln()
            }
            SchedulerKind::StepDecay => {
                let step = (sigma / (self.period / 4.0)).floor();
                lo.max(hi * self.param("gamma").powf(step))
            }
            SchedulerKind::Tanh => {
                lo + span * (1.0 - (self.param("steepness") * sigma / self.period).tanh())
            }
            SchedulerKind::Constant => hi,
        }
    }
}

/// Temperature at time `sigma`.
pub fn tau_at(cfg: &SchedulerConfig, sigma: f64) -> Result<f64> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::InvalidInput(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    cfg.validate()?;
    let raw = cfg.raw_tau(sigma);
    let tau = if raw.is_nan() { cfg.tau_max } else { raw };
    Ok(tau.clamp(cfg.tau_min, cfg.tau_max))
}

/// `[tau_at(0), …, tau_at(total_steps - 1)]`.
pub fn make_schedule(cfg: &SchedulerConfig, total_steps: usize) -> Result<Vec<f64>> {
    (0..total_steps).map(|k| tau_at(cfg, k as f64)).collect()
}
