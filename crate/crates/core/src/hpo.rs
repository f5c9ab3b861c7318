//! Hyperparameter search over the loss and scheduler settings.
//!
//! `Random` draws independent uniform points and may evaluate them on several
//! worker threads; `Mcmc` is a sequential annealed random walk from the
//! incumbent. Both are reproducible from the seed.

use std::fmt;
use std::fs::File;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesDataset;
use crate::encoder::EncoderConfig;
use crate::eval::{classify_eval, encode_instances};
use crate::trainer::{train, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub c_i: (f64, f64),
    pub c_t: (f64, f64),
    pub m_a: (f64, f64),
    /// The lower end stays above zero: a zero temperature is undefined.
    pub tau_min: (f64, f64),
    pub tau_max: (f64, f64),
    pub period: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            c_i: (0.0, 10.0),
            c_t: (0.0, 10.0),
            m_a: (0.2, 0.8),
            tau_min: (0.01, 0.4),
            tau_max: (0.5, 1.0),
            period: (10, 50),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("c_i", self.c_i),
            ("c_t", self.c_t),
            ("m_a", self.m_a),
            ("tau_min", self.tau_min),
            ("tau_max", self.tau_max),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!(
                    "bad bounds for {name}: [{lo}, {hi}]"
                )));
            }
        }
        if self.c_i.0 < 0.0 || self.c_t.0 < 0.0 || self.m_a.0 <= 0.0 || self.tau_min.0 <= 0.0 {
            return Err(Error::Config(
                "c_i, c_t must be >= 0; m_a, tau_min must be > 0".into(),
            ));
        }
        if self.tau_min.1 >= self.tau_max.0 {
            return Err(Error::Config(
                "tau_min range must lie below tau_max range".into(),
            ));
        }
        if self.period.0 == 0 || self.period.0 > self.period.1 {
            return Err(Error::Config(format!(
                "bad period bounds {:?}",
                self.period
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Params) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        within(p.c_i, self.c_i)
            && within(p.c_t, self.c_t)
            && within(p.m_a, self.m_a)
            && within(p.tau_min, self.tau_min)
            && within(p.tau_max, self.tau_max)
            && (self.period.0..=self.period.1).contains(&p.period)
            && p.tau_min < p.tau_max
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Params {
        let u = |rng: &mut R, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        };
        Params {
            c_i: u(rng, self.c_i),
            c_t: u(rng, self.c_t),
            m_a: u(rng, self.m_a),
            tau_min: u(rng, self.tau_min),
            tau_max: u(rng, self.tau_max),
            period: rng.random_range(self.period.0..=self.period.1),
        }
    }

    /// Gaussian step with std 10% of each range, reflected back into bounds.
    fn propose<R: Rng + ?Sized>(&self, from: &Params, rng: &mut R) -> Params {
        let step = |rng: &mut R, v: f64, (lo, hi): (f64, f64)| {
            let width = hi - lo;
            if width == 0.0 {
                return lo;
            }
            let mut x = v + Normal::new(0.0, 0.1 * width)
                .expect("positive std")
                .sample(rng);
            while x < lo || x > hi {
                x = if x < lo { 2.0 * lo - x } else { 2.0 * hi - x };
            }
            x
        };
        let (plo, phi) = (self.period.0 as f64, self.period.1 as f64);
        let period = step(rng, from.period as f64, (plo, phi))
            .round()
            .clamp(plo, phi) as usize;
        Params {
            c_i: step(rng, from.c_i, self.c_i),
            c_t: step(rng, from.c_t, self.c_t),
            m_a: step(rng, from.m_a, self.m_a),
            tau_min: step(rng, from.tau_min, self.tau_min),
            tau_max: step(rng, from.tau_max, self.tau_max),
            period,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub c_i: f64,
    pub c_t: f64,
    pub m_a: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub period: usize,
}

impl Params {
    /// Copy these values into a training config.
    pub fn apply(&self, cfg: &mut TrainConfig) {
        cfg.loss.c_i = self.c_i;
        cfg.loss.c_t = self.c_t;
        cfg.loss.m_a = self.m_a;
        cfg.scheduler.tau_min = self.tau_min;
        cfg.scheduler.tau_max = self.tau_max;
        cfg.scheduler.period = self.period as f64;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Random,
    Mcmc,
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "mcmc" => Ok(Self::Mcmc),
            other => Err(Error::Config(format!("unknown search strategy {other:?}"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Mcmc => "mcmc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trial {
    pub index: usize,
    pub params: Params,
    /// `Err` holds the failure message.
    pub outcome: std::result::Result<f64, String>,
    pub seconds: f64,
}

impl Trial {
    pub fn score(&self) -> Option<f64> {
        self.outcome.as_ref().ok().copied()
    }
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub budget: usize,
    pub strategy: Strategy,
    pub seed: u64,
    /// Threads used by the random strategy.
    pub workers: usize,
    /// Starting annealing temperature of the MCMC walk, in objective units.
    pub initial_temperature: f64,
    /// Trial log CSV, written as trials finish.
    pub log: Option<PathBuf>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            budget: 20,
            strategy: Strategy::Random,
            seed: 0,
            workers: 1,
            initial_temperature: 0.05,
            log: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Trial,
    /// Trials in index order.
    pub trials: Vec<Trial>,
}

pub const LOG_HEADER: [&str; 10] = [
    "trial", "ci", "ct", "ma", "tau_min", "tau_max", "period", "score", "status", "seconds",
];

fn log_record(t: &Trial) -> [String; 10] {
    let p = &t.params;
    let (score, status) = match &t.outcome {
        Ok(s) => (s.to_string(), "ok".to_string()),
        Err(e) => (String::new(), format!("failed: {e}")),
    };
    [
        t.index.to_string(),
        p.c_i.to_string(),
        p.c_t.to_string(),
        p.m_a.to_string(),
        p.tau_min.to_string(),
        p.tau_max.to_string(),
        p.period.to_string(),
        score,
        status,
        t.seconds.to_string(),
    ]
}

/// Trial log as CSV text.
pub fn trials_to_csv(trials: &[Trial]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LOG_HEADER).expect("in-memory write");
    for t in trials {
        w.write_record(log_record(t)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

struct Log(Option<Mutex<csv::Writer<File>>>);

impl Log {
    fn open(path: &Option<PathBuf>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self(None));
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(LOG_HEADER)
            .map_err(|e| Error::Config(e.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self(Some(Mutex::new(w))))
    }

    fn append(&self, t: &Trial) {
        if let Some(w) = &self.0 {
            let mut w = w.lock().expect("log lock");
            if w.write_record(log_record(t))
                .and_then(|_| Ok(w.flush()?))
                .is_err()
            {
                log::warn!("could not append trial {} to the log", t.index);
            }
        }
    }
}

fn run_trial<F>(index: usize, params: Params, objective: &F) -> Trial
where
    F: Fn(&Params) -> Result<f64> + Sync,
{
    let start = Instant::now();
    let outcome = match objective(&params) {
        Ok(s) if s.is_finite() => Ok(s),
        Ok(s) => Err(format!("non-finite score {s}")),
        Err(e) => Err(e.to_string()),
    };
    if let Err(e) = &outcome {
        log::warn!("trial {index} failed: {e}");
    }
    Trial {
        index,
        params,
        outcome,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Maximise `objective` over `space`.
pub fn search<F>(space: &SearchSpace, objective: F, opts: &SearchOptions) -> Result<SearchOutcome>
where
    F: Fn(&Params) -> Result<f64> + Sync,
{
    space.validate()?;
    if opts.budget == 0 {
        return Err(Error::Config("budget must be >= 1".into()));
    }
    let log = Log::open(&opts.log)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let trials = match opts.strategy {
        Strategy::Random => {
            let points: Vec<Params> = (0..opts.budget).map(|_| space.sample(&mut rng)).collect();
            let slots: Vec<Mutex<Option<Trial>>> =
                (0..points.len()).map(|_| Mutex::new(None)).collect();
            let next = AtomicUsize::new(0);
            std::thread::scope(|s| {
                for _ in 0..opts.workers.clamp(1, points.len()) {
                    s.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= points.len() {
                            break;
                        }
                        let t = run_trial(i, points[i], &objective);
                        log.append(&t);
                        *slots[i].lock().expect("slot lock") = Some(t);
                    });
                }
            });
            slots
                .into_iter()
                .map(|m| {
                    m.into_inner()
                        .expect("slot lock")
                        .expect("every slot filled")
                })
                .collect::<Vec<_>>()
        }
        Strategy::Mcmc => {
            let mut trials = Vec::with_capacity(opts.budget);
            let mut current: Option<(Params, f64)> = None;
            for k in 0..opts.budget {
                let params = match &current {
                    Some((p, _)) => space.propose(p, &mut rng),
                    None => space.sample(&mut rng),
                };
                let t = run_trial(k, params, &objective);
                log.append(&t);
                let temp = opts.initial_temperature * (1.0 - k as f64 / opts.budget as f64);
                let u: f64 = rng.random();
                if let Some(score) = t.score() {
                    let accept = match &current {
                        None => true,
                        Some((_, cur)) => {
                            let delta = score - cur;
                            delta >= 0.0 || (temp > 0.0 && u < (delta / temp).exp())
                        }
                    };
                    if accept {
                        current = Some((params, score));
                    }
                }
                trials.push(t);
            }
            trials
        }
    };
    let best = trials
        .iter()
        .filter(|t| t.score().is_some())
        .fold(None::<&Trial>, |b, t| match b {
            Some(b) if b.score() >= t.score() => Some(b),
            _ => Some(t),
        })
        .cloned()
        .ok_or(Error::NoSuccessfulTrial)?;
    Ok(SearchOutcome { best, trials })
}

/// Stratified split of `0..labels.len()` into `(fit, holdout)` with roughly
/// `frac` of each class held out; classes with one member stay in `fit`.
pub fn stratified_holdout(labels: &[usize], frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let (mut fit, mut hold) = (Vec::new(), Vec::new());
    for c in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let k = if members.len() < 2 {
            0
        } else {
            ((members.len() as f64 * frac).round() as usize).clamp(1, members.len() - 1)
        };
        hold.extend_from_slice(&members[..k]);
        fit.extend_from_slice(&members[k..]);
    }
    fit.sort_unstable();
    hold.sort_unstable();
    (fit, hold)
}

/// Objective: accuracy on a stratified 20% holdout of the training split after
/// training with the candidate parameters on the remaining 80%.
pub fn holdout_objective<'a>(
    train_set: &'a TimeSeriesDataset,
    encoder_config: &'a EncoderConfig,
    base: &'a TrainConfig,
) -> Result<impl Fn(&Params) -> Result<f64> + Sync + 'a> {
    let labels = train_set
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("search objective needs labels".into()))?;
    let (fit_idx, hold_idx) = stratified_holdout(labels, 0.2, base.seed);
    if hold_idx.is_empty() {
        return Err(Error::InvalidInput(
            "training split too small for a holdout".into(),
        ));
    }
    let fit = train_set.select(&fit_idx);
    let hold = train_set.select(&hold_idx);
    Ok(move |p: &Params| {
        let mut cfg = base.clone();
        p.apply(&mut cfg);
        let (encoder, _) = train(&fit, encoder_config, &cfg)?;
        let ftr = encode_instances(&encoder, &fit, cfg.max_train_length)?;
        let fho = encode_instances(&encoder, &hold, cfg.max_train_length)?;
        let r = classify_eval(
            ftr.view(),
            fit.labels.as_deref().expect("labelled"),
            fho.view(),
            hold.labels.as_deref().expect("labelled"),
            cfg.seed,
        )?;
        Ok(r.metrics["accuracy"])
    })
}
