//! `timehut` command-line driver: data loading, training, evaluation reports,
//! config snapshots and plots.

pub mod config;
pub mod plot;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use timehut::checkpoint;
use timehut::data::{self, NormalizeMode, TimeSeriesDataset};
use timehut::encoder::{Encoder, MaskMode};
use timehut::eval::{self, anomaly, classify, compare, EvalResult, Task};
use timehut::hpo::{self, SearchOptions, Strategy};
use timehut::schedulers::SchedulerKind;
use timehut::trainer::{self, TrainHistory};
use timehut::{Error, Result};

use config::{parse_key_value, resolve_data_path, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "timehut",
    version,
    about = "Time-series representation learning with scheduled temperatures and angular margins"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an encoder on a labelled or unlabelled classification dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// UCR `.tsv` or UEA `.ts` file.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train (or load) an encoder and evaluate with an RBF SVM.
    Classify {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Use this checkpoint instead of training.
        #[arg(long = "model")]
        checkpoint: Option<PathBuf>,
    },
    /// Streaming anomaly detection on a `timestamp,value,label` CSV.
    Anomaly {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Fraction of the series used for training and threshold calibration.
        #[arg(long)]
        split: Option<f64>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        delay: Option<usize>,
        /// Local normalisation window.
        #[arg(long)]
        z: Option<usize>,
        #[arg(long)]
        k_sigma: Option<f64>,
        /// Score with a pretrained encoder and skip training.
        #[arg(long, requires = "source")]
        cold_start: bool,
        /// Checkpoint of the pretrained encoder.
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Ridge forecasting heads on trailing-window representations.
    Forecast {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated horizons.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long = "model")]
        checkpoint: Option<PathBuf>,
    },
    /// Search c_i, c_t, m_a, tau_min, tau_max and the period on a holdout split.
    Hpo {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Mean difference, wins/draws/losses, Wilcoxon p-values and average ranks.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// CSV `dataset,model1,model2,...`.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, requires = "b")]
        a: Option<String>,
        #[arg(long, requires = "a")]
        b: Option<String>,
    },
    /// Write pooled instance representations as CSV (features then label).
    ExportEmbeddings {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long = "model")]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// JSON run config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `zscore_per_channel` or `none`.
    #[arg(long)]
    pub normalize: Option<NormalizeMode>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Instance angular coefficient.
    #[arg(long)]
    pub ci: Option<f64>,
    /// Temporal angular coefficient.
    #[arg(long)]
    pub ct: Option<f64>,
    /// Angular margin in radians.
    #[arg(long)]
    pub ma: Option<f64>,
    #[arg(long)]
    pub tau_min: Option<f64>,
    #[arg(long)]
    pub tau_max: Option<f64>,
    #[arg(long)]
    pub period: Option<f64>,
    #[arg(long)]
    pub scheduler: Option<SchedulerKind>,
    /// Extra scheduler parameter, e.g. `decay=0.9`; repeatable.
    #[arg(long = "sched-param", value_parser = parse_key_value)]
    pub sched_params: Vec<(String, f64)>,
    /// Replace the schedule with a constant temperature.
    #[arg(long)]
    pub fixed_tau: Option<f64>,
    #[arg(long)]
    pub no_angular: bool,
    #[arg(long)]
    pub no_sched: bool,
    #[arg(long)]
    pub hidden_dims: Option<usize>,
    #[arg(long)]
    pub output_dims: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub mask_mode: Option<MaskMode>,
    #[arg(long)]
    pub max_train_length: Option<usize>,
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

impl CommonArgs {
    fn base_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.output_dir, self.out.clone());
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.normalize, self.normalize);
        Ok(cfg)
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let t = &mut cfg.train;
        t.epochs = self.epochs.or(t.epochs);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.learning_rate, self.lr);
        set(&mut t.max_train_length, self.max_train_length);
        set(&mut t.loss.c_i, self.ci);
        set(&mut t.loss.c_t, self.ct);
        set(&mut t.loss.m_a, self.ma);
        if self.fixed_tau.is_some() {
            t.loss.fixed_tau = self.fixed_tau;
        }
        if self.no_angular {
            t.loss.enable_angular = false;
        }
        if self.no_sched {
            t.loss.enable_sched = false;
        }
        let s = &mut t.scheduler;
        set(&mut s.tau_min, self.tau_min);
        set(&mut s.tau_max, self.tau_max);
        set(&mut s.period, self.period);
        if let Some(kind) = self.scheduler {
            if kind != s.kind {
                s.extra.clear();
            }
            s.kind = kind;
        }
        for (k, v) in &self.sched_params {
            *s = s.clone().with_param(k, *v)?;
        }
        let e = &mut cfg.encoder;
        set(&mut e.hidden_dims, self.hidden_dims);
        set(&mut e.output_dims, self.output_dims);
        set(&mut e.depth, self.depth);
        set(&mut e.mask_mode, self.mask_mode);
        Ok(())
    }
}

fn required(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    p.as_deref()
        .map(resolve_data_path)
        .ok_or_else(|| Error::Config(format!("missing --{flag} (or the matching config entry)")))
}

/// Load a UEA `.ts` or UCR tab-separated file, by extension.
pub fn load_dataset(path: &Path) -> Result<TimeSeriesDataset> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ts"))
    {
        data::load_uea_ts(path)
    } else {
        data::load_ucr_tsv(path)
    }
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, contents).map_err(|e| Error::Io { path: p, source: e })
    }

    fn results(&mut self, results: &[EvalResult]) -> Result<()> {
        let text: String = results.iter().map(|r| r.to_json_line() + "\n").collect();
        self.write("results.jsonl", text)
    }
}

fn save_training(
    out: &mut Outputs,
    encoder: &Encoder,
    history: &TrainHistory,
    cfg: &RunConfig,
) -> Result<()> {
    let meta = serde_json::json!({ "seed": cfg.seed, "train": cfg.train });
    checkpoint::save(out.path("model.ckpt"), encoder, &meta)?;
    history.write_csv(out.path("history.csv"))?;
    plot::history_chart(history, &out.path("history.svg"))
}

fn tag(results: Vec<EvalResult>, dataset: &str, cfg: &RunConfig) -> Result<Vec<EvalResult>> {
    results
        .into_iter()
        .map(|r| r.with_dataset(dataset).with_seed(cfg.seed).with_config(cfg))
        .collect()
}

/// Run one command; returns the files written.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Train {
            common,
            model,
            data,
        } => {
            let mut cfg = common.base_config()?;
            model.apply(&mut cfg)?;
            if data.is_some() {
                cfg.data.train = data;
            }
            cmd_train(cfg.finalize()?)
        }
        Command::Classify {
            common,
            model,
            train,
            test,
            checkpoint,
        } => {
            let mut cfg = common.base_config()?;
            model.apply(&mut cfg)?;
            set(&mut cfg.data.train, train.map(Some));
            set(&mut cfg.data.test, test.map(Some));
            set(&mut cfg.data.model, checkpoint.map(Some));
            cmd_classify(cfg.finalize()?)
        }
        Command::Anomaly {
            common,
            model,
            data,
            split,
            window,
            delay,
            z,
            k_sigma,
            cold_start,
            source,
        } => {
            let mut cfg = common.base_config()?;
            model.apply(&mut cfg)?;
            set(&mut cfg.data.series, data.map(Some));
            set(&mut cfg.anomaly_split, split);
            set(&mut cfg.anomaly.window, window);
            set(&mut cfg.anomaly.delay, delay);
            set(&mut cfg.anomaly.z, z);
            set(&mut cfg.anomaly.k_sigma, k_sigma);
            if cold_start {
                cfg.data.model = source;
            }
            cmd_anomaly(cfg.finalize()?)
        }
        Command::Forecast {
            common,
            model,
            data,
            horizons,
            window,
            checkpoint,
        } => {
            let mut cfg = common.base_config()?;
            model.apply(&mut cfg)?;
            set(&mut cfg.data.series, data.map(Some));
            set(&mut cfg.forecast.horizons, horizons);
            set(&mut cfg.forecast.window, window);
            set(&mut cfg.data.model, checkpoint.map(Some));
            cmd_forecast(cfg.finalize()?)
        }
        Command::Hpo {
            common,
            model,
            train,
            budget,
            strategy,
            workers,
        } => {
            let mut cfg = common.base_config()?;
            model.apply(&mut cfg)?;
            set(&mut cfg.data.train, train.map(Some));
            set(&mut cfg.hpo.budget, budget);
            set(&mut cfg.hpo.strategy, strategy);
            set(&mut cfg.hpo.workers, workers);
            cmd_hpo(cfg.finalize()?)
        }
        Command::Compare {
            common,
            table,
            a,
            b,
        } => {
            let mut cfg = common.base_config()?;
            set(&mut cfg.data.table, table.map(Some));
            cmd_compare(cfg.finalize()?, a.zip(b))
        }
        Command::ExportEmbeddings {
            common,
            data,
            checkpoint,
        } => {
            let mut cfg = common.base_config()?;
            set(&mut cfg.data.train, data.map(Some));
            set(&mut cfg.data.model, checkpoint.map(Some));
            cmd_export(cfg.finalize()?)
        }
    }
}

fn snapshot(out: &mut Outputs, cfg: &RunConfig) -> Result<()> {
    out.write("config.json", cfg.to_json())
}

fn cmd_train(mut cfg: RunConfig) -> Result<Vec<PathBuf>> {
    let path = required(&cfg.data.train, "data")?;
    cfg.data.train = Some(path.clone());
    let ds = data::normalize(&load_dataset(&path)?, cfg.normalize);
    let (encoder, history) =
        trainer::train(&ds, &cfg.encoder.for_input(ds.n_channels()), &cfg.train)?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    snapshot(&mut out, &cfg)?;
    save_training(&mut out, &encoder, &history, &cfg)?;
    if let Some(last) = history.records.last() {
        println!(
            "trained {} epochs on {}: final loss {:.5}, tau {:.4}",
            history.len(),
            ds.name,
            last.total,
            last.tau
        );
    }
    Ok(out.written)
}

fn load_or_train(
    cfg: &RunConfig,
    out: &mut Outputs,
    train_set: &TimeSeriesDataset,
) -> Result<Encoder> {
    match &cfg.data.model {
        Some(p) => {
            let enc = checkpoint::load(resolve_data_path(p))?.encoder;
            if enc.config.input_dims != train_set.n_channels() {
                return Err(Error::Shape(format!(
                    "checkpoint expects {} channels, data has {}",
                    enc.config.input_dims,
                    train_set.n_channels()
                )));
            }
            Ok(enc)
        }
        None => {
            let (enc, history) = trainer::train(
                train_set,
                &cfg.encoder.for_input(train_set.n_channels()),
                &cfg.train,
            )?;
            save_training(out, &enc, &history, cfg)?;
            Ok(enc)
        }
    }
}

fn cmd_classify(mut cfg: RunConfig) -> Result<Vec<PathBuf>> {
    let train_path = required(&cfg.data.train, "train")?;
    let test_path = required(&cfg.data.test, "test")?;
    cfg.data.train = Some(train_path.clone());
    cfg.data.test = Some(test_path.clone());
    let train_raw = load_dataset(&train_path)?;
    let test_raw = load_dataset(&test_path)?.with_class_order(&train_raw.class_names)?;
    let (train_set, test_set, _) = data::normalize_pair(&train_raw, &test_raw, cfg.normalize);
    let mut out = Outputs::new(&cfg.output_dir)?;
    snapshot(&mut out, &cfg)?;
    let encoder = load_or_train(&cfg, &mut out, &train_set)?;

    let max_len = cfg.train.max_train_length;
    let ftr = eval::encode_instances(&encoder, &train_set, max_len)?;
    let fte = eval::encode_instances(&encoder, &test_set, max_len)?;
    let ytr = train_set
        .labels
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("training labels missing".into()))?;
    let yte = test_set
        .labels
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("test labels missing".into()))?;
    let mut results = vec![classify::classify_eval(
        ftr.view(),
        ytr,
        fte.view(),
        yte,
        cfg.seed,
    )?];
    let mut geometry = std::collections::BTreeMap::new();
    geometry.insert("uniformity".to_string(), eval::uniformity(fte.view())?);
    if let Ok(t) = eval::tolerance(fte.view(), yte) {
        geometry.insert("tolerance".to_string(), t);
    }
    results.push(EvalResult::new(Task::Geometry, geometry));
    let results = tag(results, &train_set.name, &cfg)?;
    for r in &results {
        println!("{}", r.summary());
    }
    out.results(&results)?;
    Ok(out.written)
}

fn cmd_anomaly(mut cfg: RunConfig) -> Result<Vec<PathBuf>> {
    let path = required(&cfg.data.series, "data")?;
    cfg.data.series = Some(path.clone());
    let series = data::load_anomaly_csv(&path, cfg.anomaly_split)?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    snapshot(&mut out, &cfg)?;
    let (result, scores) = match &cfg.data.model {
        Some(src) => {
            let enc = checkpoint::load(resolve_data_path(src))?.encoder;
            let (mut r, s) = anomaly::evaluate_series(&enc, &series, &cfg.anomaly)?;
            r.task = Task::ColdStartAnomaly;
            (r, s)
        }
        None => {
            let (enc, history) =
                anomaly::train_on_series(&series, &cfg.encoder.for_input(1), &cfg.train)?;
            save_training(&mut out, &enc, &history, &cfg)?;
            anomaly::evaluate_series(&enc, &series, &cfg.anomaly)?
        }
    };
    let threshold = result.metrics["threshold"];
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let results = tag(vec![result], &name, &cfg)?;
    println!("{}", results[0].summary());
    let mut csv = String::from("timestamp,score,label\n");
    for ((t, s), l) in series.timestamps.iter().zip(&scores).zip(&series.labels) {
        csv.push_str(&format!("{t},{s},{l}\n"));
    }
    out.write("scores.csv", csv)?;
    plot::score_chart(
        &scores,
        &series.labels,
        threshold,
        series.train_end,
        &out.path("scores.svg"),
    )?;
    out.results(&results)?;
    Ok(out.written)
}

fn cmd_forecast(mut cfg: RunConfig) -> Result<Vec<PathBuf>> {
    let path = required(&cfg.data.series, "data")?;
    cfg.data.series = Some(path.clone());
    let series = data::load_anomaly_csv(&path, cfg.forecast.train_frac)?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    snapshot(&mut out, &cfg)?;
    let encoder = match &cfg.data.model {
        Some(p) => checkpoint::load(resolve_data_path(p))?.encoder,
        None => {
            let (enc, history) =
                anomaly::train_on_series(&series, &cfg.encoder.for_input(1), &cfg.train)?;
            save_training(&mut out, &enc, &history, &cfg)?;
            enc
        }
    };
    let result = eval::forecast_eval(&encoder, &series.values, &cfg.forecast)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let results = tag(vec![result], &name, &cfg)?;
    println!("{}", results[0].summary());
    out.results(&results)?;
    Ok(out.written)
}

fn cmd_hpo(mut cfg: RunConfig) -> Result<Vec<PathBuf>> {
    let path = required(&cfg.data.train, "train")?;
    cfg.data.train = Some(path.clone());
    let ds = data::normalize(&load_dataset(&path)?, cfg.normalize);
    let mut out = Outputs::new(&cfg.output_dir)?;
    snapshot(&mut out, &cfg)?;
    let enc_cfg = cfg.encoder.for_input(ds.n_channels());
    let objective = hpo::holdout_objective(&ds, &enc_cfg, &cfg.train)?;
    let opts = SearchOptions {
        budget: cfg.hpo.budget,
        strategy: cfg.hpo.strategy,
        seed: cfg.seed,
        workers: cfg.hpo.workers,
        log: Some(out.path("trials.csv")),
        ..SearchOptions::default()
    };
    let outcome = hpo::search(&cfg.hpo.space, objective, &opts)?;
    let mut best_cfg = cfg.clone();
    outcome.best.params.apply(&mut best_cfg.train);
    out.write("best_config.json", best_cfg.to_json())?;
    let score = outcome.best.score().expect("best trial succeeded");
    let mut metrics = std::collections::BTreeMap::new();
    metrics.insert("holdout_accuracy".to_string(), score);
    let results = tag(
        vec![EvalResult::new(Task::Classification, metrics)],
        &ds.name,
        &best_cfg,
    )?;
    out.results(&results)?;
    let p = outcome.best.params;
    println!(
        "best of {} trials: accuracy {score:.4} with ci={:.3} ct={:.3} ma={:.3} tau_min={:.3} tau_max={:.3} period={}",
        outcome.trials.len(),
        p.c_i,
        p.c_t,
        p.m_a,
        p.tau_min,
        p.tau_max,
        p.period
    );
    Ok(out.written)
}

fn cmd_compare(mut cfg: RunConfig, pair: Option<(String, String)>) -> Result<Vec<PathBuf>> {
    let path = required(&cfg.data.table, "table")?;
    cfg.data.table = Some(path.clone());
    let table = compare::AccuracyTable::load_csv(&path)?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    let json = match pair {
        Some((a, b)) => {
            let (ia, ib) = (table.model_index(&a)?, table.model_index(&b)?);
            let (xa, xb) = table.paired(ia, ib);
            let s = compare::compare_pair(&xa, &xb)?;
            println!("{a} vs {b} over {} datasets", s.n);
            println!("MD      {:.4}", s.mean_difference);
            println!("W/D/L   {}/{}/{}", s.wins, s.draws, s.losses);
            println!("p-value {:.3e}", s.p_value);
            serde_json::json!({ "a": a, "b": b, "stats": s })
        }
        None => {
            let report = compare::compare_models(&table)?;
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(
                stdout,
                "average ranks over {} datasets",
                report.ranked_datasets
            );
            let mut order: Vec<usize> = (0..report.models.len()).collect();
            order.sort_by(|&x, &y| report.average_ranks[x].total_cmp(&report.average_ranks[y]));
            for i in order {
                let _ = writeln!(
                    stdout,
                    "{:>24} {:.2}",
                    report.models[i], report.average_ranks[i]
                );
            }
            serde_json::to_value(&report).map_err(|e| Error::InvalidInput(e.to_string()))?
        }
    };
    out.write(
        "comparison.json",
        serde_json::to_string_pretty(&json).expect("json value"),
    )?;
    snapshot(&mut out, &cfg)?;
    Ok(out.written)
}

fn cmd_export(mut cfg: RunConfig) -> Result<Vec<PathBuf>> {
    let path = required(&cfg.data.train, "data")?;
    let model = required(&cfg.data.model, "model")?;
    cfg.data.train = Some(path.clone());
    cfg.data.model = Some(model.clone());
    let ds = data::normalize(&load_dataset(&path)?, cfg.normalize);
    let encoder = checkpoint::load(&model)?.encoder;
    let feats = eval::encode_instances(&encoder, &ds, cfg.train.max_train_length)?;
    let mut csv = String::new();
    let header: Vec<String> = (0..feats.ncols()).map(|j| format!("f{j}")).collect();
    csv.push_str(&header.join(","));
    csv.push_str(",label\n");
    for (i, row) in feats.rows().into_iter().enumerate() {
        for v in row {
            csv.push_str(&v.to_string());
            csv.push(',');
        }
        if let Some(l) = &ds.labels {
            csv.push_str(&ds.class_names[l[i]]);
        }
        csv.push('\n');
    }
    let mut out = Outputs::new(&cfg.output_dir)?;
    out.write("embeddings.csv", csv)?;
    snapshot(&mut out, &cfg)?;
    println!("wrote {} x {} embeddings", feats.nrows(), feats.ncols());
    Ok(out.written)
}
