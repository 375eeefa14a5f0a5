//! `dcr train`.

use std::path::{Path, PathBuf};
use std::thread;

use clap::{Args, ValueEnum};
use concept_reasoner::datasets::{LabeledDataset, SplitTag};
use concept_reasoner::encoder::ConceptEncoder;
use concept_reasoner::evaluation::{accuracy, roc_auc_macro};
use concept_reasoner::pipeline::{encoder_from_checkpoint, fit, fit_reasoner, ConceptModel, TrainedModel};
use concept_reasoner::rules::harden;
use concept_reasoner::training::{
    train_encoder, BundleData, Checkpoint, EpochRecord, ModelDims, SplitData, Stage, TrainConfig,
};
use concept_reasoner::{Error, Result};
use serde::Serialize;

use crate::output::{self, CliError, Reporter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    /// Encoder, then the reasoner on frozen bundles.
    All,
    Encoder,
    /// Reasoner only, on top of `--encoder`.
    Dcr,
    Joint,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV from `dcr generate`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = StageArg::All)]
    stage: StageArg,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Configuration override, applied after `--config`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Independent runs, one subdirectory each.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    seeds: Vec<u64>,
    /// Runs trained concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Encoder checkpoint for `--stage dcr`.
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Output directory; defaults to `<output-dir>/train`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub seed: u64,
    pub concept_accuracy: f64,
    pub task_accuracy: Option<f64>,
    pub task_auc: Option<f64>,
    pub epochs: usize,
}

fn effective_config(args: &TrainArgs, base: TrainConfig) -> std::result::Result<TrainConfig, CliError> {
    let mut cfg = base;
    if let Some(path) = &args.config {
        let text = output::with_path(path, std::fs::read_to_string(path).map_err(Error::from))?;
        cfg.apply_kv(&text)?;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set `{kv}`: expected KEY=VALUE")))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.stage = match args.stage {
        StageArg::All | StageArg::Encoder => Stage::Encoder,
        StageArg::Dcr => Stage::Dcr,
        StageArg::Joint => Stage::Joint,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn check_dims(dims: ModelDims, ds: &LabeledDataset) -> Result<()> {
    for (what, model, data) in [
        ("feature count", dims.n_features, ds.n_features),
        ("concept count", dims.n_concepts, ds.n_concepts),
        ("class count", dims.n_classes, ds.n_classes),
    ] {
        if model != data {
            return Err(Error::Contract(format!("{what} mismatch: checkpoint has {model}, dataset has {data}")));
        }
    }
    Ok(())
}

fn concept_accuracy(encoder: &ConceptEncoder<f64>, ds: &LabeledDataset) -> Result<f64> {
    let split = SplitData::from_dataset(ds, SplitTag::Test);
    let Some(test) = BundleData::encode(encoder, &split)? else {
        return Ok(f64::NAN);
    };
    let predicted = harden(test.bundle.truth.data());
    let truth = ds.gather_concepts(ds.splits.get(SplitTag::Test));
    let hits = predicted.iter().zip(&truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len().max(1) as f64)
}

fn model_metrics(model: &ConceptModel<f64>, ds: &LabeledDataset, seed: u64, epochs: usize) -> Result<Metrics> {
    let rows = ds.splits.get(SplitTag::Test);
    let mut metrics = Metrics {
        seed,
        concept_accuracy: concept_accuracy(&model.encoder, ds)?,
        task_accuracy: None,
        task_auc: None,
        epochs,
    };
    if !rows.is_empty() {
        let (_, inf) = model.infer_rows(ds, rows)?;
        let labels = ds.gather_labels(rows);
        metrics.task_accuracy = Some(accuracy(&inf.predictions(), &labels));
        metrics.task_auc = roc_auc_macro(&inf.scores, &labels, ds.n_classes).ok();
    }
    Ok(metrics)
}

struct RunOutput {
    checkpoint: Checkpoint,
    metrics: Metrics,
}

fn train_one(args: &TrainArgs, ds: &LabeledDataset, cfg: &TrainConfig, encoder_ckpt: Option<&Checkpoint>) -> Result<RunOutput> {
    let finish = |tm: TrainedModel<f64>| -> Result<RunOutput> {
        let metrics = model_metrics(&tm.model, ds, cfg.seed, tm.history.len())?;
        Ok(RunOutput {
            checkpoint: tm.checkpoint()?,
            metrics,
        })
    };
    match args.stage {
        StageArg::All | StageArg::Joint => finish(fit(ds, cfg)?),
        StageArg::Encoder => {
            let (encoder, history) = train_encoder::<f64>(ds, cfg)?;
            let dims = ModelDims {
                n_features: ds.n_features,
                n_concepts: ds.n_concepts,
                n_classes: ds.n_classes,
            };
            let mut checkpoint = Checkpoint::new(cfg.clone(), dims);
            checkpoint.store(&encoder.params)?;
            let metrics = Metrics {
                seed: cfg.seed,
                concept_accuracy: concept_accuracy(&encoder, ds)?,
                task_accuracy: None,
                task_auc: None,
                epochs: history.len(),
            };
            checkpoint.history = history;
            Ok(RunOutput { checkpoint, metrics })
        }
        StageArg::Dcr => {
            let ckpt = encoder_ckpt.ok_or_else(|| Error::Config("--stage dcr needs --encoder".into()))?;
            let encoder = encoder_from_checkpoint::<f64>(ckpt)?;
            let history: Vec<EpochRecord> = ckpt.history.iter().filter(|h| h.stage == Stage::Encoder).cloned().collect();
            finish(fit_reasoner(encoder, ds, cfg, history)?)
        }
    }
}

fn history_rows(history: &[EpochRecord]) -> Vec<Vec<String>> {
    history
        .iter()
        .map(|h| {
            vec![
                h.stage.token().to_string(),
                h.epoch.to_string(),
                h.train_loss.to_string(),
                h.val_loss.to_string(),
                h.learning_rate.to_string(),
            ]
        })
        .collect()
}

fn print_metrics(m: &Metrics) {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "seed {}: {} epochs, concept accuracy {:.4}, task accuracy {}, task AUC {}",
        m.seed,
        m.epochs,
        m.concept_accuracy,
        opt(m.task_accuracy),
        opt(m.task_auc)
    );
}

pub fn run(output_dir: &Path, args: &TrainArgs) -> std::result::Result<(), CliError> {
    let reporter = Reporter::new("train");
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    if args.stage == StageArg::Dcr && args.encoder.is_none() {
        return Err(CliError::Usage("--stage dcr needs an encoder checkpoint (--encoder)".into()));
    }
    let ds = output::load_dataset(&args.data)?;
    let encoder_ckpt = match &args.encoder {
        Some(path) => {
            let ckpt = output::load_checkpoint(path)?;
            if !ckpt.has_prefix("encoder.") {
                return Err(Error::Contract(format!("{} holds no encoder parameters", path.display())).into());
            }
            check_dims(ckpt.dims, &ds)?;
            Some(ckpt)
        }
        None => None,
    };
    let base = encoder_ckpt.as_ref().map(|c| c.config.clone()).unwrap_or_default();
    let cfg = effective_config(args, base)?;
    let out = args.out.clone().unwrap_or_else(|| output_dir.join("train"));

    let seeds = if args.seeds.is_empty() { vec![cfg.seed] } else { args.seeds.clone() };
    let runs: Vec<(u64, PathBuf, TrainConfig)> = seeds
        .iter()
        .map(|&seed| {
            let dir = if args.seeds.is_empty() { out.clone() } else { out.join(format!("seed-{seed}")) };
            (seed, dir, TrainConfig { seed, ..cfg.clone() })
        })
        .collect();

    let mut results = Vec::with_capacity(runs.len());
    reporter.time("train", || {
        for chunk in runs.chunks(args.jobs) {
            let done: Vec<Result<RunOutput>> = thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|(_, _, c)| {
                        let (ds, ckpt) = (&ds, encoder_ckpt.as_ref());
                        s.spawn(move || train_one(args, ds, c, ckpt))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("training worker panicked".into()))))
                    .collect()
            });
            results.extend(done);
        }
    });

    let mut manifest = reporter.manifest();
    manifest.config = Some(cfg.clone());
    manifest.seed = Some(cfg.seed);
    manifest.artifacts.insert("dataset".into(), args.data.clone());
    if let Some(path) = &args.encoder {
        manifest.artifacts.insert("encoder".into(), path.clone());
    }
    for ((seed, dir, _), result) in runs.iter().zip(results) {
        let run = result?;
        let ckpt_path = dir.join("checkpoint.json");
        output::write_bytes(&ckpt_path, run.checkpoint.to_json()?.as_bytes())?;
        let history_path = dir.join("history.csv");
        output::write_csv(
            &history_path,
            &["stage", "epoch", "train_loss", "val_loss", "learning_rate"],
            &history_rows(&run.checkpoint.history),
        )?;
        let metrics_path = dir.join("metrics.json");
        output::write_json(&metrics_path, &run.metrics)?;
        print_metrics(&run.metrics);
        let tag = if args.seeds.is_empty() { String::new() } else { format!("seed-{seed}/") };
        manifest.artifacts.insert(format!("{tag}checkpoint"), ckpt_path);
        manifest.artifacts.insert(format!("{tag}history"), history_path);
        manifest.artifacts.insert(format!("{tag}metrics"), metrics_path);
    }
    println!("wrote {}", out.display());
    manifest.finish(&out.join("manifest.json"))
}
