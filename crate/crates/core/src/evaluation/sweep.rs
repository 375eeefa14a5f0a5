//! Retraining the reasoner over a grid of relevance temperatures.

use std::thread;

use serde::{Deserialize, Serialize};

use super::metrics::roc_auc_macro;
use crate::analysis::{extract_rules, mean_rule_length};
use crate::datasets::{LabeledDataset, SplitTag};
use crate::encoder::ConceptEncoder;
use crate::error::{Error, Result};
use crate::pipeline::encode_splits;
use crate::rules::{AggregationMode, DEFAULT_THRESHOLD};
use crate::scalar::Scalar;
use crate::training::{train_dcr, BundleData, SplitData, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub temperature: f64,
    /// Over predicted-class rules of the test split.
    pub mean_rule_length: f64,
    pub test_auc: f64,
}

fn sweep_point<T: Scalar>(
    train: &BundleData<T>,
    val: Option<&BundleData<T>>,
    test: &BundleData<T>,
    n_classes: usize,
    cfg: &TrainConfig,
    temperature: f64,
) -> Result<SweepRow> {
    let cfg = TrainConfig {
        temperature,
        ..cfg.clone()
    };
    let (reasoner, _) = train_dcr(train, val, n_classes, &cfg)?;
    let inference = reasoner.infer(&test.bundle)?;
    let rules = extract_rules(&inference, None, AggregationMode::Predicted, DEFAULT_THRESHOLD)?;
    let scores: Vec<f64> = inference.scores.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    Ok(SweepRow {
        temperature,
        mean_rule_length: mean_rule_length(&rules),
        test_auc: roc_auc_macro(&scores, &test.labels, n_classes)?,
    })
}

/// One row per temperature, in grid order. The encoder is frozen, so every
/// point trains on identical bundles with the same seed. At most `jobs`
/// points train concurrently.
pub fn tau_sweep<T: Scalar>(
    encoder: &ConceptEncoder<T>,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
    temperatures: &[f64],
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if temperatures.is_empty() {
        return Err(Error::Config("temperature grid is empty".into()));
    }
    if let Some(&t) = temperatures.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::Config(format!("temperature must be positive, got {t}")));
    }
    let ec = &encoder.config;
    if ec.n_features != ds.n_features || ec.n_concepts != ds.n_concepts {
        return Err(Error::contract(format!(
            "encoder expects {} features and {} concepts, dataset has {} and {}",
            ec.n_features, ec.n_concepts, ds.n_features, ds.n_concepts
        )));
    }
    let (train, val) = encode_splits(encoder, ds)?;
    let test = BundleData::encode(encoder, &SplitData::from_dataset(ds, SplitTag::Test))?
        .ok_or_else(|| Error::Config("test split is empty".into()))?;

    let run = |t: f64| {
        sweep_point(&train, val.as_ref(), &test, ds.n_classes, cfg, t).map_err(|e| Error::AtTemperature {
            temperature: t,
            source: Box::new(e),
        })
    };
    let mut rows = Vec::with_capacity(temperatures.len());
    for chunk in temperatures.chunks(jobs.max(1)) {
        let results: Vec<Result<SweepRow>> = thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&t| s.spawn(move || run(t))).collect();
            handles
                .into_iter()
                .map(|h| h.join().map_err(|_| Error::contract("sweep worker panicked"))?)
                .collect()
        });
        for r in results {
            rows.push(r?);
        }
    }
    Ok(rows)
}
