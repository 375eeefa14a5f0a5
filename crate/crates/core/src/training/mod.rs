//! Two-stage training (encoder, then reasoner on frozen bundles), an
//! optional joint mode, and checkpoints.

mod checkpoint;
mod config;

pub use checkpoint::{write_atomic, Checkpoint, ModelDims, ParamRecord, CHECKPOINT_VERSION};
pub use config::{Stage, TrainConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, ParamSet, Tensor};
use crate::datasets::{LabeledDataset, SplitTag};
use crate::encoder::{concept_loss, ConceptBundle, ConceptEncoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::reasoner::{ConceptReasoner, ReasonerConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
}

/// Learning-rate decay and early stopping driven by validation loss.
#[derive(Debug, Clone)]
pub struct Plateau {
    best: f64,
    best_epoch: Option<usize>,
    since_best: usize,
    since_decay: usize,
    lr: f64,
    factor: f64,
    decay_patience: usize,
    stop_patience: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlateauStep {
    pub improved: bool,
    pub decayed: bool,
    pub stop: bool,
}

impl Plateau {
    pub fn new(lr: f64, factor: f64, decay_patience: usize, stop_patience: usize) -> Self {
        Self {
            best: f64::INFINITY,
            best_epoch: None,
            since_best: 0,
            since_decay: 0,
            lr,
            factor,
            decay_patience,
            stop_patience,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> PlateauStep {
        let improved = loss < self.best;
        let mut decayed = false;
        if improved {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            self.since_decay = 0;
        } else {
            self.since_best += 1;
            self.since_decay += 1;
            if self.since_decay >= self.decay_patience {
                self.lr *= self.factor;
                self.since_decay = 0;
                decayed = true;
            }
        }
        PlateauStep {
            improved,
            decayed,
            stop: self.since_best >= self.stop_patience,
        }
    }
}

pub fn one_hot<T: Scalar>(labels: &[usize], n_classes: usize) -> Result<Tensor<T>> {
    let mut data = vec![T::zero(); labels.len() * n_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::contract(format!("label {y} outside {n_classes} classes")));
        }
        data[i * n_classes + y] = T::one();
    }
    Tensor::new(data, &[labels.len(), n_classes])
}

pub fn concept_targets<T: Scalar>(concepts: &[bool], k: usize) -> Result<Tensor<T>> {
    let data = concepts.iter().map(|&c| if c { T::one() } else { T::zero() }).collect();
    Tensor::new(data, &[concepts.len() / k.max(1), k])
}

/// Task BCE over the class scores plus `α` times the concept BCE.
pub fn total_loss<T: Scalar>(
    task_scores: &Tensor<T>,
    task_targets: &Tensor<T>,
    concept_preds: &Tensor<T>,
    concept_targets: &Tensor<T>,
    alpha: f64,
) -> Result<Tensor<T>> {
    let task = task_scores.binary_cross_entropy(task_targets)?;
    if alpha == 0.0 {
        return Ok(task);
    }
    if concept_preds.shape() != concept_targets.shape() {
        return Err(Error::shape(format!(
            "concept predictions {:?} vs targets {:?}",
            concept_preds.shape(),
            concept_targets.shape()
        )));
    }
    task.add(&concept_preds.binary_cross_entropy(concept_targets)?.mul_scalar(T::lit(alpha)))
}

/// RNG for one stage; the stream id keeps stages independent of each other
/// while still depending only on the run seed.
pub fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match stage {
        Stage::Encoder => 1,
        Stage::Dcr => 2,
        Stage::Joint => 3,
    });
    rng
}

fn as_scalars<T: Scalar>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&v| T::lit(v)).collect()
}

/// Supervised rows of one split ready for batching.
#[derive(Debug, Clone)]
pub struct SplitData<T: Scalar> {
    pub features: Vec<T>,
    pub concepts: Vec<bool>,
    pub labels: Vec<usize>,
    pub n_features: usize,
    pub n_concepts: usize,
}

impl<T: Scalar> SplitData<T> {
    pub fn from_dataset(ds: &LabeledDataset, tag: SplitTag) -> Self {
        let rows = ds.splits.get(tag);
        Self {
            features: as_scalars(&ds.gather_features(rows)),
            concepts: ds.gather_concepts(rows),
            labels: ds.gather_labels(rows),
            n_features: ds.n_features,
            n_concepts: ds.n_concepts,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn batch_features(&self, rows: &[usize]) -> Result<Tensor<T>> {
        let n = self.n_features;
        let data = rows.iter().flat_map(|&r| self.features[r * n..(r + 1) * n].iter().copied()).collect();
        Tensor::new(data, &[rows.len(), n])
    }

    fn batch_concepts(&self, rows: &[usize]) -> Result<Tensor<T>> {
        let k = self.n_concepts;
        let flat: Vec<bool> = rows.iter().flat_map(|&r| self.concepts[r * k..(r + 1) * k].iter().copied()).collect();
        concept_targets(&flat, k)
    }

    fn batch_labels(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.labels[r]).collect()
    }
}

/// Precomputed bundles of a frozen encoder, with labels.
#[derive(Debug, Clone)]
pub struct BundleData<T: Scalar> {
    pub bundle: ConceptBundle<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> BundleData<T> {
    pub fn encode(encoder: &ConceptEncoder<T>, split: &SplitData<T>) -> Result<Option<Self>> {
        if split.is_empty() {
            return Ok(None);
        }
        Ok(Some(Self {
            bundle: encoder.encode_values(&split.features)?.detach(),
            labels: split.labels.clone(),
        }))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numeric(reason) => Error::Divergence { epoch, reason },
        other => other,
    }
}

/// Shared epoch loop: shuffled mini-batches, plateau schedule, early
/// stopping, best-validation restore.
#[allow(clippy::too_many_arguments)]
fn optimize<M, S>(
    stage: Stage,
    epochs: usize,
    cfg: &TrainConfig,
    n_train: usize,
    rng: &mut ChaCha8Rng,
    model: &mut M,
    mut step: impl FnMut(&mut M, &[usize], f64) -> Result<f64>,
    mut validate: impl FnMut(&M) -> Result<Option<f64>>,
    snapshot: impl Fn(&M) -> S,
    restore: impl Fn(&mut M, S),
) -> Result<Vec<EpochRecord>> {
    if n_train == 0 && epochs > 0 {
        return Err(Error::Config("training split is empty".into()));
    }
    let mut plateau = Plateau::new(cfg.learning_rate, cfg.lr_decay_factor, cfg.lr_decay_patience, cfg.early_stopping_patience);
    let mut history = Vec::new();
    let mut best = None;
    let mut order: Vec<usize> = (0..n_train).collect();
    for epoch in 0..epochs {
        order.shuffle(rng);
        let lr = plateau.learning_rate();
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let loss = step(model, batch, lr).map_err(|e| diverged(epoch, e))?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    reason: format!("training loss is {loss}"),
                });
            }
            total += loss * batch.len() as f64;
        }
        let train_loss = total / n_train as f64;
        let val_loss = validate(model).map_err(|e| diverged(epoch, e))?.unwrap_or(train_loss);
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                reason: format!("validation loss is {val_loss}"),
            });
        }
        history.push(EpochRecord {
            stage,
            epoch,
            train_loss,
            val_loss,
            learning_rate: lr,
        });
        let obs = plateau.observe(epoch, val_loss);
        if obs.improved {
            best = Some(snapshot(model));
        }
        if obs.decayed {
            log::debug!("{} epoch {epoch}: learning rate now {}", stage.token(), plateau.learning_rate());
        }
        if obs.stop {
            log::debug!("{} early stop at epoch {epoch}", stage.token());
            break;
        }
    }
    if let Some(s) = best {
        restore(model, s);
    }
    Ok(history)
}

pub fn encoder_config(cfg: &TrainConfig, n_features: usize, n_concepts: usize) -> EncoderConfig {
    EncoderConfig {
        n_features,
        n_concepts,
        embedding_size: cfg.embedding_size,
        hidden_sizes: cfg.hidden_sizes.clone(),
        leaky_slope: cfg.leaky_slope,
    }
}

pub fn reasoner_config(cfg: &TrainConfig, n_classes: usize) -> ReasonerConfig {
    ReasonerConfig {
        embedding_size: cfg.embedding_size,
        n_classes,
        hidden: cfg.reasoner_width(),
        temperature: cfg.temperature,
        semantics: cfg.semantics,
        leaky_slope: cfg.leaky_slope,
    }
}

struct EncoderStage<T: Scalar> {
    encoder: ConceptEncoder<T>,
    probe_params: ParamSet<T>,
    probe: Linear,
}

impl<T: Scalar> EncoderStage<T> {
    fn loss(&self, enc_leaves: &[Tensor<T>], probe_leaves: &[Tensor<T>], data: &SplitData<T>, rows: &[usize], n_classes: usize, alpha: f64) -> Result<Tensor<T>> {
        let x = data.batch_features(rows)?;
        let bundle = self.encoder.encode(enc_leaves, &x)?;
        let (b, k, m) = (rows.len(), bundle.n_concepts(), bundle.embedding_size());
        let flat = bundle.embeddings.reshape(&[b, k * m])?;
        let probs = self.probe.forward(probe_leaves, &flat)?.sigmoid()?;
        let targets = one_hot(&data.batch_labels(rows), n_classes)?;
        let concepts = data.batch_concepts(rows)?;
        let task = probs.binary_cross_entropy(&targets)?;
        task.add(&concept_loss(&bundle, &concepts)?.mul_scalar(T::lit(alpha)))
    }
}

/// Stage one: concept BCE plus a throwaway linear task probe on the
/// concatenated embeddings. Returns the best-validation encoder.
pub fn train_encoder<T: Scalar>(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<(ConceptEncoder<T>, Vec<EpochRecord>)> {
    cfg.validate()?;
    let train = SplitData::<T>::from_dataset(ds, SplitTag::Train);
    let val = SplitData::<T>::from_dataset(ds, SplitTag::Val);
    let mut rng = stage_rng(cfg.seed, Stage::Encoder);
    let encoder = ConceptEncoder::with_rng(encoder_config(cfg, ds.n_features, ds.n_concepts), &mut rng)?;
    let mut probe_params = ParamSet::new();
    let probe = Linear::new(&mut probe_params, "probe", ds.n_concepts * cfg.embedding_size, ds.n_classes, &mut rng);
    let mut adam_enc = AdamState::new(&encoder.params, cfg.adam());
    let mut adam_probe = AdamState::new(&probe_params, cfg.adam());
    let mut stage = EncoderStage {
        encoder,
        probe_params,
        probe,
    };
    let (n_classes, alpha) = (ds.n_classes, cfg.concept_weight);
    let val_rows: Vec<usize> = (0..val.len()).collect();
    let history = optimize(
        Stage::Encoder,
        cfg.encoder_epochs,
        cfg,
        train.len(),
        &mut rng,
        &mut stage,
        |s, rows, lr| {
            let enc_leaves = s.encoder.params.leaves(true);
            let probe_leaves = s.probe_params.leaves(true);
            let loss = s.loss(&enc_leaves, &probe_leaves, &train, rows, n_classes, alpha)?;
            loss.backward()?;
            adam_enc.set_learning_rate(lr);
            adam_probe.set_learning_rate(lr);
            adam_enc.step(&mut s.encoder.params, &ParamSet::collect_grads(&enc_leaves))?;
            adam_probe.step(&mut s.probe_params, &ParamSet::collect_grads(&probe_leaves))?;
            Ok(loss.item()?.to_f64().unwrap_or(f64::NAN))
        },
        |s| {
            if val.is_empty() {
                return Ok(None);
            }
            let loss = s.loss(&s.encoder.params.leaves(false), &s.probe_params.leaves(false), &val, &val_rows, n_classes, alpha)?;
            Ok(Some(loss.item()?.to_f64().unwrap_or(f64::NAN)))
        },
        |s| (s.encoder.params.clone(), s.probe_params.clone()),
        |s, (e, p)| {
            s.encoder.params = e;
            s.probe_params = p;
        },
    )?;
    Ok((stage.encoder, history))
}

fn task_loss<T: Scalar>(reasoner: &ConceptReasoner<T>, leaves: &[Tensor<T>], bundle: &ConceptBundle<T>, labels: &[usize]) -> Result<Tensor<T>> {
    let out = reasoner.forward(leaves, bundle)?;
    out.scores.binary_cross_entropy(&one_hot(labels, reasoner.config.n_classes)?)
}

/// Stage two: the reasoner alone on precomputed bundles.
pub fn train_dcr<T: Scalar>(
    train: &BundleData<T>,
    val: Option<&BundleData<T>>,
    n_classes: usize,
    cfg: &TrainConfig,
) -> Result<(ConceptReasoner<T>, Vec<EpochRecord>)> {
    cfg.validate()?;
    if train.bundle.embedding_size() != cfg.embedding_size {
        return Err(Error::contract(format!(
            "bundles carry embedding size {} but the config says {}",
            train.bundle.embedding_size(),
            cfg.embedding_size
        )));
    }
    let mut rng = stage_rng(cfg.seed, Stage::Dcr);
    let mut reasoner = ConceptReasoner::with_rng(reasoner_config(cfg, n_classes), &mut rng)?;
    let mut adam = AdamState::new(&reasoner.params, cfg.adam());
    let history = optimize(
        Stage::Dcr,
        cfg.dcr_epochs,
        cfg,
        train.len(),
        &mut rng,
        &mut reasoner,
        |r, rows, lr| {
            let leaves = r.params.leaves(true);
            let batch = train.bundle.select(rows)?;
            let labels: Vec<usize> = rows.iter().map(|&i| train.labels[i]).collect();
            let loss = task_loss(r, &leaves, &batch, &labels)?;
            loss.backward()?;
            adam.set_learning_rate(lr);
            adam.step(&mut r.params, &ParamSet::collect_grads(&leaves))?;
            Ok(loss.item()?.to_f64().unwrap_or(f64::NAN))
        },
        |r| match val {
            Some(v) => {
                let loss = task_loss(r, &r.params.leaves(false), &v.bundle, &v.labels)?;
                Ok(Some(loss.item()?.to_f64().unwrap_or(f64::NAN)))
            }
            None => Ok(None),
        },
        |r| r.params.clone(),
        |r, p| r.params = p,
    )?;
    Ok((reasoner, history))
}

struct JointStage<T: Scalar> {
    encoder: ConceptEncoder<T>,
    reasoner: ConceptReasoner<T>,
}

impl<T: Scalar> JointStage<T> {
    fn loss(&self, enc_leaves: &[Tensor<T>], dcr_leaves: &[Tensor<T>], data: &SplitData<T>, rows: &[usize], alpha: f64) -> Result<Tensor<T>> {
        let bundle = self.encoder.encode(enc_leaves, &data.batch_features(rows)?)?;
        let out = self.reasoner.forward(dcr_leaves, &bundle)?;
        let targets = one_hot(&data.batch_labels(rows), self.reasoner.config.n_classes)?;
        total_loss(&out.scores, &targets, &bundle.truth, &data.batch_concepts(rows)?, alpha)
    }
}

/// Encoder and reasoner optimized together on [`total_loss`] for
/// `encoder_epochs` epochs.
pub fn train_joint<T: Scalar>(
    ds: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(ConceptEncoder<T>, ConceptReasoner<T>, Vec<EpochRecord>)> {
    cfg.validate()?;
    let train = SplitData::<T>::from_dataset(ds, SplitTag::Train);
    let val = SplitData::<T>::from_dataset(ds, SplitTag::Val);
    let mut rng = stage_rng(cfg.seed, Stage::Joint);
    let encoder = ConceptEncoder::with_rng(encoder_config(cfg, ds.n_features, ds.n_concepts), &mut rng)?;
    let reasoner = ConceptReasoner::with_rng(reasoner_config(cfg, ds.n_classes), &mut rng)?;
    let mut adam_enc = AdamState::new(&encoder.params, cfg.adam());
    let mut adam_dcr = AdamState::new(&reasoner.params, cfg.adam());
    let mut stage = JointStage { encoder, reasoner };
    let alpha = cfg.concept_weight;
    let val_rows: Vec<usize> = (0..val.len()).collect();
    let history = optimize(
        Stage::Joint,
        cfg.encoder_epochs,
        cfg,
        train.len(),
        &mut rng,
        &mut stage,
        |s, rows, lr| {
            let enc_leaves = s.encoder.params.leaves(true);
            let dcr_leaves = s.reasoner.params.leaves(true);
            let loss = s.loss(&enc_leaves, &dcr_leaves, &train, rows, alpha)?;
            loss.backward()?;
            adam_enc.set_learning_rate(lr);
            adam_dcr.set_learning_rate(lr);
            adam_enc.step(&mut s.encoder.params, &ParamSet::collect_grads(&enc_leaves))?;
            adam_dcr.step(&mut s.reasoner.params, &ParamSet::collect_grads(&dcr_leaves))?;
            Ok(loss.item()?.to_f64().unwrap_or(f64::NAN))
        },
        |s| {
            if val.is_empty() {
                return Ok(None);
            }
            let loss = s.loss(&s.encoder.params.leaves(false), &s.reasoner.params.leaves(false), &val, &val_rows, alpha)?;
            Ok(Some(loss.item()?.to_f64().unwrap_or(f64::NAN)))
        },
        |s| (s.encoder.params.clone(), s.reasoner.params.clone()),
        |s, (e, r)| {
            s.encoder.params = e;
            s.reasoner.params = r;
        },
    )?;
    Ok((stage.encoder, stage.reasoner, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_decays_after_patience_and_stops() {
        let mut p = Plateau::new(1.0, 0.1, 10, 15);
        assert!(p.observe(0, 1.0).improved);
        let mut decays = Vec::new();
        let mut stopped_at = None;
        for epoch in 1..40 {
            let s = p.observe(epoch, 2.0);
            if s.decayed {
                decays.push(epoch);
            }
            if s.stop {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(decays, vec![10]);
        assert_eq!(stopped_at, Some(15));
        assert!((p.learning_rate() - 0.1).abs() < 1e-15);
        assert_eq!(p.best_epoch(), Some(0));
    }

    #[test]
    fn total_loss_reference_values() {
        let half = Tensor::new(vec![0.5f64; 4], &[2, 2]).unwrap();
        let t = Tensor::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
        let ln2 = std::f64::consts::LN_2;
        let task_only = total_loss(&half, &t, &half, &t, 0.0).unwrap().item().unwrap();
        assert!((task_only - ln2).abs() < 1e-12);
        let both = total_loss(&half, &t, &half, &t, 1.0).unwrap().item().unwrap();
        assert!((both - 2.0 * ln2).abs() < 1e-12);
        assert!(total_loss(&t, &t, &t, &t, 1.0).unwrap().item().unwrap() <= 1e-6);
        let wrong = Tensor::new(vec![1.0f64; 3], &[1, 3]).unwrap();
        assert!(matches!(total_loss(&half, &t, &wrong, &t, 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn one_hot_layout() {
        let t = one_hot::<f64>(&[1, 0, 2], 3).unwrap();
        assert_eq!(t.data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(one_hot::<f64>(&[3], 3).is_err());
    }
}
