//! Encoder and reasoner bundled into one feature-to-rule model.

use crate::datasets::LabeledDataset;
use crate::encoder::{ConceptBundle, ConceptEncoder};
use crate::error::{Error, Result};
use crate::reasoner::{ConceptReasoner, Inference};
use crate::scalar::Scalar;
use crate::training::{
    encoder_config, reasoner_config, train_dcr, train_encoder, train_joint, BundleData, Checkpoint, EpochRecord,
    ModelDims, SplitData, Stage, TrainConfig,
};
use crate::datasets::SplitTag;

#[derive(Debug, Clone)]
pub struct ConceptModel<T: Scalar> {
    pub encoder: ConceptEncoder<T>,
    pub reasoner: ConceptReasoner<T>,
}

impl<T: Scalar> ConceptModel<T> {
    pub fn dims(&self) -> ModelDims {
        ModelDims {
            n_features: self.encoder.config.n_features,
            n_concepts: self.encoder.config.n_concepts,
            n_classes: self.reasoner.config.n_classes,
        }
    }

    /// Runs features (row-major) through both parts.
    pub fn infer(&self, features: &[T]) -> Result<(ConceptBundle<T>, Inference<T>)> {
        let bundle = self.encoder.encode_values(features)?;
        let inference = self.reasoner.infer(&bundle)?;
        Ok((bundle, inference))
    }

    pub fn infer_rows(&self, ds: &LabeledDataset, rows: &[usize]) -> Result<(ConceptBundle<T>, Inference<T>)> {
        self.check_dataset(ds)?;
        if rows.is_empty() {
            return Err(Error::contract("no rows to evaluate"));
        }
        let features: Vec<T> = ds.gather_features(rows).into_iter().map(T::lit).collect();
        self.infer(&features)
    }

    pub fn check_dataset(&self, ds: &LabeledDataset) -> Result<()> {
        let dims = self.dims();
        for (what, model, data) in [
            ("feature count", dims.n_features, ds.n_features),
            ("concept count", dims.n_concepts, ds.n_concepts),
            ("class count", dims.n_classes, ds.n_classes),
        ] {
            if model != data {
                return Err(Error::contract(format!("{what} mismatch: model has {model}, dataset has {data}")));
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, config: &TrainConfig, history: Vec<EpochRecord>) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new(config.clone(), self.dims());
        ckpt.store(&self.encoder.params)?;
        ckpt.store(&self.reasoner.params)?;
        ckpt.history = history;
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let dims = ckpt.dims;
        let mut encoder = ConceptEncoder::new(encoder_config(&ckpt.config, dims.n_features, dims.n_concepts), 0)?;
        let mut reasoner = ConceptReasoner::new(reasoner_config(&ckpt.config, dims.n_classes), 0)?;
        ckpt.restore(&mut encoder.params)?;
        ckpt.restore(&mut reasoner.params)?;
        Ok(Self { encoder, reasoner })
    }
}

/// Rebuilds just the encoder from a checkpoint of any stage.
pub fn encoder_from_checkpoint<T: Scalar>(ckpt: &Checkpoint) -> Result<ConceptEncoder<T>> {
    let mut encoder = ConceptEncoder::new(encoder_config(&ckpt.config, ckpt.dims.n_features, ckpt.dims.n_concepts), 0)?;
    ckpt.restore(&mut encoder.params)?;
    Ok(encoder)
}

#[derive(Debug, Clone)]
pub struct TrainedModel<T: Scalar> {
    pub model: ConceptModel<T>,
    pub history: Vec<EpochRecord>,
    pub config: TrainConfig,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        self.model.to_checkpoint(&self.config, self.history.clone())
    }
}

/// Precomputes train and validation bundles with a frozen encoder.
pub fn encode_splits<T: Scalar>(
    encoder: &ConceptEncoder<T>,
    ds: &LabeledDataset,
) -> Result<(BundleData<T>, Option<BundleData<T>>)> {
    let train = BundleData::encode(encoder, &SplitData::from_dataset(ds, SplitTag::Train))?
        .ok_or_else(|| Error::Config("training split is empty".into()))?;
    let val = BundleData::encode(encoder, &SplitData::from_dataset(ds, SplitTag::Val))?;
    Ok((train, val))
}

/// Trains the reasoner stage on top of a frozen encoder.
pub fn fit_reasoner<T: Scalar>(
    encoder: ConceptEncoder<T>,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
    mut history: Vec<EpochRecord>,
) -> Result<TrainedModel<T>> {
    let (train, val) = encode_splits(&encoder, ds)?;
    let (reasoner, dcr_history) = train_dcr(&train, val.as_ref(), ds.n_classes, cfg)?;
    history.extend(dcr_history);
    Ok(TrainedModel {
        model: ConceptModel { encoder, reasoner },
        history,
        config: cfg.clone(),
    })
}

/// Full training run. Two-stage unless `cfg.stage` is [`Stage::Joint`].
pub fn fit<T: Scalar>(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainedModel<T>> {
    match cfg.stage {
        Stage::Joint => {
            let (encoder, reasoner, history) = train_joint(ds, cfg)?;
            Ok(TrainedModel {
                model: ConceptModel { encoder, reasoner },
                history,
                config: cfg.clone(),
            })
        }
        Stage::Encoder | Stage::Dcr => {
            let (encoder, history) = train_encoder(ds, cfg)?;
            fit_reasoner(encoder, ds, cfg, history)
        }
    }
}
