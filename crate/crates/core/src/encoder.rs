//! Concept-embedding encoder: raw features to concept truth degrees plus
//! one embedding per concept.
//!
//! A shared LeakyReLU backbone feeds, for every concept, a "concept active"
//! head `e⁺` and a "concept inactive" head `e⁻`. A per-concept scorer reads
//! `[e⁺ ; e⁻]` and produces the truth degree `ĉ`; the concept embedding is the
//! mixture `ĉ·e⁺ + (1 − ĉ)·e⁻`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::nn::{Linear, Mlp};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_features: usize,
    pub n_concepts: usize,
    pub embedding_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub leaky_slope: f64,
}

impl EncoderConfig {
    pub fn new(n_features: usize, n_concepts: usize, embedding_size: usize) -> Self {
        Self {
            n_features,
            n_concepts,
            embedding_size,
            hidden_sizes: vec![128, 128],
            leaky_slope: 0.01,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.n_concepts == 0 || self.embedding_size == 0 {
            return Err(Error::Config(format!(
                "encoder dimensions must be positive: {self:?}"
            )));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Truth degrees and embeddings for a batch of samples.
///
/// `truth` is `B×k` with entries in `[0, 1]`; `embeddings` is `B×k×m`.
#[derive(Debug, Clone)]
pub struct ConceptBundle<T: Scalar> {
    pub truth: Tensor<T>,
    pub embeddings: Tensor<T>,
}

impl<T: Scalar> ConceptBundle<T> {
    /// Builds a constant bundle, checking the invariants.
    pub fn from_parts(truth: Vec<T>, embeddings: Vec<T>, batch: usize, k: usize, m: usize) -> Result<Self> {
        if let Some(v) = truth.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
            return Err(Error::Domain(v.to_f64().unwrap_or(f64::NAN)));
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite concept embedding".into()));
        }
        Ok(Self {
            truth: Tensor::new(truth, &[batch, k])?,
            embeddings: Tensor::new(embeddings, &[batch, k, m])?,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.truth.shape()[0]
    }

    pub fn n_concepts(&self) -> usize {
        self.truth.shape()[1]
    }

    pub fn embedding_size(&self) -> usize {
        self.embeddings.shape()[2]
    }

    pub fn truth_row(&self, sample: usize) -> &[T] {
        let k = self.n_concepts();
        &self.truth.data()[sample * k..(sample + 1) * k]
    }

    pub fn embedding(&self, sample: usize, concept: usize) -> &[T] {
        let (k, m) = (self.n_concepts(), self.embedding_size());
        let start = (sample * k + concept) * m;
        &self.embeddings.data()[start..start + m]
    }

    /// Constant sub-bundle with the given sample rows.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let (k, m) = (self.n_concepts(), self.embedding_size());
        let mut truth = Vec::with_capacity(rows.len() * k);
        let mut emb = Vec::with_capacity(rows.len() * k * m);
        for &r in rows {
            if r >= self.batch_size() {
                return Err(Error::contract(format!("row {r} outside bundle of {}", self.batch_size())));
            }
            truth.extend_from_slice(self.truth_row(r));
            emb.extend_from_slice(&self.embeddings.data()[r * k * m..(r + 1) * k * m]);
        }
        Ok(Self {
            truth: Tensor::new(truth, &[rows.len(), k])?,
            embeddings: Tensor::new(emb, &[rows.len(), k, m])?,
        })
    }

    /// Cut off from any graph.
    pub fn detach(&self) -> Self {
        Self {
            truth: self.truth.detach(),
            embeddings: self.embeddings.detach(),
        }
    }
}

#[derive(Debug, Clone)]
struct ConceptHeads {
    positive: Linear,
    negative: Linear,
    scorer: Linear,
}

#[derive(Debug, Clone)]
pub struct ConceptEncoder<T: Scalar> {
    pub config: EncoderConfig,
    pub params: ParamSet<T>,
    backbone: Mlp,
    heads: Vec<ConceptHeads>,
}

impl<T: Scalar> ConceptEncoder<T> {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(config, &mut rng)
    }

    pub fn with_rng<R: rand::Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut sizes = vec![config.n_features];
        sizes.extend(&config.hidden_sizes);
        let backbone = Mlp::new(&mut params, "encoder.backbone", &sizes, config.leaky_slope, true, rng);
        let hidden = *sizes.last().expect("sizes starts with the input width");
        let m = config.embedding_size;
        let heads = (0..config.n_concepts)
            .map(|i| ConceptHeads {
                positive: Linear::new(&mut params, &format!("encoder.concept{i}.positive"), hidden, m, rng),
                negative: Linear::new(&mut params, &format!("encoder.concept{i}.negative"), hidden, m, rng),
                scorer: Linear::new(&mut params, &format!("encoder.concept{i}.scorer"), 2 * m, 1, rng),
            })
            .collect();
        Ok(Self {
            config,
            params,
            backbone,
            heads,
        })
    }

    /// Batched forward pass; `x` is `B×n`.
    pub fn encode(&self, leaves: &[Tensor<T>], x: &Tensor<T>) -> Result<ConceptBundle<T>> {
        if x.rank() != 2 || x.shape()[1] != self.config.n_features {
            return Err(Error::shape(format!(
                "encoder expects B×{} features, got {:?}",
                self.config.n_features,
                x.shape()
            )));
        }
        let batch = x.shape()[0];
        let slope = T::lit(self.config.leaky_slope);
        let h = self.backbone.forward(leaves, x)?;
        let mut truths = Vec::with_capacity(self.heads.len());
        let mut embeddings = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let pos = head.positive.forward(leaves, &h)?.leaky_relu(slope)?;
            let neg = head.negative.forward(leaves, &h)?.leaky_relu(slope)?;
            let joint = Tensor::concat(&[pos.clone(), neg.clone()], 1)?;
            let truth = head.scorer.forward(leaves, &joint)?.sigmoid()?;
            // e⁻ + ĉ·(e⁺ − e⁻)
            let emb = neg.add(&truth.mul(&pos.sub(&neg)?)?)?;
            truths.push(truth);
            embeddings.push(emb);
        }
        let k = self.heads.len();
        let m = self.config.embedding_size;
        Ok(ConceptBundle {
            truth: Tensor::concat(&truths, 1)?,
            embeddings: Tensor::concat(&embeddings, 1)?.reshape(&[batch, k, m])?,
        })
    }

    /// Forward pass without gradient tracking over row-major features.
    pub fn encode_values(&self, features: &[T]) -> Result<ConceptBundle<T>> {
        let n = self.config.n_features;
        if features.is_empty() || features.len() % n != 0 {
            return Err(Error::shape(format!(
                "{} feature values are not a multiple of {n}",
                features.len()
            )));
        }
        let x = Tensor::new(features.to_vec(), &[features.len() / n, n])?;
        self.encode(&self.params.leaves(false), &x)
    }
}

/// Mean binary cross-entropy between predicted truth degrees and binary targets.
pub fn concept_loss<T: Scalar>(bundle: &ConceptBundle<T>, targets: &Tensor<T>) -> Result<Tensor<T>> {
    if targets.shape() != bundle.truth.shape() {
        return Err(Error::shape(format!(
            "concept targets {:?} vs predictions {:?}",
            targets.shape(),
            bundle.truth.shape()
        )));
    }
    bundle.truth.binary_cross_entropy(targets)
}
