use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, WeightDecay};
use crate::error::{Error, Result};
use crate::fuzzy::Semantics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Encoder,
    Dcr,
    Joint,
}

impl Stage {
    pub fn token(self) -> &'static str {
        match self {
            Stage::Encoder => "encoder",
            Stage::Dcr => "dcr",
            Stage::Joint => "joint",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Stage::Encoder, Stage::Dcr, Stage::Joint]
            .into_iter()
            .find(|st| st.token() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}` (expected encoder, dcr or joint)")))
    }
}

/// Every hyperparameter of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub encoder_epochs: usize,
    pub dcr_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub decay_mode: WeightDecay,
    pub concept_weight: f64,
    pub temperature: f64,
    pub semantics: Semantics,
    pub embedding_size: usize,
    pub hidden_sizes: Vec<usize>,
    /// Hidden width of the role and relevance networks; 0 means the embedding size.
    pub reasoner_hidden: usize,
    pub leaky_slope: f64,
    pub seed: u64,
    pub early_stopping_patience: usize,
    pub lr_decay_factor: f64,
    pub lr_decay_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Stage::Encoder,
            encoder_epochs: 500,
            dcr_epochs: 3000,
            batch_size: 256,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 4e-5,
            decay_mode: WeightDecay::Decoupled,
            concept_weight: 1.0,
            temperature: 100.0,
            semantics: Semantics::Goedel,
            embedding_size: 128,
            hidden_sizes: vec![128, 128],
            reasoner_hidden: 0,
            leaky_slope: 0.01,
            seed: 0,
            early_stopping_patience: 15,
            lr_decay_factor: 0.1,
            lr_decay_patience: 10,
        }
    }
}

const KEYS: [&str; 21] = [
    "stage",
    "encoder_epochs",
    "dcr_epochs",
    "batch_size",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "weight_decay",
    "decay_mode",
    "concept_weight",
    "temperature",
    "semantics",
    "embedding_size",
    "hidden_sizes",
    "reasoner_hidden",
    "leaky_slope",
    "seed",
    "early_stopping_patience",
    "lr_decay_factor",
    "lr_decay_patience",
];

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = `{value}`: {e}")))
}

impl TrainConfig {
    pub fn keys() -> &'static [&'static str] {
        &KEYS
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.epsilon,
            weight_decay: self.weight_decay,
            decay_mode: self.decay_mode,
        }
    }

    pub fn reasoner_width(&self) -> usize {
        if self.reasoner_hidden == 0 {
            self.embedding_size
        } else {
            self.reasoner_hidden
        }
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "stage" => self.stage = value.parse()?,
            "encoder_epochs" => self.encoder_epochs = parse(key, value)?,
            "dcr_epochs" => self.dcr_epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "decay_mode" => {
                self.decay_mode = match value {
                    "decoupled" => WeightDecay::Decoupled,
                    "coupled" => WeightDecay::Coupled,
                    _ => return Err(Error::Config(format!("decay_mode = `{value}`: expected decoupled or coupled"))),
                }
            }
            "concept_weight" => self.concept_weight = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "semantics" => self.semantics = value.parse()?,
            "embedding_size" => self.embedding_size = parse(key, value)?,
            "hidden_sizes" => {
                self.hidden_sizes = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "reasoner_hidden" => self.reasoner_hidden = parse(key, value)?,
            "leaky_slope" => self.leaky_slope = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "early_stopping_patience" => self.early_stopping_patience = parse(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = parse(key, value)?,
            "lr_decay_patience" => self.lr_decay_patience = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key, value)?;
        }
        self.validate()
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "stage" => self.stage.token().to_string(),
            "encoder_epochs" => self.encoder_epochs.to_string(),
            "dcr_epochs" => self.dcr_epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "decay_mode" => match self.decay_mode {
                WeightDecay::Decoupled => "decoupled".into(),
                WeightDecay::Coupled => "coupled".into(),
            },
            "concept_weight" => self.concept_weight.to_string(),
            "temperature" => self.temperature.to_string(),
            "semantics" => self.semantics.token().to_string(),
            "embedding_size" => self.embedding_size.to_string(),
            "hidden_sizes" => self.hidden_sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            "reasoner_hidden" => self.reasoner_hidden.to_string(),
            "leaky_slope" => self.leaky_slope.to_string(),
            "seed" => self.seed.to_string(),
            "early_stopping_patience" => self.early_stopping_patience.to_string(),
            "lr_decay_factor" => self.lr_decay_factor.to_string(),
            "lr_decay_patience" => self.lr_decay_patience.to_string(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("embedding_size", self.embedding_size),
            ("early_stopping_patience", self.early_stopping_patience),
            ("lr_decay_patience", self.lr_decay_patience),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden_sizes must be a nonempty list of positive widths".into()));
        }
        let finite_positive = [
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
            ("temperature", self.temperature),
        ];
        if let Some((name, v)) = finite_positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
        if !(self.concept_weight >= 0.0 && self.weight_decay >= 0.0 && self.leaky_slope >= 0.0) {
            return Err(Error::Config("concept_weight, weight_decay and leaky_slope must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::Config("lr_decay_factor must lie in (0, 1]".into()));
        }
        Ok(())
    }
}
