use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{linspace, trapezoid};
use crate::error::{Error, Result};
use crate::datasets::LabeledDataset;
use crate::pipeline::ConceptModel;
use crate::reasoner::{Inference, LocalRuleTrace};
use crate::scalar::Scalar;

/// Relevance-weighted signed role, `I_i = r_i·(2φ_i − 1)`.
pub fn explanation_from_trace<T: Scalar>(trace: &LocalRuleTrace<T>) -> Vec<T> {
    trace
        .relevances
        .iter()
        .zip(&trace.roles)
        .map(|(&r, &phi)| r * (phi + phi - T::one()))
        .collect()
}

pub fn explanation_vector<T: Scalar>(inference: &Inference<T>, sample: usize, class: usize) -> Vec<T> {
    explanation_from_trace(&inference.trace(sample, class))
}

/// A predicted class with the explanation of that prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Explained {
    pub class: usize,
    pub importance: Vec<f64>,
}

/// Anything that maps feature rows to a prediction and its explanation.
pub trait ExplanationModel {
    fn n_features(&self) -> usize;

    /// One result per row of the row-major `features`.
    fn explain(&self, features: &[f64]) -> Result<Vec<Explained>>;
}

impl<T: Scalar> ExplanationModel for ConceptModel<T> {
    fn n_features(&self) -> usize {
        self.encoder.config.n_features
    }

    fn explain(&self, features: &[f64]) -> Result<Vec<Explained>> {
        let xs: Vec<T> = features.iter().map(|&v| T::lit(v)).collect();
        let (_, inf) = self.infer(&xs)?;
        Ok((0..inf.batch)
            .map(|s| {
                let class = inf.predicted_class(s);
                Explained {
                    class,
                    importance: explanation_vector(&inf, s, class)
                        .into_iter()
                        .map(|v| v.to_f64().unwrap_or(f64::NAN))
                        .collect(),
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    /// Perturbation radii, multiplied per feature by `scale`.
    pub radii: Vec<f64>,
    pub n_perturb: usize,
    pub seed: u64,
    /// Per-feature unit of the radii; empty means 1 for every feature.
    pub scale: Vec<f64>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            radii: linspace(0.0, 0.5, 10),
            n_perturb: 10,
            seed: 0,
            scale: Vec::new(),
        }
    }
}

impl SensitivityConfig {
    /// Default grid in units of the per-feature standard deviation of the
    /// training split.
    pub fn standardized(ds: &LabeledDataset) -> Self {
        let std = ds.feature_std(&ds.splits.train);
        Self {
            scale: std.into_iter().map(|s| if s > 0.0 { s } else { 1.0 }).collect(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub radii: Vec<f64>,
    /// Mean over samples of the largest normalized explanation change.
    pub distances: Vec<f64>,
    pub auc: f64,
    /// Samples dropped because their explanation is all zero.
    pub skipped: usize,
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// `‖a − b‖₁ / ‖b‖₁`.
pub fn normalized_distance(perturbed: &[f64], original: &[f64]) -> f64 {
    let num: f64 = perturbed.iter().zip(original).map(|(a, b)| (a - b).abs()).sum();
    num / l1(original)
}

/// Largest prediction-preserving explanation change under uniform
/// `‖δ‖∞ ≤ ε` perturbations, averaged over samples, per radius.
pub fn sensitivity(model: &dyn ExplanationModel, features: &[f64], cfg: &SensitivityConfig) -> Result<SensitivityReport> {
    let n = model.n_features();
    if features.is_empty() || features.len() % n != 0 {
        return Err(Error::shape(format!("{} feature values are not rows of {n}", features.len())));
    }
    let scale = if cfg.scale.is_empty() { vec![1.0; n] } else { cfg.scale.clone() };
    if scale.len() != n {
        return Err(Error::shape(format!("{} scale entries for {n} features", scale.len())));
    }
    let base = model.explain(features)?;
    let kept: Vec<usize> = (0..base.len()).filter(|&s| l1(&base[s].importance) > 0.0).collect();
    let skipped = base.len() - kept.len();
    if skipped > 0 {
        log::warn!("sensitivity: {skipped} samples have an all-zero explanation and are skipped");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut distances = Vec::with_capacity(cfg.radii.len());
    for &eps in &cfg.radii {
        if eps == 0.0 || kept.is_empty() || cfg.n_perturb == 0 {
            distances.push(0.0);
            continue;
        }
        let mut rows = Vec::with_capacity(kept.len() * cfg.n_perturb * n);
        for &s in &kept {
            let x = &features[s * n..(s + 1) * n];
            for _ in 0..cfg.n_perturb {
                rows.extend(x.iter().zip(&scale).map(|(&v, &u)| v + rng.random_range(-eps..=eps) * u));
            }
        }
        let perturbed = model.explain(&rows)?;
        let mut total = 0.0;
        for (i, &s) in kept.iter().enumerate() {
            let worst = perturbed[i * cfg.n_perturb..(i + 1) * cfg.n_perturb]
                .iter()
                .filter(|p| p.class == base[s].class)
                .map(|p| normalized_distance(&p.importance, &base[s].importance))
                .fold(0.0, f64::max);
            total += worst;
        }
        distances.push(if kept.is_empty() { 0.0 } else { total / kept.len() as f64 });
    }
    let auc = trapezoid(&cfg.radii, &distances);
    Ok(SensitivityReport {
        radii: cfg.radii.clone(),
        distances,
        auc,
        skipped,
    })
}
