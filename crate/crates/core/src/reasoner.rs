//! Rule generation and execution over concept embeddings.
//!
//! For every class `j` two small networks read each concept embedding on its
//! own: a role network `φ_j` deciding whether the concept appears plain or
//! negated, and a relevance network whose logits are squashed by the
//! parsimony activation into `r_j`. The rule is executed on the truth degrees
//! as `ŷ_j = ∧_i (r_ji ⇒ (φ_ji ⇔ ĉ_i))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tensor};
use crate::encoder::ConceptBundle;
use crate::error::{Error, Result};
use crate::fuzzy::{Semantics, TruthDegree};
use crate::nn::Mlp;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerConfig {
    pub embedding_size: usize,
    pub n_classes: usize,
    /// Hidden width of the role and relevance networks.
    pub hidden: usize,
    pub temperature: f64,
    pub semantics: Semantics,
    pub leaky_slope: f64,
}

impl ReasonerConfig {
    pub fn new(embedding_size: usize, n_classes: usize) -> Self {
        Self {
            embedding_size,
            n_classes,
            hidden: embedding_size,
            temperature: 100.0,
            semantics: Semantics::Goedel,
            leaky_slope: 0.01,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.embedding_size == 0 || self.n_classes == 0 || self.hidden == 0 {
            return Err(Error::Config(format!("reasoner dimensions must be positive: {self:?}")));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// Parsimony activation on a `B×k` matrix of relevance logits:
/// `γ = log_softmax(logits)`, `r = σ(γ − (τ/k)·Σ_i γ_i)`.
pub fn relevance_from_logits<T: Scalar>(logits: &Tensor<T>, temperature: f64) -> Result<Tensor<T>> {
    if logits.rank() != 2 {
        return Err(Error::shape(format!("relevance logits must be B×k, got {:?}", logits.shape())));
    }
    let k = logits.shape()[1];
    let gamma = logits.log_softmax(1)?;
    let total = gamma.sum_axis(1, true)?;
    gamma.sub(&total.mul_scalar(T::lit(temperature / k as f64)))?.sigmoid()
}

/// [`relevance_from_logits`] for a single sample.
pub fn relevance_values<T: Scalar>(logits: &[T], temperature: f64) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::EmptyRule);
    }
    let t = Tensor::new(logits.to_vec(), &[1, logits.len()])?;
    Ok(relevance_from_logits(&t, temperature)?.data().to_vec())
}

/// Everything one class's rule produced on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRuleTrace<T> {
    pub class: usize,
    pub roles: Vec<T>,
    pub relevances: Vec<T>,
    pub literals: Vec<T>,
    pub guarded: Vec<T>,
    pub score: T,
}

impl<T: Scalar> LocalRuleTrace<T> {
    /// Executes a rule given explicit roles and relevances.
    pub fn execute(
        semantics: Semantics,
        class: usize,
        roles: Vec<T>,
        relevances: Vec<T>,
        truth: &[T],
    ) -> Result<Self> {
        if roles.len() != truth.len() || relevances.len() != truth.len() {
            return Err(Error::shape(format!(
                "rule over {} roles / {} relevances applied to {} concepts",
                roles.len(),
                relevances.len(),
                truth.len()
            )));
        }
        let mut literals = Vec::with_capacity(truth.len());
        let mut guarded = Vec::with_capacity(truth.len());
        for ((&phi, &r), &c) in roles.iter().zip(&relevances).zip(truth) {
            let l = semantics.eval_iff(phi, c)?;
            literals.push(l);
            guarded.push(semantics.eval_implies(r, l)?);
        }
        let score = semantics
            .conj_all(guarded.iter().map(|&g| TruthDegree::new(g)).collect::<Result<Vec<_>>>()?)
            .value();
        Ok(Self {
            class,
            roles,
            relevances,
            literals,
            guarded,
            score,
        })
    }

    pub fn n_concepts(&self) -> usize {
        self.roles.len()
    }

    /// Refolds the guarded literals.
    pub fn recompute_score(&self, semantics: Semantics) -> Result<T> {
        let parts = self.guarded.iter().map(|&g| TruthDegree::new(g)).collect::<Result<Vec<_>>>()?;
        Ok(semantics.conj_all(parts).value())
    }
}

/// Graph-carrying outputs of a forward pass; per-class tensors are `B×k`.
#[derive(Debug, Clone)]
pub struct ReasonerOutput<T: Scalar> {
    pub scores: Tensor<T>,
    pub roles: Vec<Tensor<T>>,
    pub relevances: Vec<Tensor<T>>,
    pub literals: Vec<Tensor<T>>,
    pub guarded: Vec<Tensor<T>>,
}

/// Detached per-sample view of a forward pass.
#[derive(Debug, Clone)]
pub struct Inference<T> {
    pub batch: usize,
    pub n_concepts: usize,
    pub n_classes: usize,
    /// `B×o`, row-major.
    pub scores: Vec<T>,
    /// Truth degrees the rules were executed on, `B×k`.
    pub truth: Vec<T>,
    // B×o×k
    roles: Vec<T>,
    relevances: Vec<T>,
    literals: Vec<T>,
    guarded: Vec<T>,
}

impl<T: Scalar> Inference<T> {
    fn from_output(out: &ReasonerOutput<T>, truth: &Tensor<T>) -> Self {
        let (batch, n_classes) = (out.scores.shape()[0], out.scores.shape()[1]);
        let n_concepts = truth.shape()[1];
        let interleave = |parts: &[Tensor<T>]| {
            let mut flat = Vec::with_capacity(batch * n_classes * n_concepts);
            for b in 0..batch {
                for p in parts {
                    flat.extend_from_slice(&p.data()[b * n_concepts..(b + 1) * n_concepts]);
                }
            }
            flat
        };
        Self {
            batch,
            n_concepts,
            n_classes,
            scores: out.scores.data().to_vec(),
            truth: truth.data().to_vec(),
            roles: interleave(&out.roles),
            relevances: interleave(&out.relevances),
            literals: interleave(&out.literals),
            guarded: interleave(&out.guarded),
        }
    }

    pub fn score_row(&self, sample: usize) -> &[T] {
        &self.scores[sample * self.n_classes..(sample + 1) * self.n_classes]
    }

    pub fn truth_row(&self, sample: usize) -> &[T] {
        &self.truth[sample * self.n_concepts..(sample + 1) * self.n_concepts]
    }

    /// Argmax of the class scores, lowest index on ties.
    pub fn predicted_class(&self, sample: usize) -> usize {
        argmax(self.score_row(sample))
    }

    pub fn predictions(&self) -> Vec<usize> {
        (0..self.batch).map(|s| self.predicted_class(s)).collect()
    }

    fn slot(&self, sample: usize, class: usize) -> std::ops::Range<usize> {
        let start = (sample * self.n_classes + class) * self.n_concepts;
        start..start + self.n_concepts
    }

    pub fn roles(&self, sample: usize, class: usize) -> &[T] {
        &self.roles[self.slot(sample, class)]
    }

    pub fn relevances(&self, sample: usize, class: usize) -> &[T] {
        &self.relevances[self.slot(sample, class)]
    }

    pub fn trace(&self, sample: usize, class: usize) -> LocalRuleTrace<T> {
        let slot = self.slot(sample, class);
        LocalRuleTrace {
            class,
            roles: self.roles[slot.clone()].to_vec(),
            relevances: self.relevances[slot.clone()].to_vec(),
            literals: self.literals[slot.clone()].to_vec(),
            guarded: self.guarded[slot].to_vec(),
            score: self.score_row(sample)[class],
        }
    }
}

pub(crate) fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
struct ClassNets {
    role: Mlp,
    relevance: Mlp,
}

#[derive(Debug, Clone)]
pub struct ConceptReasoner<T: Scalar> {
    pub config: ReasonerConfig,
    pub params: ParamSet<T>,
    nets: Vec<ClassNets>,
}

impl<T: Scalar> ConceptReasoner<T> {
    pub fn new(config: ReasonerConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(config, &mut rng)
    }

    pub fn with_rng<R: rand::Rng + ?Sized>(config: ReasonerConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let sizes = [config.embedding_size, config.hidden, 1];
        let nets = (0..config.n_classes)
            .map(|j| ClassNets {
                role: Mlp::new(&mut params, &format!("dcr.class{j}.role"), &sizes, config.leaky_slope, false, rng),
                relevance: Mlp::new(
                    &mut params,
                    &format!("dcr.class{j}.relevance"),
                    &sizes,
                    config.leaky_slope,
                    false,
                    rng,
                ),
            })
            .collect();
        Ok(Self { config, params, nets })
    }

    pub fn semantics(&self) -> Semantics {
        self.config.semantics
    }

    /// Batched forward pass. Works for any number of concepts, since every
    /// network reads one embedding row at a time.
    pub fn forward(&self, leaves: &[Tensor<T>], bundle: &ConceptBundle<T>) -> Result<ReasonerOutput<T>> {
        let (batch, k, m) = (bundle.batch_size(), bundle.n_concepts(), bundle.embedding_size());
        if m != self.config.embedding_size {
            return Err(Error::shape(format!(
                "embedding size {m} does not match reasoner width {}",
                self.config.embedding_size
            )));
        }
        let rows = bundle.embeddings.reshape(&[batch * k, m])?;
        let sem = self.config.semantics;
        let mut out = ReasonerOutput {
            scores: Tensor::scalar(T::zero()),
            roles: Vec::with_capacity(self.nets.len()),
            relevances: Vec::with_capacity(self.nets.len()),
            literals: Vec::with_capacity(self.nets.len()),
            guarded: Vec::with_capacity(self.nets.len()),
        };
        let mut scores = Vec::with_capacity(self.nets.len());
        for nets in &self.nets {
            let phi = nets.role.forward(leaves, &rows)?.sigmoid()?.reshape(&[batch, k])?;
            let logits = nets.relevance.forward(leaves, &rows)?.reshape(&[batch, k])?;
            let r = relevance_from_logits(&logits, self.config.temperature)?;
            let lit = sem.iff_t(&phi, &bundle.truth)?;
            let guarded = sem.implies_t(&r, &lit)?;
            let columns = (0..k).map(|i| guarded.narrow(1, i, 1)).collect::<Result<Vec<_>>>()?;
            scores.push(sem.conj_fold_t(&columns)?);
            out.roles.push(phi);
            out.relevances.push(r);
            out.literals.push(lit);
            out.guarded.push(guarded);
        }
        out.scores = Tensor::concat(&scores, 1)?;
        Ok(out)
    }

    /// Gradient-free forward pass with per-sample traces.
    pub fn infer(&self, bundle: &ConceptBundle<T>) -> Result<Inference<T>> {
        let bundle = bundle.detach();
        let out = self.forward(&self.params.leaves(false), &bundle)?;
        Ok(Inference::from_output(&out, &bundle.truth))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banana_rule() {
        let trace = LocalRuleTrace::execute(
            Semantics::Goedel,
            0,
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0],
            &[1.0, 0.0, 1.0],
        )
        .unwrap();
        assert_eq!(trace.score, 1.0);
        assert_eq!(trace.guarded, vec![1.0, 1.0, 1.0]);
        assert_eq!(trace.recompute_score(Semantics::Goedel).unwrap(), trace.score);
    }

    #[test]
    fn irrelevant_concept_is_neutral() {
        for c in [0.0, 0.3, 1.0] {
            for phi in [0.0, 0.6, 1.0] {
                let t = LocalRuleTrace::execute(Semantics::Goedel, 0, vec![1.0, phi], vec![1.0, 0.0], &[0.8, c]).unwrap();
                assert_eq!(t.guarded[1], 1.0);
                assert_eq!(t.score, 0.8);
            }
        }
    }

    #[test]
    fn uniform_logits_give_half_relevance_at_unit_temperature() {
        let r = relevance_values(&[0.7, 0.7, 0.7, 0.7], 1.0).unwrap();
        assert!(r.iter().all(|&v| (v - 0.5f64).abs() < 1e-12));
        let single = relevance_values(&[3.0f64], 1.0).unwrap();
        assert!((single[0] - 0.5).abs() < 1e-12);
        assert!(matches!(relevance_values::<f64>(&[], 1.0), Err(Error::EmptyRule)));
    }

    #[test]
    fn identical_embeddings_select_half_at_unit_temperature() {
        let cfg = ReasonerConfig {
            temperature: 1.0,
            ..ReasonerConfig::new(4, 2)
        };
        let dcr = ConceptReasoner::<f64>::new(cfg, 5).unwrap();
        let emb: Vec<f64> = [0.3, -0.2, 0.9, 0.1].repeat(3);
        let bundle = ConceptBundle::from_parts(vec![0.2, 0.9, 0.5], emb, 1, 3, 4).unwrap();
        let inf = dcr.infer(&bundle).unwrap();
        for j in 0..2 {
            assert!(inf.relevances(0, j).iter().all(|&v| (v - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn forward_matches_scalar_execution() {
        let dcr = ConceptReasoner::<f64>::new(ReasonerConfig::new(3, 2), 11).unwrap();
        let emb: Vec<f64> = (0..18).map(|i| ((i * 7) as f64).sin()).collect();
        let bundle = ConceptBundle::from_parts(vec![0.1, 0.8, 0.45, 0.9, 0.2, 0.6], emb, 2, 3, 3).unwrap();
        let inf = dcr.infer(&bundle).unwrap();
        for s in 0..2 {
            for j in 0..2 {
                let t = inf.trace(s, j);
                let again =
                    LocalRuleTrace::execute(Semantics::Goedel, j, t.roles.clone(), t.relevances.clone(), inf.truth_row(s))
                        .unwrap();
                assert_eq!(again, t);
            }
        }
    }

    #[test]
    fn any_concept_count_is_accepted() {
        let dcr = ConceptReasoner::<f64>::new(ReasonerConfig::new(2, 1), 2).unwrap();
        for k in 1..5 {
            let bundle = ConceptBundle::from_parts(vec![0.5; k], vec![0.1; 2 * k], 1, k, 2).unwrap();
            let inf = dcr.infer(&bundle).unwrap();
            assert_eq!(inf.n_concepts, k);
        }
        let wrong = ConceptBundle::from_parts(vec![0.5], vec![0.1; 3], 1, 1, 3).unwrap();
        assert!(matches!(dcr.infer(&wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.9, 0.9]), 1);
    }
}
