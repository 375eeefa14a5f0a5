//! Faithfulness checks of extracted rules against the fuzzy model.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reasoner::Inference;
use crate::rules::{booleanize, harden, BooleanRule, GlobalRuleSet, AggregationMode, aggregate_global};
use crate::scalar::Scalar;

/// Which concept values the crisp rules are evaluated on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptSource {
    /// The dataset's labels.
    #[default]
    GroundTruth,
    /// The model's own truth degrees, hardened at 0.5.
    Predicted,
}

/// Samples whose ground-truth concepts satisfy one reference rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleGroup {
    /// `None` collects samples no reference rule covers.
    pub reference: Option<BooleanRule>,
    pub samples: usize,
    pub errors: usize,
    /// Extracted rules of the predicted class, with counts.
    pub extracted: BTreeMap<BooleanRule, usize>,
}

impl RuleGroup {
    fn new(reference: Option<BooleanRule>) -> Self {
        Self {
            reference,
            samples: 0,
            errors: 0,
            extracted: BTreeMap::new(),
        }
    }

    pub fn error_rate(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.errors as f64 / self.samples as f64
        }
    }

    /// Most frequent extracted rule; ties go to the smaller rule.
    pub fn modal_rule(&self) -> Option<&BooleanRule> {
        self.extracted
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(r, _)| r)
    }

    /// Fraction of samples whose extracted rule is the reference rule.
    pub fn agreement(&self) -> f64 {
        match &self.reference {
            Some(r) if self.samples > 0 => *self.extracted.get(r).unwrap_or(&0) as f64 / self.samples as f64,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleErrorReport {
    pub source: ConceptSource,
    pub groups: Vec<RuleGroup>,
    pub unmatched: RuleGroup,
}

impl RuleErrorReport {
    pub fn total_samples(&self) -> usize {
        self.groups.iter().map(|g| g.samples).sum::<usize>() + self.unmatched.samples
    }

    pub fn total_errors(&self) -> usize {
        self.groups.iter().map(|g| g.errors).sum::<usize>() + self.unmatched.errors
    }

    pub fn overall_rate(&self) -> f64 {
        let n = self.total_samples();
        if n == 0 {
            0.0
        } else {
            self.total_errors() as f64 / n as f64
        }
    }

    pub fn max_group_rate(&self) -> f64 {
        self.groups.iter().map(RuleGroup::error_rate).fold(0.0, f64::max)
    }
}

fn check_rows<T: Scalar>(inference: &Inference<T>, concepts: &[bool], labels: Option<&[usize]>) -> Result<()> {
    if concepts.len() != inference.batch * inference.n_concepts {
        return Err(Error::shape(format!(
            "{} concept values for {} samples of {} concepts",
            concepts.len(),
            inference.batch,
            inference.n_concepts
        )));
    }
    if let Some(l) = labels {
        if l.len() != inference.batch {
            return Err(Error::shape(format!("{} labels for {} samples", l.len(), inference.batch)));
        }
    }
    Ok(())
}

/// Whether every class's crisp rule agrees with the hardened fuzzy score.
pub fn rule_disagrees<T: Scalar>(inference: &Inference<T>, sample: usize, concepts: &[bool], threshold: f64) -> Result<bool> {
    let theta = T::lit(DEFAULT_SCORE_THRESHOLD);
    for class in 0..inference.n_classes {
        let rule = booleanize(&inference.trace(sample, class), threshold);
        let crisp = rule.evaluate(concepts)?;
        let fuzzy = inference.score_row(sample)[class] > theta;
        if crisp != fuzzy {
            return Ok(true);
        }
    }
    Ok(false)
}

const DEFAULT_SCORE_THRESHOLD: f64 = 0.5;

/// How often crisp rules and fuzzy scores disagree, grouped by the
/// reference rule each sample's ground-truth concepts satisfy.
/// `concepts` are the ground-truth concepts, `B×k` row-major.
pub fn rule_error_rate<T: Scalar>(
    inference: &Inference<T>,
    concepts: &[bool],
    reference: &[BooleanRule],
    source: ConceptSource,
    threshold: f64,
) -> Result<RuleErrorReport> {
    check_rows(inference, concepts, None)?;
    let k = inference.n_concepts;
    let mut groups: Vec<RuleGroup> = reference.iter().cloned().map(|r| RuleGroup::new(Some(r))).collect();
    let mut unmatched = RuleGroup::new(None);
    for s in 0..inference.batch {
        let truth = &concepts[s * k..(s + 1) * k];
        let group = match reference.iter().position(|r| r.evaluate(truth).unwrap_or(false)) {
            Some(g) => &mut groups[g],
            None => &mut unmatched,
        };
        let evaluated = match source {
            ConceptSource::GroundTruth => truth.to_vec(),
            ConceptSource::Predicted => harden(inference.truth_row(s)),
        };
        group.samples += 1;
        if rule_disagrees(inference, s, &evaluated, threshold)? {
            group.errors += 1;
        }
        let rule = booleanize(&inference.trace(s, inference.predicted_class(s)), threshold);
        if rule.is_empty() {
            log::warn!("sample {s} produced an empty rule");
        }
        *group.extracted.entry(rule).or_insert(0) += 1;
    }
    Ok(RuleErrorReport {
        source,
        groups,
        unmatched,
    })
}

/// Booleanized rules, one per sample, for the class picked by `mode`.
pub fn extract_rules<T: Scalar>(
    inference: &Inference<T>,
    labels: Option<&[usize]>,
    mode: AggregationMode,
    threshold: f64,
) -> Result<Vec<BooleanRule>> {
    (0..inference.batch)
        .map(|s| {
            let class = match mode {
                AggregationMode::Predicted => inference.predicted_class(s),
                AggregationMode::Labeled => *labels
                    .and_then(|l| l.get(s))
                    .ok_or_else(|| Error::contract("labeled aggregation needs one label per sample"))?,
            };
            if class >= inference.n_classes {
                return Err(Error::contract(format!("label {class} outside {} classes", inference.n_classes)));
            }
            Ok(booleanize(&inference.trace(s, class), threshold))
        })
        .collect()
}

pub fn global_rules<T: Scalar>(
    inference: &Inference<T>,
    labels: Option<&[usize]>,
    mode: AggregationMode,
    threshold: f64,
) -> Result<GlobalRuleSet> {
    Ok(aggregate_global(extract_rules(inference, labels, mode, threshold)?))
}

pub fn mean_rule_length(rules: &[BooleanRule]) -> f64 {
    if rules.is_empty() {
        return 0.0;
    }
    rules.iter().map(BooleanRule::len).sum::<usize>() as f64 / rules.len() as f64
}

/// A mispredicted sample with the rule the model used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclassification {
    pub sample: usize,
    /// The model's hardened concepts.
    pub concepts: Vec<bool>,
    pub rule: BooleanRule,
    pub predicted: usize,
    pub label: usize,
}

impl fmt::Display for Misclassification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cs: Vec<&str> = self.concepts.iter().map(|&c| if c { "1.0" } else { "0.0" }).collect();
        write!(
            f,
            "[{}] | y={} <- {} | y={}",
            cs.join(", "),
            self.predicted,
            self.rule.body(),
            self.label
        )
    }
}

pub fn explain_misclassifications<T: Scalar>(inference: &Inference<T>, labels: &[usize], threshold: f64) -> Result<Vec<Misclassification>> {
    if labels.len() != inference.batch {
        return Err(Error::shape(format!("{} labels for {} samples", labels.len(), inference.batch)));
    }
    Ok((0..inference.batch)
        .filter_map(|s| {
            let predicted = inference.predicted_class(s);
            (predicted != labels[s]).then(|| Misclassification {
                sample: s,
                concepts: harden(inference.truth_row(s)),
                rule: booleanize(&inference.trace(s, predicted), threshold),
                predicted,
                label: labels[s],
            })
        })
        .collect())
}
