use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::trapezoid;
use crate::error::{Error, Result};
use crate::fuzzy::Semantics;
use crate::reasoner::{argmax, Inference, LocalRuleTrace};
use crate::rules::{booleanize, harden, BooleanRule};
use crate::scalar::Scalar;

/// One counterfactual in text form:
/// `old concepts | old prediction | new concepts | new prediction`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualRow {
    pub old_concepts: Vec<bool>,
    pub old_prediction: usize,
    pub new_concepts: Vec<bool>,
    pub new_prediction: usize,
}

fn render_concepts(cs: &[bool]) -> String {
    cs.iter()
        .enumerate()
        .map(|(i, &c)| if c { format!("c_{i}") } else { format!("!c_{i}") })
        .collect::<Vec<_>>()
        .join(", ")
}

fn parse_concepts(s: &str) -> Result<Vec<bool>> {
    s.split(',')
        .enumerate()
        .map(|(i, tok)| {
            let tok = tok.trim();
            let (value, name) = match tok.strip_prefix('!') {
                Some(rest) => (false, rest),
                None => (true, tok),
            };
            if name == format!("c_{i}") {
                Ok(value)
            } else {
                Err(Error::Parse(format!("expected c_{i} at position {i}, found `{tok}`")))
            }
        })
        .collect()
}

fn parse_class(s: &str) -> Result<usize> {
    s.trim()
        .strip_prefix("y_")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad class `{}`", s.trim())))
}

impl fmt::Display for CounterfactualRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} | y_{} | {} | y_{}",
            render_concepts(&self.old_concepts),
            self.old_prediction,
            render_concepts(&self.new_concepts),
            self.new_prediction
        )
    }
}

impl FromStr for CounterfactualRow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('|').collect();
        let [old_c, old_p, new_c, new_p] = parts[..] else {
            return Err(Error::Parse(format!("counterfactual row needs 4 fields: `{s}`")));
        };
        Ok(Self {
            old_concepts: parse_concepts(old_c)?,
            old_prediction: parse_class(old_p)?,
            new_concepts: parse_concepts(new_c)?,
            new_prediction: parse_class(new_p)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualRecord {
    pub sample: usize,
    pub row: CounterfactualRow,
    /// The extracted rule of the original prediction.
    pub rule: BooleanRule,
    /// Concepts in the order they were flipped.
    pub flipped: Vec<usize>,
    /// Confidence in the original class before and after each flip.
    pub confidences: Vec<f64>,
}

impl CounterfactualRecord {
    pub fn changed(&self) -> bool {
        self.row.new_prediction != self.row.old_prediction
    }
}

/// Flips the relevant concepts of the predicted class's rule, most relevant
/// first, re-executing every class's rule with roles and relevances held at
/// their original values, until the predicted class changes.
pub fn counterfactual_search<T: Scalar>(
    inference: &Inference<T>,
    sample: usize,
    semantics: Semantics,
    threshold: f64,
    max_flips: usize,
) -> Result<CounterfactualRecord> {
    let class = inference.predicted_class(sample);
    let traces: Vec<LocalRuleTrace<T>> = (0..inference.n_classes).map(|j| inference.trace(sample, j)).collect();
    let rule = booleanize(&traces[class], threshold);
    let theta = T::lit(threshold);
    let r = &traces[class].relevances;
    let mut order: Vec<usize> = (0..r.len()).filter(|&i| r[i] > theta).collect();
    order.sort_by(|&a, &b| r[b].partial_cmp(&r[a]).unwrap_or(std::cmp::Ordering::Equal));
    order.truncate(max_flips);

    let mut truth = inference.truth_row(sample).to_vec();
    let old_concepts = harden(&truth);
    let mut confidences = vec![inference.score_row(sample)[class].to_f64().unwrap_or(f64::NAN)];
    let mut prediction = class;
    let mut flipped = Vec::new();
    for &i in &order {
        truth[i] = T::one() - truth[i];
        flipped.push(i);
        let scores = traces
            .iter()
            .map(|t| Ok(LocalRuleTrace::execute(semantics, t.class, t.roles.clone(), t.relevances.clone(), &truth)?.score))
            .collect::<Result<Vec<T>>>()?;
        confidences.push(scores[class].to_f64().unwrap_or(f64::NAN));
        prediction = argmax(&scores);
        if prediction != class {
            break;
        }
    }
    Ok(CounterfactualRecord {
        sample,
        row: CounterfactualRow {
            old_concepts,
            old_prediction: class,
            new_concepts: harden(&truth),
            new_prediction: prediction,
        },
        rule,
        flipped,
        confidences,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualReport {
    /// Flip counts normalized by the number of concepts.
    pub xs: Vec<f64>,
    /// Mean confidence in the original class at each flip count.
    pub curve: Vec<f64>,
    pub auc: f64,
    pub changed_fraction: f64,
    pub records: Vec<CounterfactualRecord>,
}

/// Runs [`counterfactual_search`] on every sample. Curves of samples that
/// stop early keep their last confidence.
pub fn counterfactual_report<T: Scalar>(inference: &Inference<T>, semantics: Semantics, threshold: f64) -> Result<CounterfactualReport> {
    let k = inference.n_concepts;
    let records = (0..inference.batch)
        .map(|s| counterfactual_search(inference, s, semantics, threshold, k))
        .collect::<Result<Vec<_>>>()?;
    let mut curve = vec![0.0; k + 1];
    for rec in &records {
        let last = *rec.confidences.last().expect("starts with the original confidence");
        for (f, slot) in curve.iter_mut().enumerate() {
            *slot += rec.confidences.get(f).copied().unwrap_or(last);
        }
    }
    let n = records.len().max(1) as f64;
    curve.iter_mut().for_each(|c| *c /= n);
    let xs: Vec<f64> = (0..=k).map(|f| f as f64 / k as f64).collect();
    let changed = records.iter().filter(|r| r.changed()).count() as f64 / n;
    Ok(CounterfactualReport {
        auc: trapezoid(&xs, &curve),
        xs,
        curve,
        changed_fraction: changed,
        records,
    })
}

/// Whether negating every concept the rule mentions makes it false.
pub fn flip_all_falsifies(rule: &BooleanRule, concepts: &[bool]) -> Result<bool> {
    let mut flipped = concepts.to_vec();
    for lit in rule.literals() {
        let c = flipped
            .get_mut(lit.concept)
            .ok_or_else(|| Error::contract(format!("rule mentions c_{} beyond {} concepts", lit.concept, concepts.len())))?;
        *c = !*c;
    }
    Ok(!rule.evaluate(&flipped)?)
}
