//! Crisp rules extracted from fuzzy traces, and their global aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reasoner::LocalRuleTrace;
use crate::scalar::Scalar;

/// Threshold used to harden roles and relevances.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub concept: usize,
    pub positive: bool,
}

impl Literal {
    pub fn pos(concept: usize) -> Self {
        Self { concept, positive: true }
    }

    pub fn neg(concept: usize) -> Self {
        Self { concept, positive: false }
    }

    pub fn holds(self, value: bool) -> bool {
        value == self.positive
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            write!(f, "!")?;
        }
        write!(f, "c_{}", self.concept)
    }
}

impl FromStr for Literal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (positive, rest) = match s.strip_prefix('!') {
            Some(r) => (false, r.trim_start()),
            None => (true, s),
        };
        let concept = rest
            .strip_prefix("c_")
            .and_then(|i| i.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad literal `{s}`")))?;
        Ok(Self { concept, positive })
    }
}

/// A conjunction of literals predicting one class, kept sorted by concept.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BooleanRule {
    class: usize,
    literals: Vec<Literal>,
}

impl BooleanRule {
    pub fn new(class: usize, mut literals: Vec<Literal>) -> Result<Self> {
        literals.sort();
        if literals.windows(2).any(|w| w[0].concept == w[1].concept) {
            return Err(Error::contract(format!("rule for y_{class} repeats a concept")));
        }
        Ok(Self { class, literals })
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    /// Conjunction over `truth`; the empty rule is true.
    pub fn evaluate(&self, truth: &[bool]) -> Result<bool> {
        let mut value = true;
        for lit in &self.literals {
            let c = *truth.get(lit.concept).ok_or_else(|| {
                Error::contract(format!("rule mentions c_{} but only {} concepts given", lit.concept, truth.len()))
            })?;
            value &= lit.holds(c);
        }
        Ok(value)
    }

    /// Body only, `!c_0 & c_1`, or `true` when empty.
    pub fn body(&self) -> String {
        if self.literals.is_empty() {
            return "true".into();
        }
        self.literals.iter().map(Literal::to_string).collect::<Vec<_>>().join(" & ")
    }
}

impl fmt::Display for BooleanRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "y_{} <- {}", self.class, self.body())
    }
}

impl FromStr for BooleanRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, body) = s
            .split_once("<-")
            .ok_or_else(|| Error::Parse(format!("rule `{s}` has no `<-`")))?;
        let class = head
            .trim()
            .strip_prefix("y_")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad rule head `{}`", head.trim())))?;
        let body = body.trim();
        let literals = if body == "true" {
            Vec::new()
        } else {
            body.split('&').map(str::parse).collect::<Result<Vec<_>>>()?
        };
        BooleanRule::new(class, literals)
    }
}

impl Serialize for BooleanRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BooleanRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Keeps concept `i` when `r_i > θ`, positive when `φ_i > θ`.
pub fn booleanize<T: Scalar>(trace: &LocalRuleTrace<T>, threshold: f64) -> BooleanRule {
    let theta = T::lit(threshold);
    let literals = trace
        .relevances
        .iter()
        .zip(&trace.roles)
        .enumerate()
        .filter(|(_, (&r, _))| r > theta)
        .map(|(concept, (_, &phi))| Literal {
            concept,
            positive: phi > theta,
        })
        .collect();
    BooleanRule {
        class: trace.class,
        literals,
    }
}

pub fn evaluate_boolean(rule: &BooleanRule, truth: &[bool]) -> Result<bool> {
    rule.evaluate(truth)
}

/// Which class's rule represents a sample in the global explanation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    #[default]
    Predicted,
    Labeled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub class: usize,
    pub rule: BooleanRule,
    pub count: usize,
}

/// Per-class disjunction of distinct rules with occurrence counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalRuleSet {
    counts: BTreeMap<usize, BTreeMap<BooleanRule, usize>>,
}

impl GlobalRuleSet {
    pub fn add(&mut self, rule: BooleanRule) {
        *self.counts.entry(rule.class).or_default().entry(rule).or_insert(0) += 1;
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts.keys().copied()
    }

    /// Distinct rules of `class` ordered by descending count, then rule order.
    pub fn rules(&self, class: usize) -> Vec<(&BooleanRule, usize)> {
        let mut rules: Vec<_> = self
            .counts
            .get(&class)
            .map(|m| m.iter().map(|(r, &c)| (r, c)).collect())
            .unwrap_or_default();
        rules.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        rules
    }

    pub fn distinct(&self, class: usize) -> Vec<BooleanRule> {
        self.counts
            .get(&class)
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default()
    }

    pub fn total(&self, class: usize) -> usize {
        self.counts.get(&class).map(|m| m.values().sum()).unwrap_or(0)
    }

    pub fn records(&self) -> Vec<RuleRecord> {
        self.classes()
            .flat_map(|class| {
                self.rules(class).into_iter().map(move |(rule, count)| RuleRecord {
                    class,
                    rule: rule.clone(),
                    count,
                })
            })
            .collect()
    }

    /// One line per class: `y_j <- body | body`.
    pub fn render(&self) -> Vec<String> {
        self.classes()
            .map(|class| {
                let bodies: Vec<_> = self
                    .rules(class)
                    .iter()
                    .map(|(r, _)| if r.len() > 1 { format!("({})", r.body()) } else { r.body() })
                    .collect();
                format!("y_{class} <- {}", bodies.join(" | "))
            })
            .collect()
    }
}

pub fn aggregate_global(rules: impl IntoIterator<Item = BooleanRule>) -> GlobalRuleSet {
    let mut set = GlobalRuleSet::default();
    for rule in rules {
        set.add(rule);
    }
    set
}

/// Hardens a truth degree at [`DEFAULT_THRESHOLD`].
pub fn harden<T: Scalar>(values: &[T]) -> Vec<bool> {
    let theta = T::lit(DEFAULT_THRESHOLD);
    values.iter().map(|&v| v > theta).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(relevances: Vec<f64>, roles: Vec<f64>) -> LocalRuleTrace<f64> {
        let k = roles.len();
        LocalRuleTrace {
            class: 1,
            roles,
            relevances,
            literals: vec![0.0; k],
            guarded: vec![0.0; k],
            score: 0.0,
        }
    }

    #[test]
    fn booleanize_thresholds() {
        let rule = booleanize(&trace(vec![0.9, 0.2], vec![0.8, 0.1]), 0.5);
        assert_eq!(rule.literals(), &[Literal::pos(0)]);
        assert!(booleanize(&trace(vec![0.1, 0.4], vec![0.8, 0.1]), 0.5).is_empty());
    }

    #[test]
    fn evaluate_examples() {
        let rule = BooleanRule::new(1, vec![Literal::pos(1), Literal::neg(0)]).unwrap();
        assert!(evaluate_boolean(&rule, &[false, true]).unwrap());
        assert!(!evaluate_boolean(&rule, &[true, true]).unwrap());
        assert!(evaluate_boolean(&rule, &[false]).is_err());
        assert!(BooleanRule::new(0, vec![]).unwrap().evaluate(&[]).unwrap());
    }

    #[test]
    fn canonical_form_and_rendering() {
        let a = BooleanRule::new(1, vec![Literal::pos(1), Literal::neg(0)]).unwrap();
        let b = BooleanRule::new(1, vec![Literal::neg(0), Literal::pos(1)]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "y_1 <- !c_0 & c_1");
        assert_eq!("y_1 <- c_1 & !c_0".parse::<BooleanRule>().unwrap(), a);
        assert_eq!("y_0 <- true".parse::<BooleanRule>().unwrap().len(), 0);
        assert!(BooleanRule::new(0, vec![Literal::pos(2), Literal::neg(2)]).is_err());
        assert!("y_0 c_1".parse::<BooleanRule>().is_err());
        assert!("y_0 <- d_1".parse::<BooleanRule>().is_err());
    }

    #[test]
    fn aggregation_counts_and_orders() {
        let r1: BooleanRule = "y_1 <- !c_0 & c_1".parse().unwrap();
        let r2: BooleanRule = "y_1 <- c_0 & !c_1".parse().unwrap();
        let r0: BooleanRule = "y_0 <- c_0 & c_1".parse().unwrap();
        let set = aggregate_global([r2.clone(), r1.clone(), r2.clone(), r0.clone(), r2.clone()]);
        assert_eq!(set.rules(1), vec![(&r2, 3), (&r1, 1)]);
        assert_eq!(set.total(1), 4);
        let records = set.records();
        assert_eq!(records[0].rule, r0);
        assert_eq!(records[1].count, 3);
        assert_eq!(set.render()[1], "y_1 <- (c_0 & !c_1) | (!c_0 & c_1)");
        let json = serde_json::to_string(&records).unwrap();
        let back: Vec<RuleRecord> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn repeated_rule_is_one_entry() {
        let r: BooleanRule = "y_0 <- c_2".parse().unwrap();
        let set = aggregate_global(vec![r.clone(); 3]);
        assert_eq!(set.rules(0), vec![(&r, 3)]);
    }
}
