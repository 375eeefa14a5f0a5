//! Rule execution on Boolean inputs against classical evaluation.

use concept_reasoner::reasoner::LocalRuleTrace;
use concept_reasoner::rules::{booleanize, BooleanRule, Literal, DEFAULT_THRESHOLD};
use concept_reasoner::Semantics;
use proptest::prelude::*;

fn bits(word: usize, k: usize) -> Vec<bool> {
    (0..k).map(|i| word >> i & 1 == 1).collect()
}

fn degrees(b: &[bool]) -> Vec<f64> {
    b.iter().map(|&x| f64::from(x as u8)).collect()
}

#[test]
fn boolean_execution_matches_extracted_rule_exhaustively() {
    for sem in Semantics::ALL {
        for k in 1..=4 {
            let n = 1 << k;
            for phi in 0..n {
                for rel in 0..n {
                    let roles = degrees(&bits(phi, k));
                    let relevances = degrees(&bits(rel, k));
                    for c in 0..n {
                        let truth = bits(c, k);
                        let trace =
                            LocalRuleTrace::execute(sem, 0, roles.clone(), relevances.clone(), &degrees(&truth))
                                .unwrap();
                        let rule = booleanize(&trace, DEFAULT_THRESHOLD);
                        let expect = rule.evaluate(&truth).unwrap();
                        assert_eq!(trace.score, f64::from(expect as u8), "{sem:?} k={k} {rule} on {truth:?}");
                        assert_eq!(trace.recompute_score(sem).unwrap(), trace.score);
                    }
                }
            }
        }
    }
}

#[test]
fn booleanized_rule_lists_relevant_concepts_with_their_roles() {
    let trace =
        LocalRuleTrace::execute(Semantics::Goedel, 2, vec![0.9, 0.1, 0.8], vec![0.7, 0.9, 0.2], &[1.0, 0.0, 0.3])
            .unwrap();
    let rule = booleanize(&trace, DEFAULT_THRESHOLD);
    assert_eq!(rule, BooleanRule::new(2, vec![Literal::pos(0), Literal::neg(1)]).unwrap());
    assert_eq!(rule.to_string(), "y_2 <- c_0 & !c_1");
}

#[test]
fn all_irrelevant_rule_is_true() {
    for sem in Semantics::ALL {
        let trace = LocalRuleTrace::execute(sem, 0, vec![0.3, 0.7], vec![0.0, 0.0], &[0.2, 0.9]).unwrap();
        assert_eq!(trace.score, 1.0);
        assert!(booleanize(&trace, DEFAULT_THRESHOLD).is_empty());
    }
}

#[test]
fn mismatched_lengths_are_shape_errors() {
    let err = LocalRuleTrace::execute(Semantics::Goedel, 0, vec![0.5], vec![0.5, 0.5], &[0.5, 0.5]);
    assert!(matches!(err, Err(concept_reasoner::Error::Shape(_))));
}

fn semantics() -> impl Strategy<Value = Semantics> {
    prop_oneof![Just(Semantics::Goedel), Just(Semantics::Product)]
}

fn case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, usize, f64)> {
    (1usize..6).prop_flat_map(|k| {
        (
            proptest::collection::vec(0.0..=1.0f64, k),
            proptest::collection::vec(0.0..=1.0f64, k),
            proptest::collection::vec(0.0..=1.0f64, k),
            0..k,
            0.0..=1.0f64,
        )
    })
}

proptest! {
    #[test]
    fn irrelevant_concepts_do_not_affect_the_score(sem in semantics(), (roles, mut rel, truth, i, other) in case()) {
        rel[i] = 0.0;
        let a = LocalRuleTrace::execute(sem, 0, roles.clone(), rel.clone(), &truth).unwrap();
        let mut changed = truth.clone();
        changed[i] = other;
        let b = LocalRuleTrace::execute(sem, 0, roles, rel, &changed).unwrap();
        prop_assert_eq!(a.score, b.score);
        prop_assert_eq!(a.guarded[i], 1.0);
    }

    #[test]
    fn score_is_a_unit_degree_below_every_guard(sem in semantics(), (roles, rel, truth, _, _) in case()) {
        let tr = LocalRuleTrace::execute(sem, 0, roles, rel, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&tr.score));
        for &g in &tr.guarded {
            prop_assert!(tr.score <= g + 1e-12);
        }
    }

    #[test]
    fn rule_text_round_trips(k in 1usize..6, mask in 0usize..32, signs in 0usize..32, class in 0usize..4) {
        let lits: Vec<_> = (0..k)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| Literal { concept: i, positive: signs >> i & 1 == 1 })
            .collect();
        let rule = BooleanRule::new(class, lits).unwrap();
        let parsed: BooleanRule = rule.to_string().parse().unwrap();
        prop_assert_eq!(parsed, rule);
    }
}
