//! Every acceptance criterion at its stated tolerance, one verdict line each.

use std::collections::{BTreeMap, BTreeSet};

use concept_reasoner::analysis::{extract_rules, global_rules, mean_rule_length, rule_error_rate, ConceptSource};
use concept_reasoner::autodiff::Tensor;
use concept_reasoner::datasets::{split, DatasetKind, SplitTag};
use concept_reasoner::evaluation::{
    baseline_logreg, counterfactual_report, flip_all_falsifies, roc_auc_macro, sensitivity, BaselineData, LogRegConfig,
    SensitivityConfig,
};
use concept_reasoner::fuzzy::TruthDegree;
use concept_reasoner::pipeline::{fit, ConceptModel};
use concept_reasoner::reasoner::{relevance_values, LocalRuleTrace};
use concept_reasoner::rules::{booleanize, AggregationMode, DEFAULT_THRESHOLD};
use concept_reasoner::training::{Checkpoint, TrainConfig};
use concept_reasoner::Semantics;
use reasoner_acceptance::{fmt_all, mean, note, runs, verdict, Run};

const MAX_RULE_ERROR: f64 = 0.005;
const LENGTH_TOLERANCE: f64 = 0.1;
const MIN_DOT_GAP: f64 = 0.15;
const MAX_SENSITIVITY: f64 = 0.05;
const CF_AUC_RANGE: (f64, f64) = (0.1, 0.6);

fn test_concepts(run: &Run) -> Vec<bool> {
    run.concepts(SplitTag::Test)
}

#[test]
fn criterion_1_rule_recovery() {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut exact = 0;
    for kind in [DatasetKind::Xor, DatasetKind::Trig] {
        let reference = kind.ground_truth_rules().expect("reference rules");
        let expect: BTreeSet<_> = reference.iter().cloned().collect();
        for run in runs(kind) {
            let concepts = test_concepts(run);
            let report =
                rule_error_rate(&run.test, &concepts, &reference, ConceptSource::Predicted, DEFAULT_THRESHOLD).unwrap();
            let covered: BTreeMap<_, usize> = report
                .groups
                .iter()
                .flat_map(|g| g.extracted.iter().map(|(r, &n)| (r.clone(), n)))
                .fold(BTreeMap::new(), |mut acc, (r, n)| {
                    *acc.entry(r).or_insert(0) += n;
                    acc
                });
            let distinct: BTreeSet<_> = covered.keys().cloned().collect();
            let rate = report.max_group_rate();
            worst = worst.max(rate);
            let same = distinct == expect;
            exact += usize::from(same);
            pass &= same && rate <= MAX_RULE_ERROR;
            let extra: Vec<String> = covered
                .iter()
                .filter(|(r, _)| !expect.contains(*r))
                .map(|(r, n)| format!("`{r}` x{n}"))
                .collect();
            let gt =
                rule_error_rate(&run.test, &concepts, &reference, ConceptSource::GroundTruth, DEFAULT_THRESHOLD).unwrap();
            let global = global_rules(&run.test, None, AggregationMode::Predicted, DEFAULT_THRESHOLD).unwrap();
            let all: usize = global.classes().map(|c| global.distinct(c).len()).sum();
            note(
                "1",
                &format!(
                    "{kind} seed {}: rule set exact {same} (extra: [{}]), worst rule error {rate:.4}, \
                     {:.4} when evaluated on ground-truth concepts; {all} distinct rules over all test samples",
                    run.seed,
                    extra.join(", "),
                    gt.max_group_rate(),
                ),
            );
        }
    }
    verdict(
        "1",
        pass,
        &format!(
            "XOR/Trig: rule set equals the reference on {exact}/10 runs, worst per-rule error {worst:.4} (limit {MAX_RULE_ERROR})"
        ),
    );
    assert!(pass, "criterion 1 failed");
}

#[test]
fn criterion_2_rule_complexity() {
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, target) in [(DatasetKind::Xor, 2.0), (DatasetKind::Trig, 3.0), (DatasetKind::Dot, 2.0)] {
        let lengths: Vec<f64> = runs(kind)
            .iter()
            .map(|r| mean_rule_length(&extract_rules(&r.test, None, AggregationMode::Predicted, DEFAULT_THRESHOLD).unwrap()))
            .collect();
        pass &= lengths.iter().all(|l| (l - target).abs() <= LENGTH_TOLERANCE);
        parts.push(format!("{kind} [{}] (target {target:.2})", fmt_all(&lengths)));
    }
    verdict("2", pass, &format!("mean rule length at tau=100: {}", parts.join("; ")));
    assert!(pass, "criterion 2 failed");
}

fn dcr_and_logreg_auc(run: &Run) -> (f64, f64) {
    let test_y = run.labels(SplitTag::Test);
    let train_y = run.labels(SplitTag::Train);
    let dcr = roc_auc_macro(&run.test.scores, &test_y, run.dataset.n_classes).unwrap();
    let data = BaselineData {
        train_x: &run.train.truth,
        train_y: &train_y,
        test_x: &run.test.truth,
        test_y: &test_y,
        n_inputs: run.dataset.n_concepts,
        n_classes: run.dataset.n_classes,
    };
    let (_, lr) = baseline_logreg(data, &LogRegConfig::default()).unwrap();
    (dcr, lr)
}

#[test]
fn criterion_3_embedding_advantage_on_dot() {
    let (dcr, lr): (Vec<f64>, Vec<f64>) = runs(DatasetKind::Dot).iter().map(dcr_and_logreg_auc).unzip();
    let gap = mean(&dcr) - mean(&lr);
    let pass = gap >= MIN_DOT_GAP;
    verdict(
        "3",
        pass,
        &format!("Dot AUC gap {gap:.4} (limit {MIN_DOT_GAP}); DCR [{}], logistic regression [{}]", fmt_all(&dcr), fmt_all(&lr)),
    );
    assert!(pass, "criterion 3 failed");
}

#[test]
fn criterion_4_sensitivity() {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [DatasetKind::Xor, DatasetKind::Trig] {
        let mut scaled = Vec::new();
        let mut unit = Vec::new();
        for run in runs(kind) {
            let features = run.dataset.gather_features(run.rows(SplitTag::Test));
            let cfg = SensitivityConfig {
                seed: run.seed,
                ..SensitivityConfig::standardized(&run.dataset)
            };
            scaled.push(sensitivity(&run.trained.model, &features, &cfg).unwrap().auc);
            let raw = SensitivityConfig {
                seed: run.seed,
                ..SensitivityConfig::default()
            };
            unit.push(sensitivity(&run.trained.model, &features, &raw).unwrap().auc);
        }
        pass &= scaled.iter().all(|&a| a <= MAX_SENSITIVITY);
        parts.push(format!("{kind} [{}]", fmt_all(&scaled)));
        note("4", &format!("{kind} with radii in raw feature units: [{}]", fmt_all(&unit)));
    }
    verdict(
        "4",
        pass,
        &format!("sensitivity AUC, radii in units of feature std (limit {MAX_SENSITIVITY}): {}", parts.join("; ")),
    );
    assert!(pass, "criterion 4 failed");
}

#[test]
fn criterion_5_counterfactual_confidence() {
    let mut aucs = Vec::new();
    let (mut falsified, mut total) = (0usize, 0usize);
    for run in runs(DatasetKind::Xor) {
        let report = counterfactual_report(&run.test, run.config.semantics, DEFAULT_THRESHOLD).unwrap();
        aucs.push(report.auc);
        for rec in &report.records {
            total += 1;
            if flip_all_falsifies(&rec.rule, &rec.row.old_concepts).unwrap() {
                falsified += 1;
            } else {
                note(
                    "5",
                    &format!(
                        "seed {} sample {}: rule `{}` still holds after flipping; truth {:?}, scores {:?}",
                        run.seed,
                        rec.sample,
                        rec.rule,
                        run.test.truth_row(rec.sample),
                        run.test.score_row(rec.sample)
                    ),
                );
            }
        }
    }
    let auc = mean(&aucs);
    let auc_ok = (CF_AUC_RANGE.0..=CF_AUC_RANGE.1).contains(&auc);
    let flip_ok = falsified == total;
    verdict(
        "5",
        auc_ok && flip_ok,
        &format!(
            "XOR confidence AUC {auc:.4} in [{}, {}]: {auc_ok} (per seed [{}]); flip-all falsifies {falsified}/{total}",
            CF_AUC_RANGE.0,
            CF_AUC_RANGE.1,
            fmt_all(&aucs)
        ),
    );
    assert!(auc_ok && flip_ok, "criterion 5 failed");
}

fn degree(x: f64) -> TruthDegree<f64> {
    TruthDegree::new(x).unwrap()
}

fn fuzzy_algebra() -> Result<usize, String> {
    let mut checks = 0;
    let grid: Vec<f64> = (0..=20).map(|i| f64::from(i) / 20.0).collect();
    for sem in Semantics::ALL {
        for a in [false, true] {
            for b in [false, true] {
                let (x, y) = (TruthDegree::<f64>::from_bool(a), TruthDegree::from_bool(b));
                let bit = |v: bool| f64::from(u8::from(v));
                let table = [
                    (sem.conj(x, y).value(), bit(a && b)),
                    (sem.disj(x, y).value(), bit(a || b)),
                    (sem.implies(x, y).value(), bit(!a || b)),
                    (sem.iff(x, y).value(), bit(a == b)),
                    (sem.neg(x).value(), bit(!a)),
                ];
                for (got, want) in table {
                    checks += 1;
                    if got != want {
                        return Err(format!("{sem:?} truth table at ({a}, {b}): {got} vs {want}"));
                    }
                }
            }
        }
        for &a in &grid {
            for &b in &grid {
                let (x, y) = (degree(a), degree(b));
                let close = |p: f64, q: f64| (p - q).abs() < 1e-12;
                let laws = [
                    close(sem.conj(x, TruthDegree::truth()).value(), a),
                    close(sem.disj(x, TruthDegree::falsity()).value(), a),
                    close(sem.conj(x, y).value(), sem.conj(y, x).value()),
                    close(sem.disj(x, y).value(), sem.disj(y, x).value()),
                    close(sem.neg(sem.conj(x, y)).value(), sem.disj(sem.neg(x), sem.neg(y)).value()),
                    close(sem.neg(sem.disj(x, y)).value(), sem.conj(sem.neg(x), sem.neg(y)).value()),
                ];
                checks += laws.len();
                if !laws.iter().all(|&l| l) {
                    return Err(format!("{sem:?} algebra law fails at ({a}, {b}): {laws:?}"));
                }
            }
        }
    }
    Ok(checks)
}

fn gradient_checks() -> Result<usize, String> {
    let h = 1e-5;
    let f = |v: &[Tensor<f64>]| -> Tensor<f64> {
        let (a, b) = (&v[0], &v[1]);
        let m = a.matmul(b).unwrap();
        let z = m.sigmoid().unwrap().mul(&m.exp().add_scalar(1.0).ln()).unwrap();
        let p = z.log_softmax(1).unwrap().exp();
        let norm = a.narrow(1, 0, 1).unwrap().mul(a).unwrap().sum_axis(1, true).unwrap().add_scalar(1.5);
        let mixed = p.div(&norm).unwrap();
        let q = Semantics::Product.implies_t(&p, &mixed.sigmoid().unwrap()).unwrap();
        let target = Tensor::full(q.shape(), 0.3).unwrap();
        let side = Tensor::concat(&[m.leaky_relu(0.1).unwrap(), p], 1).unwrap().mean();
        q.binary_cross_entropy(&target).unwrap().add(&side).unwrap()
    };
    let a0: Vec<f64> = (0..6).map(|i| (f64::from(i) * 1.3).sin()).collect();
    let b0: Vec<f64> = (0..8).map(|i| (f64::from(i) * 0.7 + 0.4).cos() * 0.9 + 0.05).collect();
    let inputs = [(a0, vec![3, 2]), (b0, vec![2, 4])];
    let leaves: Vec<_> = inputs.iter().map(|(v, s)| Tensor::param(v.clone(), s).unwrap()).collect();
    f(&leaves).backward().unwrap();
    let mut checks = 0;
    for (i, (values, shape)) in inputs.iter().enumerate() {
        let grad = leaves[i].grad().unwrap();
        for j in 0..values.len() {
            let eval = |d: f64| {
                let ts: Vec<_> = inputs
                    .iter()
                    .enumerate()
                    .map(|(q, (v, s))| {
                        let mut v = v.clone();
                        if q == i {
                            v[j] += d;
                        }
                        Tensor::new(v, s).unwrap()
                    })
                    .collect();
                f(&ts).item().unwrap()
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (grad[j] - numeric).abs() / grad[j].abs().max(numeric.abs()).max(1e-3);
            checks += 1;
            if rel >= 1e-4 {
                return Err(format!("input {i} {shape:?}[{j}]: analytic {} numeric {numeric}", grad[j]));
            }
        }
    }
    Ok(checks)
}

fn boolean_oracle() -> Result<usize, String> {
    let mut checks = 0;
    for sem in Semantics::ALL {
        for k in 1..=4usize {
            let n = 1usize << k;
            let bits = |w: usize| -> Vec<bool> { (0..k).map(|i| w >> i & 1 == 1).collect() };
            let deg = |b: &[bool]| -> Vec<f64> { b.iter().map(|&x| f64::from(u8::from(x))).collect() };
            for phi in 0..n {
                for rel in 0..n {
                    for c in 0..n {
                        let truth = bits(c);
                        let tr = LocalRuleTrace::execute(sem, 0, deg(&bits(phi)), deg(&bits(rel)), &deg(&truth)).unwrap();
                        let rule = booleanize(&tr, DEFAULT_THRESHOLD);
                        checks += 1;
                        if tr.score != f64::from(u8::from(rule.evaluate(&truth).unwrap())) {
                            return Err(format!("{sem:?} k={k}: {rule} on {truth:?} scored {}", tr.score));
                        }
                    }
                }
            }
        }
    }
    Ok(checks)
}

fn temperature_monotonicity() -> Result<usize, String> {
    let taus = [0.01, 0.1, 1.0, 10.0, 100.0];
    let mut checks = 0;
    for k in 2..=6usize {
        for v in 0..40usize {
            let logits: Vec<f64> = (0..k).map(|i| ((v * 7 + i * 3) as f64 * 0.91).sin() * 4.0).collect();
            let rs: Vec<Vec<f64>> = taus.iter().map(|&t| relevance_values(&logits, t).unwrap()).collect();
            for w in rs.windows(2) {
                for (lo, hi) in w[0].iter().zip(&w[1]) {
                    checks += 1;
                    if lo > hi {
                        return Err(format!("relevance decreased with temperature on {logits:?}"));
                    }
                }
            }
        }
    }
    Ok(checks)
}

fn irrelevance_invariance() -> Result<usize, String> {
    let mut checks = 0;
    let grid = [0.0, 0.2, 0.5, 0.8, 1.0];
    for sem in Semantics::ALL {
        for &phi in &grid {
            for &c_other in &grid {
                for &base in &grid {
                    let exec = |c0: f64| {
                        LocalRuleTrace::execute(sem, 0, vec![phi, 0.7], vec![0.0, 0.9], &[c0, c_other]).unwrap().score
                    };
                    for &changed in &grid {
                        checks += 1;
                        if exec(base) != exec(changed) {
                            return Err(format!("{sem:?}: irrelevant concept changed the score at phi={phi}"));
                        }
                    }
                }
            }
        }
    }
    Ok(checks)
}

fn checkpoint_round_trip() -> Result<usize, String> {
    let mut ds = DatasetKind::Xor.generate(200, 6).unwrap();
    split(&mut ds, 6);
    let cfg = TrainConfig {
        encoder_epochs: 2,
        dcr_epochs: 2,
        embedding_size: 4,
        hidden_sizes: vec![8],
        seed: 6,
        ..TrainConfig::default()
    };
    let trained = fit::<f64>(&ds, &cfg).map_err(|e| e.to_string())?;
    let ckpt = trained.checkpoint().unwrap();
    let path = std::env::temp_dir().join(format!("reasoner-acceptance-{}.json", std::process::id()));
    ckpt.save(&path).map_err(|e| e.to_string())?;
    let first = std::fs::read(&path).unwrap();
    let loaded = Checkpoint::load(&path).map_err(|e| e.to_string())?;
    loaded.save(&path).map_err(|e| e.to_string())?;
    let second = std::fs::read(&path).unwrap();
    let _ = std::fs::remove_file(&path);
    if first != second || loaded != ckpt {
        return Err("save/load/save changed the checkpoint".into());
    }
    let features = ds.gather_features(&ds.splits.test);
    let before = trained.model.infer(&features).unwrap().1;
    let after = ConceptModel::<f64>::from_checkpoint(&loaded).unwrap().infer(&features).unwrap().1;
    if before.scores != after.scores || before.truth != after.truth {
        return Err("reloaded model infers differently".into());
    }
    Ok(2 + before.scores.len())
}

#[test]
fn criterion_6_property_suites() {
    let suites: [(&str, fn() -> Result<usize, String>); 6] = [
        ("fuzzy algebra", fuzzy_algebra),
        ("gradient check", gradient_checks),
        ("booleanize oracle k<=4", boolean_oracle),
        ("temperature monotonicity", temperature_monotonicity),
        ("irrelevance invariance", irrelevance_invariance),
        ("checkpoint round trip", checkpoint_round_trip),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, suite) in suites {
        match suite() {
            Ok(n) => parts.push(format!("{name} ok ({n} checks)")),
            Err(e) => {
                pass = false;
                parts.push(format!("{name} FAILED: {e}"));
            }
        }
    }
    verdict("6", pass, &parts.join("; "));
    assert!(pass, "criterion 6 failed");
}
