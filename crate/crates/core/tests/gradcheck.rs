//! Analytic gradients against central finite differences.

use concept_reasoner::autodiff::{AdamConfig, AdamState, ParamSet, Tensor};
use concept_reasoner::encoder::{concept_loss, ConceptEncoder, EncoderConfig};
use concept_reasoner::reasoner::{ConceptReasoner, ReasonerConfig};
use concept_reasoner::training::{concept_targets, one_hot, total_loss};
use concept_reasoner::{Result, Semantics};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

type Input = (Vec<f64>, Vec<usize>);

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Reduces `f(inputs)` to a scalar through fixed random weights and compares
/// every input coordinate's gradient with a central difference.
fn check<F>(name: &str, inputs: &[Input], f: F)
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64 + 17);
    let probe = f(&inputs
        .iter()
        .map(|(v, s)| Tensor::new(v.clone(), s).unwrap())
        .collect::<Vec<_>>())
    .unwrap();
    let weights = Tensor::new(uniform(&mut rng, probe.numel(), -1.0, 1.0), probe.shape()).unwrap();
    let loss = |ts: &[Tensor<f64>]| -> Tensor<f64> { f(ts).unwrap().mul(&weights).unwrap().sum() };

    let leaves: Vec<_> = inputs.iter().map(|(v, s)| Tensor::param(v.clone(), s).unwrap()).collect();
    loss(&leaves).backward().unwrap();

    for (i, (values, shape)) in inputs.iter().enumerate() {
        let analytic = leaves[i].grad().unwrap_or_else(|| vec![0.0; values.len()]);
        for j in 0..values.len() {
            let eval = |delta: f64| {
                let ts: Vec<_> = inputs
                    .iter()
                    .enumerate()
                    .map(|(q, (v, s))| {
                        let mut v = v.clone();
                        if q == i {
                            v[j] += delta;
                        }
                        Tensor::new(v, s).unwrap()
                    })
                    .collect();
                loss(&ts).item().unwrap()
            };
            let numeric = (eval(H) - eval(-H)) / (2.0 * H);
            let err = rel_err(analytic[j], numeric);
            assert!(
                err < TOL,
                "{name}: input {i} {shape:?} coordinate {j}: analytic {} numeric {numeric} (rel {err:e})",
                analytic[j]
            );
        }
    }
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(2024)
}

#[test]
fn elementwise_binary_ops_with_broadcasting() {
    let mut r = rng();
    let shapes: [(&[usize], &[usize]); 5] = [
        (&[3, 4], &[3, 4]),
        (&[3, 4], &[1, 4]),
        (&[3, 4], &[3, 1]),
        (&[2, 3, 4], &[4]),
        (&[3, 4], &[]),
    ];
    for (sa, sb) in shapes {
        let na: usize = sa.iter().product();
        let nb: usize = sb.iter().product();
        let a = (uniform(&mut r, na, -2.0, 2.0), sa.to_vec());
        let b = (uniform(&mut r, nb, 0.5, 2.0), sb.to_vec());
        let inputs = [a, b];
        check("add", &inputs, |t| t[0].add(&t[1]));
        check("sub", &inputs, |t| t[0].sub(&t[1]));
        check("mul", &inputs, |t| t[0].mul(&t[1]));
        check("div", &inputs, |t| t[0].div(&t[1]));
        check("b-sub", &inputs, |t| t[1].sub(&t[0]));
    }
}

fn separated(r: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let a = uniform(r, n, -1.0, 1.0);
    let b = a
        .iter()
        .map(|&x| x + if r.random_bool(0.5) { 1.0 } else { -1.0 } * r.random_range(0.05..0.5))
        .collect();
    (a, b)
}

#[test]
fn minimum_and_maximum_away_from_ties() {
    let mut r = rng();
    let (a, b) = separated(&mut r, 12);
    let inputs = [(a, vec![3, 4]), (b, vec![3, 4])];
    check("minimum", &inputs, |t| t[0].minimum(&t[1]));
    check("maximum", &inputs, |t| t[0].maximum(&t[1]));
}

#[test]
fn tie_gradient_goes_to_the_left_operand() {
    let a = Tensor::param(vec![0.3], &[1]).unwrap();
    let b = Tensor::param(vec![0.3], &[1]).unwrap();
    a.minimum(&b).unwrap().sum().backward().unwrap();
    assert_eq!(a.grad().unwrap(), vec![1.0]);
    assert_eq!(b.grad().unwrap(), vec![0.0]);
}

#[test]
fn unary_ops() {
    let mut r = rng();
    let x = [(uniform(&mut r, 12, -2.0, 2.0), vec![3, 4])];
    let pos = [(uniform(&mut r, 12, 0.2, 3.0), vec![3, 4])];
    let away: Vec<f64> = uniform(&mut r, 12, 0.05, 2.0)
        .into_iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { v } else { -v })
        .collect();
    check("neg", &x, |t| Ok(t[0].neg()));
    check("add_scalar", &x, |t| Ok(t[0].add_scalar(0.7)));
    check("mul_scalar", &x, |t| Ok(t[0].mul_scalar(-1.3)));
    check("rsub_scalar", &x, |t| Ok(t[0].rsub_scalar(1.0)));
    check("exp", &x, |t| Ok(t[0].exp()));
    check("ln", &pos, |t| Ok(t[0].ln()));
    check("sigmoid", &x, |t| t[0].sigmoid());
    check("leaky_relu", &[(away, vec![3, 4])], |t| t[0].leaky_relu(0.01));
}

#[test]
fn matmul_and_reductions() {
    let mut r = rng();
    let a = (uniform(&mut r, 12, -1.0, 1.0), vec![3, 4]);
    let b = (uniform(&mut r, 8, -1.0, 1.0), vec![4, 2]);
    check("matmul", &[a.clone(), b], |t| t[0].matmul(&t[1]));
    let x = [(uniform(&mut r, 24, -1.0, 1.0), vec![2, 3, 4])];
    check("sum", &x, |t| Ok(t[0].sum()));
    check("mean", &x, |t| Ok(t[0].mean()));
    for axis in 0..3 {
        check("sum_axis", &x, |t| t[0].sum_axis(axis, false));
        check("sum_axis_keep", &x, |t| t[0].sum_axis(axis, true));
        check("log_softmax", &x, |t| t[0].log_softmax(axis));
    }
}

#[test]
fn binary_cross_entropy_gradient() {
    let mut r = rng();
    let p = (uniform(&mut r, 12, 0.05, 0.95), vec![3, 4]);
    let target = Tensor::new((0..12).map(|i| (i % 2) as f64).collect(), &[3, 4]).unwrap();
    check("bce", &[p], |t| t[0].binary_cross_entropy(&target));
}

#[test]
fn shape_ops() {
    let mut r = rng();
    let x = (uniform(&mut r, 24, -1.0, 1.0), vec![2, 3, 4]);
    let y = (uniform(&mut r, 16, -1.0, 1.0), vec![2, 2, 4]);
    check("reshape", &[x.clone()], |t| t[0].reshape(&[6, 4]));
    check("narrow", &[x.clone()], |t| t[0].narrow(1, 1, 2));
    check("narrow_last", &[x.clone()], |t| t[0].narrow(2, 3, 1));
    check("concat", &[x, y], |t| Tensor::concat(&[t[0].clone(), t[1].clone()], 1));
}

#[test]
fn fuzzy_connectives_both_semantics() {
    let mut r = rng();
    let (a, b) = separated(&mut r, 12);
    let squash = |v: Vec<f64>| v.into_iter().map(|x| 0.5 + 0.4 * x.tanh()).collect::<Vec<_>>();
    let (a, b) = (squash(a), squash(b));
    let inputs = [(a, vec![3, 4]), (b, vec![3, 4])];
    for sem in Semantics::ALL {
        check("neg_t", &inputs, |t| Ok(sem.neg_t(&t[0])));
        check("conj_t", &inputs, |t| sem.conj_t(&t[0], &t[1]));
        check("disj_t", &inputs, |t| sem.disj_t(&t[0], &t[1]));
        check("implies_t", &inputs, |t| sem.implies_t(&t[0], &t[1]));
        check("conj_fold_t", &inputs, |t| {
            sem.conj_fold_t(&[t[0].narrow(1, 0, 1)?, t[0].narrow(1, 1, 1)?, t[1].narrow(1, 2, 1)?])
        });
    }
    // The product biconditional is smooth everywhere.
    check("iff_t", &inputs, |t| Semantics::Product.iff_t(&t[0], &t[1]));
}

/// Finite-difference check of a scalar loss over every value of a parameter set.
fn check_params<F>(name: &str, params: &mut ParamSet<f64>, stride: usize, loss: F)
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    let leaves = params.leaves(true);
    loss(&leaves).backward().unwrap();
    let grads = ParamSet::collect_grads(&leaves);
    let mut checked = 0;
    for p in 0..params.len() {
        let analytic = grads[p].clone().unwrap_or_else(|| vec![0.0; params.iter().nth(p).unwrap().values.len()]);
        for j in (0..analytic.len()).step_by(stride) {
            let mut eval = |delta: f64| {
                let param = params.iter_mut().nth(p).unwrap();
                let orig = param.values[j];
                param.values[j] = orig + delta;
                let v = loss(&params.leaves(false)).item().unwrap();
                params.iter_mut().nth(p).unwrap().values[j] = orig;
                v
            };
            let numeric = (eval(H) - eval(-H)) / (2.0 * H);
            let err = rel_err(analytic[j], numeric);
            let pname = &params.iter().nth(p).unwrap().name;
            assert!(err < TOL, "{name}: {pname}[{j}]: analytic {} numeric {numeric}", analytic[j]);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

fn small_encoder(seed: u64) -> ConceptEncoder<f64> {
    let cfg = EncoderConfig {
        hidden_sizes: vec![6, 5],
        ..EncoderConfig::new(3, 2, 4)
    };
    ConceptEncoder::new(cfg, seed).unwrap()
}

#[test]
fn encoder_concept_loss_gradient() {
    let mut r = rng();
    let mut enc = small_encoder(5);
    let x = Tensor::new(uniform(&mut r, 15, -1.0, 1.0), &[5, 3]).unwrap();
    let targets = concept_targets::<f64>(&[true, false, false, true, true, true, false, false, true, false], 2).unwrap();
    let e = enc.clone();
    check_params("encoder", &mut enc.params, 1, |leaves| {
        let bundle = e.encode(leaves, &x).unwrap();
        concept_loss(&bundle, &targets).unwrap()
    });
}

fn reasoner(semantics: Semantics, seed: u64) -> ConceptReasoner<f64> {
    let cfg = ReasonerConfig {
        hidden: 5,
        temperature: 2.0,
        semantics,
        ..ReasonerConfig::new(4, 2)
    };
    ConceptReasoner::new(cfg, seed).unwrap()
}

#[test]
fn reasoner_and_total_loss_gradient() {
    let mut r = rng();
    let batch = 6;
    let truth = uniform(&mut r, batch * 3, 0.05, 0.95);
    let emb = uniform(&mut r, batch * 3 * 4, -1.0, 1.0);
    let labels = [0, 1, 1, 0, 1, 0];
    let y = one_hot::<f64>(&labels, 2).unwrap();
    for sem in Semantics::ALL {
        let mut model = reasoner(sem, 9);
        let m = model.clone();
        let truth_t = Tensor::new(truth.clone(), &[batch, 3]).unwrap();
        let emb_t = Tensor::new(emb.clone(), &[batch, 3, 4]).unwrap();
        let bundle = concept_reasoner::encoder::ConceptBundle { truth: truth_t, embeddings: emb_t };
        check_params("reasoner", &mut model.params, 1, |leaves| {
            let out = m.forward(leaves, &bundle).unwrap();
            out.scores.binary_cross_entropy(&y).unwrap()
        });
    }
}

#[test]
fn joint_total_loss_gradient() {
    let mut r = rng();
    let enc = small_encoder(3);
    let dcr = reasoner(Semantics::Product, 4);
    let mut params = enc.params.clone();
    for p in dcr.params.iter() {
        params.push(p.name.clone(), &p.shape, p.values.clone());
    }
    let n_enc = enc.params.len();
    let x = Tensor::new(uniform(&mut r, 12, -1.0, 1.0), &[4, 3]).unwrap();
    let c = concept_targets::<f64>(&[true, false, false, true, true, true, false, false], 2).unwrap();
    let y = one_hot::<f64>(&[1, 1, 0, 0], 2).unwrap();
    check_params("joint", &mut params, 2, |leaves| {
        let bundle = enc.encode(&leaves[..n_enc], &x).unwrap();
        let out = dcr.forward(&leaves[n_enc..], &bundle).unwrap();
        total_loss(&out.scores, &y, &bundle.truth, &c, 0.7).unwrap()
    });
}

#[test]
fn matmul_gradient_is_ones_times_transpose() {
    let a = Tensor::param(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
    let b = Tensor::new(vec![5.0, 6.0, 7.0, 8.0], &[2, 2]).unwrap();
    a.matmul(&b).unwrap().sum().backward().unwrap();
    // ones(2×2) · bᵀ
    assert_eq!(a.grad().unwrap(), vec![11.0, 15.0, 11.0, 15.0]);
}

#[test]
fn sigmoid_weight_times_concept() {
    let w = Tensor::<f64>::param(vec![0.0], &[]).unwrap();
    let c = Tensor::scalar(1.0);
    let y = w.sigmoid().unwrap().mul(&c).unwrap();
    y.backward().unwrap();
    assert!((y.item().unwrap() - 0.5).abs() < 1e-15);
    assert!((w.grad().unwrap()[0] - 0.25).abs() < 1e-15);
}

#[test]
fn shared_leaf_accumulates() {
    let w = Tensor::param(vec![3.0], &[]).unwrap();
    let loss = w.mul(&w).unwrap().add(&w.mul(&w).unwrap()).unwrap();
    loss.backward().unwrap();
    assert_eq!(w.grad().unwrap(), vec![12.0]);
}

#[test]
fn repeated_backward_accumulates_until_zeroed() {
    let w = Tensor::param(vec![2.0], &[]).unwrap();
    w.mul(&w).unwrap().backward().unwrap();
    w.mul(&w).unwrap().backward().unwrap();
    assert_eq!(w.grad().unwrap(), vec![8.0]);
    w.zero_grad();
    assert!(w.grad().is_none());
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut params = ParamSet::<f64>::new();
    params.push("w", &[2], vec![1.0, -1.0]);
    let mut adam = AdamState::new(&params, AdamConfig::default());
    adam.step(&mut params, &[Some(vec![3.0, -0.001])]).unwrap();
    let v = &params.iter().next().unwrap().values;
    assert!((v[0] - 0.99).abs() < 1e-6, "{v:?}");
    assert!((v[1] - -0.99).abs() < 1e-4, "{v:?}");
    assert_eq!(adam.steps(), 1);
}

#[test]
fn no_grad_inputs_produce_no_gradient() {
    let a = Tensor::new(vec![1.0, 2.0], &[2]).unwrap();
    let w = Tensor::param(vec![0.5, 0.5], &[2]).unwrap();
    let y = a.mul(&w).unwrap().sum();
    y.backward().unwrap();
    assert_eq!(w.grad().unwrap(), vec![1.0, 2.0]);
    assert!(a.grad().is_none());
    assert!(!a.exp().requires_grad());
}
