use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Central finite differences of a scalar function of one array.
fn finite_difference(f: &dyn Fn(&Array) -> f64, x: &Array, h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut plus = x.clone();
            plus.values_mut()[i] += h;
            let mut minus = x.clone();
            minus.values_mut()[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

fn assert_close_grad(analytic: &[f64], numeric: &[f64], what: &str) {
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs());
        assert!(
            abs < 1e-6 || rel < 1e-4,
            "{what}[{i}]: analytic {a} vs numeric {n} (rel {rel:e})"
        );
    }
}

/// Checks d(sum(w ⊙ op(x)))/dx against finite differences, with random `w` so
/// that every output element contributes with a distinct weight.
fn check_unary(name: &str, op: impl Fn(&mut Graph, Var) -> Var, sample: impl Fn(&mut ChaCha8Rng) -> f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let x = Array::matrix(2, 3, (0..6).map(|_| sample(&mut rng)).collect());
        let probe = {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let y = op(&mut g, xv);
            g.value(y).clone()
        };
        let w = Array::from_shape(probe.shape(), (0..probe.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let eval = |x: &Array| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let y = op(&mut g, xv);
            let wv = g.constant(w.clone());
            let p = g.mul(y, wv).unwrap();
            { let o = g.sum(p).unwrap(); g.value(o).item() }
        };
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let y = op(&mut g, xv);
        let wv = g.constant(w.clone());
        let p = g.mul(y, wv).unwrap();
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        let numeric = finite_difference(&eval, &x, 1e-5);
        assert_close_grad(grads.wrt(xv).values(), &numeric, name);
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-2.0..2.0)
}

#[test]
fn tanh_of_zero_is_zero() {
    let mut g = Graph::new();
    let x = g.constant(Array::vector(vec![0.0]));
    let y = g.tanh(x).unwrap();
    assert_eq!(g.value(y).values(), &[0.0]);
}

#[test]
fn log_sum_exp_of_zeros_and_its_gradient() {
    let mut g = Graph::new();
    let x = g.leaf(Array::vector(vec![0.0, 0.0]));
    let y = g.log_sum_exp(x).unwrap();
    assert!((g.value(y).item() - 2f64.ln()).abs() < 1e-15);
    let grads = g.backward(y).unwrap();
    assert_eq!(grads.wrt(x).values(), &[0.5, 0.5]);
}

#[test]
fn log_sum_exp_is_overflow_safe() {
    let mut g = Graph::new();
    let x = g.constant(Array::vector(vec![1000.0, 999.0, -5.0]));
    let y = g.log_sum_exp(x).unwrap();
    let expect = 1000.0 + (1.0 + (-1.0f64).exp() + (-1005.0f64).exp()).ln();
    assert!(g.value(y).item().is_finite());
    assert!((g.value(y).item() - expect).abs() < 1e-12);
}

#[test]
fn square_gradient() {
    let mut g = Graph::new();
    let x = g.leaf(Array::scalar(3.0));
    let y = g.mul(x, x).unwrap();
    let grads = g.backward(y).unwrap();
    assert_eq!(grads.wrt(x).item(), 6.0);
}

#[test]
fn zero_weight_mlp_outputs_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(MlpSpec::new(3, &[4, 5], Activation::Relu, 2), &mut store, "net", &mut rng);
    for a in store.arrays_mut() {
        a.values_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut g = Graph::new();
    let bound = store.bind(&mut g);
    let x = g.constant(Array::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.1, 9.0]));
    let y = mlp.forward(&mut g, &bound, x).unwrap();
    assert!(g.value(y).values().iter().all(|&v| v == 0.0));
    assert_eq!(mlp.forward_row(&store, &[1.0, 2.0, 3.0]), vec![0.0, 0.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut g = Graph::new();
    let x = g.leaf(Array::vector(vec![1.0, 2.0]));
    let y = g.tanh(x).unwrap();
    assert!(matches!(g.backward(y), Err(AutodiffError::NotScalar { .. })));
}

#[test]
fn shape_mismatch_names_node() {
    let mut g = Graph::new();
    let a = g.constant(Array::matrix(2, 3, vec![0.0; 6]));
    let b = g.constant(Array::matrix(2, 3, vec![0.0; 6]));
    let err = g.matmul(a, b).unwrap_err();
    match err {
        AutodiffError::ShapeMismatch { node, op, .. } => {
            assert_eq!(node, 2);
            assert_eq!(op, "matmul");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn non_finite_intermediate_reports_node() {
    let mut g = Graph::new();
    let a = g.constant(Array::vector(vec![0.0]));
    let err = g.log(a).unwrap_err();
    assert_eq!(err, AutodiffError::NonFinite { node: 1, op: "log" });
}

#[test]
fn elementwise_primitives_match_finite_differences() {
    check_unary("relu", |g, x| g.relu(x).unwrap(), |r| {
        // keep away from the kink
        let v: f64 = normal(r);
        if v.abs() < 1e-3 { 0.5 } else { v }
    });
    check_unary("tanh", |g, x| g.tanh(x).unwrap(), normal);
    check_unary("exp", |g, x| g.exp(x).unwrap(), normal);
    check_unary("log", |g, x| g.log(x).unwrap(), |r| r.random_range(0.1..3.0));
    check_unary("softplus", |g, x| g.softplus(x).unwrap(), normal);
    check_unary("scale", |g, x| g.scale(x, -1.7).unwrap(), normal);
    check_unary("add_const", |g, x| g.add_const(x, 0.3).unwrap(), normal);
    check_unary("clamp", |g, x| g.clamp(x, -1.0, 1.0).unwrap(), |r| {
        let v: f64 = normal(r);
        if (v.abs() - 1.0).abs() < 1e-3 { 0.0 } else { v }
    });
    check_unary("square", |g, x| g.mul(x, x).unwrap(), normal);
}

#[test]
fn reductions_match_finite_differences() {
    check_unary("sum", |g, x| g.sum(x).unwrap(), normal);
    check_unary("mean", |g, x| g.mean(x).unwrap(), normal);
    check_unary("sum_last", |g, x| g.sum_last(x).unwrap(), normal);
    check_unary("log_sum_exp", |g, x| g.log_sum_exp(x).unwrap(), normal);
    check_unary("slice_cols", |g, x| g.slice_cols(x, 1, 3).unwrap(), normal);
    check_unary(
        "sum_rows",
        |g, x| g.sum_rows(x, vec![vec![0], vec![0, 1], vec![], vec![1, 1]]).unwrap(),
        normal,
    );
}

#[test]
fn binary_primitives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let other_full = Array::matrix(2, 3, (0..6).map(|_| rng.random_range(-2.0..2.0)).collect());
    let row = Array::vector(vec![0.3, -1.2, 0.8]);
    let col = Array::matrix(2, 1, vec![1.5, -0.4]);
    let mat = Array::matrix(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect());
    for other in [other_full.clone(), row.clone(), col.clone()] {
        let o = other.clone();
        check_unary("add", move |g, x| {
            let c = g.constant(o.clone());
            g.add(x, c).unwrap()
        }, normal);
        let o = other.clone();
        check_unary("sub-left", move |g, x| {
            let c = g.constant(o.clone());
            g.sub(x, c).unwrap()
        }, normal);
        let o = other.clone();
        check_unary("sub-right", move |g, x| {
            let c = g.constant(o.clone());
            g.sub(c, x).unwrap()
        }, normal);
        let o = other.clone();
        check_unary("multiply", move |g, x| {
            let c = g.constant(o.clone());
            g.mul(x, c).unwrap()
        }, normal);
    }
    let m = mat.clone();
    check_unary("matmul-left", move |g, x| {
        let c = g.constant(m.clone());
        g.matmul(x, c).unwrap()
    }, normal);
    let left = Array::matrix(4, 2, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect());
    check_unary("matmul-right", move |g, x| {
        let c = g.constant(left.clone());
        g.matmul(c, x).unwrap()
    }, normal);
    let o = other_full.clone();
    check_unary("concatenate", move |g, x| {
        let c = g.constant(o.clone());
        g.concat(&[c, x, c]).unwrap()
    }, normal);
}

#[test]
fn broadcast_operand_gradients_reduce() {
    // gradient w.r.t. the broadcast (row / column) operand
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let full = Array::matrix(2, 3, (0..6).map(|_| rng.random_range(-2.0..2.0)).collect());
    for shape in [vec![3usize], vec![1, 3], vec![2, 1], vec![]] {
        let f = full.clone();
        let n: usize = shape.iter().product();
        let x = Array::from_shape(&shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let eval = |x: &Array| {
            let mut g = Graph::new();
            let c = g.constant(f.clone());
            let xv = g.constant(x.clone());
            let p = g.mul(c, xv).unwrap();
            let q = g.add(p, xv).unwrap();
            let t = g.tanh(q).unwrap();
            { let o = g.sum(t).unwrap(); g.value(o).item() }
        };
        let mut g = Graph::new();
        let c = g.constant(full.clone());
        let xv = g.leaf(x.clone());
        let p = g.mul(c, xv).unwrap();
        let q = g.add(p, xv).unwrap();
        let t = g.tanh(q).unwrap();
        let s = g.sum(t).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(xv).shape(), x.shape());
        assert_close_grad(grads.wrt(xv).values(), &finite_difference(&eval, &x, 1e-5), "broadcast");
    }
}

#[test]
fn gaussian_log_pdf_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let x = Array::matrix(2, 2, (0..4).map(|_| rng.random_range(-2.0..2.0)).collect());
        let m = Array::matrix(2, 2, (0..4).map(|_| rng.random_range(-2.0..2.0)).collect());
        let s = Array::matrix(2, 2, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
        let run = |x: &Array, m: &Array, s: &Array, leaf: bool| {
            let mut g = Graph::new();
            let mk = |g: &mut Graph, a: &Array| if leaf { g.leaf(a.clone()) } else { g.constant(a.clone()) };
            let (xv, mv, sv) = (mk(&mut g, x), mk(&mut g, m), mk(&mut g, s));
            let lp = g.gaussian_log_pdf(xv, mv, sv).unwrap();
            let out = g.sum(lp).unwrap();
            let value = g.value(out).item();
            let grads = if leaf { Some(g.backward(out).unwrap()) } else { None };
            (value, grads.map(|gr| [gr.wrt(xv), gr.wrt(mv), gr.wrt(sv)]))
        };
        // value matches the closed form
        let (v, grads) = run(&x, &m, &s, true);
        let direct: f64 = (0..4)
            .map(|i| gaussian_log_density(x.values()[i], m.values()[i], s.values()[i].exp()))
            .sum();
        assert!((v - direct).abs() < 1e-12);
        let grads = grads.unwrap();
        assert_close_grad(grads[0].values(), &finite_difference(&|a| run(a, &m, &s, false).0, &x, 1e-5), "dx");
        assert_close_grad(grads[1].values(), &finite_difference(&|a| run(&x, a, &s, false).0, &m, 1e-5), "dmean");
        assert_close_grad(grads[2].values(), &finite_difference(&|a| run(&x, &m, a, false).0, &s, 1e-5), "dlogstd");
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for activation in [Activation::Tanh, Activation::Relu] {
        for _ in 0..10 {
            let mut store = ParamStore::new();
            let mlp = Mlp::new(MlpSpec::new(3, &[6, 5], activation, 2), &mut store, "m", &mut rng);
            // nonzero biases so relu kinks are unlikely to sit on a sample point
            for a in store.arrays_mut() {
                a.values_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
            }
            let x = Array::matrix(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect());
            let loss = |store: &ParamStore| {
                let mut g = Graph::new();
                let bound = store.bind_frozen(&mut g);
                let xv = g.constant(x.clone());
                let y = mlp.forward(&mut g, &bound, xv).unwrap();
                let sq = g.mul(y, y).unwrap();
                { let o = g.mean(sq).unwrap(); g.value(o).item() }
            };
            let mut g = Graph::new();
            let bound = store.bind(&mut g);
            let xv = g.constant(x.clone());
            let y = mlp.forward(&mut g, &bound, xv).unwrap();
            let sq = g.mul(y, y).unwrap();
            let out = g.mean(sq).unwrap();
            let grads = g.backward(out).unwrap();
            for (idx, var) in bound.iter().enumerate() {
                let base = store.clone();
                let numeric: Vec<f64> = (0..base.arrays()[idx].len())
                    .map(|i| {
                        let h = 1e-5;
                        let mut p = base.clone();
                        p.arrays_mut()[idx].values_mut()[i] += h;
                        let mut m = base.clone();
                        m.arrays_mut()[idx].values_mut()[i] -= h;
                        (loss(&p) - loss(&m)) / (2.0 * h)
                    })
                    .collect();
                assert_close_grad(grads.wrt(*var).values(), &numeric, "mlp");
            }
        }
    }
}

#[test]
fn batched_forward_agrees_with_row_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(MlpSpec::new(3, &[16, 16], Activation::Relu, 4), &mut store, "m", &mut rng);
    let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut g = Graph::new();
    let bound = store.bind_frozen(&mut g);
    let x = g.constant(Array::matrix(5, 3, rows.concat()));
    let y = mlp.forward(&mut g, &bound, x).unwrap();
    for (i, r) in rows.iter().enumerate() {
        let single = mlp.forward_row(&store, r);
        for (a, b) in single.iter().zip(g.value(y).row(i)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_and_backward_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(MlpSpec::new(2, &[8], Activation::Tanh, 1), &mut store, "m", &mut rng);
    let run = || {
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let x = g.constant(Array::matrix(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]));
        let y = mlp.forward(&mut g, &bound, x).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        let mut bits: Vec<u64> = vec![g.value(s).item().to_bits()];
        for v in &bound {
            bits.extend(grads.wrt(*v).values().iter().map(|x| x.to_bits()));
        }
        bits
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_zero_gradient_leaves_parameters() {
    let mut store = ParamStore::new();
    store.add("w", Array::vector(vec![1.0, -2.0]));
    let mut adam = AdamState::new(AdamConfig::with_lr(0.1), &store);
    adam.step(&mut store, &[Array::vector(vec![0.0, 0.0])]).unwrap();
    assert_eq!(store.arrays()[0].values(), &[1.0, -2.0]);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut store = ParamStore::new();
    store.add("w", Array::vector(vec![1.0, 1.0]));
    let mut adam = AdamState::new(AdamConfig::with_lr(0.01), &store);
    adam.step(&mut store, &[Array::vector(vec![3.0, -0.2])]).unwrap();
    let v = store.arrays()[0].values();
    assert!((v[0] - (1.0 - 0.01)).abs() < 1e-8);
    assert!((v[1] - (1.0 + 0.01)).abs() < 1e-6);
    assert_eq!(adam.step_count(), 1);
}

#[test]
fn adam_minimizes_quadratic() {
    let mut store = ParamStore::new();
    store.add("w", Array::scalar(0.0));
    let mut adam = AdamState::new(AdamConfig::with_lr(0.1), &store);
    for _ in 0..100 {
        let mut g = Graph::new();
        let w = store.bind(&mut g)[0];
        let d = g.add_const(w, -2.0).unwrap();
        let f = g.mul(d, d).unwrap();
        let grads = g.backward(f).unwrap();
        adam.step(&mut store, &[grads.wrt(w)]).unwrap();
    }
    assert!((store.arrays()[0].item() - 2.0).abs() < 0.05);
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let mut store = ParamStore::new();
    store.add("w", Array::scalar(1.0));
    let mut adam = AdamState::new(AdamConfig::default(), &store);
    let err = adam.step(&mut store, &[Array::scalar(f64::INFINITY)]).unwrap_err();
    assert_eq!(err, AutodiffError::NonFiniteGradient("w".into()));
    assert_eq!(store.arrays()[0].item(), 1.0);
    assert_eq!(adam.step_count(), 0);
}

#[test]
fn soft_update_with_rate_one_copies() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut online = ParamStore::new();
    Mlp::new(MlpSpec::new(2, &[3], Activation::Relu, 1), &mut online, "q", &mut rng);
    let mut target = ParamStore::new();
    Mlp::new(MlpSpec::new(2, &[3], Activation::Relu, 1), &mut target, "q", &mut rng);
    assert_ne!(online, target);
    target.soft_update_from(&online, 1.0);
    assert_eq!(online, target);
}

mod props {
    use proptest::prelude::*;

    use super::*;

    proptest! {
        #[test]
        fn checkpoint_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 0..40), rows in 1usize..4) {
            let cols = values.len() / rows;
            let data = values[..rows * cols].to_vec();
            let tensors = vec![("t".to_string(), Array::matrix(rows, cols, data))];
            let meta = CheckpointMeta::new("source", "digest", 1, 2);
            let bytes = encode_checkpoint(&tensors, &meta).unwrap();
            let (back, m) = decode_checkpoint(&bytes).unwrap();
            prop_assert_eq!(m, meta);
            prop_assert_eq!(back, tensors);
        }

        #[test]
        fn log_sum_exp_matches_shifted_form(xs in proptest::collection::vec(-1000f64..1000.0, 1..20)) {
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let expect = max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            prop_assert!((log_sum_exp(&xs) - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }
}
