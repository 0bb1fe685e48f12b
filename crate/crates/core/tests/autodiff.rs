mod common;

use common::gradcheck;
use nestgnn::autodiff::tensor::{log_softmax, log_sum_exp, softmax};
use nestgnn::autodiff::{Tape, Tensor};
use nestgnn::engine::{Aggregation, ModelConfig, Readout, Update};
use proptest::prelude::*;

#[test]
fn composites_match_finite_differences() {
    for k in 0..gradcheck::TEMPLATES {
        for seed in 0..5 {
            let err = gradcheck::composite_error(k, seed);
            assert!(err < 1e-5, "composite {k} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn model_losses_match_finite_differences() {
    let ids = [0, 0, 1, 1];
    let configs = [
        ModelConfig::mnl(4, 3),
        ModelConfig::asu_dnn(4, 3, 4),
        ModelConfig::nl(&ids, 3),
        ModelConfig::highdim_lse(&ids, 3, 4),
        ModelConfig::custom(&ids, 3, 2, Aggregation::Mean, Update::Plus, Readout::Mlp, 3),
        ModelConfig::custom(&[0, 0, 0, 1], 3, 2, Aggregation::Max, Update::Concat, Readout::Linear, 3),
    ];
    for c in &configs {
        let err = gradcheck::model_loss_error(c, 7);
        assert!(err < 1e-5, "{}: {err:e}", c.label());
    }
}

#[test]
fn log_sum_exp_is_shift_stable() {
    let big = log_sum_exp(&[1000.0f64, 1000.0]);
    assert!((big - (1000.0 + 2f64.ln())).abs() < 1e-12);
    let mixed = log_sum_exp(&[1e3f64, -1e3]);
    assert_eq!(mixed, 1e3);
    let lp = log_softmax(&Tensor::vector(vec![1e3f64, 0.0, -1e3]).unwrap());
    assert!(lp.is_finite());
    assert!((lp.data()[1] + 1e3).abs() < 1e-9);

    let mut tape: Tape<f64> = Tape::new();
    let a = tape.leaf(Tensor::vector(vec![1e3, 1e3 - 1.0]).unwrap());
    let b = tape.leaf(Tensor::vector(vec![1e3 - 2.0, -1e3]).unwrap());
    let l = tape.lse_set(&[a, b]).unwrap();
    let s = tape.sum(l);
    assert!(tape.value(s).is_finite());
    let g = tape.backward(s).unwrap();
    assert!(g.get(a).unwrap().is_finite() && g.get(b).unwrap().is_finite());
}

#[test]
fn backward_is_deterministic() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    let inputs = gradcheck::random_inputs(&mut rng);
    let run = || {
        let mut tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = gradcheck::composite(9, &mut tape, &vars);
        let g = tape.backward(out).unwrap();
        vars.iter().map(|v| g.get(*v).cloned()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(v in prop::collection::vec(-50.0f64..50.0, 1..12), shift in -500.0f64..500.0) {
        let t = Tensor::vector(v.clone()).unwrap();
        let p = softmax(&t);
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        prop_assert!(p.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        let shifted = softmax(&t.map(|x| x + shift));
        for (a, b) in p.data().iter().zip(shifted.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
