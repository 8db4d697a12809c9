mod common;

use common::{random_stream, random_theta, random_vec, CELLS};
use proptest::prelude::*;
use tprop_core::diffcore::ops::softmax_xent;
use tprop_core::diffcore::Tensor;
use tprop_core::model::checkpoint::{read_checkpoint, write_checkpoint};
use tprop_core::model::{
    cell_backward, cell_forward, forward_loss, predict, seq_forward_backward, CellKind, ModelDims,
    ParamSet,
};
use tprop_core::verify::{central_difference_errors, GRADCHECK_TOL};

#[test]
fn zero_weight_fixed_points() {
    let gru = ParamSet::<f64>::zeros(CellKind::Gru, ModelDims::square(5, 3), true);
    let (h, _) = cell_forward(&gru, 2, &Tensor::vector(3)).unwrap();
    assert_eq!(h.data(), &[0.0; 3]);

    let elman = ParamSet::<f64>::zeros(CellKind::Elman, ModelDims::square(5, 3), true);
    let (h, _) = cell_forward(&elman, 2, &Tensor::from_vec(vec![0.3, -0.2, 0.9])).unwrap();
    assert_eq!(h.data(), &[0.5; 3]);
}

#[test]
fn head_hand_example() {
    let mut theta = ParamSet::<f64>::zeros(CellKind::Elman, ModelDims { vocab: 2, d_in: 1, d_h: 1 }, true);
    let logits = predict(&theta, &Tensor::from_vec(vec![2.0])).unwrap();
    assert_eq!(logits.data(), &[0.0, 0.0]);
    theta.w_y = Tensor::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
    let logits = predict(&theta, &Tensor::from_vec(vec![2.0])).unwrap();
    assert_eq!(logits.data(), &[2.0, -2.0]);
}

#[test]
fn uniform_model_single_transition_costs_ln_v() {
    let theta = ParamSet::<f64>::zeros(CellKind::Gru, ModelDims::square(10, 4), true);
    let (loss, _) = forward_loss(&theta, &[3, 7], &[0.0; 4]).unwrap();
    assert!((loss - 10f64.ln()).abs() < 1e-12);
}

#[test]
fn sequence_loss_is_sum_of_step_losses() {
    for kind in CELLS {
        for seed in 0..5 {
            let theta = random_theta(kind, 7, 4, seed);
            let tokens = random_stream(7, 12, seed);
            let mut h = Tensor::from_vec(random_vec(4, 0.5, seed, "h0"));
            let mut expected = 0.0;
            for w in tokens.windows(2) {
                let (next, _) = cell_forward(&theta, w[0], &h).unwrap();
                let logits = predict(&theta, &next).unwrap();
                expected += softmax_xent(&logits, w[1]).unwrap().0;
                h = next;
            }
            let mut grads = theta.zeros_like();
            let h0 = Tensor::from_vec(random_vec(4, 0.5, seed, "h0"));
            let r = seq_forward_backward(&theta, &tokens, &h0, &mut grads).unwrap();
            assert!((r.loss - expected).abs() < 1e-12);
            assert_eq!(r.transitions, 11);
            assert_eq!(r.h_final.data(), h.data());
        }
    }
}

#[test]
fn initial_state_gradient_matches_finite_differences() {
    for kind in CELLS {
        for seed in 0..5 {
            let theta = random_theta(kind, 7, 4, seed);
            let tokens = random_stream(7, 9, seed);
            let h0 = random_vec(4, 0.5, seed, "h0");
            let mut grads = theta.zeros_like();
            let r = seq_forward_backward(&theta, &tokens, &Tensor::from_vec(h0.clone()), &mut grads).unwrap();
            let errs = central_difference_errors(r.dh_init.data(), &h0, |x| {
                Ok(forward_loss(&theta, &tokens, x)?.0)
            })
            .unwrap();
            assert!(errs.iter().all(|&e| e <= GRADCHECK_TOL), "{kind}: {errs:?}");
        }
    }
}

#[test]
fn cell_gradients_match_finite_differences() {
    for kind in CELLS {
        let theta = random_theta(kind, 7, 4, 11);
        let h_prev = Tensor::from_vec(random_vec(4, 0.8, 11, "hp"));
        let up = random_vec(4, 1.0, 11, "up");
        let (_, ctx) = cell_forward(&theta, 5, &h_prev).unwrap();
        let mut grads = theta.zeros_like();
        let dh_prev = cell_backward(&theta, &ctx, &up, &mut grads);
        let objective = |p: &ParamSet<f64>, h: &[f64]| -> tprop_core::Result<f64> {
            let (h, _) = cell_forward(p, 5, &Tensor::from_vec(h.to_vec()))?;
            h.dot(&Tensor::from_vec(up.clone()))
        };
        let errs = central_difference_errors(&dh_prev, h_prev.data(), |x| objective(&theta, x)).unwrap();
        assert!(errs.iter().all(|&e| e <= GRADCHECK_TOL));
        let errs = central_difference_errors(&grads.flatten(), &theta.flatten(), |x| {
            let mut p = theta.clone();
            p.assign_flat(x)?;
            objective(&p, h_prev.data())
        })
        .unwrap();
        assert!(errs.iter().all(|&e| e <= GRADCHECK_TOL), "{kind}");
    }
}

#[test]
fn state_ranges() {
    for kind in CELLS {
        for seed in 0..10 {
            let mut rng_theta = random_theta(kind, 6, 5, seed);
            rng_theta.scale(6.0);
            let tokens = random_stream(6, 40, seed);
            let mut h = Tensor::vector(5);
            for &t in &tokens {
                let (next, _) = cell_forward(&rng_theta, t, &h).unwrap();
                for &x in next.data() {
                    match kind {
                        // convex mix of the previous state and a tanh candidate
                        CellKind::Gru => assert!(x.abs() <= 1.0),
                        CellKind::Elman => assert!((0.0..=1.0).contains(&x)),
                    }
                }
                h = next;
            }
        }
    }
}

#[test]
fn bad_inputs_are_errors() {
    let theta = random_theta(CellKind::Gru, 5, 3, 0);
    assert!(cell_forward(&theta, 5, &Tensor::vector(3)).is_err());
    assert!(cell_forward(&theta, 0, &Tensor::vector(4)).is_err());
    let mut grads = theta.zeros_like();
    assert!(seq_forward_backward(&theta, &[1], &Tensor::vector(3), &mut grads).is_err());
}

#[test]
fn checkpoint_rejects_garbage() {
    assert!(read_checkpoint::<f64, _>(&b"NOTACKPTxxxxxxxxxxxxxxxxxxxx"[..]).is_err());
    let theta = random_theta(CellKind::Elman, 4, 3, 2);
    let mut buf = Vec::new();
    write_checkpoint(&theta, &mut buf).unwrap();
    buf.truncate(buf.len() - 3);
    assert!(read_checkpoint::<f64, _>(&buf[..]).is_err());
}

proptest! {
    #[test]
    fn checkpoint_round_trip_is_bit_exact(
        gru in any::<bool>(),
        bias in any::<bool>(),
        vocab in 1usize..9,
        d_h in 1usize..6,
        seed in any::<u64>(),
    ) {
        let kind = if gru { CellKind::Gru } else { CellKind::Elman };
        let mut rng = tprop_core::seed::rng_for(seed, "ckpt");
        let theta = ParamSet::<f64>::init_uniform(kind, ModelDims::square(vocab, d_h), bias, 3.0, &mut rng);
        let mut buf = Vec::new();
        write_checkpoint(&theta, &mut buf).unwrap();
        let back: ParamSet<f64> = read_checkpoint(&buf[..]).unwrap();
        prop_assert_eq!(back.kind, theta.kind);
        prop_assert_eq!(back.bias, theta.bias);
        let a: Vec<u64> = theta.flatten().iter().map(|x| x.to_bits()).collect();
        let b: Vec<u64> = back.flatten().iter().map(|x| x.to_bits()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn loss_is_finite_and_positive(seed in any::<u64>(), len in 2usize..30) {
        let theta = random_theta(CellKind::Gru, 5, 3, seed);
        let tokens = random_stream(5, len, seed);
        let (loss, h) = forward_loss(&theta, &tokens, &[0.0; 3]).unwrap();
        prop_assert!(loss.is_finite() && loss > 0.0);
        prop_assert!(h.iter().all(|x| x.is_finite()));
    }
}
