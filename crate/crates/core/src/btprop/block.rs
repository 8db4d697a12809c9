//! One block of the augmented loss:
//! `sum_t xent(f(h_t), x_{t+1}) + (lambda/2) ||h_next - h_hat + u||^2`,
//! where the states inside the block follow the recurrence from `h_in` and
//! `h_hat` is the block's final predicted state.

use crate::error::{Error, Result};
use crate::model::{forward_loss, forward_trace, ParamSet};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct BlockGrad<S> {
    /// Prediction loss plus penalty.
    pub loss: S,
    pub pred_loss: S,
    pub penalty: S,
    pub dh_in: Vec<S>,
    pub dh_next: Vec<S>,
    /// Gradient of the block loss with respect to `h_hat`.
    pub dh_hat: Vec<S>,
    pub h_hat: Vec<S>,
    pub transitions: usize,
}

/// `h_next - h_hat + u`.
pub fn residual<S: Scalar>(h_next: &[S], h_hat: &[S], u: &[S]) -> Vec<S> {
    h_next
        .iter()
        .zip(h_hat)
        .zip(u)
        .map(|((&h, &p), &d)| h - p + d)
        .collect()
}

/// `(lambda/2) ||r||^2`.
pub fn penalty_value<S: Scalar>(lambda: S, r: &[S]) -> S {
    let sq: S = r.iter().map(|&x| x * x).sum();
    S::lit(0.5) * lambda * sq
}

fn check_lengths<S: Scalar>(theta: &ParamSet<S>, parts: &[&[S]]) -> Result<()> {
    for p in parts {
        if p.len() != theta.dims.d_h {
            return Err(Error::Dimension {
                op: "block",
                left: vec![theta.dims.d_h],
                right: vec![p.len()],
            });
        }
    }
    Ok(())
}

/// Block loss with gradients; θ-gradient is accumulated into `grads`.
pub fn block_forward_backward<S: Scalar>(
    theta: &ParamSet<S>,
    tokens: &[usize],
    h_in: &[S],
    h_next: &[S],
    u: &[S],
    lambda: S,
    grads: &mut ParamSet<S>,
) -> Result<BlockGrad<S>> {
    check_lengths(theta, &[h_in, h_next, u])?;
    let trace = forward_trace(theta, tokens, h_in)?;
    let h_hat = trace.final_state().to_vec();
    let r = residual(h_next, &h_hat, u);
    let penalty = penalty_value(lambda, &r);
    let dh_next: Vec<S> = r.iter().map(|&x| lambda * x).collect();
    let dh_hat: Vec<S> = dh_next.iter().map(|&x| -x).collect();
    let dh_in = trace.backward(theta, Some(&dh_hat), grads);
    Ok(BlockGrad {
        loss: trace.loss + penalty,
        pred_loss: trace.loss,
        penalty,
        dh_in,
        dh_next,
        dh_hat,
        h_hat,
        transitions: trace.len(),
    })
}

/// Loss parts `(prediction, penalty)` and `h_hat`, without gradients.
pub fn block_forward<S: Scalar>(
    theta: &ParamSet<S>,
    tokens: &[usize],
    h_in: &[S],
    h_next: &[S],
    u: &[S],
    lambda: S,
) -> Result<(S, S, Vec<S>)> {
    check_lengths(theta, &[h_in, h_next, u])?;
    let (pred, h_hat) = forward_loss(theta, tokens, h_in)?;
    let penalty = penalty_value(lambda, &residual(h_next, &h_hat, u));
    Ok((pred, penalty, h_hat))
}
