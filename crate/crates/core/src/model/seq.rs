//! Forward/backward over an unrolled token sequence.
//!
//! A sequence `[t_0, .., t_n]` has `n` transitions: step `i` consumes `t_i`
//! and is scored on predicting `t_{i+1}`. Losses are summed, not averaged.

use crate::diffcore::ops::softmax_xent_into;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::cell::{cell_backward, cell_forward_slice, head_backward, predict_slice, StepContext};
use super::params::ParamSet;

/// Saved forward pass over a sequence, ready for backward.
#[derive(Clone, Debug)]
pub struct Trace<S> {
    steps: Vec<StepContext<S>>,
    dlogits: Vec<Vec<S>>,
    losses: Vec<S>,
    pub loss: S,
}

impl<S: Scalar> Trace<S> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Per-step prediction losses.
    pub fn step_losses(&self) -> &[S] {
        &self.losses
    }

    pub fn state(&self, step: usize) -> &[S] {
        self.steps[step].output()
    }

    /// Hidden state after the last transition.
    pub fn final_state(&self) -> &[S] {
        self.steps.last().expect("trace is never empty").output()
    }

    /// Backpropagates the summed prediction loss (plus an optional extra
    /// upstream gradient on the final state) into `grads`. Returns the
    /// gradient with respect to the initial state.
    pub fn backward(
        &self,
        theta: &ParamSet<S>,
        extra_final: Option<&[S]>,
        grads: &mut ParamSet<S>,
    ) -> Vec<S> {
        let d_h = theta.dims.d_h;
        let mut carry = match extra_final {
            Some(g) => g.to_vec(),
            None => vec![S::zero(); d_h],
        };
        for (ctx, dl) in self.steps.iter().zip(&self.dlogits).rev() {
            head_backward(theta, ctx.output(), dl, grads, &mut carry);
            carry = cell_backward(theta, ctx, &carry, grads);
        }
        carry
    }
}

fn check_sequence(tokens: &[usize]) -> Result<()> {
    if tokens.len() < 2 {
        return Err(Error::Argument(format!(
            "sequence needs at least 2 tokens (one transition), got {}",
            tokens.len()
        )));
    }
    Ok(())
}

pub fn forward_trace<S: Scalar>(
    theta: &ParamSet<S>,
    tokens: &[usize],
    h_init: &[S],
) -> Result<Trace<S>> {
    check_sequence(tokens)?;
    let n = tokens.len() - 1;
    let mut steps: Vec<StepContext<S>> = Vec::with_capacity(n);
    let mut dlogits = Vec::with_capacity(n);
    let mut losses = Vec::with_capacity(n);
    let mut loss = S::zero();
    for i in 0..n {
        let h_prev = if i == 0 { h_init } else { steps[i - 1].output() };
        let ctx = cell_forward_slice(theta, tokens[i], h_prev)?;
        let logits = predict_slice(theta, ctx.output());
        let mut dl = vec![S::zero(); logits.len()];
        let l = softmax_xent_into(&logits, tokens[i + 1], &mut dl)?;
        loss += l;
        losses.push(l);
        dlogits.push(dl);
        steps.push(ctx);
    }
    Ok(Trace {
        steps,
        dlogits,
        losses,
        loss,
    })
}

/// Summed loss and final state without keeping activations.
pub fn forward_loss<S: Scalar>(
    theta: &ParamSet<S>,
    tokens: &[usize],
    h_init: &[S],
) -> Result<(S, Vec<S>)> {
    check_sequence(tokens)?;
    let mut h = h_init.to_vec();
    let mut loss = S::zero();
    let mut scratch = vec![S::zero(); theta.dims.vocab];
    for w in tokens.windows(2) {
        let ctx = cell_forward_slice(theta, w[0], &h)?;
        let logits = predict_slice(theta, ctx.output());
        loss += softmax_xent_into(&logits, w[1], &mut scratch)?;
        h = match ctx {
            StepContext::Elman { h, .. } | StepContext::Gru { h, .. } => h,
        };
    }
    Ok((loss, h))
}

/// Result of [`seq_forward_backward`].
#[derive(Clone, Debug)]
pub struct SeqGrad<S> {
    pub loss: S,
    /// Gradient with respect to the initial hidden state. Always computed;
    /// callers treating the initial state as a constant ignore it.
    pub dh_init: Tensor<S>,
    pub h_final: Tensor<S>,
    pub transitions: usize,
}

/// Unrolled loss over `tokens` from `h_init`, with its θ-gradient
/// accumulated into `grads`.
pub fn seq_forward_backward<S: Scalar>(
    theta: &ParamSet<S>,
    tokens: &[usize],
    h_init: &Tensor<S>,
    grads: &mut ParamSet<S>,
) -> Result<SeqGrad<S>> {
    if h_init.len() != theta.dims.d_h {
        return Err(Error::Dimension {
            op: "seq_forward_backward",
            left: vec![theta.dims.d_h],
            right: h_init.shape().dims(),
        });
    }
    let trace = forward_trace(theta, tokens, h_init.data())?;
    let dh_init = trace.backward(theta, None, grads);
    Ok(SeqGrad {
        loss: trace.loss,
        dh_init: Tensor::from_vec(dh_init),
        h_final: Tensor::from_vec(trace.final_state().to_vec()),
        transitions: trace.len(),
    })
}
