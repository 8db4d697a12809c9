//! Truncated back-propagation through time.
//!
//! The stream is cut into consecutive windows of `K` transitions. Window
//! `k` covers tokens `[kK, kK + K]` (the last token of one window is the
//! first input of the next), starts from the carried state of the previous
//! window as a constant, and no gradient crosses a window boundary.

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::metrics::{EpochMetrics, Regime};
use crate::model::{seq_forward_backward, ParamSet};
use crate::optim::{Optimizer, UpdateRule};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpttConfig {
    pub k: usize,
    pub lr: f64,
    pub optimizer: UpdateRule,
    pub epochs: usize,
    pub regime: Regime,
}

impl BpttConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("window size K must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        Ok(())
    }
}

/// Token ranges of consecutive windows of `k` transitions. A trailing
/// window is kept whenever it holds at least one transition.
pub fn windows(len: usize, k: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start + 1 < len {
        let end = (start + k).min(len - 1);
        out.push(start..end + 1);
        start = end;
    }
    out
}

/// Window size, carried state and cursor of a truncated-BPTT pass.
#[derive(Clone, Debug)]
pub struct BpttState<S> {
    pub k: usize,
    pub h_carry: Tensor<S>,
    pub cursor: usize,
}

impl<S: Scalar> BpttState<S> {
    pub fn new(k: usize, d_h: usize) -> Self {
        BpttState {
            k,
            h_carry: Tensor::vector(d_h),
            cursor: 0,
        }
    }

    /// Next window of `stream`, if any transition is left.
    pub fn next_window<'a>(&mut self, stream: &'a [usize]) -> Option<&'a [usize]> {
        if self.cursor + 1 >= stream.len() {
            return None;
        }
        let end = (self.cursor + self.k).min(stream.len() - 1);
        let w = &stream[self.cursor..=end];
        self.cursor = end;
        Some(w)
    }
}

#[derive(Clone, Debug)]
pub struct WindowGrad<S> {
    pub loss: S,
    pub h_out: Tensor<S>,
    pub transitions: usize,
}

/// Loss and θ-gradient (accumulated into `grads`) of one window started
/// from the constant `h_carry`.
pub fn bptt_window_grad<S: Scalar>(
    theta: &ParamSet<S>,
    window: &[usize],
    h_carry: &Tensor<S>,
    grads: &mut ParamSet<S>,
) -> Result<WindowGrad<S>> {
    let r = seq_forward_backward(theta, window, h_carry, grads)?;
    Ok(WindowGrad {
        loss: r.loss,
        h_out: r.h_final,
        transitions: r.transitions,
    })
}

/// Summed θ-gradient of every `k`-window of `stream` at fixed θ, carrying
/// state from `h_init`. Returns the summed loss and final carry.
pub fn accumulate_windows<S: Scalar>(
    theta: &ParamSet<S>,
    stream: &[usize],
    k: usize,
    h_init: &Tensor<S>,
    grads: &mut ParamSet<S>,
) -> Result<(S, Tensor<S>)> {
    let mut carry = h_init.clone();
    let mut loss = S::zero();
    for r in windows(stream.len(), k) {
        let w = bptt_window_grad(theta, &stream[r], &carry, grads)?;
        loss += w.loss;
        carry = w.h_out;
    }
    Ok((loss, carry))
}

/// Trains `theta` in place. `on_epoch` sees each record as it is produced.
pub fn train_bptt<S: Scalar>(
    theta: &mut ParamSet<S>,
    train: &[usize],
    valid: Option<&[usize]>,
    config: &BpttConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    if train.len() < 2 {
        return Err(Error::Argument("training stream needs at least 2 tokens".into()));
    }
    let mut opt = Optimizer::<S>::new(config.optimizer, config.lr);
    let mut grads = theta.zeros_like();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut state = BpttState::new(config.k, theta.dims.d_h);
        let mut total = 0.0f64;
        let mut count = 0usize;
        match config.regime {
            Regime::Minibatch => {
                while let Some(window) = state.next_window(train) {
                    grads.fill_zero();
                    let w = bptt_window_grad(theta, window, &state.h_carry, &mut grads)?;
                    total += w.loss.to_f64_lossy();
                    count += w.transitions;
                    state.h_carry = w.h_out;
                    opt.step_params(theta, &grads)?;
                }
            }
            Regime::Batch => {
                grads.fill_zero();
                while let Some(window) = state.next_window(train) {
                    let w = bptt_window_grad(theta, window, &state.h_carry, &mut grads)?;
                    total += w.loss.to_f64_lossy();
                    count += w.transitions;
                    state.h_carry = w.h_out;
                }
                opt.step_params(theta, &grads)?;
            }
        }
        if !theta.is_finite() {
            return Err(Error::State(format!("parameters diverged in epoch {epoch}")));
        }
        let valid_ppl = match valid {
            Some(v) => Some(evaluate(theta, v)?.perplexity),
            None => None,
        };
        let m = EpochMetrics {
            epoch,
            train_loss: total / count as f64,
            valid_ppl,
            mean_residual: None,
            h_backtracks: None,
            oracle_max_diff: None,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&m);
        history.push(m);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_tile_transitions() {
        assert_eq!(windows(11, 5), vec![0..6, 5..11]);
        assert_eq!(windows(12, 5), vec![0..6, 5..11, 10..12]);
        assert_eq!(windows(1, 5), Vec::<Range<usize>>::new());
        let total: usize = windows(103, 10).iter().map(|r| r.len() - 1).sum();
        assert_eq!(total, 102);
    }

    #[test]
    fn state_walks_windows() {
        let stream: Vec<usize> = (0..12).collect();
        let mut st = BpttState::<f64>::new(5, 3);
        assert_eq!(st.h_carry.data(), &[0.0; 3]);
        let mut seen = Vec::new();
        while let Some(w) = st.next_window(&stream) {
            seen.push(w.to_vec());
        }
        assert_eq!(seen.len(), 3);
        assert_eq!(seen[2], vec![10, 11]);
    }

    #[test]
    fn zero_k_rejected() {
        let cfg = BpttConfig {
            k: 0,
            lr: 0.1,
            optimizer: UpdateRule::Sgd,
            epochs: 1,
            regime: Regime::Minibatch,
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
