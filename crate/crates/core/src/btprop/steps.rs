//! The three moves of the alternating schedule: H-step, θ-step, dual step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Regime;
use crate::model::ParamSet;
use crate::optim::{Optimizer, UpdateRule};
use crate::scalar::Scalar;

use super::block::residual;
use super::objective::{augmented_loss, AugEval, Exec, Problem};
use super::store::{DualStore, HiddenStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Penalty method: no duals.
    Pm,
    /// Augmented Lagrangian: joint (H, θ) descent, then a dual step.
    Alm,
    /// H-step, θ-step, dual step.
    Admm,
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pm" => Ok(Schedule::Pm),
            "alm" => Ok(Schedule::Alm),
            "admm" => Ok(Schedule::Admm),
            other => Err(Error::Config(format!("unknown schedule '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TPropConfig {
    /// Block length B.
    pub block_len: usize,
    pub lambda: f64,
    /// Dual step size.
    pub alpha_u: f64,
    pub lr_h: f64,
    pub lr_theta: f64,
    pub h_steps: usize,
    pub theta_steps: usize,
    pub schedule: Schedule,
    pub regime: Regime,
    pub minibatch_blocks: usize,
    pub epochs: usize,
    pub threads: usize,
    pub theta_optimizer: UpdateRule,
    pub h_optimizer: UpdateRule,
    /// Batch regime only: reset the free variables to the forward pass at
    /// the start of every epoch instead of persisting them.
    pub h_reinit_each_epoch: bool,
    /// Compare the θ-gradient against the truncated-BPTT oracle on every
    /// n-th minibatch segment.
    pub bptt_oracle_every: Option<usize>,
}

impl Default for TPropConfig {
    fn default() -> Self {
        TPropConfig {
            block_len: 10,
            lambda: 0.01,
            alpha_u: 0.1,
            lr_h: 0.1,
            lr_theta: 0.1,
            h_steps: 1,
            theta_steps: 1,
            schedule: Schedule::Admm,
            regime: Regime::Minibatch,
            minibatch_blocks: 2,
            epochs: 1,
            threads: 1,
            theta_optimizer: UpdateRule::Adagrad,
            h_optimizer: UpdateRule::Sgd,
            h_reinit_each_epoch: false,
            bptt_oracle_every: None,
        }
    }
}

impl TPropConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.block_len == 0 {
            return bad("block length B must be >= 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be finite and >= 0", self.lambda));
        }
        for (name, v) in [
            ("alpha_u", self.alpha_u),
            ("lr_h", self.lr_h),
            ("lr_theta", self.lr_theta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be finite and >= 0"));
            }
        }
        if self.regime == Regime::Minibatch && self.minibatch_blocks == 0 {
            return bad("minibatch_blocks must be >= 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be >= 1".into());
        }
        if self.bptt_oracle_every == Some(0) {
            return bad("oracle sampling period must be >= 1".into());
        }
        if self.h_reinit_each_epoch && self.regime == Regime::Minibatch {
            return bad("h_reinit_each_epoch applies to the batch regime only".into());
        }
        Ok(())
    }
}

/// Outcome of [`h_step`].
#[derive(Clone, Debug)]
pub struct HStepOutcome<S> {
    /// Augmented loss and gradients at the final free variables.
    pub eval: AugEval<S>,
    /// Rounds that increased the loss and were retried at half step.
    pub backtracks: usize,
    /// Augmented loss before each round and after the last.
    pub losses: Vec<S>,
}

fn apply_h_update<S: Scalar>(
    hidden: &mut HiddenStore<S>,
    grad: &[crate::diffcore::Tensor<S>],
    opt: &mut Optimizer<S>,
) -> Result<()> {
    opt.step(hidden.h.iter_mut().collect(), grad.iter().collect())
}

/// `h_steps` rounds of descent on all free variables at once (θ fixed).
/// A round that increases the augmented loss is redone once from the same
/// start with half the step size, and accepted.
#[allow(clippy::too_many_arguments)]
pub fn h_step<S: Scalar>(
    problem: &Problem<'_, S>,
    theta: &ParamSet<S>,
    hidden: &mut HiddenStore<S>,
    duals: &DualStore<S>,
    config: &TPropConfig,
    h_opt: &mut Optimizer<S>,
    start: Option<AugEval<S>>,
    exec: &Exec,
) -> Result<HStepOutcome<S>> {
    if config.h_steps == 0 {
        return Err(Error::Config("h_step needs h_steps >= 1".into()));
    }
    let mut eval = match start {
        Some(e) if !e.h_grad.is_empty() => e,
        _ => augmented_loss(problem, theta, hidden, duals, true, exec)?,
    };
    let mut backtracks = 0;
    let mut losses = vec![eval.loss];
    for _ in 0..config.h_steps {
        let saved_h = hidden.h.clone();
        let saved_opt = h_opt.clone();
        hidden.set_grads(eval.h_grad.clone());
        apply_h_update(hidden, &eval.h_grad, h_opt)?;
        let mut next = augmented_loss(problem, theta, hidden, duals, true, exec)?;
        if next.loss > eval.loss {
            backtracks += 1;
            hidden.h = saved_h;
            *h_opt = saved_opt.clone();
            h_opt.set_lr(saved_opt.lr() * S::lit(0.5));
            apply_h_update(hidden, &eval.h_grad, h_opt)?;
            h_opt.set_lr(saved_opt.lr());
            next = augmented_loss(problem, theta, hidden, duals, true, exec)?;
        }
        eval = next;
        losses.push(eval.loss);
    }
    Ok(HStepOutcome {
        eval,
        backtracks,
        losses,
    })
}

/// `theta_steps` optimizer steps on the augmented loss (free variables and
/// duals fixed). `start` supplies the gradient for the first step when it
/// was already computed at the current point. Returns the prediction loss
/// at the first gradient evaluation and that gradient.
#[allow(clippy::too_many_arguments)]
pub fn theta_step<S: Scalar>(
    problem: &Problem<'_, S>,
    theta: &mut ParamSet<S>,
    hidden: &HiddenStore<S>,
    duals: &DualStore<S>,
    config: &TPropConfig,
    opt: &mut Optimizer<S>,
    start: Option<AugEval<S>>,
    exec: &Exec,
) -> Result<AugEval<S>> {
    if config.theta_steps == 0 {
        return Err(Error::Config("theta_step needs theta_steps >= 1".into()));
    }
    let mut first: Option<AugEval<S>> = None;
    let mut pending = start.filter(|e| e.theta_grad.is_some());
    for _ in 0..config.theta_steps {
        let eval = match pending.take() {
            Some(e) => e,
            None => augmented_loss(problem, theta, hidden, duals, true, exec)?,
        };
        let g = eval.theta_grad.as_ref().expect("requested gradients");
        opt.step_params(theta, g)?;
        if first.is_none() {
            first = Some(eval);
        }
    }
    Ok(first.expect("theta_steps >= 1"))
}

/// `u <- u + alpha_u * lambda * (h - h_hat + u)` at every boundary, with
/// `h_hat` the predictions at the current θ.
pub fn dual_step<S: Scalar>(
    hidden: &HiddenStore<S>,
    h_hat: &[Vec<S>],
    duals: &mut DualStore<S>,
    config: &TPropConfig,
) -> Result<()> {
    if config.schedule == Schedule::Pm {
        return Err(Error::Config("the penalty method has no dual variables".into()));
    }
    if h_hat.len() != duals.len() || hidden.len() != duals.len() {
        return Err(Error::Dimension {
            op: "dual_step",
            left: vec![duals.len()],
            right: vec![hidden.len(), h_hat.len()],
        });
    }
    let step = S::lit(config.alpha_u) * S::lit(config.lambda);
    for ((u, h), p) in duals.u.iter_mut().zip(&hidden.h).zip(h_hat) {
        let r = residual(h.data(), p, u.data());
        for (ui, ri) in u.data_mut().iter_mut().zip(r) {
            *ui += step * ri;
        }
    }
    Ok(())
}

/// Simultaneous descent on (H, θ): every round evaluates one gradient and
/// moves both. H moves for the first `h_steps` rounds, θ for the first
/// `theta_steps`. Returns the first evaluation.
#[allow(clippy::too_many_arguments)]
pub fn joint_step<S: Scalar>(
    problem: &Problem<'_, S>,
    theta: &mut ParamSet<S>,
    hidden: &mut HiddenStore<S>,
    duals: &DualStore<S>,
    config: &TPropConfig,
    opt: &mut Optimizer<S>,
    h_opt: &mut Optimizer<S>,
    start: Option<AugEval<S>>,
    exec: &Exec,
) -> Result<AugEval<S>> {
    let rounds = config.h_steps.max(config.theta_steps);
    let mut pending = start.filter(|e| e.theta_grad.is_some() && !e.h_grad.is_empty());
    let mut first = None;
    for round in 0..rounds {
        let eval = match pending.take() {
            Some(e) => e,
            None => augmented_loss(problem, theta, hidden, duals, true, exec)?,
        };
        if round < config.h_steps {
            hidden.set_grads(eval.h_grad.clone());
            apply_h_update(hidden, &eval.h_grad, h_opt)?;
        }
        if round < config.theta_steps {
            opt.step_params(theta, eval.theta_grad.as_ref().expect("requested gradients"))?;
        }
        if first.is_none() {
            first = Some(eval);
        }
    }
    match first {
        Some(e) => Ok(e),
        None => augmented_loss(problem, theta, hidden, duals, true, exec),
    }
}
