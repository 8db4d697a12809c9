use std::time::Instant;

use crate::bptt::accumulate_windows;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::metrics::{EpochMetrics, Regime};
use crate::model::ParamSet;
use crate::optim::Optimizer;
use crate::scalar::Scalar;

use super::objective::{
    augmented_loss, forward_states, mean_residual, reinit_and_eval, AugEval, Exec, Problem,
};
use super::plan::{segments, BlockPlan};
use super::steps::{dual_step, h_step, joint_step, theta_step, Schedule, TPropConfig};
use super::store::{DualStore, HiddenStore};

/// Result of one outer iteration of the schedule.
#[derive(Clone, Debug)]
pub struct OuterOutcome<S> {
    /// Evaluation whose θ-gradient drove the first θ update.
    pub theta_eval: AugEval<S>,
    pub backtracks: usize,
    /// Mean `||h - h_hat||` after the θ update (and before the dual update).
    pub residual: f64,
}

/// One outer iteration: PM/ADMM run H-step, θ-step and (ADMM) dual step;
/// ALM runs the joint step then the dual step.
#[allow(clippy::too_many_arguments)]
pub fn outer_iteration<S: Scalar>(
    problem: &Problem<'_, S>,
    theta: &mut ParamSet<S>,
    hidden: &mut HiddenStore<S>,
    duals: &mut DualStore<S>,
    config: &TPropConfig,
    opt: &mut Optimizer<S>,
    h_opt: &mut Optimizer<S>,
    start: AugEval<S>,
    exec: &Exec,
) -> Result<OuterOutcome<S>> {
    let mut backtracks = 0;
    let theta_eval = match config.schedule {
        Schedule::Pm | Schedule::Admm => {
            let mut eval = start;
            if config.h_steps > 0 {
                let out = h_step(problem, theta, hidden, duals, config, h_opt, Some(eval), exec)?;
                backtracks = out.backtracks;
                eval = out.eval;
            }
            theta_step(problem, theta, hidden, duals, config, opt, Some(eval), exec)?
        }
        Schedule::Alm => joint_step(
            problem,
            theta,
            hidden,
            duals,
            config,
            opt,
            h_opt,
            Some(start),
            exec,
        )?,
    };
    let post = augmented_loss(problem, theta, hidden, duals, false, exec)?;
    let residual = mean_residual(hidden, &post.h_hat);
    if config.schedule != Schedule::Pm {
        dual_step(hidden, &post.h_hat, duals, config)?;
    }
    Ok(OuterOutcome {
        theta_eval,
        backtracks,
        residual,
    })
}

#[derive(Default)]
struct EpochTally {
    pred: f64,
    transitions: usize,
    residual_sum: f64,
    residual_count: usize,
    backtracks: usize,
    oracle: Option<f64>,
}

impl EpochTally {
    fn add<S: Scalar>(&mut self, out: &OuterOutcome<S>, boundaries: usize) {
        self.pred += out.theta_eval.pred_loss.to_f64_lossy();
        self.transitions += out.theta_eval.transitions;
        self.residual_sum += out.residual * boundaries as f64;
        self.residual_count += boundaries;
        self.backtracks += out.backtracks;
    }

    fn add_oracle(&mut self, diff: f64) {
        self.oracle = Some(self.oracle.map_or(diff, |m| m.max(diff)));
    }
}

/// Trains `theta` in place with blocked target propagation.
pub fn train_btprop<S: Scalar>(
    theta: &mut ParamSet<S>,
    train: &[usize],
    valid: Option<&[usize]>,
    config: &TPropConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    if train.len() < 2 {
        return Err(Error::Argument("training stream needs at least 2 tokens".into()));
    }
    let exec = Exec::new(config.threads)?;
    let mut opt = Optimizer::<S>::new(config.theta_optimizer, config.lr_theta);
    let mut h_opt = Optimizer::<S>::new(config.h_optimizer, config.lr_h);
    let lambda = S::lit(config.lambda);
    let d_h = theta.dims.d_h;
    let zero_state = vec![S::zero(); d_h];
    let mut history = Vec::with_capacity(config.epochs);

    // batch regime state persists across epochs
    let batch_plan = match config.regime {
        Regime::Batch => Some(BlockPlan::new(train.len(), config.block_len)?),
        Regime::Minibatch => None,
    };
    let mut batch_stores: Option<(HiddenStore<S>, DualStore<S>)> = None;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut tally = EpochTally::default();
        match config.regime {
            Regime::Batch => {
                let plan = batch_plan.as_ref().expect("batch plan");
                let problem = Problem {
                    tokens: train,
                    plan,
                    h_start: &zero_state,
                    lambda,
                };
                let fresh = batch_stores.is_none() || config.h_reinit_each_epoch;
                let (hidden, duals) = batch_stores.get_or_insert_with(|| {
                    (HiddenStore::zeros(plan.len(), d_h), DualStore::zeros(plan.len(), d_h))
                });
                let start = if fresh {
                    reinit_and_eval(&problem, theta, hidden, duals)?
                } else {
                    augmented_loss(&problem, theta, hidden, duals, true, &exec)?
                };
                let out = outer_iteration(
                    &problem, theta, hidden, duals, config, &mut opt, &mut h_opt, start, &exec,
                )?;
                tally.add(&out, plan.len());
            }
            Regime::Minibatch => {
                let mut carry = zero_state.clone();
                for (si, seg) in segments(train.len(), config.block_len, config.minibatch_blocks)
                    .into_iter()
                    .enumerate()
                {
                    let tokens = &train[seg];
                    let plan = BlockPlan::new(tokens.len(), config.block_len)?;
                    let problem = Problem {
                        tokens,
                        plan: &plan,
                        h_start: &carry,
                        lambda,
                    };
                    let mut hidden = HiddenStore::zeros(plan.len(), d_h);
                    let mut duals = DualStore::zeros(plan.len(), d_h);
                    let start = reinit_and_eval(&problem, theta, &mut hidden, &mut duals)?;
                    let oracle = match config.bptt_oracle_every {
                        Some(n) if si % n == 0 => {
                            let mut g = theta.zeros_like();
                            accumulate_windows(
                                theta,
                                tokens,
                                config.block_len,
                                &Tensor::from_vec(carry.clone()),
                                &mut g,
                            )?;
                            Some(g)
                        }
                        _ => None,
                    };
                    h_opt.reset();
                    let out = outer_iteration(
                        &problem,
                        theta,
                        &mut hidden,
                        &mut duals,
                        config,
                        &mut opt,
                        &mut h_opt,
                        start,
                        &exec,
                    )?;
                    if let Some(g) = oracle {
                        let used = out.theta_eval.theta_grad.as_ref().expect("θ-gradient");
                        tally.add_oracle(used.max_abs_diff(&g)?.to_f64_lossy());
                    }
                    tally.add(&out, plan.len());
                    carry = hidden.h.last().expect("non-empty plan").data().to_vec();
                }
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
            train_loss: tally.pred / tally.transitions as f64,
            valid_ppl,
            mean_residual: Some(tally.residual_sum / tally.residual_count.max(1) as f64),
            h_backtracks: Some(tally.backtracks),
            oracle_max_diff: tally.oracle,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&m);
        history.push(m);
    }
    Ok(history)
}

/// Free variables initialized to the forward recurrence over `plan`.
pub fn initial_hidden<S: Scalar>(
    problem: &Problem<'_, S>,
    theta: &ParamSet<S>,
) -> Result<HiddenStore<S>> {
    Ok(HiddenStore::from_states(forward_states(problem, theta)?))
}
