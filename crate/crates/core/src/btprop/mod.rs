//! Blocked target propagation.
//!
//! Hidden states become free variables every `B` steps. Inside a block the
//! ordinary recurrence runs from the block's free initial state; the block's
//! final predicted state is tied to the next free variable by the penalty
//! `(lambda/2) ||h - h_hat + u||^2`. `B = 1` puts a free variable at every
//! step. Training alternates descent on the free variables, descent on the
//! parameters, and (ALM/ADMM) dual ascent.

mod block;
pub mod grid;
mod objective;
mod plan;
mod steps;
mod store;
mod train;

pub use block::{block_forward, block_forward_backward, penalty_value, residual, BlockGrad};
pub use objective::{
    augmented_loss, forward_states, mean_residual, reinit_and_eval, AugEval, Exec, Problem,
    CHUNK_BLOCKS,
};
pub use plan::{segments, Block, BlockPlan};
pub use steps::{
    dual_step, h_step, joint_step, theta_step, HStepOutcome, Schedule, TPropConfig,
};
pub use store::{DualStore, HiddenStore};
pub use train::{initial_hidden, outer_iteration, train_btprop, OuterOutcome};
