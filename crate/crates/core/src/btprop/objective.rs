//! The augmented loss summed over a plan, computed block-parallel with a
//! reduction whose order depends only on block indices.

use rayon::prelude::*;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::scalar::Scalar;

use super::block::{block_forward, block_forward_backward};
use super::plan::BlockPlan;
use super::store::{DualStore, HiddenStore};

/// Blocks per work unit. Fixed so that partial sums never depend on the
/// thread count.
pub const CHUNK_BLOCKS: usize = 16;
/// Work units materialized at once before being folded into the total.
const WAVE_CHUNKS: usize = 32;

/// Thread pool for block work; `threads == 1` runs inline.
pub struct Exec {
    pool: Option<rayon::ThreadPool>,
}

impl Exec {
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        let pool = if threads == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?,
            )
        };
        Ok(Exec { pool })
    }

    pub fn sequential() -> Self {
        Exec { pool: None }
    }

    /// `(0..n).map(f)` with results in index order.
    pub fn map<T: Send>(&self, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        match &self.pool {
            None => (0..n).map(f).collect(),
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }
}

/// A plan over a token slice whose first block starts from a constant.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a, S> {
    pub tokens: &'a [usize],
    pub plan: &'a BlockPlan,
    pub h_start: &'a [S],
    pub lambda: S,
}

impl<'a, S: Scalar> Problem<'a, S> {
    fn h_in<'b>(&'b self, hidden: &'b HiddenStore<S>, block: usize) -> &'b [S] {
        match self.plan.blocks[block].h_in {
            Some(i) => hidden.h[i].data(),
            None => self.h_start,
        }
    }
}

/// Value (and optionally gradients) of the augmented loss.
#[derive(Clone, Debug)]
pub struct AugEval<S> {
    pub loss: S,
    pub pred_loss: S,
    pub penalty: S,
    pub transitions: usize,
    /// Final predicted state of every block.
    pub h_hat: Vec<Vec<S>>,
    pub theta_grad: Option<ParamSet<S>>,
    /// Gradient for every free variable (empty when not requested).
    pub h_grad: Vec<Tensor<S>>,
}

impl<S: Scalar> AugEval<S> {
    /// Mean `||h - h_hat||_2` over all boundaries.
    pub fn mean_residual(&self, hidden: &HiddenStore<S>) -> f64 {
        mean_residual(hidden, &self.h_hat)
    }
}

pub fn mean_residual<S: Scalar>(hidden: &HiddenStore<S>, h_hat: &[Vec<S>]) -> f64 {
    let total: f64 = hidden
        .h
        .iter()
        .zip(h_hat)
        .map(|(h, p)| {
            h.data()
                .iter()
                .zip(p)
                .map(|(&a, &b)| {
                    let d = (a - b).to_f64_lossy();
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    total / h_hat.len().max(1) as f64
}

struct BlockOut<S> {
    pred: S,
    penalty: S,
    transitions: usize,
    h_hat: Vec<S>,
    dh_in: Vec<S>,
    dh_next: Vec<S>,
}

fn check_stores<S: Scalar>(problem: &Problem<'_, S>, hidden: &HiddenStore<S>, duals: &DualStore<S>) -> Result<()> {
    let n = problem.plan.num_free();
    if hidden.len() != n || duals.len() != n {
        return Err(Error::Dimension {
            op: "augmented_loss",
            left: vec![n],
            right: vec![hidden.len(), duals.len()],
        });
    }
    Ok(())
}

/// Augmented loss over all blocks of `problem`. With `grads`, also returns
/// the θ-gradient and per-free-variable gradients.
pub fn augmented_loss<S: Scalar>(
    problem: &Problem<'_, S>,
    theta: &ParamSet<S>,
    hidden: &HiddenStore<S>,
    duals: &DualStore<S>,
    grads: bool,
    exec: &Exec,
) -> Result<AugEval<S>> {
    check_stores(problem, hidden, duals)?;
    let blocks = &problem.plan.blocks;
    let n_chunks = blocks.len().div_ceil(CHUNK_BLOCKS);

    let run_chunk = |c: usize| -> Result<(Option<ParamSet<S>>, Vec<BlockOut<S>>)> {
        let lo = c * CHUNK_BLOCKS;
        let hi = (lo + CHUNK_BLOCKS).min(blocks.len());
        let mut partial = grads.then(|| theta.zeros_like());
        let mut outs = Vec::with_capacity(hi - lo);
        for b in lo..hi {
            let blk = &blocks[b];
            let toks = &problem.tokens[blk.tokens.clone()];
            let h_in = problem.h_in(hidden, b);
            let h_next = hidden.h[blk.boundary].data();
            let u = duals.u[blk.boundary].data();
            let out = match partial.as_mut() {
                Some(g) => {
                    let r = block_forward_backward(theta, toks, h_in, h_next, u, problem.lambda, g)?;
                    BlockOut {
                        pred: r.pred_loss,
                        penalty: r.penalty,
                        transitions: r.transitions,
                        h_hat: r.h_hat,
                        dh_in: r.dh_in,
                        dh_next: r.dh_next,
                    }
                }
                None => {
                    let (pred, penalty, h_hat) =
                        block_forward(theta, toks, h_in, h_next, u, problem.lambda)?;
                    BlockOut {
                        pred,
                        penalty,
                        transitions: blk.transitions(),
                        h_hat,
                        dh_in: Vec::new(),
                        dh_next: Vec::new(),
                    }
                }
            };
            outs.push(out);
        }
        Ok((partial, outs))
    };

    let mut theta_grad = grads.then(|| theta.zeros_like());
    let mut outs: Vec<BlockOut<S>> = Vec::with_capacity(blocks.len());
    let mut wave_start = 0;
    while wave_start < n_chunks {
        let wave_len = WAVE_CHUNKS.min(n_chunks - wave_start);
        let results = exec.map(wave_len, |i| run_chunk(wave_start + i));
        for r in results {
            let (partial, chunk_outs) = r?;
            if let (Some(total), Some(p)) = (theta_grad.as_mut(), partial) {
                total.accumulate(&p)?;
            }
            outs.extend(chunk_outs);
        }
        wave_start += wave_len;
    }
    Ok(assemble(problem, outs, theta_grad, grads))
}

fn assemble<S: Scalar>(
    problem: &Problem<'_, S>,
    outs: Vec<BlockOut<S>>,
    theta_grad: Option<ParamSet<S>>,
    grads: bool,
) -> AugEval<S> {
    let blocks = &problem.plan.blocks;
    let mut pred_loss = S::zero();
    let mut penalty = S::zero();
    let mut transitions = 0;
    for o in &outs {
        pred_loss += o.pred;
        penalty += o.penalty;
        transitions += o.transitions;
    }
    let mut h_grad = Vec::new();
    if grads {
        h_grad = outs.iter().map(|o| Tensor::from_vec(o.dh_next.clone())).collect();
        for (blk, o) in blocks.iter().zip(&outs) {
            if let Some(i) = blk.h_in {
                for (g, &d) in h_grad[i].data_mut().iter_mut().zip(&o.dh_in) {
                    *g += d;
                }
            }
        }
    }
    AugEval {
        loss: pred_loss + penalty,
        pred_loss,
        penalty,
        transitions,
        h_hat: outs.into_iter().map(|o| o.h_hat).collect(),
        theta_grad,
        h_grad,
    }
}

/// Re-initializes every free variable to the recurrence's prediction
/// (`h_b <- h_hat_b`, sequentially from `h_start`), zeroes the duals, and
/// returns the augmented loss with gradients at that point.
pub fn reinit_and_eval<S: Scalar>(
    problem: &Problem<'_, S>,
    theta: &ParamSet<S>,
    hidden: &mut HiddenStore<S>,
    duals: &mut DualStore<S>,
) -> Result<AugEval<S>> {
    check_stores(problem, hidden, duals)?;
    duals.reset();
    let mut grad = theta.zeros_like();
    let mut outs = Vec::with_capacity(problem.plan.len());
    for (b, blk) in problem.plan.blocks.iter().enumerate() {
        let toks = &problem.tokens[blk.tokens.clone()];
        let h_in = match blk.h_in {
            Some(i) => hidden.h[i].data().to_vec(),
            None => problem.h_start.to_vec(),
        };
        let trace = crate::model::forward_trace(theta, toks, &h_in)?;
        let h_hat = trace.final_state().to_vec();
        hidden.h[b].data_mut().copy_from_slice(&h_hat);
        // residual is exactly zero here, so the penalty adds no force
        let dh_in = trace.backward(theta, None, &mut grad);
        outs.push(BlockOut {
            pred: trace.loss,
            penalty: S::zero(),
            transitions: trace.len(),
            dh_next: vec![S::zero(); h_hat.len()],
            h_hat,
            dh_in,
        });
    }
    Ok(assemble(problem, outs, Some(grad), true))
}

/// Free variables set to the plain forward recurrence from `h_start`.
pub fn forward_states<S: Scalar>(problem: &Problem<'_, S>, theta: &ParamSet<S>) -> Result<Vec<Vec<S>>> {
    let mut states: Vec<Vec<S>> = Vec::with_capacity(problem.plan.len());
    for blk in &problem.plan.blocks {
        let h_in = match blk.h_in {
            Some(i) => &states[i][..],
            None => problem.h_start,
        };
        let (_, h) = crate::model::forward_loss(theta, &problem.tokens[blk.tokens.clone()], h_in)?;
        states.push(h);
    }
    Ok(states)
}
