//! Parameter-update rules: plain gradient descent and Adagrad.

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::scalar::Scalar;

pub const ADAGRAD_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    Sgd,
    Adagrad,
}

impl std::str::FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" | "gd" => Ok(UpdateRule::Sgd),
            "adagrad" => Ok(UpdateRule::Adagrad),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

fn check_pairs<S: Scalar>(params: &[&mut Tensor<S>], grads: &[&Tensor<S>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Dimension {
            op: "optimizer",
            left: vec![params.len()],
            right: vec![grads.len()],
        });
    }
    for (p, g) in params.iter().zip(grads) {
        p.same_shape(g, "optimizer")?;
    }
    Ok(())
}

/// `p <- p - lr * g`.
pub fn sgd_step<S: Scalar>(params: &mut [&mut Tensor<S>], grads: &[&Tensor<S>], lr: S) -> Result<()> {
    check_pairs(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        p.axpy(-lr, g)?;
    }
    Ok(())
}

/// Per-tensor running sums of squared gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct AdagradState<S> {
    pub acc: Vec<Tensor<S>>,
    pub eps: S,
}

impl<S: Scalar> AdagradState<S> {
    pub fn new(shapes: &[&Tensor<S>]) -> Self {
        AdagradState {
            acc: shapes.iter().map(|t| t.zeros_like()).collect(),
            eps: S::lit(ADAGRAD_EPS),
        }
    }
}

/// `acc += g^2; p <- p - lr * g / (sqrt(acc) + eps)`.
pub fn adagrad_step<S: Scalar>(
    params: &mut [&mut Tensor<S>],
    grads: &[&Tensor<S>],
    state: &mut AdagradState<S>,
    lr: S,
) -> Result<()> {
    check_pairs(params, grads)?;
    if state.acc.len() != params.len() {
        return Err(Error::Dimension {
            op: "adagrad_step",
            left: vec![state.acc.len()],
            right: vec![params.len()],
        });
    }
    let eps = state.eps;
    for ((p, g), acc) in params.iter_mut().zip(grads).zip(state.acc.iter_mut()) {
        acc.same_shape(g, "adagrad_step")?;
        for ((pi, &gi), ai) in p.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut()) {
            *ai += gi * gi;
            *pi -= lr * gi / (ai.sqrt() + eps);
        }
    }
    Ok(())
}

/// An update rule with its learning rate and (for Adagrad) lazily created
/// accumulator state.
#[derive(Clone, Debug)]
pub struct Optimizer<S> {
    rule: UpdateRule,
    lr: S,
    state: Option<AdagradState<S>>,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(rule: UpdateRule, lr: f64) -> Self {
        Optimizer {
            rule,
            lr: S::lit(lr),
            state: None,
        }
    }

    pub fn rule(&self) -> UpdateRule {
        self.rule
    }

    pub fn lr(&self) -> S {
        self.lr
    }

    pub fn set_lr(&mut self, lr: S) {
        self.lr = lr;
    }

    pub fn state(&self) -> Option<&AdagradState<S>> {
        self.state.as_ref()
    }

    pub fn step(&mut self, mut params: Vec<&mut Tensor<S>>, grads: Vec<&Tensor<S>>) -> Result<()> {
        match self.rule {
            UpdateRule::Sgd => sgd_step(&mut params, &grads, self.lr),
            UpdateRule::Adagrad => {
                let state = self
                    .state
                    .get_or_insert_with(|| AdagradState::new(&grads));
                adagrad_step(&mut params, &grads, state, self.lr)
            }
        }
    }

    pub fn step_params(&mut self, theta: &mut ParamSet<S>, grads: &ParamSet<S>) -> Result<()> {
        self.step(theta.tensors_mut(), grads.tensors())
    }

    pub fn reset(&mut self) {
        self.state = None;
    }
}
