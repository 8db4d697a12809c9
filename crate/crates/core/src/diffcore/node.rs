//! Single-op nodes that save their forward context for a later backward.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::ops;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Add,
    Hadamard,
    /// Inputs are `[W, v]`.
    Matvec,
    Sigmoid,
    Tanh,
}

impl OpKind {
    pub fn arity(self) -> usize {
        match self {
            OpKind::Add | OpKind::Hadamard | OpKind::Matvec => 2,
            OpKind::Sigmoid | OpKind::Tanh => 1,
        }
    }
}

/// An op plus whatever its backward needs from the forward pass.
#[derive(Clone, Debug)]
pub struct Node<S> {
    kind: OpKind,
    saved: Option<Saved<S>>,
}

#[derive(Clone, Debug)]
struct Saved<S> {
    inputs: Vec<Tensor<S>>,
    output: Tensor<S>,
}

impl<S: Scalar> Node<S> {
    pub fn new(kind: OpKind) -> Self {
        Node { kind, saved: None }
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn forward(&mut self, inputs: &[&Tensor<S>]) -> Result<Tensor<S>> {
        if inputs.len() != self.kind.arity() {
            return Err(Error::Argument(format!(
                "{:?} takes {} inputs, got {}",
                self.kind,
                self.kind.arity(),
                inputs.len()
            )));
        }
        let output = match self.kind {
            OpKind::Add => ops::add(inputs[0], inputs[1])?,
            OpKind::Hadamard => ops::hadamard(inputs[0], inputs[1])?,
            OpKind::Matvec => ops::matvec(inputs[0], inputs[1])?,
            OpKind::Sigmoid => ops::sigmoid(inputs[0]),
            OpKind::Tanh => ops::tanh_(inputs[0]),
        };
        self.saved = Some(Saved {
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            output: output.clone(),
        });
        Ok(output)
    }

    /// Accumulates the vector-Jacobian product of `upstream` into `grads`,
    /// one buffer per forward input.
    pub fn backward(&self, upstream: &Tensor<S>, grads: &mut [Tensor<S>]) -> Result<()> {
        let saved = self
            .saved
            .as_ref()
            .ok_or_else(|| Error::State(format!("{:?}: backward before forward", self.kind)))?;
        if grads.len() != self.kind.arity() {
            return Err(Error::Argument(format!(
                "{:?} expects {} gradient buffers, got {}",
                self.kind,
                self.kind.arity(),
                grads.len()
            )));
        }
        upstream.same_shape(&saved.output, "backward")?;
        match self.kind {
            OpKind::Add => {
                let (ga, gb) = grads.split_at_mut(1);
                ops::add_backward(upstream, &mut ga[0], &mut gb[0])
            }
            OpKind::Hadamard => {
                let (ga, gb) = grads.split_at_mut(1);
                ops::hadamard_backward(
                    upstream,
                    &saved.inputs[0],
                    &saved.inputs[1],
                    &mut ga[0],
                    &mut gb[0],
                )
            }
            OpKind::Matvec => {
                let (gw, gv) = grads.split_at_mut(1);
                ops::matvec_backward(
                    upstream,
                    &saved.inputs[0],
                    &saved.inputs[1],
                    &mut gw[0],
                    &mut gv[0],
                )
            }
            OpKind::Sigmoid => ops::sigmoid_backward(upstream, &saved.output, &mut grads[0]),
            OpKind::Tanh => ops::tanh_backward(upstream, &saved.output, &mut grads[0]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let node = Node::<f64>::new(OpKind::Tanh);
        let mut g = [Tensor::vector(2)];
        let err = node.backward(&Tensor::vector(2), &mut g).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn wrong_arity_rejected() {
        let mut node = Node::<f64>::new(OpKind::Add);
        let a = Tensor::vector(2);
        assert!(matches!(node.forward(&[&a]), Err(Error::Argument(_))));
    }
}
