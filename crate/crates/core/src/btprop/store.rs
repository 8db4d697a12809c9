use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Free hidden-state variables, one per block, with a parallel gradient
/// buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStore<S> {
    pub h: Vec<Tensor<S>>,
    pub grad: Vec<Tensor<S>>,
}

impl<S: Scalar> HiddenStore<S> {
    pub fn zeros(count: usize, d_h: usize) -> Self {
        HiddenStore {
            h: (0..count).map(|_| Tensor::vector(d_h)).collect(),
            grad: (0..count).map(|_| Tensor::vector(d_h)).collect(),
        }
    }

    pub fn from_states(states: Vec<Vec<S>>) -> Self {
        let grad = states.iter().map(|s| Tensor::vector(s.len())).collect();
        HiddenStore {
            h: states.into_iter().map(Tensor::from_vec).collect(),
            grad,
        }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn set_states(&mut self, states: &[Vec<S>]) -> Result<()> {
        if states.len() != self.h.len() {
            return Err(Error::Dimension {
                op: "set_states",
                left: vec![self.h.len()],
                right: vec![states.len()],
            });
        }
        for (h, s) in self.h.iter_mut().zip(states) {
            h.data_mut().copy_from_slice(s);
        }
        Ok(())
    }

    pub fn set_grads(&mut self, grads: Vec<Tensor<S>>) {
        self.grad = grads;
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<S> {
        let mut m = S::zero();
        for (a, b) in self.h.iter().zip(&other.h) {
            m = m.max(a.max_abs_diff(b)?);
        }
        Ok(m)
    }
}

/// Dual variables, indexed like [`HiddenStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct DualStore<S> {
    pub u: Vec<Tensor<S>>,
}

impl<S: Scalar> DualStore<S> {
    pub fn zeros(count: usize, d_h: usize) -> Self {
        DualStore {
            u: (0..count).map(|_| Tensor::vector(d_h)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn reset(&mut self) {
        self.u.iter_mut().for_each(Tensor::fill_zero);
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().all(|t| t.data().iter().all(|x| *x == S::zero()))
    }
}
