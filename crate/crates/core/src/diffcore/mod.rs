//! Dense tensors, the forward kernels an Elman/GRU language model needs,
//! and exact analytic backward passes for each of them.

pub mod node;
pub mod ops;
mod tensor;

pub use node::{Node, OpKind};
pub use ops::{
    add, hadamard, matvec, sigmoid, sigmoid_scalar, softmax, softmax_xent, tanh_,
};
pub use tensor::{Grad, Shape, Tensor};
