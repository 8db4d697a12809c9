//! Recurrent cells (Elman, GRU), the language-model head, and sequence
//! forward/backward.

mod cell;
pub mod checkpoint;
mod params;
mod seq;

pub use cell::{
    cell_backward, cell_forward, cell_forward_slice, head_backward, predict, predict_slice,
    StepContext,
};
pub use params::{CellKind, CellParams, ModelDims, ParamSet};
pub use seq::{forward_loss, forward_trace, seq_forward_backward, SeqGrad, Trace};
