//! Recurrent language models trained with truncated back-propagation
//! through time and with blocked target propagation (penalty method,
//! augmented Lagrangian and ADMM schedules), plus executable checks of the
//! gradient identities that connect the two.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which every training and verification path uses.

pub mod bptt;
pub mod btprop;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod seed;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = diffcore::Tensor<f64>;
pub type ParamSet = model::ParamSet<f64>;
pub type HiddenStore = btprop::HiddenStore<f64>;
pub type DualStore = btprop::DualStore<f64>;

pub type Tensor32 = diffcore::Tensor<f32>;
pub type ParamSet32 = model::ParamSet<f32>;
