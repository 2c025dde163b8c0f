//! Dense `f64` tensors, a reverse-mode differentiation tape and an Adam
//! optimizer: enough machinery to train convolutional, recurrent and
//! attention encoders on the CPU.

mod adam;
mod error;
mod gradcheck;
mod kernels;
mod ops;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use error::{AutodiffError, Result};
pub use gradcheck::grad_check;
pub use ops::OpKind;
pub use params::{uniform_fan_in, BoundParams, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
