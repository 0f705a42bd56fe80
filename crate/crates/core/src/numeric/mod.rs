//! Dense matrices, a reverse-mode tape over them, and gradient checking.

mod gradcheck;
mod params;
mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_EPS};
pub use params::{Gradients, ParamStore};
pub use tape::{NodeId, Tape, VjpFn};
pub use tensor::{recur, sigmoid, softmax_rows, temporal_conv1d_meanpool, Tensor2};
