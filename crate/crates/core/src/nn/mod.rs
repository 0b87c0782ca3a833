//! Layer primitives with explicit forward/backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`; calling
//! `backward` consumes that cache, so a second backward without a new forward is
//! rejected with [`Error::NoForwardCache`](crate::Error::NoForwardCache).

mod activation;
mod attention;
mod conv;
mod dense;
mod loss;
mod norm;
mod param;
mod pool;

pub use activation::{
    log_softmax_row, softmax, softmax_backward_row, softmax_in_place, Dropout, Relu, RngState,
    Tanh,
};
pub use attention::Attention;
pub use conv::{Conv1d, Conv3d};
pub use dense::Dense;
pub use loss::cross_entropy;
pub use norm::BatchNorm;
pub use param::{Mode, Module, Param};
pub use pool::{pooled_shape, MaxPool};
