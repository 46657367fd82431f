//! Forward and backward kernels for the layers the two architectures use.
//!
//! Public functions take and return [`Tensor`](crate::Tensor)s and validate
//! shapes; the `pub(crate)` kernels work on raw row-major slices and are what
//! the models call in their hot loops.

mod activation;
mod conv;
mod dense;
mod dropout;
mod loss;
mod lstm;
mod pool;

pub use activation::{relu, sigmoid, softmax, tanh};
pub use conv::conv1d;
pub use dense::dense;
pub use dropout::{dropout, Mode};
pub use loss::{cross_entropy_loss, weighted_cross_entropy_loss, PROB_FLOOR};
pub use lstm::{bilstm_forward, lstm_cell_step, LstmWeights};
pub use pool::maxpool1d;

pub(crate) use activation::{relu_backward_inplace, softmax_backward_rows, softmax_rows_inplace};
pub(crate) use conv::{conv1d_backward, conv1d_forward};
pub(crate) use dense::{dense_backward, dense_forward};
pub(crate) use dropout::dropout_mask;
pub(crate) use loss::cross_entropy_backward;
pub(crate) use lstm::{lstm_direction_backward, lstm_direction_forward, DirectionCache, OutLayout};
pub(crate) use pool::{maxpool_backward, maxpool_forward};
