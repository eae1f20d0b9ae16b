//! Minimal dense-tensor layers with hand-written gradients.
//!
//! Every op is a pure function over batch-first `f64` tensors. Work is
//! split across samples with rayon; per-sample parameter gradients are summed
//! in sample order, so results do not depend on the thread count.

mod adam;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod embedding;
mod gradcheck;
pub mod init;
mod loss;
mod lstm;
mod pool;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use batchnorm::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, update_running, BatchNormCache, BatchNormGrads,
    DEFAULT_EPSILON as BN_EPSILON, DEFAULT_MOMENTUM as BN_MOMENTUM,
};
pub use conv::{conv2d_backward, conv2d_forward, relu, relu_backward, Conv2dGrads};
pub use dense::{dense_backward, dense_forward, Activation, DenseGrads};
pub use dropout::{dropout, dropout_backward};
pub use embedding::{embedding_backward, embedding_forward};
pub use gradcheck::{GradCheck, GradCheckReport};
pub use loss::{softmax, softmax_xent, softmax_xent_batch};
pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmGrads, LstmOutput, LstmWeights};
pub use pool::{pool2d_backward, pool2d_forward, PoolKind, Pooled};
pub use tensor::{Param, Tensor};
