//! The two classifier architectures, their runtime, training and checkpoints.

mod checkpoint;
mod network;
mod spec;
mod train;

pub use checkpoint::{transplant_embeddings, Checkpoint, RngState};
pub use network::{Batch, Gradients, Input, Mode, NamedParam, Network, Trace};
pub use spec::{
    build_cnn, build_cnn_with, build_lstm, CnnOptions, LayerSpec, ModelKind, ModelSpec, ParamLayout, Shape,
};
pub use train::{
    evaluate, evaluate_with_lexicon, make_batch, recalibrate_batchnorm, train, EpochRecord, Evaluation, History, TrainConfig, TrainOutcome,
};
