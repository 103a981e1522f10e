//! Convolutional baseline: conv/pool feature extractor, dense head, softmax
//! output, trained with minibatch SGD and Nesterov momentum.

pub mod error;
pub mod model;
pub mod spec;
pub mod train;

pub use error::{Error, Result};
pub use model::{softmax, Cnn, LayerParams, Loss};
pub use spec::{Activation, CnnSpec, LayerSpec, Shape};
pub use train::{cnn_train, evaluate, weight_hash, CnnDataset, EpochRecord, Evaluation, History, SgdHyper};
