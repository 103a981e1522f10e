//! Layered spiking network for payload configuration classification.
//!
//! Neurons follow a current-based LIF recursion with reset-to-zero; training
//! backpropagates through time with an exponential surrogate derivative
//! against a squared spike-rate loss, and classes are decoded by the output
//! neuron with the most spikes.

mod engine;
pub mod error;
pub mod network;
pub mod neuron;
pub mod train;

pub use engine::Mode;
pub use error::{Error, Result};
pub use network::{predict_counts, synops_from_counts, LayeredSnn, RunStats};
pub use neuron::{layer_step, LayerState, NeuronParams};
pub use train::{
    evaluate, loss_and_gradients, spike_rate_loss, train, EncodedSet, EpochRecord, Evaluation, History, LrSchedule,
    TrainHyper,
};
