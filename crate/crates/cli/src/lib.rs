//! Metrics, sweeps, model comparison and the `satneuro` command-line
//! pipeline.

pub mod compare;
pub mod config;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod svg;
pub mod sweep;

pub use compare::{compare_models, Comparison};
pub use config::{CnnConfig, DataConfig, RunConfig, SnnConfig};
pub use error::{Error, Result};
pub use manifest::{version_string, Manifest};
pub use metrics::{capacity_gap, classification_report, ConfusionMatrix, MetricsReport};
pub use pipeline::{FeatureCache, ModelEvaluation, Split};
pub use sweep::{run_sweep, SweepAxis, SweepPoint, SweepSpec};
