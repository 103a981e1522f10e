//! Core building blocks for learning on-board radio resource management of a
//! flexible multibeam GEO payload.
//!
//! The crate covers the non-learning half of the pipeline:
//!
//! - [`linkbudget`]: channel gain, CINR, ModCod lookup and the per-beam
//!   capacity table.
//! - [`configspace`]: payload configuration enumeration, power/bandwidth
//!   feasibility and the reduced class catalog.
//! - [`traffic`]: synthetic spatio-temporal demand grids and per-beam
//!   aggregation.
//! - [`oracle`]: the allocation objective, exhaustive search and labeled
//!   dataset construction.
//! - [`encoding`]: grid preprocessing and spike encoders (rate and TEM).
//! - [`checkpoint`]: the JSON-header + raw float block model file format.

pub mod checkpoint;
pub mod configspace;
pub mod encoding;
pub mod error;
pub mod linkbudget;
pub mod oracle;
pub mod serde_inf;
pub mod traffic;
pub mod util;

pub use error::{Error, Result};
