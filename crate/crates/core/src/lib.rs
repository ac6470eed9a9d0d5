//! Sequence- and document-level minimum risk training for autoregressive
//! sequence models, with exhaustive enumeration oracles for small instances.

pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod mrt;
pub mod sampling;
pub mod textcore;

pub use error::{Error, Result};
