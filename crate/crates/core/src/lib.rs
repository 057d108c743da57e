//! Embedded neural Hawkes processes for multivariate event sequences.
//!
//! Each event type carries a learned input and output embedding, and a small
//! network maps the time since an event to a nonnegative D×D kernel. The impact
//! of one type on another is the embedding-weighted contraction of that kernel.

pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod interpret;
pub mod model;
pub mod nn;
pub mod predict;
pub mod simulate;
pub mod train;

pub use data::{Dataset, Event, EventSequence, Split};
pub use error::{Error, Result};
pub use model::{EnhpModel, IntegratorConfig, ModelConfig};
