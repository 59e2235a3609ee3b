//! N:M structured sparse training with bidirectional weight pruning, a
//! cycle-level model of a sparse systolic training accelerator, and the
//! offline scheduler that maps training stages onto it.

pub mod error;
pub mod harness;
pub mod model;
pub mod nm;
pub mod sched;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
