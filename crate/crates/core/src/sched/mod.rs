//! Run-time scheduling of training stages onto the accelerator.

mod schedule;
mod word;

pub use schedule::{
    assign_sparse_modes, emit_config_words, lower_network, place_sore, schedule, select_dataflow,
    MatMulShape, Schedule, SorePolicy,
};
pub use word::{ConfigWord, Dataflow, SorePlacement, SparseMode, SparseOperand, Tiles};
