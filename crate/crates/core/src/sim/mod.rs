//! Cycle-level model of the sparse systolic training accelerator.

mod config;
mod formulas;
mod step;
pub mod trace;

pub use config::{ArrayConfig, MemoryConfig};
pub use formulas::{
    check_pattern, memory_cycles, os_effective_rate, os_tiles, peak_throughput, pipelined_cycles,
    sore_body_cycles, sore_cycles, stce_os_cycles, stce_ws_cycles, uspe_group_cycles, ws_tiles,
    wuve_cycles, GroupKind, LANES, WUVE_LATENCY,
};
pub use step::{
    simulate_optimizer, simulate_stage, simulate_training_step, CycleReport, CycleTotals,
    LayerCycles, OptimizerReport, StageReport, Utilization,
};
