//! Closed-form cycle counts of the array, the sorting engine, the update
//! engine and external memory.

use crate::error::{Error, Result};
use crate::model::StageDims;
use crate::nm::NmConfig;

use super::config::{ArrayConfig, MemoryConfig};

/// Lanes of the sorting and weight-update engines.
pub const LANES: u64 = 32;
/// Per-lane latency of the weight-update datapath.
pub const WUVE_LATENCY: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Sparse,
    Dense,
}

/// Cycles a PE spends on one group dot product. Dense work runs as 2:2 groups.
pub fn uspe_group_cycles(kind: GroupKind, nm: NmConfig) -> u64 {
    match kind {
        GroupKind::Sparse => nm.n() as u64,
        GroupKind::Dense => 2,
    }
}

/// MACs per cycle per PE in the output-stationary dataflow.
pub fn os_effective_rate(array: &ArrayConfig) -> f64 {
    if array.interleave {
        1.0
    } else {
        1.0 / array.pipeline_depth as f64
    }
}

/// Checks that a packed pattern can run on the array's PEs.
pub fn check_pattern(nm: NmConfig, array: &ArrayConfig) -> Result<()> {
    if nm.m() != array.m || nm.n() > array.n {
        return Err(Error::contract(
            "sim",
            "stce_ws_cycles",
            format!("pattern {nm} does not fit {}:{} PEs", array.n, array.m),
        ));
    }
    Ok(())
}

/// Weight-stationary tile plan: `(tiles, cycles per tile)`.
///
/// The stationary operand is `reduction x cols`, packed when `pattern` is
/// given; each tile holds `rows` of the array's compact groups by `cols` of
/// its output columns and streams every row of the left operand.
pub fn ws_tiles(
    dims: StageDims,
    pattern: Option<NmConfig>,
    array: &ArrayConfig,
) -> Result<(u64, u64)> {
    let (n, m) = match pattern {
        Some(nm) => {
            check_pattern(nm, array)?;
            (nm.n() as u64, nm.m() as u64)
        }
        None => (2, 2),
    };
    let groups = dims.reduction.div_ceil(m);
    let tiles = groups.div_ceil(array.rows) * dims.cols.div_ceil(array.cols);
    let per_tile = array.rows + n * dims.rows + array.skew() + array.drain();
    Ok((tiles, per_tile))
}

pub fn stce_ws_cycles(
    dims: StageDims,
    pattern: Option<NmConfig>,
    array: &ArrayConfig,
) -> Result<u64> {
    let (tiles, per_tile) = ws_tiles(dims, pattern, array)?;
    Ok(tiles * per_tile)
}

/// Output-stationary tile plan: `(tiles, cycles per tile)`. Operands are dense.
pub fn os_tiles(dims: StageDims, array: &ArrayConfig) -> (u64, u64) {
    let tiles = dims.rows.div_ceil(array.rows) * dims.cols.div_ceil(array.cols);
    let slots = dims.reduction.div_ceil(2) * 2;
    let stall = if array.interleave {
        1
    } else {
        array.pipeline_depth
    };
    (tiles, slots * stall + array.skew() + array.cols)
}

pub fn stce_os_cycles(dims: StageDims, array: &ArrayConfig) -> u64 {
    let (tiles, per_tile) = os_tiles(dims, array);
    tiles * per_tile
}

/// Streaming part of the sorting engine: one group per lane every `m` cycles.
pub fn sore_body_cycles(groups: u64, nm: NmConfig) -> u64 {
    nm.m() as u64 * groups.div_ceil(LANES)
}

/// Sorting engine including its first-result latency.
pub fn sore_cycles(groups: u64, nm: NmConfig) -> u64 {
    if groups == 0 {
        0
    } else {
        sore_body_cycles(groups, nm) + nm.m() as u64
    }
}

pub fn wuve_cycles(params: u64) -> u64 {
    if params == 0 {
        0
    } else {
        params.div_ceil(LANES) + WUVE_LATENCY
    }
}

pub fn memory_cycles(bytes: u64, mem: &MemoryConfig, array: &ArrayConfig) -> u64 {
    let num = bytes as u128 * array.freq_hz as u128;
    num.div_ceil(mem.bandwidth_bps as u128) as u64
}

/// Peak FLOP/s. Sparse peaks count the pruned-away work as performed.
pub fn peak_throughput(array: &ArrayConfig, sparse: Option<NmConfig>) -> f64 {
    let rate = os_effective_rate(array);
    let dense = (array.pes() * 2 * array.freq_hz) as f64 * rate;
    match sparse {
        None => dense,
        Some(nm) => dense * nm.m() as f64 / nm.n() as f64,
    }
}

/// Double-buffered execution of `tiles` equal compute tiles with `memory`
/// transfer cycles spread evenly over them: the first tile's transfer is
/// exposed, every later transfer overlaps the previous tile's compute, and
/// the last tile's compute is exposed.
pub fn pipelined_cycles(tiles: u64, compute_per_tile: u64, memory: u64) -> u64 {
    if tiles == 0 {
        return memory;
    }
    let (q, r) = (memory / tiles, memory % tiles);
    let first = q + u64::from(r > 0);
    // Tiles 2..=T: the first `r` get q+1 transfer cycles, counting the first.
    let big = r.saturating_sub(1);
    let small = tiles - 1 - big;
    first + big * compute_per_tile.max(q + 1) + small * compute_per_tile.max(q) + compute_per_tile
}
