//! Cycle-stepped reference model of the array.
//!
//! Every PE is a small state machine advanced one clock at a time; operands
//! and partial sums hop one PE per cycle. Besides the cycle count the trace
//! produces the numerical result, so it doubles as a functional model.
//!
//! Tiles always occupy the whole array: unused PEs hold zero weights and the
//! controller waits for the full drain before the next tile.

use crate::error::{Error, Result};
use crate::nm::{DenseMatrix, GroupAxis, PackedSparseTensor};

use super::config::ArrayConfig;
use super::formulas::check_pattern;

#[derive(Debug, Clone)]
pub struct TraceResult {
    pub cycles: u64,
    pub output: DenseMatrix,
}

#[derive(Clone, Copy)]
enum Pe {
    Idle,
    Busy { until: u64 },
}

/// Weight-stationary trace of `a · w` with `w` packed along its rows.
///
/// Each PE holds one compact group and folds it over `n` cycles per
/// activation row; the row's activation group enters from the west and the
/// partial sum from the north.
pub fn trace_ws(
    a: &DenseMatrix,
    w: &PackedSparseTensor,
    array: &ArrayConfig,
) -> Result<TraceResult> {
    if w.axis() != GroupAxis::Rows {
        return Err(Error::contract(
            "sim",
            "trace_ws",
            "stationary operand must be grouped along rows",
        ));
    }
    if a.cols() != w.rows() {
        return Err(Error::shape(format!(
            "trace_ws {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let nm = w.nm();
    if !(nm.n() == 2 && nm.m() == 2) {
        check_pattern(nm, array)?;
    }
    let (r, c) = (array.rows as usize, array.cols as usize);
    let (n, m) = (nm.n(), nm.m());
    let (rows, red, cols) = (a.rows(), a.cols(), w.cols());
    let blocks = w.groups_per_line();
    let mut out = vec![0f32; rows * cols];
    let mut cycles = 0u64;

    for gb in (0..blocks).step_by(r) {
        for cb in (0..cols).step_by(c) {
            // started[i][j][t]: cycle PE (i, j) began activation row t.
            let mut started = vec![vec![vec![u64::MAX; rows]; c]; r];
            let mut psum = vec![vec![vec![0f32; rows]; c]; r];
            let mut state = vec![vec![Pe::Idle; c]; r];
            let mut next = vec![vec![0usize; c]; r];
            let mut last_finish = 0u64;
            let mut remaining = r * c * rows;
            // Weights shift in from the north edge, one array row per cycle.
            let mut clock = array.rows;
            while remaining > 0 {
                for i in 0..r {
                    for j in 0..c {
                        if let Pe::Busy { until } = state[i][j] {
                            if clock < until {
                                continue;
                            }
                            state[i][j] = Pe::Idle;
                        }
                        let t = next[i][j];
                        if t == rows {
                            continue;
                        }
                        let west_ok = j == 0 || started[i][j - 1][t] < clock;
                        let north_ok = i == 0 || started[i - 1][j][t] < clock;
                        if !(west_ok && north_ok) {
                            continue;
                        }
                        started[i][j][t] = clock;
                        let until = clock + n as u64;
                        state[i][j] = Pe::Busy { until };
                        last_finish = last_finish.max(until);
                        next[i][j] += 1;
                        remaining -= 1;

                        let mut acc = if i == 0 { 0.0 } else { psum[i - 1][j][t] };
                        let (block, col) = (gb + i, cb + j);
                        if block < blocks && col < cols {
                            let g = block * cols + col;
                            for s in g * n..(g + 1) * n {
                                let k = block * m + w.indexes()[s] as usize;
                                if k < red {
                                    acc += a.get(t, k) * w.values()[s];
                                }
                            }
                        }
                        psum[i][j][t] = acc;
                    }
                }
                clock += 1;
            }
            for j in 0..c.min(cols - cb) {
                for t in 0..rows {
                    out[t * cols + cb + j] += psum[r - 1][j][t];
                }
            }
            cycles += last_finish + array.drain();
        }
    }
    Ok(TraceResult {
        cycles,
        output: DenseMatrix::new(rows, cols, out)?,
    })
}

/// Output-stationary trace of dense `a · b`.
pub fn trace_os(a: &DenseMatrix, b: &DenseMatrix, array: &ArrayConfig) -> Result<TraceResult> {
    if a.cols() != b.rows() {
        return Err(Error::shape(format!(
            "trace_os {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (r, c) = (array.rows as usize, array.cols as usize);
    let (rows, red, cols) = (a.rows(), a.cols(), b.cols());
    let slots = red.div_ceil(2) * 2;
    let mut out = vec![0f32; rows * cols];
    let mut cycles = 0;
    for rb in (0..rows).step_by(r) {
        for cb in (0..cols).step_by(c) {
            let mut acc = vec![0f32; r * c];
            cycles += os_engine(array, slots, 1, |_, i, j, s| {
                let (y, x) = (rb + i, cb + j);
                if y < rows && x < cols && s < red {
                    acc[i * c + j] += a.get(y, s) * b.get(s, x);
                }
            });
            for i in 0..r.min(rows - rb) {
                for j in 0..c.min(cols - cb) {
                    out[(rb + i) * cols + cb + j] = acc[i * c + j];
                }
            }
        }
    }
    Ok(TraceResult {
        cycles,
        output: DenseMatrix::new(rows, cols, out)?,
    })
}

/// Cycles of `tiles` output-stationary tiles of `slots` MAC slots each,
/// issued round-robin through the same PEs.
pub fn trace_os_interleaved(array: &ArrayConfig, slots: usize, tiles: usize) -> u64 {
    os_engine(array, slots, tiles, |_, _, _, _| {})
}

/// Steps every PE of an output-stationary tile set until it has issued all
/// its MAC slots, then pops the results. `mac(tile, i, j, slot)` is called
/// once per issued slot.
fn os_engine(
    array: &ArrayConfig,
    slots: usize,
    tiles: usize,
    mut mac: impl FnMut(usize, usize, usize, usize),
) -> u64 {
    let (r, c) = (array.rows as usize, array.cols as usize);
    let depth = array.pipeline_depth;
    // Independent accumulation chains per PE.
    let contexts = if tiles > 1 {
        tiles
    } else if array.interleave {
        depth as usize
    } else {
        1
    };
    let retire = if contexts == 1 { depth } else { 1 };
    let total = slots * tiles;
    let mut issued = vec![0usize; r * c];
    let mut ready = vec![0u64; r * c * contexts];
    let mut done = vec![0u64; r * c];
    let mut remaining = r * c;
    let mut clock = 0u64;
    while remaining > 0 {
        for i in 0..r {
            for j in 0..c {
                let p = i * c + j;
                let u = issued[p];
                if u == total {
                    continue;
                }
                // Skewed operands: slot u reaches PE (i, j) at cycle i + j + u.
                let arrival = (i + j + u) as u64;
                let ctx = p * contexts + u % contexts;
                if arrival > clock || ready[ctx] > clock {
                    continue;
                }
                ready[ctx] = clock + depth;
                mac(u % tiles, i, j, u / tiles);
                issued[p] += 1;
                if issued[p] == total {
                    done[p] = clock + retire;
                    remaining -= 1;
                }
            }
        }
        clock += 1;
    }
    let finished = done.into_iter().max().unwrap_or(0);
    finished + (tiles as u64) * array.cols
}
