//! Cycle accounting of one training iteration under a schedule.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LayerSpec, Model, Stage};
use crate::nm::NmConfig;
use crate::sched::{ConfigWord, Dataflow, SorePlacement, SparseMode, SparseOperand, Tiles};

use super::config::{ArrayConfig, MemoryConfig};
use super::formulas::{
    check_pattern, memory_cycles, os_tiles, pipelined_cycles, sore_body_cycles, sore_cycles,
    ws_tiles, wuve_cycles,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub layer: usize,
    pub name: String,
    pub stage: Stage,
    pub dataflow: Dataflow,
    pub sparse_mode: SparseMode,
    pub tiles: Tiles,
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    /// Cycles that cannot overlap the array: in-stage sorting and its loads.
    pub serial_cycles: u64,
    pub total_cycles: u64,
    pub bytes: u64,
    pub dense_macs: u64,
    pub performed_macs: u64,
    pub sore_busy_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub layer: usize,
    pub params: u64,
    /// Groups sorted for the next iteration.
    pub pregenerated_groups: u64,
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    pub total_cycles: u64,
    pub sore_busy_cycles: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleTotals {
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    pub total_cycles: u64,
}

impl CycleTotals {
    fn add(&mut self, compute: u64, memory: u64, total: u64) {
        self.compute_cycles += compute;
        self.memory_cycles += memory;
        self.total_cycles += total;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub ff: f64,
    pub bp: f64,
    pub wu: f64,
    pub sore: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCycles {
    pub layer: usize,
    pub name: String,
    pub ff: u64,
    pub bp: u64,
    pub wu: u64,
    pub optimizer: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub stages: Vec<StageReport>,
    pub optimizer: Vec<OptimizerReport>,
    pub layers: Vec<LayerCycles>,
    pub ff: CycleTotals,
    pub bp: CycleTotals,
    pub wu: CycleTotals,
    pub optimizer_totals: CycleTotals,
    pub total: CycleTotals,
    pub seconds: f64,
    pub dense_macs: u64,
    pub performed_macs: u64,
    /// Dense-equivalent FLOPs per second of the step.
    pub effective_flops: f64,
    pub utilization: Utilization,
}

impl CycleReport {
    pub fn stage_totals(&self, stage: Stage) -> CycleTotals {
        match stage {
            Stage::Ff => self.ff,
            Stage::Bp => self.bp,
            Stage::Wu => self.wu,
        }
    }

    pub fn stage(&self, layer: usize, stage: Stage) -> Option<&StageReport> {
        self.stages
            .iter()
            .find(|s| s.layer == layer && s.stage == stage)
    }
}

fn contract(detail: String) -> Error {
    Error::contract("sim", "simulate_training_step", detail)
}

/// Byte sizes of one layer's tensors at its batch.
struct LayerBytes {
    act_in: u64,
    act_out: u64,
    dense_weights: u64,
}

impl LayerBytes {
    fn new(layer: &LayerSpec, mem: &MemoryConfig) -> Self {
        let b = layer.batch() as u64;
        let (fi, fo) = layer.weight_shape();
        Self {
            act_in: b * layer.input_features() as u64 * mem.value_bytes,
            act_out: b * layer.output_features() as u64 * mem.value_bytes,
            dense_weights: (fi * fo) as u64 * mem.value_bytes,
        }
    }
}

fn packed_bytes(groups: u64, nm: NmConfig, mem: &MemoryConfig) -> u64 {
    groups * nm.n() as u64 * (mem.value_bytes + mem.index_bytes)
}

/// Compact groups of the stage's stationary operand.
fn stationary_groups(layer: &LayerSpec, stage: Stage, nm: NmConfig) -> u64 {
    let d = layer.stage_dims(stage);
    d.reduction.div_ceil(nm.m() as u64) * d.cols
}

/// Groups of the output gradient pruned along the update's reduction.
fn gradient_groups(layer: &LayerSpec, nm: NmConfig) -> u64 {
    stationary_groups(layer, Stage::Wu, nm)
}

/// Cost of one stage under its configuration word.
pub fn simulate_stage(
    layer: &LayerSpec,
    index: usize,
    word: &ConfigWord,
    array: &ArrayConfig,
    mem: &MemoryConfig,
) -> Result<StageReport> {
    let stage = word.stage;
    let dims = layer.stage_dims(stage);
    let pattern = word.sparse_mode.pattern()?;
    if let Some(nm) = pattern {
        check_pattern(nm, array).map_err(|_| {
            contract(format!(
                "layer {index} {}: pattern {nm} does not fit the array",
                stage.as_str()
            ))
        })?;
    }
    let sizes = LayerBytes::new(layer, mem);
    let operand = word.sparse_mode.operand();
    let placement = word.sore_placement;
    let bad = |why: &str| contract(format!("layer {index} {}: {why}", stage.as_str()));

    // Which operand the array sees packed, and what the sorting engine does here.
    let (compute_pattern, weights_bytes, serial, sore_busy) = match (stage, operand, placement) {
        (_, None, SorePlacement::None) => (None, sizes.dense_weights, 0, 0),
        (_, None, _) => return Err(bad("dense stage with a sorting placement")),
        (Stage::Ff | Stage::Bp, Some(SparseOperand::Weights), SorePlacement::PreGeneratedInWu) => {
            let nm = pattern.unwrap();
            let groups = stationary_groups(layer, stage, nm);
            (Some(nm), packed_bytes(groups, nm, mem), 0, 0)
        }
        (Stage::Ff | Stage::Bp, Some(SparseOperand::Weights), SorePlacement::InStage) => {
            let nm = pattern.unwrap();
            let groups = stationary_groups(layer, stage, nm);
            let sore = sore_cycles(groups, nm);
            (
                Some(nm),
                0,
                memory_cycles(sizes.dense_weights, mem, array) + sore,
                sore,
            )
        }
        (_, Some(SparseOperand::Weights), _) => {
            return Err(bad("packed weights need a sorting placement in FF or BP"))
        }
        (Stage::Bp, Some(SparseOperand::Gradients), SorePlacement::InStage) => {
            let nm = pattern.unwrap();
            let sore = sore_cycles(gradient_groups(layer, nm), nm);
            (None, sizes.dense_weights, sore, sore)
        }
        (Stage::Wu, Some(SparseOperand::Gradients), SorePlacement::None) => (pattern, 0, 0, 0),
        (_, Some(SparseOperand::Gradients), _) => {
            return Err(bad("gradients are pruned in BP and consumed packed in WU"))
        }
    };

    let bytes = match stage {
        Stage::Ff | Stage::Bp => sizes.act_in + sizes.act_out + weights_bytes,
        Stage::Wu => {
            let grads = match pattern {
                Some(nm) => packed_bytes(gradient_groups(layer, nm), nm, mem),
                None => sizes.act_out,
            };
            sizes.act_in + grads
        }
    };

    let (tiles, per_tile, tile_shape, performed) = match word.dataflow {
        Dataflow::Ws => {
            let (t, per) = ws_tiles(dims, compute_pattern, array)?;
            let (n, m) = compute_pattern.map_or((2, 2), |p| (p.n() as u64, p.m() as u64));
            let groups = dims.reduction.div_ceil(m);
            let shape = Tiles {
                rows: 1,
                reduction: groups.div_ceil(array.rows),
                cols: dims.cols.div_ceil(array.cols),
            };
            let performed = match compute_pattern {
                Some(_) => dims.rows * dims.cols * groups * n,
                None => dims.macs(),
            };
            (t, per, shape, performed)
        }
        Dataflow::Os => {
            let (t, per) = os_tiles(dims, array);
            let shape = Tiles {
                rows: dims.rows.div_ceil(array.rows),
                reduction: 1,
                cols: dims.cols.div_ceil(array.cols),
            };
            (t, per, shape, dims.macs())
        }
    };
    let compute = tiles * per_tile;
    let memory = memory_cycles(bytes, mem, array);
    let total = pipelined_cycles(tiles, per_tile, memory) + serial;
    Ok(StageReport {
        layer: index,
        name: layer.label(),
        stage,
        dataflow: word.dataflow,
        sparse_mode: word.sparse_mode,
        tiles: tile_shape,
        compute_cycles: compute,
        memory_cycles: memory,
        serial_cycles: serial,
        total_cycles: total,
        bytes,
        dense_macs: dims.macs(),
        performed_macs: performed,
        sore_busy_cycles: sore_busy,
    })
}

/// Weight update of one layer on the update engine. Packed copies for the
/// next iteration are sorted alongside. Master weights and momentum are read
/// and written as single precision. The first layer needs no BP copy.
pub fn simulate_optimizer(
    layer: &LayerSpec,
    index: usize,
    ff: &ConfigWord,
    bp: &ConfigWord,
    array: &ArrayConfig,
    mem: &MemoryConfig,
) -> Result<OptimizerReport> {
    let params = layer.param_count() as u64;
    let sizes = LayerBytes::new(layer, mem);
    let mut groups = 0;
    let mut pattern = None;
    let mut copies = 0;
    let mut dense_copy = false;
    let consumers: &[&ConfigWord] = if index == 0 { &[ff] } else { &[ff, bp] };
    for w in consumers {
        if w.sore_placement == SorePlacement::PreGeneratedInWu {
            let nm = w
                .sparse_mode
                .pattern()?
                .ok_or_else(|| contract(format!("layer {index}: dense pre-generated word")))?;
            let g = stationary_groups(layer, w.stage, nm);
            groups += g;
            copies += packed_bytes(g, nm, mem);
            if pattern.is_some_and(|p| p != nm) {
                return Err(contract(format!(
                    "layer {index}: FF and BP pre-generate different patterns"
                )));
            }
            pattern = Some(nm);
        } else {
            dense_copy = true;
        }
    }
    if dense_copy {
        copies += sizes.dense_weights;
    }
    let sore_busy = pattern.map_or(0, |nm| sore_body_cycles(groups, nm));
    let compute = match pattern {
        Some(nm) => wuve_cycles(params).max(sore_busy) + nm.m() as u64,
        None => wuve_cycles(params),
    };
    let memory = memory_cycles(16 * params + copies, mem, array);
    Ok(OptimizerReport {
        layer: index,
        params,
        pregenerated_groups: groups,
        compute_cycles: compute,
        memory_cycles: memory,
        total_cycles: compute.max(memory),
        sore_busy_cycles: sore_busy,
    })
}

/// Index of every layer's three words, rejecting gaps and duplicates.
fn index_words<'w>(model: &Model, words: &'w [ConfigWord]) -> Result<Vec<[&'w ConfigWord; 3]>> {
    let mut map: HashMap<(usize, Stage), &ConfigWord> = HashMap::new();
    for w in words {
        if w.layer >= model.layers.len() {
            return Err(contract(format!(
                "word for layer {} of a {}-layer model",
                w.layer,
                model.layers.len()
            )));
        }
        if map.insert((w.layer, w.stage), w).is_some() {
            return Err(contract(format!(
                "duplicate word for layer {} {}",
                w.layer,
                w.stage.as_str()
            )));
        }
    }
    (0..model.layers.len())
        .map(|l| {
            let get = |s: Stage| {
                map.get(&(l, s))
                    .copied()
                    .ok_or_else(|| contract(format!("missing word for layer {l} {}", s.as_str())))
            };
            Ok([get(Stage::Ff)?, get(Stage::Bp)?, get(Stage::Wu)?])
        })
        .collect()
}

fn check_layer_words(index: usize, [ff, bp, wu]: [&ConfigWord; 3]) -> Result<()> {
    let bp_grads = bp.sparse_mode.operand() == Some(SparseOperand::Gradients);
    let wu_grads = wu.sparse_mode.operand() == Some(SparseOperand::Gradients);
    if bp_grads != wu_grads || (wu_grads && bp.sparse_mode != wu.sparse_mode) {
        return Err(contract(format!(
            "layer {index}: gradients pruned in BP must be the packed operand of WU"
        )));
    }
    if bp_grads && ff.sparse_mode.operand().is_some() {
        return Err(contract(format!(
            "layer {index}: weight and gradient pruning in one layer"
        )));
    }
    Ok(())
}

/// Simulates one iteration: FF over the layers in order, then BP and WU with
/// the layer's weight update from the last layer back to the first. The first
/// layer's BP word is checked but not run: nothing consumes the input gradient.
pub fn simulate_training_step(
    model: &Model,
    words: &[ConfigWord],
    array: &ArrayConfig,
    mem: &MemoryConfig,
) -> Result<CycleReport> {
    array.validate()?;
    mem.validate()?;
    let by_layer = index_words(model, words)?;
    for (l, w) in by_layer.iter().enumerate() {
        check_layer_words(l, *w)?;
    }

    let mut stages = Vec::with_capacity(3 * model.layers.len());
    let mut optimizer = Vec::with_capacity(model.layers.len());
    for (l, layer) in model.layers.iter().enumerate() {
        stages.push(simulate_stage(layer, l, by_layer[l][0], array, mem)?);
    }
    for (l, layer) in model.layers.iter().enumerate().rev() {
        let [ff, bp, wu] = by_layer[l];
        let bp_report = simulate_stage(layer, l, bp, array, mem)?;
        if l > 0 {
            stages.push(bp_report);
        }
        stages.push(simulate_stage(layer, l, wu, array, mem)?);
        optimizer.push(simulate_optimizer(layer, l, ff, bp, array, mem)?);
    }

    let mut report = CycleReport {
        stages: Vec::new(),
        optimizer: Vec::new(),
        layers: Vec::new(),
        ff: CycleTotals::default(),
        bp: CycleTotals::default(),
        wu: CycleTotals::default(),
        optimizer_totals: CycleTotals::default(),
        total: CycleTotals::default(),
        seconds: 0.0,
        dense_macs: 0,
        performed_macs: 0,
        effective_flops: 0.0,
        utilization: Utilization::default(),
    };
    let mut layers: Vec<LayerCycles> = model
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| LayerCycles {
            layer: l,
            name: layer.label(),
            ff: 0,
            bp: 0,
            wu: 0,
            optimizer: 0,
            total: 0,
        })
        .collect();
    let mut performed = [0u64; 3];
    let mut sore_busy = 0;
    for s in &stages {
        let (totals, slot, k) = match s.stage {
            Stage::Ff => (&mut report.ff, &mut layers[s.layer].ff, 0),
            Stage::Bp => (&mut report.bp, &mut layers[s.layer].bp, 1),
            Stage::Wu => (&mut report.wu, &mut layers[s.layer].wu, 2),
        };
        totals.add(s.compute_cycles, s.memory_cycles, s.total_cycles);
        *slot = s.total_cycles;
        performed[k] += s.performed_macs;
        report.dense_macs += s.dense_macs;
        report.performed_macs += s.performed_macs;
        sore_busy += s.sore_busy_cycles;
    }
    for o in &optimizer {
        report
            .optimizer_totals
            .add(o.compute_cycles, o.memory_cycles, o.total_cycles);
        layers[o.layer].optimizer = o.total_cycles;
        sore_busy += o.sore_busy_cycles;
    }
    for l in &mut layers {
        l.total = l.ff + l.bp + l.wu + l.optimizer;
    }
    for t in [report.ff, report.bp, report.wu, report.optimizer_totals] {
        report
            .total
            .add(t.compute_cycles, t.memory_cycles, t.total_cycles);
    }
    let cycles = report.total.total_cycles;
    report.seconds = cycles as f64 / array.freq_hz as f64;
    if cycles > 0 {
        report.effective_flops = 2.0 * report.dense_macs as f64 / report.seconds;
        let capacity = |c: u64| {
            if c == 0 {
                0.0
            } else {
                1.0 / (c as f64 * array.pes() as f64)
            }
        };
        report.utilization = Utilization {
            ff: performed[0] as f64 * capacity(report.ff.total_cycles),
            bp: performed[1] as f64 * capacity(report.bp.total_cycles),
            wu: performed[2] as f64 * capacity(report.wu.total_cycles),
            sore: sore_busy as f64 / cycles as f64,
        };
    }
    report.stages = stages;
    report.optimizer = optimizer;
    report.layers = layers;
    Ok(report)
}
