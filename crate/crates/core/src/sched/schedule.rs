//! Maps a network's training stages onto the array.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, Stage, StageDims};
use crate::sim::{simulate_stage, simulate_training_step, ArrayConfig, MemoryConfig};
use crate::train::{StageSparsity, TrainingMethod};

use super::word::{ConfigWord, Dataflow, SorePlacement, SparseMode, SparseOperand, Tiles};

/// One lowered MatMul of a training stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatMulShape {
    pub layer: usize,
    pub stage: Stage,
    pub dims: StageDims,
    pub exempt: bool,
}

/// Where packed weights are produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SorePolicy {
    /// During the previous iteration's weight update.
    #[default]
    PreGenerate,
    /// While the consuming stage loads its weights.
    InStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub words: Vec<ConfigWord>,
    /// Whole-iteration cycles including weight updates.
    pub predicted_total_cycles: u64,
}

/// FF, BP and WU of every layer, in layer order.
pub fn lower_network(model: &Model) -> Vec<MatMulShape> {
    model
        .layers
        .iter()
        .enumerate()
        .flat_map(|(layer, spec)| {
            Stage::ALL.into_iter().map(move |stage| MatMulShape {
                layer,
                stage,
                dims: spec.stage_dims(stage),
                exempt: spec.sparsity_exempt,
            })
        })
        .collect()
}

pub fn assign_sparse_modes(shapes: &[MatMulShape], method: &TrainingMethod) -> Vec<SparseMode> {
    shapes
        .iter()
        .map(|s| {
            if s.exempt {
                return SparseMode::Dense;
            }
            let nm = method.nm;
            match method.stage_sparsity(s.stage, false) {
                StageSparsity::Weights => SparseMode::sparse(nm, SparseOperand::Weights),
                StageSparsity::Gradients => SparseMode::sparse(nm, SparseOperand::Gradients),
                // The gradients the update consumes packed are pruned on their way out of BP.
                StageSparsity::Dense if s.stage == Stage::Bp && method.prunes_gradients() => {
                    SparseMode::sparse(nm, SparseOperand::Gradients)
                }
                StageSparsity::Dense => SparseMode::Dense,
            }
        })
        .collect()
}

pub fn place_sore(stage: Stage, mode: SparseMode, policy: SorePolicy) -> SorePlacement {
    match (mode.operand(), stage) {
        (None, _) => SorePlacement::None,
        (Some(SparseOperand::Weights), _) => match policy {
            SorePolicy::PreGenerate => SorePlacement::PreGeneratedInWu,
            SorePolicy::InStage => SorePlacement::InStage,
        },
        (Some(SparseOperand::Gradients), Stage::Bp) => SorePlacement::InStage,
        (Some(SparseOperand::Gradients), _) => SorePlacement::None,
    }
}

/// Picks the dataflow with fewer stage cycles; ties go to output-stationary.
/// The returned word carries the simulated cycles of the chosen dataflow.
pub fn select_dataflow(
    model: &Model,
    draft: ConfigWord,
    array: &ArrayConfig,
    mem: &MemoryConfig,
) -> Result<ConfigWord> {
    let layer = model.layers.get(draft.layer).ok_or_else(|| {
        Error::contract(
            "sched",
            "select_dataflow",
            format!("no layer {}", draft.layer),
        )
    })?;
    let mut best: Option<(u64, ConfigWord)> = None;
    for dataflow in [Dataflow::Os, Dataflow::Ws] {
        let word = ConfigWord { dataflow, ..draft };
        let r = simulate_stage(layer, draft.layer, &word, array, mem)?;
        if best.as_ref().is_none_or(|(c, _)| r.total_cycles < *c) {
            best = Some((
                r.total_cycles,
                ConfigWord {
                    tiles: r.tiles,
                    predicted_cycles: Some(r.total_cycles),
                    ..word
                },
            ));
        }
    }
    Ok(best.unwrap().1)
}

pub fn emit_config_words(
    model: &Model,
    method: &TrainingMethod,
    array: &ArrayConfig,
    mem: &MemoryConfig,
    policy: SorePolicy,
) -> Result<Vec<ConfigWord>> {
    let shapes = lower_network(model);
    let modes = assign_sparse_modes(&shapes, method);
    shapes
        .iter()
        .zip(modes)
        .map(|(s, mode)| {
            let draft = ConfigWord {
                layer: s.layer,
                stage: s.stage,
                sparse_mode: mode,
                sore_placement: place_sore(s.stage, mode, policy),
                dataflow: Dataflow::Os,
                tiles: Tiles {
                    rows: 0,
                    reduction: 0,
                    cols: 0,
                },
                predicted_cycles: None,
            };
            let mut word = select_dataflow(model, draft, array, mem)?;
            // The step never runs the first layer's BP, so it costs nothing.
            if s.layer == 0 && s.stage == Stage::Bp {
                word.predicted_cycles = Some(0);
            }
            Ok(word)
        })
        .collect()
}

/// Schedules one training iteration of `model` under `method`.
pub fn schedule(
    model: &Model,
    method: &TrainingMethod,
    array: &ArrayConfig,
    mem: &MemoryConfig,
    policy: SorePolicy,
) -> Result<Schedule> {
    array.validate()?;
    mem.validate()?;
    if !method.nm.is_dense() && (method.nm.m() != array.m || method.nm.n() > array.n) {
        return Err(Error::Config(format!(
            "method pattern {} does not run on {}:{} PEs",
            method.nm, array.n, array.m
        )));
    }
    let words = emit_config_words(model, method, array, mem, policy)?;
    let report = simulate_training_step(model, &words, array, mem)?;
    Ok(Schedule {
        words,
        predicted_total_cycles: report.total.total_cycles,
    })
}
