use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Stage;
use crate::nm::NmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparseOperand {
    Weights,
    Gradients,
}

/// How a stage's stationary operand is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SparseMode {
    Dense,
    Sparse {
        n: usize,
        m: usize,
        operand: SparseOperand,
    },
}

impl SparseMode {
    pub fn sparse(nm: NmConfig, operand: SparseOperand) -> Self {
        SparseMode::Sparse {
            n: nm.n(),
            m: nm.m(),
            operand,
        }
    }

    pub fn pattern(&self) -> Result<Option<NmConfig>> {
        match *self {
            SparseMode::Dense => Ok(None),
            SparseMode::Sparse { n, m, .. } => NmConfig::new(n, m).map(Some),
        }
    }

    pub fn operand(&self) -> Option<SparseOperand> {
        match *self {
            SparseMode::Dense => None,
            SparseMode::Sparse { operand, .. } => Some(operand),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, SparseMode::Dense)
    }
}

impl fmt::Display for SparseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SparseMode::Dense => f.write_str("dense"),
            SparseMode::Sparse { n, m, operand } => write!(f, "{n}:{m} {operand:?}"),
        }
    }
}

/// Where the sorting engine produces a stage's packed operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SorePlacement {
    #[serde(rename = "none")]
    None,
    /// Generated while the stage loads its operand.
    #[serde(rename = "in_stage")]
    InStage,
    /// Produced for the next iteration by the previous weight update.
    #[serde(rename = "pre_generated_in_WU")]
    PreGeneratedInWu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dataflow {
    #[serde(rename = "WS")]
    Ws,
    #[serde(rename = "OS")]
    Os,
}

impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dataflow::Ws => "WS",
            Dataflow::Os => "OS",
        })
    }
}

/// Array tiles along each MatMul axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tiles {
    pub rows: u64,
    pub reduction: u64,
    pub cols: u64,
}

impl Tiles {
    pub fn count(&self) -> u64 {
        self.rows * self.reduction * self.cols
    }
}

/// Per-layer, per-stage configuration of the accelerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigWord {
    pub layer: usize,
    pub stage: Stage,
    pub sparse_mode: SparseMode,
    pub sore_placement: SorePlacement,
    pub dataflow: Dataflow,
    pub tiles: Tiles,
    /// Simulated cycles of this stage, attached when the word is emitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_cycles: Option<u64>,
}
