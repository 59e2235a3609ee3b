//! Layer descriptions shared by the training engine, the simulator and the
//! scheduler, plus their lowering to per-stage MatMul extents.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nm::ConvGeometry;

/// One of the three MatMuls of a training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "FF")]
    Ff,
    #[serde(rename = "BP")]
    Bp,
    #[serde(rename = "WU")]
    Wu,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Ff, Stage::Bp, Stage::Wu];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ff => "FF",
            Stage::Bp => "BP",
            Stage::Wu => "WU",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Extents of a lowered MatMul `(rows x reduction) . (reduction x cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageDims {
    pub rows: u64,
    pub reduction: u64,
    pub cols: u64,
}

impl StageDims {
    pub fn macs(&self) -> u64 {
        self.rows * self.reduction * self.cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearShape {
    pub batch: usize,
    /// Tokens per sample (rows contributed by each sample).
    #[serde(default = "one")]
    pub tokens: usize,
    pub in_features: usize,
    pub out_features: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerShape {
    Conv(ConvShape),
    Linear(LinearShape),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub shape: LayerShape,
    #[serde(default)]
    pub sparsity_exempt: bool,
    #[serde(default)]
    pub bias: bool,
}

impl LayerSpec {
    pub fn conv(shape: ConvShape) -> Self {
        Self {
            name: None,
            shape: LayerShape::Conv(shape),
            sparsity_exempt: false,
            bias: false,
        }
    }

    pub fn linear(shape: LinearShape) -> Self {
        Self {
            name: None,
            shape: LayerShape::Linear(shape),
            sparsity_exempt: false,
            bias: false,
        }
    }

    pub fn exempt(mut self, exempt: bool) -> Self {
        self.sparsity_exempt = exempt;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn is_conv(&self) -> bool {
        matches!(self.shape, LayerShape::Conv(_))
    }

    pub fn batch(&self) -> usize {
        match &self.shape {
            LayerShape::Conv(c) => c.batch,
            LayerShape::Linear(l) => l.batch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let label = self.label();
        match &self.shape {
            LayerShape::Conv(c) => {
                let extents = [
                    c.batch,
                    c.height,
                    c.width,
                    c.in_channels,
                    c.out_channels,
                    c.kernel,
                    c.stride,
                ];
                if extents.contains(&0) {
                    return Err(Error::Config(format!(
                        "{label}: conv extents must be positive"
                    )));
                }
                self.geometry(c.batch)
                    .expect("conv")
                    .validate()
                    .map_err(|e| Error::Config(format!("{label}: {e}")))
            }
            LayerShape::Linear(l) => {
                if [l.batch, l.tokens, l.in_features, l.out_features].contains(&0) {
                    return Err(Error::Config(format!(
                        "{label}: linear extents must be positive"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| match &self.shape {
            LayerShape::Conv(c) => format!(
                "conv{}x{}_{}to{}",
                c.kernel, c.kernel, c.in_channels, c.out_channels
            ),
            LayerShape::Linear(l) => format!("linear_{}to{}", l.in_features, l.out_features),
        })
    }

    /// Convolution geometry for a given batch size; `None` for linear layers.
    pub fn geometry(&self, batch: usize) -> Option<ConvGeometry> {
        match &self.shape {
            LayerShape::Conv(c) => Some(ConvGeometry {
                batch,
                channels: c.in_channels,
                height: c.height,
                width: c.width,
                kernel: c.kernel,
                stride: c.stride,
                padding: c.padding,
            }),
            LayerShape::Linear(_) => None,
        }
    }

    /// Lowered weight matrix extents: `(fan_in, fan_out)`.
    pub fn weight_shape(&self) -> (usize, usize) {
        match &self.shape {
            LayerShape::Conv(c) => (c.kernel * c.kernel * c.in_channels, c.out_channels),
            LayerShape::Linear(l) => (l.in_features, l.out_features),
        }
    }

    pub fn param_count(&self) -> usize {
        let (i, o) = self.weight_shape();
        i * o + if self.bias { o } else { 0 }
    }

    /// Per-sample input feature count.
    pub fn input_features(&self) -> usize {
        match &self.shape {
            LayerShape::Conv(c) => c.in_channels * c.height * c.width,
            LayerShape::Linear(l) => l.tokens * l.in_features,
        }
    }

    /// Per-sample output feature count.
    pub fn output_features(&self) -> usize {
        match &self.shape {
            LayerShape::Conv(c) => {
                let g = self.geometry(1).expect("conv");
                c.out_channels * g.out_height() * g.out_width()
            }
            LayerShape::Linear(l) => l.tokens * l.out_features,
        }
    }

    /// Rows of the FF MatMul at the configured batch: one per output pixel or token.
    pub fn output_rows(&self) -> u64 {
        match &self.shape {
            LayerShape::Conv(c) => self.geometry(c.batch).expect("conv").lowered_rows() as u64,
            LayerShape::Linear(l) => (l.batch * l.tokens) as u64,
        }
    }

    /// Lowered MatMul extents of one stage at the configured batch.
    ///
    /// BP of a convolution is counted as the transposed convolution over the
    /// output pixels: reduction `K*K*C_o`, output `C_i`.
    pub fn stage_dims(&self, stage: Stage) -> StageDims {
        let rows = self.output_rows();
        let (k2, ci, co) = match &self.shape {
            LayerShape::Conv(c) => (
                (c.kernel * c.kernel) as u64,
                c.in_channels as u64,
                c.out_channels as u64,
            ),
            LayerShape::Linear(l) => (1, l.in_features as u64, l.out_features as u64),
        };
        match stage {
            Stage::Ff => StageDims {
                rows,
                reduction: k2 * ci,
                cols: co,
            },
            Stage::Bp => StageDims {
                rows,
                reduction: k2 * co,
                cols: ci,
            },
            Stage::Wu => StageDims {
                rows: k2 * ci,
                reduction: rows,
                cols: co,
            },
        }
    }
}

/// Dataset bookkeeping used to scale per-step counts to a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub samples_per_epoch: u64,
    pub epochs: u64,
}

/// A network as an ordered list of layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetMeta>,
    pub layers: Vec<LayerSpec>,
}

impl Model {
    /// Validates every layer and marks a leading convolution as exempt.
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let mut m = Model {
            name: None,
            dataset: None,
            layers,
        };
        m.normalize()?;
        Ok(m)
    }

    pub fn normalize(&mut self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("model has no layers".into()));
        }
        for l in &self.layers {
            l.validate()?;
        }
        if self.layers[0].is_conv() {
            self.layers[0].sparsity_exempt = true;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: Model =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("model: {e}")))?;
        m.normalize()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks that consecutive layers agree on per-sample feature counts and
    /// batch, which is required to execute (not merely count) the network.
    pub fn check_chain(&self) -> Result<()> {
        let batch = self.layers[0].batch();
        for (i, pair) in self.layers.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            if a.output_features() != b.input_features() {
                return Err(Error::Config(format!(
                    "layer {} produces {} features per sample, layer {} expects {}",
                    i,
                    a.output_features(),
                    i + 1,
                    b.input_features()
                )));
            }
        }
        if self.layers.iter().any(|l| l.batch() != batch) {
            return Err(Error::Config("all layers must share one batch size".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn batch(&self) -> usize {
        self.layers[0].batch()
    }
}
