use serde::{Deserialize, Serialize};

use crate::model::{LayerSpec, Model, Stage};

use super::method::{StageSparsity, TrainingMethod};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageCount {
    pub dense: f64,
    pub actual: f64,
}

impl StageCount {
    fn add(&mut self, o: StageCount) {
        self.dense += o.dense;
        self.actual += o.actual;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFlops {
    pub name: String,
    pub exempt: bool,
    pub ff: StageCount,
    pub bp: StageCount,
    pub wu: StageCount,
}

impl LayerFlops {
    pub fn stage(&self, s: Stage) -> StageCount {
        match s {
            Stage::Ff => self.ff,
            Stage::Bp => self.bp,
            Stage::Wu => self.wu,
        }
    }

    pub fn total(&self) -> StageCount {
        let mut t = self.ff;
        t.add(self.bp);
        t.add(self.wu);
        t
    }
}

/// Training FLOPs (2 per multiply-accumulate) per layer and stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsTable {
    pub model: Option<String>,
    pub method: String,
    pub layers: Vec<LayerFlops>,
    /// One training step at the model's batch size.
    pub step: StageCount,
    /// Steps per epoch, when the model carries dataset bookkeeping.
    pub steps_per_epoch: Option<f64>,
    pub epochs: Option<u64>,
    /// Whole training run, when dataset bookkeeping is available.
    pub run: Option<StageCount>,
    /// `step.actual / step.dense`.
    pub ratio: f64,
}

/// Fraction of dense work a stage performs: `n/m` when sparse, 1 otherwise.
pub fn stage_density(method: &TrainingMethod, stage: Stage, exempt: bool) -> f64 {
    match method.stage_sparsity(stage, exempt) {
        StageSparsity::Dense => 1.0,
        _ => method.nm.density(),
    }
}

pub fn layer_flops(layer: &LayerSpec, method: &TrainingMethod) -> LayerFlops {
    let count = |s: Stage| {
        let dense = 2.0 * layer.stage_dims(s).macs() as f64;
        StageCount {
            dense,
            actual: dense * stage_density(method, s, layer.sparsity_exempt),
        }
    };
    LayerFlops {
        name: layer.label(),
        exempt: layer.sparsity_exempt,
        ff: count(Stage::Ff),
        bp: count(Stage::Bp),
        wu: count(Stage::Wu),
    }
}

pub fn count_flops(model: &Model, method: &TrainingMethod) -> FlopsTable {
    let layers: Vec<LayerFlops> = model
        .layers
        .iter()
        .map(|l| layer_flops(l, method))
        .collect();
    let mut step = StageCount::default();
    for l in &layers {
        step.add(l.total());
    }
    let steps_per_epoch = model
        .dataset
        .as_ref()
        .map(|d| d.samples_per_epoch as f64 / model.batch() as f64);
    let epochs = model.dataset.as_ref().map(|d| d.epochs);
    let run = steps_per_epoch.zip(epochs).map(|(s, e)| {
        let k = s * e as f64;
        StageCount {
            dense: step.dense * k,
            actual: step.actual * k,
        }
    });
    FlopsTable {
        model: model.name.clone(),
        method: method.to_string(),
        layers,
        step,
        steps_per_epoch,
        epochs,
        run,
        ratio: if step.dense > 0.0 {
            step.actual / step.dense
        } else {
            1.0
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConvShape, LinearShape};
    use crate::nm::NmConfig;

    #[test]
    fn linear_dense_counts() {
        let m = Model::new(vec![LayerSpec::linear(LinearShape {
            batch: 1,
            tokens: 1,
            in_features: 4,
            out_features: 4,
        })])
        .unwrap();
        let t = count_flops(&m, &TrainingMethod::dense());
        assert_eq!(t.layers[0].ff.dense, 32.0);
        assert_eq!(t.step.dense, 96.0);
        assert_eq!(t.ratio, 1.0);
    }

    #[test]
    fn bdwp_two_of_eight_conv_ratio() {
        let conv = LayerSpec::conv(ConvShape {
            batch: 4,
            height: 8,
            width: 8,
            in_channels: 16,
            out_channels: 16,
            kernel: 3,
            stride: 1,
            padding: 1,
        });
        let m = Model::new(vec![
            LayerSpec::linear(LinearShape {
                batch: 4,
                tokens: 1,
                in_features: 8,
                out_features: 8,
            }),
            conv,
        ])
        .unwrap();
        let t = count_flops(&m, &TrainingMethod::bdwp(NmConfig::new(2, 8).unwrap()));
        let c = &t.layers[1];
        assert_eq!(c.ff.actual / c.ff.dense, 0.25);
        assert_eq!(c.bp.actual / c.bp.dense, 0.25);
        assert_eq!(c.wu.actual, c.wu.dense);
        assert_eq!(t.ratio, 0.5);
    }
}
