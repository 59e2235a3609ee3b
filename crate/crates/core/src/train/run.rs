use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LayerSpec, Model};
use crate::nm::NmConfig;

use super::data::{gaussian_clusters, BatchSampler, Dataset, ToyDataConfig};
use super::flops::{count_flops, FlopsTable};
use super::method::{MethodKind, TrainingMethod};
use super::network::{Precision, Trainer};
use super::optimizer::SgdConfig;

/// Learning-rate schedule over the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` to zero over `steps`.
    Cosine,
}

impl LrSchedule {
    pub fn at(self, base: f32, step: u64, steps: u64) -> f32 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let t = step as f64 / steps.max(1) as f64;
                (base as f64 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())) as f32
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionMode {
    #[default]
    Mixed,
    Single,
}

fn dense_kind() -> MethodKind {
    MethodKind::Dense
}

fn default_loss_scale() -> f32 {
    Precision::DEFAULT_LOSS_SCALE
}

/// A training experiment on the synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub layers: Vec<LayerSpec>,
    #[serde(default = "dense_kind")]
    pub method: MethodKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nm: Option<NmConfig>,
    pub lr: f32,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    #[serde(default)]
    pub momentum: f32,
    #[serde(default)]
    pub weight_decay: f32,
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_loss_scale")]
    pub loss_scale: f32,
    #[serde(default)]
    pub precision: PrecisionMode,
    #[serde(default)]
    pub data: ToyDataConfig,
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("train config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn training_method(&self) -> Result<TrainingMethod> {
        match (self.method, self.nm) {
            (MethodKind::Dense, nm) => Ok(TrainingMethod::new(
                MethodKind::Dense,
                nm.unwrap_or(NmConfig::DENSE_PAIR),
            )),
            (kind, Some(nm)) => Ok(TrainingMethod::new(kind, nm)),
            (kind, None) => Err(Error::Config(format!("method {kind} needs an N:M pattern"))),
        }
    }

    pub fn precision(&self) -> Precision {
        match self.precision {
            PrecisionMode::Mixed => Precision::Mixed {
                loss_scale: self.loss_scale,
            },
            PrecisionMode::Single => Precision::Single,
        }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    pub fn model(&self) -> Result<Model> {
        let mut m = Model::new(self.layers.clone())?;
        m.name = self.name.clone();
        m.check_chain()?;
        Ok(m)
    }

    pub fn with_method(mut self, kind: MethodKind, nm: Option<NmConfig>) -> Self {
        self.method = kind;
        if nm.is_some() {
            self.nm = nm;
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
    /// Cumulative dense-equivalent training FLOPs through this step.
    pub flops_dense: f64,
    /// Cumulative FLOPs actually performed under the method.
    pub flops_actual: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<StepRecord>,
    /// Mean held-out loss under the final FF weights.
    pub final_loss: f64,
    /// Mean loss over the training split under the final FF weights.
    pub final_train_loss: f64,
    pub flops: FlopsTable,
    pub trainer: Trainer,
}

/// Training and held-out splits for a config.
pub fn build_dataset(cfg: &TrainConfig, model: &Model) -> Result<(Dataset, Dataset)> {
    let classes = model.layers.last().expect("non-empty").output_features();
    if classes != cfg.data.classes {
        return Err(Error::Config(format!(
            "last layer has {classes} outputs but the data has {} classes",
            cfg.data.classes
        )));
    }
    gaussian_clusters(&cfg.data, model.layers[0].input_features())
}

/// Runs `cfg.steps` iterations. Deterministic for a given config.
pub fn run_training(cfg: &TrainConfig) -> Result<TrainOutcome> {
    let model = cfg.model()?;
    let method = cfg.training_method()?;
    let (data, test) = build_dataset(cfg, &model)?;
    let flops = count_flops(&model, &method);
    let mut sampler = BatchSampler::new(data.len(), model.batch(), cfg.seed)?;
    let mut trainer = Trainer::new(model, method, cfg.precision(), cfg.sgd(), cfg.seed)?;
    let mut records = Vec::with_capacity(cfg.steps as usize);
    for step in 0..cfg.steps {
        trainer.set_lr(cfg.lr_schedule.at(cfg.lr, step, cfg.steps));
        let (x, y) = data.gather(sampler.next_batch());
        let loss = trainer.train_step(&x, &y)?;
        let k = (step + 1) as f64;
        records.push(StepRecord {
            step,
            loss,
            flops_dense: flops.step.dense * k,
            flops_actual: flops.step.actual * k,
        });
        if step % 100 == 0 {
            log::debug!("step {step} loss {loss:.5}");
        }
    }
    let final_loss = trainer.evaluate(&test.x, &test.labels)?;
    let final_train_loss = trainer.evaluate(&data.x, &data.labels)?;
    log::info!(
        "{}: final loss {final_loss:.5} after {} steps",
        method,
        cfg.steps
    );
    Ok(TrainOutcome {
        records,
        final_loss,
        final_train_loss,
        flops,
        trainer,
    })
}
