use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DatasetMeta, LayerSpec, Model};
use crate::nm::NmConfig;
use crate::sched::{ConfigWord, SorePolicy};
use crate::sim::{ArrayConfig, MemoryConfig};
use crate::train::{
    LrSchedule, MethodKind, Precision, PrecisionMode, ToyDataConfig, TrainConfig, TrainingMethod,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Train,
    Sim,
    Sched,
    Flops,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Sim => "sim",
            Command::Sched => "sched",
            Command::Flops => "flops",
        }
    }
}

/// One experiment as read from `--config`, before command-line overrides.
///
/// The network is either inline (`layers`) or a path to a model file
/// (`model`), resolved against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nm: Option<NmConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Independent training runs, one output directory each.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_schedule: Option<LrSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_scale: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<PrecisionMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<ToyDataConfig>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub array: Option<ArrayConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemoryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sore_policy: Option<SorePolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<ConfigWord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_total_cycles: Option<u64>,

    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<MethodKind>,
    pub nm: Option<NmConfig>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(m) = o.method {
            self.method = Some(m);
            // A schedule fixed for another method no longer applies.
            self.schedule = None;
            self.predicted_total_cycles = None;
        }
        if let Some(nm) = o.nm {
            self.nm = Some(nm);
            self.schedule = None;
            self.predicted_total_cycles = None;
        }
        if let Some(s) = o.seed {
            self.seed = Some(s);
            self.seeds = None;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        self
    }

    pub fn out_dir(&self, command: Command) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("nmsat-out").join(command.as_str()))
    }

    pub fn load_model(&self) -> Result<Model> {
        let mut model = match (&self.model, &self.layers) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either `model` or `layers`, not both".into(),
                ))
            }
            (None, None) => return Err(Error::Config("config names no model".into())),
            (Some(p), None) => Model::load(&self.base_dir.join(p))?,
            (None, Some(layers)) => {
                let mut m = Model::new(layers.clone())?;
                m.dataset = self.dataset.clone();
                m
            }
        };
        if self.name.is_some() {
            model.name = self.name.clone();
        }
        Ok(model)
    }

    pub fn method(&self) -> Result<TrainingMethod> {
        match (self.method.unwrap_or(MethodKind::Dense), self.nm) {
            (MethodKind::Dense, nm) => Ok(TrainingMethod::new(
                MethodKind::Dense,
                nm.unwrap_or(NmConfig::DENSE_PAIR),
            )),
            (kind, Some(nm)) => Ok(TrainingMethod::new(kind, nm)),
            (kind, None) => Err(Error::Config(format!("method {kind} needs --nm"))),
        }
    }

    /// The configured array, else the default one built for the method's pattern.
    pub fn array(&self) -> Result<ArrayConfig> {
        let method = self.method()?;
        let array = match self.array {
            Some(a) => a,
            None if !method.nm.is_dense() => ArrayConfig::default().with_nm(method.nm),
            None => ArrayConfig::default(),
        };
        array.validate()?;
        Ok(array)
    }

    pub fn memory(&self) -> Result<MemoryConfig> {
        let m = self.memory.unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn seeds(&self) -> Vec<u64> {
        match (&self.seeds, self.seed) {
            (Some(s), _) if !s.is_empty() => s.clone(),
            (_, s) => vec![s.unwrap_or(0)],
        }
    }

    /// Training config for one seed.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let model = self.load_model()?;
        let lr = self
            .lr
            .ok_or_else(|| Error::Config("training needs `lr`".into()))?;
        let steps = self
            .steps
            .ok_or_else(|| Error::Config("training needs `steps`".into()))?;
        Ok(TrainConfig {
            name: model.name.clone(),
            layers: model.layers,
            method: self.method.unwrap_or(MethodKind::Dense),
            nm: self.nm,
            lr,
            lr_schedule: self.lr_schedule.unwrap_or_default(),
            momentum: self.momentum.unwrap_or(0.0),
            weight_decay: self.weight_decay.unwrap_or(0.0),
            steps,
            seed,
            loss_scale: self.loss_scale.unwrap_or(Precision::DEFAULT_LOSS_SCALE),
            precision: self.precision.unwrap_or_default(),
            data: self.data.unwrap_or_default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_fields() {
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"lr": 1, "typo": 2}"#),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn method_needs_pattern() {
        let cfg = ExperimentConfig::from_json(r#"{"method": "bdwp"}"#).unwrap();
        assert!(matches!(cfg.method(), Err(Error::Config(_))));
        let cfg = cfg.apply(&Overrides {
            nm: Some("2:4".parse().unwrap()),
            ..Default::default()
        });
        assert_eq!(cfg.method().unwrap().nm, NmConfig::new(2, 4).unwrap());
        assert_eq!(cfg.array().unwrap().m, 4);
    }
}
