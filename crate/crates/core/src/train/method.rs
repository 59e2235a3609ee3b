use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Stage;
use crate::nm::NmConfig;

/// Which tensors a training scheme prunes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Dense,
    /// Weights pruned for FF only.
    #[serde(alias = "srste_ff_only", alias = "sr-ste")]
    Srste,
    /// Weights pruned for BP only.
    #[serde(alias = "sdwp_bp_only")]
    Sdwp,
    /// Output gradients pruned before BP and WU.
    #[serde(alias = "sdgp_grad")]
    Sdgp,
    /// Weights pruned separately for FF and for BP; WU dense.
    Bdwp,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] = [
        MethodKind::Dense,
        MethodKind::Srste,
        MethodKind::Sdwp,
        MethodKind::Sdgp,
        MethodKind::Bdwp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Dense => "dense",
            MethodKind::Srste => "srste",
            MethodKind::Sdwp => "sdwp",
            MethodKind::Sdgp => "sdgp",
            MethodKind::Bdwp => "bdwp",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "dense" => MethodKind::Dense,
            "srste" | "sr-ste" | "srste_ff_only" => MethodKind::Srste,
            "sdwp" | "sdwp_bp_only" => MethodKind::Sdwp,
            "sdgp" | "sdgp_grad" => MethodKind::Sdgp,
            "bdwp" => MethodKind::Bdwp,
            other => return Err(Error::Config(format!("unknown method {other:?}"))),
        })
    }
}

/// What a stage of a non-exempt layer runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSparsity {
    Dense,
    /// The stationary weight operand is N:M pruned.
    Weights,
    /// The streamed output-gradient operand is N:M pruned.
    Gradients,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMethod {
    pub kind: MethodKind,
    pub nm: NmConfig,
}

impl TrainingMethod {
    pub fn new(kind: MethodKind, nm: NmConfig) -> Self {
        Self { kind, nm }
    }

    pub fn dense() -> Self {
        Self {
            kind: MethodKind::Dense,
            nm: NmConfig::DENSE_PAIR,
        }
    }

    pub fn bdwp(nm: NmConfig) -> Self {
        Self::new(MethodKind::Bdwp, nm)
    }

    pub fn prunes_ff_weights(&self) -> bool {
        matches!(self.kind, MethodKind::Srste | MethodKind::Bdwp)
    }

    pub fn prunes_bp_weights(&self) -> bool {
        matches!(self.kind, MethodKind::Sdwp | MethodKind::Bdwp)
    }

    pub fn prunes_gradients(&self) -> bool {
        self.kind == MethodKind::Sdgp
    }

    pub fn prunes_weights(&self) -> bool {
        self.prunes_ff_weights() || self.prunes_bp_weights()
    }

    /// Sparsity of one stage for a layer; exempt layers are always dense.
    pub fn stage_sparsity(&self, stage: Stage, exempt: bool) -> StageSparsity {
        if exempt {
            return StageSparsity::Dense;
        }
        match (stage, self.kind) {
            (Stage::Ff, MethodKind::Srste | MethodKind::Bdwp) => StageSparsity::Weights,
            (Stage::Bp, MethodKind::Sdwp | MethodKind::Bdwp) => StageSparsity::Weights,
            (Stage::Wu, MethodKind::Sdgp) => StageSparsity::Gradients,
            _ => StageSparsity::Dense,
        }
    }
}

impl fmt::Display for TrainingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            MethodKind::Dense => f.write_str("dense"),
            k => write!(f, "{k} {}", self.nm),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names_and_aliases() {
        assert_eq!("BDWP".parse::<MethodKind>().unwrap(), MethodKind::Bdwp);
        assert_eq!("sdgp_grad".parse::<MethodKind>().unwrap(), MethodKind::Sdgp);
        assert!("magic".parse::<MethodKind>().is_err());
        let k: MethodKind = serde_json::from_str("\"srste_ff_only\"").unwrap();
        assert_eq!(k, MethodKind::Srste);
    }

    #[test]
    fn stage_table() {
        let nm = NmConfig::new(2, 8).unwrap();
        let b = TrainingMethod::bdwp(nm);
        assert_eq!(b.stage_sparsity(Stage::Ff, false), StageSparsity::Weights);
        assert_eq!(b.stage_sparsity(Stage::Bp, false), StageSparsity::Weights);
        assert_eq!(b.stage_sparsity(Stage::Wu, false), StageSparsity::Dense);
        assert_eq!(b.stage_sparsity(Stage::Ff, true), StageSparsity::Dense);
        let g = TrainingMethod::new(MethodKind::Sdgp, nm);
        assert_eq!(g.stage_sparsity(Stage::Wu, false), StageSparsity::Gradients);
        assert_eq!(g.stage_sparsity(Stage::Bp, false), StageSparsity::Dense);
    }
}
