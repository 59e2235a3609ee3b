use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nm::NmConfig;

/// The systolic array of N:M processing elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayConfig {
    pub rows: u64,
    pub cols: u64,
    /// Group size the PEs are built for and the most values they fold per group.
    pub n: usize,
    pub m: usize,
    pub freq_hz: u64,
    /// Stages in each of the multiplier and the adder.
    pub pipeline_depth: u64,
    pub interleave: bool,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            rows: 32,
            cols: 32,
            n: 2,
            m: 8,
            freq_hz: 200_000_000,
            pipeline_depth: 3,
            interleave: true,
        }
    }
}

impl ArrayConfig {
    pub fn with_nm(mut self, nm: NmConfig) -> Self {
        self.n = nm.n();
        self.m = nm.m();
        self
    }

    pub fn nm(&self) -> Result<NmConfig> {
        NmConfig::new(self.n, self.m).map_err(|e| Error::Config(format!("array pattern: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.pipeline_depth == 0 || self.freq_hz == 0 {
            return Err(Error::Config(
                "array extents, pipeline depth and frequency must be positive".into(),
            ));
        }
        let nm = self.nm()?;
        if !nm.is_hardware_pattern() {
            return Err(Error::Config(format!(
                "array pattern {nm} needs M in {{4, 8, 16}}"
            )));
        }
        Ok(())
    }

    pub fn pes(&self) -> u64 {
        self.rows * self.cols
    }

    /// Cycles for a psum or operand to cross the array diagonally.
    pub fn skew(&self) -> u64 {
        self.rows + self.cols - 2
    }

    /// Multiplier plus adder latency.
    pub fn drain(&self) -> u64 {
        2 * self.pipeline_depth
    }
}

/// External memory. Values move as binary16, indexes as one byte each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    #[serde(rename = "bandwidth_Bps")]
    pub bandwidth_bps: u64,
    pub value_bytes: u64,
    pub index_bytes: u64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            bandwidth_bps: 25_600_000_000,
            value_bytes: 2,
            index_bytes: 1,
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth_bps == 0 {
            return Err(Error::Config("memory bandwidth must be positive".into()));
        }
        Ok(())
    }
}
