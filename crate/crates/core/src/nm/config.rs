use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest group size representable in the one-byte index encoding.
pub const MAX_GROUP: usize = 255;

/// An N:M pattern: at most `n` values survive out of every `m` consecutive ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NmConfig {
    n: usize,
    m: usize,
}

impl NmConfig {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || n > m {
            return Err(Error::Config(format!(
                "invalid N:M pattern {n}:{m}: need 1 <= N <= M"
            )));
        }
        if m > MAX_GROUP {
            return Err(Error::Config(format!("group size {m} exceeds {MAX_GROUP}")));
        }
        Ok(Self { n, m })
    }

    /// The 2:2 pattern USPEs use to run dense dot products.
    pub const DENSE_PAIR: NmConfig = NmConfig { n: 2, m: 2 };

    pub fn n(self) -> usize {
        self.n
    }

    pub fn m(self) -> usize {
        self.m
    }

    /// Fraction of values kept.
    pub fn density(self) -> f64 {
        self.n as f64 / self.m as f64
    }

    pub fn is_dense(self) -> bool {
        self.n == self.m
    }

    /// Patterns the accelerator model accepts: M in {4, 8, 16}.
    pub fn is_hardware_pattern(self) -> bool {
        matches!(self.m, 4 | 8 | 16)
    }

    /// Logical width of one stored index.
    pub fn index_bits(self) -> u32 {
        usize::BITS - (self.m - 1).leading_zeros()
    }
}

impl fmt::Display for NmConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.n, self.m)
    }
}

impl FromStr for NmConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (n, m) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("expected N:M, got {s:?}")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("expected N:M, got {s:?}")))
        };
        NmConfig::new(parse(n)?, parse(m)?)
    }
}

impl Serialize for NmConfig {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NmConfig {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
