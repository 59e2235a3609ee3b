use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nm::DenseMatrix;

/// Synthetic Gaussian-cluster classification task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyDataConfig {
    pub samples: usize,
    /// Held-out samples drawn from the same clusters.
    pub test_samples: usize,
    pub classes: usize,
    /// Standard deviation of the class centres; samples have unit noise.
    pub separation: f32,
    pub seed: u64,
}

impl Default for ToyDataConfig {
    fn default() -> Self {
        Self {
            samples: 4096,
            test_samples: 4096,
            classes: 8,
            separation: 0.35,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn gather(&self, idx: &[usize]) -> (DenseMatrix, Vec<usize>) {
        let f = self.x.cols();
        let mut data = Vec::with_capacity(idx.len() * f);
        for &i in idx {
            data.extend_from_slice(self.x.row(i));
        }
        (
            DenseMatrix::new(idx.len(), f, data).expect("gather"),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Training and held-out splits. Samples are drawn round-robin over classes,
/// so class counts differ by at most one.
pub fn gaussian_clusters(cfg: &ToyDataConfig, features: usize) -> Result<(Dataset, Dataset)> {
    if cfg.classes < 2 || cfg.samples == 0 || features == 0 {
        return Err(Error::Config(
            "toy data needs >= 2 classes, samples and features".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centres: Vec<Vec<f32>> = (0..cfg.classes)
        .map(|_| {
            (0..features)
                .map(|_| cfg.separation * rng.sample::<f32, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut draw = |count: usize| -> Result<Dataset> {
        let mut data = Vec::with_capacity(count * features);
        let mut labels = Vec::with_capacity(count);
        for i in 0..count {
            let y = i % cfg.classes;
            labels.push(y);
            data.extend(
                centres[y]
                    .iter()
                    .map(|&c| c + rng.sample::<f32, _>(StandardNormal)),
            );
        }
        Ok(Dataset {
            x: DenseMatrix::new(count, features, data)?,
            labels,
        })
    };
    let train = draw(cfg.samples)?;
    let test = draw(cfg.test_samples)?;
    Ok((train, test))
}

/// Endless sequence of shuffled minibatches; the last partial batch of each
/// epoch is dropped.
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(len: usize, batch: usize, seed: u64) -> Result<Self> {
        if batch == 0 || batch > len {
            return Err(Error::Config(format!("batch {batch} for {len} samples")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Ok(Self {
            order,
            pos: 0,
            batch,
            rng,
        })
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.pos + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let s = &self.order[self.pos..self.pos + self.batch];
        self.pos += self.batch;
        s
    }
}
