//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nmsat::model::{ConvShape, LayerSpec, LinearShape, Model};
use proptest::prelude::*;
use serde_json::Value;

pub fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models")
}

pub const BUNDLED: [&str; 5] = [
    "resnet9_cifar10",
    "vgg19_cifar100",
    "vit_cifar100",
    "resnet18_tinyimagenet",
    "resnet50_imagenet",
];

pub fn load_model(name: &str) -> Model {
    Model::load(&models_dir().join(format!("{name}.json"))).unwrap()
}

pub fn model_json(name: &str) -> Value {
    let text = std::fs::read_to_string(models_dir().join(format!("{name}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// FF multiply-accumulates of one layer read straight from its JSON.
pub fn layer_macs(l: &Value) -> f64 {
    let u = |k: &str| l[k].as_u64().unwrap_or(0) as f64;
    match l["kind"].as_str().unwrap() {
        "conv" => {
            let (k, s, p) = (
                u("kernel"),
                l["stride"].as_u64().unwrap_or(1) as f64,
                u("padding"),
            );
            let ho = ((u("height") + 2.0 * p - k) / s).floor() + 1.0;
            let wo = ((u("width") + 2.0 * p - k) / s).floor() + 1.0;
            u("batch") * ho * wo * k * k * u("in_channels") * u("out_channels")
        }
        _ => {
            let t = l["tokens"].as_u64().unwrap_or(1) as f64;
            u("batch") * t * u("in_features") * u("out_features")
        }
    }
}

/// BDWP n:m training FLOPs over dense: FF and BP at density n/m, WU dense,
/// exempt layers (and a leading convolution) dense throughout.
pub fn bdwp_ratio_oracle(model: &Value, n: f64, m: f64) -> f64 {
    let layers = model["layers"].as_array().unwrap();
    let (mut dense, mut sparse) = (0.0, 0.0);
    for (i, l) in layers.iter().enumerate() {
        let macs = layer_macs(l);
        let exempt =
            l["sparsity_exempt"].as_bool().unwrap_or(false) || (i == 0 && l["kind"] == "conv");
        dense += 3.0 * macs;
        sparse += if exempt {
            3.0 * macs
        } else {
            macs * (1.0 + 2.0 * n / m)
        };
    }
    sparse / dense
}

/// Kept offsets of a group: among all `n`-subsets with the largest magnitude
/// sum, the lexicographically smallest.
pub fn brute_force_top_n(group: &[f32], n: usize) -> Vec<usize> {
    let m = group.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let set: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let sum: f64 = set.iter().map(|&i| group[i].abs() as f64).sum();
        let better = match &best {
            None => true,
            Some((s, b)) => sum > *s || (sum == *s && set < *b),
        };
        if better {
            best = Some((sum, set));
        }
    }
    best.unwrap().1
}

/// Row-major `rows x cols` mask keeping the top `n` of every `m` along each
/// column (the reduction axis). Tail groups are shorter.
pub fn column_mask(data: &[f32], rows: usize, cols: usize, n: usize, m: usize) -> Vec<bool> {
    let mut keep = vec![false; rows * cols];
    for c in 0..cols {
        for start in (0..rows).step_by(m) {
            let end = (start + m).min(rows);
            let group: Vec<f32> = (start..end).map(|r| data[r * cols + c]).collect();
            for k in brute_force_top_n(&group, n.min(group.len())) {
                keep[(start + k) * cols + c] = true;
            }
        }
    }
    keep
}

/// Triple loop in ascending reduction order, binary32 accumulation.
pub fn naive_matmul_f32(a: &[f32], b: &[f32], rows: usize, red: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0f32; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0f32;
            for k in 0..red {
                acc += a[i * red + k] * b[k * cols + j];
            }
            out[i * cols + j] = acc;
        }
    }
    out
}

/// A two-layer network evaluated in binary64.
#[derive(Clone, Debug)]
pub struct Net64 {
    pub batch: usize,
    /// First layer: convolution `(channels, height, width, kernel, stride, padding)` or linear.
    pub conv: Option<(usize, usize, usize, usize, usize, usize)>,
    pub dims: [usize; 3],
    /// `fan_in x fan_out`, row-major.
    pub w: [Vec<f64>; 2],
    pub b: [Vec<f64>; 2],
}

impl Net64 {
    fn conv_out(&self) -> (usize, usize) {
        let (_, h, w, k, s, p) = self.conv.unwrap();
        ((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1)
    }

    /// Pre-activations of layer 0 per sample, in channel-major order.
    pub fn hidden_pre(&self, x: &[f64]) -> Vec<f64> {
        let bsz = self.batch;
        match self.conv {
            None => {
                let (fi, h) = (self.dims[0], self.dims[1]);
                let mut z = vec![0.0; bsz * h];
                for s in 0..bsz {
                    for j in 0..h {
                        let mut acc = self.b[0][j];
                        for i in 0..fi {
                            acc += x[s * fi + i] * self.w[0][i * h + j];
                        }
                        z[s * h + j] = acc;
                    }
                }
                z
            }
            Some((c, hh, ww, k, st, p)) => {
                let co = self.w[0].len() / (k * k * c);
                let (ho, wo) = self.conv_out();
                let feat = co * ho * wo;
                let mut z = vec![0.0; bsz * feat];
                for s in 0..bsz {
                    for o in 0..co {
                        for oh in 0..ho {
                            for ow in 0..wo {
                                let mut acc = self.b[0][o];
                                for kh in 0..k {
                                    for kw in 0..k {
                                        let ih = (oh * st + kh) as isize - p as isize;
                                        let iw = (ow * st + kw) as isize - p as isize;
                                        if ih < 0
                                            || iw < 0
                                            || ih >= hh as isize
                                            || iw >= ww as isize
                                        {
                                            continue;
                                        }
                                        for ch in 0..c {
                                            let xv = x[s * c * hh * ww
                                                + ch * hh * ww
                                                + ih as usize * ww
                                                + iw as usize];
                                            acc +=
                                                xv * self.w[0][((kh * k + kw) * c + ch) * co + o];
                                        }
                                    }
                                }
                                z[s * feat + o * ho * wo + oh * wo + ow] = acc;
                            }
                        }
                    }
                }
                z
            }
        }
    }

    /// Mean softmax cross-entropy.
    pub fn loss(&self, x: &[f64], labels: &[usize]) -> f64 {
        let z = self.hidden_pre(x);
        let h = z.len() / self.batch;
        let classes = self.dims[2];
        let mut total = 0.0;
        for s in 0..self.batch {
            let mut logits = self.b[1].clone();
            for i in 0..h {
                let a = z[s * h + i].max(0.0);
                for (j, l) in logits.iter_mut().enumerate() {
                    *l += a * self.w[1][i * classes + j];
                }
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|v| (v - max).exp()).sum();
            total += sum.ln() - (logits[labels[s]] - max);
        }
        total / self.batch as f64
    }
}

/// Central difference of `f` at every coordinate of `v`.
pub fn central_difference(v: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let orig = v[i];
            v[i] = orig + h;
            let up = f(v);
            v[i] = orig - h;
            let down = f(v);
            v[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn rel_error(got: &[f32], want: &[f64]) -> f64 {
    let num: f64 = got
        .iter()
        .zip(want)
        .map(|(&g, &w)| (g as f64 - w).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

/// A random chain: optional leading convolution, then linear layers.
pub fn random_chain() -> impl Strategy<Value = Model> {
    (
        any::<bool>(),
        prop::collection::vec(1usize..12, 2..5),
        1usize..40,
        any::<bool>(),
    )
        .prop_map(|(conv, widths, batch, exempt_last)| {
            let mut layers = Vec::new();
            let mut features = widths[0] * 8;
            if conv {
                layers.push(LayerSpec::conv(ConvShape {
                    batch,
                    height: 6,
                    width: 6,
                    in_channels: 3,
                    out_channels: 4,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                }));
                features = 6 * 6 * 4;
            }
            for w in &widths[1..] {
                layers.push(LayerSpec::linear(LinearShape {
                    batch,
                    tokens: 1,
                    in_features: features,
                    out_features: w * 8,
                }));
                features = w * 8;
            }
            if exempt_last {
                let last = layers.len() - 1;
                layers[last].sparsity_exempt = true;
            }
            Model::new(layers).unwrap()
        })
}
