//! Whole-network forward/backward passes and the per-iteration training step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, Stage};
use crate::nm::{
    bdwp_bp, bdwp_ff, pack_nm_with, round_half, round_slice, to_half, to_single, unpack_nm,
    DenseMatrix, GroupAxis, NmConfig, TailPolicy,
};

use super::layers::{
    backward_data_lowered, backward_weight_lowered, bias_grad, forward_lowered, lower_input,
    lower_output_grad, WeightOperand,
};
use super::method::{StageSparsity, TrainingMethod};
use super::optimizer::{sgd_momentum_step, OptimizerState, SgdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Precision {
    /// binary16 MatMul operands, binary32 accumulation and master weights,
    /// static loss scaling.
    Mixed { loss_scale: f32 },
    /// binary32 throughout.
    Single,
}

impl Precision {
    pub const DEFAULT_LOSS_SCALE: f32 = 1024.0;

    pub fn loss_scale(self) -> f32 {
        match self {
            Precision::Mixed { loss_scale } => loss_scale,
            Precision::Single => 1.0,
        }
    }

    fn round(self, m: &mut DenseMatrix) {
        if let Precision::Mixed { .. } = self {
            round_slice(m.data_mut());
        }
    }
}

impl Default for Precision {
    fn default() -> Self {
        Precision::Mixed {
            loss_scale: Self::DEFAULT_LOSS_SCALE,
        }
    }
}

/// Operands for one pass over the network.
#[derive(Debug, Clone)]
pub struct PassOperands {
    /// FF right operands, `fan_in x fan_out`.
    pub ff: Vec<WeightOperand>,
    /// BP right operands, `fan_out x fan_in`.
    pub bp: Vec<WeightOperand>,
    pub biases: Vec<Option<Vec<f32>>>,
    /// Per layer: prune lowered output gradients with this pattern before BP/WU.
    pub gradient_pruning: Vec<Option<NmConfig>>,
}

/// Result of a forward/backward pass. Gradients carry the loss scale.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Option<Vec<f32>>>,
    /// Gradient with respect to the network input, when requested.
    pub input: Option<DenseMatrix>,
}

fn relu_in_place(m: &mut DenseMatrix) {
    for v in m.data_mut() {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
}

fn check_labels(logits: &DenseMatrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::shape(format!(
            "{} labels for {} samples",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::Domain(format!(
            "label {bad} outside {} classes",
            logits.cols()
        )));
    }
    Ok(())
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &DenseMatrix, labels: &[usize]) -> Result<(f64, DenseMatrix)> {
    check_labels(logits, labels)?;
    let (rows, cols) = (logits.rows(), logits.cols());
    let mut grad = DenseMatrix::zeros(rows, cols);
    let mut total = 0f64;
    let inv = 1.0 / rows.max(1) as f32;
    for (r, &y) in labels.iter().enumerate() {
        let z = logits.row(r);
        let max = z.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let sum: f64 = z.iter().map(|&v| ((v - max) as f64).exp()).sum();
        total += sum.ln() - (z[y] - max) as f64;
        let g = &mut grad.data_mut()[r * cols..(r + 1) * cols];
        for (gi, &zi) in g.iter_mut().zip(z) {
            *gi = ((((zi - max) as f64).exp() / sum) as f32) * inv;
        }
        g[y] -= inv;
    }
    Ok((total / rows.max(1) as f64, grad))
}

/// Forward only; returns the logits.
pub fn forward_network(
    model: &Model,
    ops: &PassOperands,
    precision: Precision,
    x: &DenseMatrix,
) -> Result<DenseMatrix> {
    let mut a = x.clone();
    precision.round(&mut a);
    let last = model.layers.len() - 1;
    for (l, layer) in model.layers.iter().enumerate() {
        let low = lower_input(layer, &a)?;
        a = forward_lowered(layer, &low, x.rows(), &ops.ff[l], ops.biases[l].as_deref())?;
        if l != last {
            relu_in_place(&mut a);
            precision.round(&mut a);
        }
    }
    Ok(a)
}

/// One FF pass, the loss head, and BP/WU for every layer from last to first.
pub fn forward_backward(
    model: &Model,
    ops: &PassOperands,
    precision: Precision,
    x: &DenseMatrix,
    labels: &[usize],
    want_input_grad: bool,
) -> Result<Gradients> {
    let n_layers = model.layers.len();
    let batch = x.rows();
    let last = n_layers - 1;

    // FF, retaining lowered inputs and pre-activation signs for the backward pass.
    let mut lowered = Vec::with_capacity(n_layers);
    let mut active: Vec<Vec<bool>> = Vec::with_capacity(n_layers);
    let mut a = x.clone();
    precision.round(&mut a);
    for (l, layer) in model.layers.iter().enumerate() {
        let low = lower_input(layer, &a)?;
        a = forward_lowered(layer, &low, batch, &ops.ff[l], ops.biases[l].as_deref())?;
        lowered.push(low);
        if l != last {
            active.push(a.data().iter().map(|&v| v > 0.0).collect());
            relu_in_place(&mut a);
            precision.round(&mut a);
        }
    }

    let (loss, mut g) = softmax_cross_entropy(&a, labels)?;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            step: 0,
            detail: format!("loss is {loss}"),
        });
    }
    let scale = precision.loss_scale();
    if scale != 1.0 {
        for v in g.data_mut() {
            *v *= scale;
        }
    }
    precision.round(&mut g);

    let mut weights = vec![DenseMatrix::zeros(0, 0); n_layers];
    let mut biases = vec![None; n_layers];
    let mut input = None;
    for l in (0..n_layers).rev() {
        let layer = &model.layers[l];
        let mut g_low = lower_output_grad(layer, &g)?;
        let wu_operand = match ops.gradient_pruning[l] {
            Some(nm) => {
                let packed = pack_nm_with(&g_low, nm, GroupAxis::Rows, TailPolicy::ZeroPad)?;
                g_low = unpack_nm(&packed);
                WeightOperand::Packed(packed)
            }
            None => WeightOperand::Dense(g_low.clone()),
        };
        if l > 0 || want_input_grad {
            let mut g_in = backward_data_lowered(layer, &g_low, batch, &ops.bp[l])?;
            if l > 0 {
                for (v, &on) in g_in.data_mut().iter_mut().zip(&active[l - 1]) {
                    if !on {
                        *v = 0.0;
                    }
                }
            }
            precision.round(&mut g_in);
            if l == 0 {
                input = Some(g_in);
            } else {
                g = g_in;
            }
        }
        let mut g_w = backward_weight_lowered(&lowered[l], &wu_operand)?;
        precision.round(&mut g_w);
        weights[l] = g_w;
        if ops.biases[l].is_some() {
            let mut gb = bias_grad(&g_low);
            if let Precision::Mixed { .. } = precision {
                round_slice(&mut gb);
            }
            biases[l] = Some(gb);
        }
    }
    Ok(Gradients {
        loss,
        weights,
        biases,
        input,
    })
}

/// A network under training: master weights, optimizer state and method.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model,
    method: TrainingMethod,
    precision: Precision,
    opt: OptimizerState,
    /// Per layer: optimizer tensor index of the weight and of the bias.
    layout: Vec<(usize, Option<usize>)>,
}

impl Trainer {
    /// He-normal initialization from `seed`; biases start at zero.
    pub fn new(
        model: Model,
        method: TrainingMethod,
        precision: Precision,
        sgd: SgdConfig,
        seed: u64,
    ) -> Result<Self> {
        model.check_chain()?;
        sgd.validate()?;
        if let Precision::Mixed { loss_scale } = precision {
            if !(loss_scale.is_finite() && loss_scale > 0.0) {
                return Err(Error::Config(format!(
                    "loss scale must be positive, got {loss_scale}"
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::new();
        let mut layout = Vec::new();
        for layer in &model.layers {
            let (fan_in, fan_out) = layer.weight_shape();
            let normal = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("positive std");
            tensors.push(
                (0..fan_in * fan_out)
                    .map(|_| normal.sample(&mut rng))
                    .collect::<Vec<f32>>(),
            );
            let w = tensors.len() - 1;
            let b = layer.bias.then(|| {
                tensors.push(vec![0.0; fan_out]);
                tensors.len() - 1
            });
            layout.push((w, b));
        }
        Ok(Self {
            model,
            method,
            precision,
            opt: OptimizerState::new(sgd, precision.loss_scale(), tensors),
            layout,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn method(&self) -> TrainingMethod {
        self.method
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.opt
    }

    pub fn step(&self) -> u64 {
        self.opt.step()
    }

    pub fn set_lr(&mut self, lr: f32) {
        self.opt.config.lr = lr;
    }

    /// binary32 master weights of layer `l`, `fan_in x fan_out`.
    pub fn master_weight(&self, l: usize) -> DenseMatrix {
        let (fan_in, fan_out) = self.model.layers[l].weight_shape();
        DenseMatrix::new(fan_in, fan_out, self.opt.master()[self.layout[l].0].clone())
            .expect("layout")
    }

    /// Replaces layer `l`'s master weights (momentum is left untouched).
    pub fn set_master_weight(&mut self, l: usize, w: &DenseMatrix) -> Result<()> {
        if (w.rows(), w.cols()) != self.model.layers[l].weight_shape() {
            return Err(Error::shape("replacement weight shape"));
        }
        self.opt.master_mut()[self.layout[l].0].copy_from_slice(w.data());
        Ok(())
    }

    /// Weights as seen by the MatMul units this iteration.
    fn compute_weight(&self, l: usize) -> DenseMatrix {
        let w = self.master_weight(l);
        match self.precision {
            Precision::Mixed { .. } => w.map(round_half),
            Precision::Single => w,
        }
    }

    /// The FF and BP operands of layer `l`, regenerated from the current weights.
    pub fn layer_operands(&self, l: usize) -> Result<(WeightOperand, WeightOperand)> {
        let w = self.compute_weight(l);
        let exempt = self.model.layers[l].sparsity_exempt;
        let nm = self.method.nm;
        let ff = match self.method.stage_sparsity(Stage::Ff, exempt) {
            StageSparsity::Weights => WeightOperand::Packed(bdwp_ff(&w, nm)?),
            _ => WeightOperand::Dense(w.clone()),
        };
        let bp = match (self.method.stage_sparsity(Stage::Bp, exempt), &ff) {
            (StageSparsity::Weights, _) => WeightOperand::Packed(bdwp_bp(&w, nm)?),
            // FF-only pruning back-propagates through the weights FF actually
            // used; that mask has no N:M structure along BP's reduction, so
            // BP stays a dense MatMul.
            (_, WeightOperand::Packed(p)) => WeightOperand::Dense(unpack_nm(p).transpose()),
            _ => WeightOperand::Dense(w.transpose()),
        };
        Ok((ff, bp))
    }

    pub fn operands(&self) -> Result<PassOperands> {
        let mut ff = Vec::new();
        let mut bp = Vec::new();
        let mut biases = Vec::new();
        let mut gradient_pruning = Vec::new();
        for (l, layer) in self.model.layers.iter().enumerate() {
            let (f, b) = self.layer_operands(l)?;
            ff.push(f);
            bp.push(b);
            biases.push(self.layout[l].1.map(|i| {
                let b = &self.opt.master()[i];
                match self.precision {
                    Precision::Mixed { .. } => b.iter().map(|&v| round_half(v)).collect(),
                    Precision::Single => b.clone(),
                }
            }));
            let pruned = self.method.stage_sparsity(Stage::Wu, layer.sparsity_exempt)
                == StageSparsity::Gradients;
            gradient_pruning.push(pruned.then_some(self.method.nm));
        }
        Ok(PassOperands {
            ff,
            bp,
            biases,
            gradient_pruning,
        })
    }

    /// One iteration: regenerate sparse weights, FF, loss, BP/WU, optimizer.
    /// Returns the batch loss.
    pub fn train_step(&mut self, x: &DenseMatrix, labels: &[usize]) -> Result<f64> {
        let step = self.opt.step();
        let ops = self.operands().map_err(|e| match e {
            // Master weights past the binary16 range cannot be pruned.
            Error::Domain(detail) => Error::Divergence { step, detail },
            other => other,
        })?;
        let grads =
            forward_backward(&self.model, &ops, self.precision, x, labels, false).map_err(|e| {
                match e {
                    Error::Divergence { detail, .. } => Error::Divergence { step, detail },
                    other => other,
                }
            })?;
        let mut flat = vec![Vec::new(); self.opt.master().len()];
        for (l, (w, b)) in self.layout.iter().enumerate() {
            flat[*w] = self.promote(grads.weights[l].data());
            if let (Some(bi), Some(gb)) = (b, &grads.biases[l]) {
                flat[*bi] = self.promote(gb);
            }
        }
        sgd_momentum_step(&mut self.opt, &flat)?;
        Ok(grads.loss)
    }

    /// The optimizer consumes binary16 gradients on the mixed path.
    fn promote(&self, g: &[f32]) -> Vec<f32> {
        match self.precision {
            Precision::Mixed { .. } => g.iter().map(|&v| to_single(to_half(v))).collect(),
            Precision::Single => g.to_vec(),
        }
    }

    /// Mean loss over a dataset under the FF weights, in chunks of the model batch.
    pub fn evaluate(&self, x: &DenseMatrix, labels: &[usize]) -> Result<f64> {
        let ops = self.operands()?;
        let chunk = self.model.batch().max(1);
        let features = x.cols();
        let mut total = 0f64;
        let mut start = 0;
        while start < x.rows() {
            let end = (start + chunk).min(x.rows());
            let xs = DenseMatrix::new(
                end - start,
                features,
                x.data()[start * features..end * features].to_vec(),
            )?;
            let logits = forward_network(&self.model, &ops, self.precision, &xs)?;
            let (loss, _) = softmax_cross_entropy(&logits, &labels[start..end])?;
            total += loss * (end - start) as f64;
            start = end;
        }
        Ok(total / x.rows().max(1) as f64)
    }
}
