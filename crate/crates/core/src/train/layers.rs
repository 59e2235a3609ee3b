//! Per-layer FF, BP and WU MatMuls on lowered operands.

use crate::error::{Error, Result};
use crate::model::{LayerShape, LayerSpec};
use crate::nm::{col2im, dense_matmul, im2col, sparse_matmul, DenseMatrix, PackedSparseTensor};

/// Right-hand MatMul operand, either dense or N:M packed along its rows.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightOperand {
    Dense(DenseMatrix),
    Packed(PackedSparseTensor),
}

impl WeightOperand {
    pub fn apply(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            WeightOperand::Dense(w) => dense_matmul(a, w),
            WeightOperand::Packed(w) => sparse_matmul(a, w),
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            WeightOperand::Dense(w) => w.rows(),
            WeightOperand::Packed(w) => w.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            WeightOperand::Dense(w) => w.cols(),
            WeightOperand::Packed(w) => w.cols(),
        }
    }
}

fn check_batch(layer: &LayerSpec, m: &DenseMatrix, features: usize, what: &str) -> Result<()> {
    if m.cols() != features {
        return Err(Error::shape(format!(
            "{}: {what} has {} features per sample, expected {features}",
            layer.label(),
            m.cols()
        )));
    }
    Ok(())
}

/// Lowers a `batch x features` activation into the FF left operand.
pub fn lower_input(layer: &LayerSpec, a_in: &DenseMatrix) -> Result<DenseMatrix> {
    check_batch(layer, a_in, layer.input_features(), "input")?;
    match &layer.shape {
        LayerShape::Conv(_) => im2col(a_in, &layer.geometry(a_in.rows()).expect("conv")),
        LayerShape::Linear(l) => a_in.clone().reshape(a_in.rows() * l.tokens, l.in_features),
    }
}

/// Lowers a `batch x features` output gradient into `rows x fan_out`.
pub fn lower_output_grad(layer: &LayerSpec, g_out: &DenseMatrix) -> Result<DenseMatrix> {
    check_batch(layer, g_out, layer.output_features(), "output gradient")?;
    match &layer.shape {
        LayerShape::Conv(c) => {
            let g = layer.geometry(g_out.rows()).expect("conv");
            let pixels = g.out_height() * g.out_width();
            Ok(pixels_from_nchw(g_out, c.out_channels, pixels))
        }
        LayerShape::Linear(l) => g_out
            .clone()
            .reshape(g_out.rows() * l.tokens, l.out_features),
    }
}

/// Restores a lowered `rows x fan_out` result to `batch x features`.
pub fn raise_output(layer: &LayerSpec, low: DenseMatrix, batch: usize) -> Result<DenseMatrix> {
    match &layer.shape {
        LayerShape::Conv(c) => {
            let g = layer.geometry(batch).expect("conv");
            Ok(nchw_from_pixels(
                &low,
                batch,
                c.out_channels,
                g.out_height() * g.out_width(),
            ))
        }
        LayerShape::Linear(_) => low.reshape(batch, layer.output_features()),
    }
}

fn nchw_from_pixels(
    low: &DenseMatrix,
    batch: usize,
    channels: usize,
    pixels: usize,
) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(batch, channels * pixels);
    let data = out.data_mut();
    for b in 0..batch {
        for p in 0..pixels {
            let src = low.row(b * pixels + p);
            for (c, &v) in src.iter().enumerate() {
                data[b * channels * pixels + c * pixels + p] = v;
            }
        }
    }
    out
}

fn pixels_from_nchw(x: &DenseMatrix, channels: usize, pixels: usize) -> DenseMatrix {
    let batch = x.rows();
    let mut out = DenseMatrix::zeros(batch * pixels, channels);
    let data = out.data_mut();
    for b in 0..batch {
        let sample = x.row(b);
        for c in 0..channels {
            for p in 0..pixels {
                data[(b * pixels + p) * channels + c] = sample[c * pixels + p];
            }
        }
    }
    out
}

/// FF: `a_out = lower(a_in) . w_ff` (+ bias), returned as `batch x features`.
/// `w_ff` is `fan_in x fan_out`.
pub fn forward(
    layer: &LayerSpec,
    a_in: &DenseMatrix,
    w_ff: &WeightOperand,
    bias: Option<&[f32]>,
) -> Result<DenseMatrix> {
    let low = lower_input(layer, a_in)?;
    forward_lowered(layer, &low, a_in.rows(), w_ff, bias)
}

pub fn forward_lowered(
    layer: &LayerSpec,
    lowered: &DenseMatrix,
    batch: usize,
    w_ff: &WeightOperand,
    bias: Option<&[f32]>,
) -> Result<DenseMatrix> {
    let mut out = w_ff.apply(lowered)?;
    if let Some(b) = bias {
        let cols = out.cols();
        if b.len() != cols {
            return Err(Error::shape(format!(
                "{}: bias of {} for {cols} outputs",
                layer.label(),
                b.len()
            )));
        }
        for row in out.data_mut().chunks_mut(cols) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
    }
    raise_output(layer, out, batch)
}

/// BP: `g_in = raise(lower(g_out) . w_bp)`. `w_bp` is the transposed weight,
/// `fan_out x fan_in`.
pub fn backward_data(
    layer: &LayerSpec,
    g_out: &DenseMatrix,
    w_bp: &WeightOperand,
) -> Result<DenseMatrix> {
    let low = lower_output_grad(layer, g_out)?;
    backward_data_lowered(layer, &low, g_out.rows(), w_bp)
}

pub fn backward_data_lowered(
    layer: &LayerSpec,
    g_low: &DenseMatrix,
    batch: usize,
    w_bp: &WeightOperand,
) -> Result<DenseMatrix> {
    let g_in_low = w_bp.apply(g_low)?;
    match &layer.shape {
        LayerShape::Conv(_) => col2im(&g_in_low, &layer.geometry(batch).expect("conv")),
        LayerShape::Linear(_) => g_in_low.reshape(batch, layer.input_features()),
    }
}

/// WU: `g_w = lower(a_in)^T . lower(g_out)`, the full dense `fan_in x fan_out`
/// gradient.
pub fn backward_weight(
    layer: &LayerSpec,
    a_in: &DenseMatrix,
    g_out: &DenseMatrix,
) -> Result<DenseMatrix> {
    let a_low = lower_input(layer, a_in)?;
    let g_low = lower_output_grad(layer, g_out)?;
    dense_matmul(&a_low.transpose(), &g_low)
}

/// WU on already lowered operands; `g` may be packed along its rows (the
/// WU reduction axis) when gradients are pruned.
pub fn backward_weight_lowered(a_low: &DenseMatrix, g: &WeightOperand) -> Result<DenseMatrix> {
    g.apply(&a_low.transpose())
}

/// Column sums of a lowered output gradient.
pub fn bias_grad(g_low: &DenseMatrix) -> Vec<f32> {
    let mut out = vec![0f32; g_low.cols()];
    for row in g_low.data().chunks(g_low.cols().max(1)) {
        for (o, &g) in out.iter_mut().zip(row) {
            *o += g;
        }
    }
    out
}
