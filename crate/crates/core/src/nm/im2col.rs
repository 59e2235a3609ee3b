use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::DenseMatrix;

/// Geometry of a square-kernel 2-D convolution over NCHW activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::Config("kernel and stride must be positive".into()));
        }
        if self.height + 2 * self.padding < self.kernel
            || self.width + 2 * self.padding < self.kernel
        {
            return Err(Error::Config(format!(
                "kernel {} larger than padded input {}x{}",
                self.kernel, self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Rows of the lowered matrix: one per output pixel.
    pub fn lowered_rows(&self) -> usize {
        self.batch * self.out_height() * self.out_width()
    }

    /// Columns of the lowered matrix: K*K*C, channel fastest.
    pub fn lowered_cols(&self) -> usize {
        self.kernel * self.kernel * self.channels
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Input coordinate read by output pixel (oh, ow) through tap (kh, kw).
    #[inline]
    fn source(&self, oh: usize, ow: usize, kh: usize, kw: usize) -> Option<(usize, usize)> {
        let h = (oh * self.stride + kh).checked_sub(self.padding)?;
        let w = (ow * self.stride + kw).checked_sub(self.padding)?;
        (h < self.height && w < self.width).then_some((h, w))
    }
}

/// Lowers a `batch x (C*H*W)` NCHW input into `(B*Ho*Wo) x (K*K*C)`.
///
/// Column `(kh*K + kw)*C + c` holds channel `c` under tap `(kh, kw)`, so blocks
/// of consecutive columns run across input channels.
pub fn im2col(input: &DenseMatrix, g: &ConvGeometry) -> Result<DenseMatrix> {
    g.validate()?;
    if input.rows() != g.batch || input.cols() != g.input_len() {
        return Err(Error::shape(format!(
            "im2col input {}x{}, geometry wants {}x{}",
            input.rows(),
            input.cols(),
            g.batch,
            g.input_len()
        )));
    }
    let (ho, wo, k, c) = (g.out_height(), g.out_width(), g.kernel, g.channels);
    let cols = g.lowered_cols();
    let mut out = vec![0f32; g.lowered_rows() * cols];
    let plane = g.height * g.width;
    for b in 0..g.batch {
        let sample = input.row(b);
        for oh in 0..ho {
            for ow in 0..wo {
                let r = (b * ho + oh) * wo + ow;
                let dst = &mut out[r * cols..(r + 1) * cols];
                for kh in 0..k {
                    for kw in 0..k {
                        if let Some((h, w)) = g.source(oh, ow, kh, kw) {
                            let base = (kh * k + kw) * c;
                            for ch in 0..c {
                                dst[base + ch] = sample[ch * plane + h * g.width + w];
                            }
                        }
                    }
                }
            }
        }
    }
    DenseMatrix::new(g.lowered_rows(), cols, out)
}

/// Adjoint of [`im2col`]: scatter-adds lowered gradients back to NCHW.
pub fn col2im(lowered: &DenseMatrix, g: &ConvGeometry) -> Result<DenseMatrix> {
    g.validate()?;
    if lowered.rows() != g.lowered_rows() || lowered.cols() != g.lowered_cols() {
        return Err(Error::shape(format!(
            "col2im input {}x{}, geometry wants {}x{}",
            lowered.rows(),
            lowered.cols(),
            g.lowered_rows(),
            g.lowered_cols()
        )));
    }
    let (ho, wo, k, c) = (g.out_height(), g.out_width(), g.kernel, g.channels);
    let plane = g.height * g.width;
    let mut out = DenseMatrix::zeros(g.batch, g.input_len());
    let len = g.input_len();
    let data = out.data_mut();
    for b in 0..g.batch {
        let sample = &mut data[b * len..(b + 1) * len];
        for oh in 0..ho {
            for ow in 0..wo {
                let src = lowered.row((b * ho + oh) * wo + ow);
                for kh in 0..k {
                    for kw in 0..k {
                        if let Some((h, w)) = g.source(oh, ow, kh, kw) {
                            let base = (kh * k + kw) * c;
                            for ch in 0..c {
                                sample[ch * plane + h * g.width + w] += src[base + ch];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
