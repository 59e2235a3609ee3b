//! N:M structured sparsity primitives: pattern configs, pruning, the packed
//! storage format, binary16 rounding and the matmul kernels.

mod config;
pub mod half;
mod im2col;
mod kernels;
mod matrix;
mod packed;
mod prune;

pub use config::{NmConfig, MAX_GROUP};
pub use half::{round_half, round_slice, to_half, to_single, Half};
pub use im2col::{col2im, im2col, ConvGeometry};
pub use kernels::{dense_matmul, sparse_matmul};
pub use matrix::DenseMatrix;
pub use packed::{
    pack_nm, pack_nm_with, unpack_nm, GroupAxis, PackedSparseTensor, TailPolicy, FORMAT_VERSION,
    HEADER_LEN, MAGIC,
};
pub use prune::prune_group;

/// BDWP forward-pass weights: the lowered `fan_in x fan_out` master matrix
/// pruned along fan-in.
pub fn bdwp_ff(w: &DenseMatrix, nm: NmConfig) -> crate::Result<PackedSparseTensor> {
    pack_nm_with(w, nm, GroupAxis::Rows, TailPolicy::ZeroPad)
}

/// BDWP backward-pass weights: the transposed master matrix pruned along
/// fan-out, ready to multiply output gradients.
pub fn bdwp_bp(w: &DenseMatrix, nm: NmConfig) -> crate::Result<PackedSparseTensor> {
    pack_nm_with(&w.transpose(), nm, GroupAxis::Rows, TailPolicy::ZeroPad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_directions_mask_differently() {
        // Rows are fan-in, columns fan-out.
        let w = DenseMatrix::from_rows(&[&[1.0, -3.0], &[9.0, 2.0]]).unwrap();
        let nm = NmConfig::new(1, 2).unwrap();
        let ff = unpack_nm(&bdwp_ff(&w, nm).unwrap());
        assert_eq!(ff.data(), &[0.0, -3.0, 9.0, 0.0]);
        let bp = unpack_nm(&bdwp_bp(&w, nm).unwrap());
        // BP operand is W^T: (fan_out x fan_in).
        assert_eq!(bp.data(), &[0.0, 9.0, -3.0, 0.0]);
    }
}
