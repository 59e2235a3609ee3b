//! Prune a matrix to 2:4 along its rows, serialize it and multiply with it.
use nmsat::nm::{
    dense_matmul, pack_nm, prune_group, sparse_matmul, unpack_nm, DenseMatrix, GroupAxis, NmConfig,
    PackedSparseTensor,
};

fn main() -> nmsat::Result<()> {
    let nm: NmConfig = "2:4".parse()?;
    let (vals, idx) = prune_group(&[0.5, -0.1, 0.0, 0.9], nm)?;
    println!("group [0.5, -0.1, 0.0, 0.9] keeps {vals:?} at {idx:?}");

    let w = DenseMatrix::from_rows(&[&[0.3, -1.0], &[-0.2, 0.1], &[0.9, 0.4], &[0.05, -0.7]])?;
    let packed = pack_nm(&w, nm, GroupAxis::Rows)?;
    let bytes = packed.to_bytes();
    let back = PackedSparseTensor::read_from(bytes.as_slice())?;
    // Values are stored as binary16.
    assert_eq!(back.indexes(), packed.indexes());
    println!(
        "{} bytes on disk, values {:?} read back as {:?}",
        bytes.len(),
        packed.values(),
        back.values()
    );

    let a = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0, 4.0]])?;
    let sparse = sparse_matmul(&a, &packed)?;
    let masked = dense_matmul(&a, &unpack_nm(&packed))?;
    assert!(sparse.bit_eq(&masked));
    println!("a . w = {:?}", sparse.data());
    Ok(())
}
