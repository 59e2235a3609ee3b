use crate::error::{Error, Result};

use super::packed::{GroupAxis, PackedSparseTensor};
use super::DenseMatrix;

/// Plain `A · B` in f32, accumulating each output in ascending reduction order.
pub fn dense_matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0f32; m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = ad[i * k + kk];
            let brow = &bd[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    DenseMatrix::new(m, n, out)
}

/// `A · W` where `W` is held in packed form, grouped along its rows (the
/// reduction axis). Only kept entries are multiplied; padded slots are skipped.
pub fn sparse_matmul(a: &DenseMatrix, w: &PackedSparseTensor) -> Result<DenseMatrix> {
    if w.axis() != GroupAxis::Rows {
        return Err(Error::contract(
            "kernels",
            "sparse_matmul",
            "packed operand must be grouped along the reduction axis (rows)",
        ));
    }
    if a.cols() != w.rows() {
        return Err(Error::shape(format!(
            "sparse matmul {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let (rows, red, cols) = (a.rows(), a.cols(), w.cols());
    let (n, m) = (w.nm().n(), w.nm().m());
    let groups = w.group_count();
    let (vals, idx) = (w.values(), w.indexes());
    let mut out = vec![0f32; rows * cols];
    for i in 0..rows {
        let arow = &a.data()[i * red..(i + 1) * red];
        let orow = &mut out[i * cols..(i + 1) * cols];
        // Groups are ordered (block, column), so every output element sees its
        // contributions in ascending reduction index.
        for g in 0..groups {
            let base = (g / cols) * m;
            let c = g % cols;
            let mut acc = orow[c];
            for s in g * n..(g + 1) * n {
                let k = base + idx[s] as usize;
                if k < red {
                    acc += arow[k] * vals[s];
                }
            }
            orow[c] = acc;
        }
    }
    DenseMatrix::new(rows, cols, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nm::{pack_nm, pack_nm_with, unpack_nm, NmConfig, TailPolicy};

    fn lcg(seed: u64, len: usize) -> Vec<f32> {
        let mut s = seed;
        (0..len)
            .map(|_| {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((s >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn dense_small() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]).unwrap();
        assert_eq!(
            dense_matmul(&a, &b).unwrap().data(),
            &[19.0, 22.0, 43.0, 50.0]
        );
        assert!(dense_matmul(&a, &DenseMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn sparse_matches_dense_of_unpacked() {
        let a = DenseMatrix::new(5, 16, lcg(1, 80)).unwrap();
        let w = DenseMatrix::new(16, 7, lcg(2, 112)).unwrap();
        for (n, m) in [(1, 4), (2, 4), (2, 8), (4, 16), (8, 8)] {
            let p = pack_nm(&w, NmConfig::new(n, m).unwrap(), GroupAxis::Rows).unwrap();
            let s = sparse_matmul(&a, &p).unwrap();
            let d = dense_matmul(&a, &unpack_nm(&p)).unwrap();
            for (x, y) in s.data().iter().zip(d.data()) {
                assert!((x - y).abs() <= 1e-5 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn full_density_is_bit_identical() {
        let a = DenseMatrix::new(4, 8, lcg(3, 32)).unwrap();
        let w = DenseMatrix::new(8, 3, lcg(4, 24)).unwrap();
        let p = pack_nm(&w, NmConfig::new(4, 4).unwrap(), GroupAxis::Rows).unwrap();
        assert!(sparse_matmul(&a, &p)
            .unwrap()
            .bit_eq(&dense_matmul(&a, &w).unwrap()));
    }

    #[test]
    fn padded_reduction() {
        let a = DenseMatrix::new(3, 6, lcg(5, 18)).unwrap();
        let w = DenseMatrix::new(6, 2, lcg(6, 12)).unwrap();
        let p = pack_nm_with(
            &w,
            NmConfig::new(2, 4).unwrap(),
            GroupAxis::Rows,
            TailPolicy::ZeroPad,
        )
        .unwrap();
        let s = sparse_matmul(&a, &p).unwrap();
        let d = dense_matmul(&a, &unpack_nm(&p)).unwrap();
        for (x, y) in s.data().iter().zip(d.data()) {
            assert!((x - y).abs() <= 1e-5);
        }
    }

    #[test]
    fn wrong_axis_is_contract_error() {
        let w = DenseMatrix::zeros(4, 4);
        let p = pack_nm(&w, NmConfig::new(2, 4).unwrap(), GroupAxis::Cols).unwrap();
        let err = sparse_matmul(&DenseMatrix::zeros(1, 4), &p).unwrap_err();
        assert!(matches!(err, Error::Contract { .. }));
    }
}
