use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::half::{to_half, to_single, Half};
use super::prune::select_top_n;
use super::{DenseMatrix, NmConfig};

/// Axis along which consecutive-M groups are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupAxis {
    /// Groups run down a column (consecutive row indices).
    Rows,
    /// Groups run along a row (consecutive column indices).
    Cols,
}

impl GroupAxis {
    fn code(self) -> u8 {
        match self {
            GroupAxis::Rows => 0,
            GroupAxis::Cols => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(GroupAxis::Rows),
            1 => Ok(GroupAxis::Cols),
            _ => Err(Error::Format(format!("unknown grouping axis code {code}"))),
        }
    }
}

/// Whether an extent that is not a multiple of M may be zero-padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailPolicy {
    #[default]
    Reject,
    /// Pad the last group with zeros placed after the real elements.
    ZeroPad,
}

/// Compact N:M storage: `n` kept values plus their in-group offsets per group.
///
/// Groups are enumerated row-major over (row, group) for [`GroupAxis::Cols`]
/// and over (group, column) for [`GroupAxis::Rows`]. Within a group values are
/// stored in ascending offset order.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedSparseTensor {
    nm: NmConfig,
    rows: usize,
    cols: usize,
    axis: GroupAxis,
    values: Vec<f32>,
    indexes: Vec<u8>,
}

impl PackedSparseTensor {
    /// Builds a tensor from raw parts, checking every structural invariant.
    pub fn from_parts(
        nm: NmConfig,
        rows: usize,
        cols: usize,
        axis: GroupAxis,
        values: Vec<f32>,
        indexes: Vec<u8>,
    ) -> Result<Self> {
        let t = Self {
            nm,
            rows,
            cols,
            axis,
            values,
            indexes,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        let expected = self.group_count() * self.nm.n();
        if self.values.len() != expected || self.indexes.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} values and indexes, got {} and {}",
                self.values.len(),
                self.indexes.len()
            )));
        }
        for group in self.indexes.chunks(self.nm.n().max(1)) {
            if group.iter().any(|&i| i as usize >= self.nm.m()) {
                return Err(Error::Format(format!("index out of range for {}", self.nm)));
            }
            if group.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Format(
                    "indexes within a group must strictly increase".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn nm(&self) -> NmConfig {
        self.nm
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn axis(&self) -> GroupAxis {
        self.axis
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn indexes(&self) -> &[u8] {
        &self.indexes
    }

    /// Extent along the grouping axis.
    pub fn grouped_extent(&self) -> usize {
        match self.axis {
            GroupAxis::Rows => self.rows,
            GroupAxis::Cols => self.cols,
        }
    }

    /// Extent across the grouping axis.
    pub fn other_extent(&self) -> usize {
        match self.axis {
            GroupAxis::Rows => self.cols,
            GroupAxis::Cols => self.rows,
        }
    }

    pub fn groups_per_line(&self) -> usize {
        self.grouped_extent().div_ceil(self.nm.m())
    }

    pub fn group_count(&self) -> usize {
        self.groups_per_line() * self.other_extent()
    }

    /// Storage footprint with binary16 values and one byte per index.
    pub fn storage_bytes(&self) -> usize {
        self.values.len() * 2 + self.indexes.len()
    }

    /// Dense (row, col) position of slot `s` of group `g`, or `None` when the
    /// slot falls into the padded tail.
    fn position(&self, g: usize, s: usize) -> Option<(usize, usize)> {
        let per_line = self.groups_per_line();
        let n = self.nm.n();
        let offset = self.indexes[g * n + s] as usize;
        let (line, block) = match self.axis {
            GroupAxis::Cols => (g / per_line, g % per_line),
            GroupAxis::Rows => (g % self.cols, g / self.cols),
        };
        let along = block * self.nm.m() + offset;
        if along >= self.grouped_extent() {
            return None;
        }
        Some(match self.axis {
            GroupAxis::Cols => (line, along),
            GroupAxis::Rows => (along, line),
        })
    }

    /// Writes the binary `NMPK` encoding. Values are stored as binary16.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let rows = u32::try_from(self.rows).map_err(|_| Error::Format("rows exceed u32".into()))?;
        let cols = u32::try_from(self.cols).map_err(|_| Error::Format("cols exceed u32".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[self.nm.n() as u8, self.nm.m() as u8, self.axis.code()])?;
        w.write_all(&rows.to_le_bytes())?;
        w.write_all(&cols.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 2 + self.indexes.len());
        for &v in &self.values {
            buf.extend_from_slice(&to_half(v).to_bits().to_le_bytes());
        }
        buf.extend_from_slice(&self.indexes);
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        // Writing into a Vec cannot fail short of the u32 extent check.
        self.write_to(&mut out).expect("in-memory write");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        if &header[0..4] != MAGIC {
            return Err(Error::Format("bad magic, expected NMPK".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let nm = NmConfig::new(header[6] as usize, header[7] as usize)
            .map_err(|e| Error::Format(e.to_string()))?;
        let axis = GroupAxis::from_code(header[8])?;
        let rows = u32::from_le_bytes(header[9..13].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(header[13..17].try_into().unwrap()) as usize;
        let groups = match axis {
            GroupAxis::Rows => rows.div_ceil(nm.m()) * cols,
            GroupAxis::Cols => cols.div_ceil(nm.m()) * rows,
        };
        let count = groups * nm.n();
        let mut body = vec![0u8; count * 3];
        r.read_exact(&mut body)
            .map_err(|e| Error::Format(format!("truncated body: {e}")))?;
        let values = body[..count * 2]
            .chunks_exact(2)
            .map(|b| to_single(Half::from_bits(u16::from_le_bytes([b[0], b[1]]))))
            .collect();
        let indexes = body[count * 2..].to_vec();
        Self::from_parts(nm, rows, cols, axis, values, indexes)
    }
}

pub const MAGIC: &[u8; 4] = b"NMPK";
pub const FORMAT_VERSION: u16 = 1;
/// magic(4) + version(2) + n, m, axis (3) + rows(4) + cols(4)
pub const HEADER_LEN: usize = 17;

/// Prunes every consecutive-M run along `axis` and packs the survivors.
pub fn pack_nm(dense: &DenseMatrix, nm: NmConfig, axis: GroupAxis) -> Result<PackedSparseTensor> {
    pack_nm_with(dense, nm, axis, TailPolicy::Reject)
}

pub fn pack_nm_with(
    dense: &DenseMatrix,
    nm: NmConfig,
    axis: GroupAxis,
    tail: TailPolicy,
) -> Result<PackedSparseTensor> {
    dense.ensure_finite()?;
    let (rows, cols) = (dense.rows(), dense.cols());
    let extent = match axis {
        GroupAxis::Rows => rows,
        GroupAxis::Cols => cols,
    };
    if extent % nm.m() != 0 && tail == TailPolicy::Reject {
        return Err(Error::shape(format!(
            "extent {extent} along {axis:?} is not a multiple of {} (enable zero padding)",
            nm.m()
        )));
    }
    let (n, m) = (nm.n(), nm.m());
    let per_line = extent.div_ceil(m);
    let other = match axis {
        GroupAxis::Rows => cols,
        GroupAxis::Cols => rows,
    };
    let groups = per_line * other;
    let mut values = Vec::with_capacity(groups * n);
    let mut indexes = vec![0u8; groups * n];
    let mut scratch = vec![0f32; m];
    let data = dense.data();

    let mut g = 0;
    let mut emit = |group: &[f32], g: usize, values: &mut Vec<f32>| {
        let out = &mut indexes[g * n..(g + 1) * n];
        select_top_n(group, n, out);
        for &i in out.iter() {
            values.push(group.get(i as usize).copied().unwrap_or(0.0));
        }
    };
    match axis {
        GroupAxis::Cols => {
            for r in 0..rows {
                let row = &data[r * cols..(r + 1) * cols];
                for block in row.chunks(m) {
                    emit(block, g, &mut values);
                    g += 1;
                }
            }
        }
        GroupAxis::Rows => {
            for block in 0..per_line {
                let start = block * m;
                let len = m.min(rows - start);
                for c in 0..cols {
                    for (k, slot) in scratch[..len].iter_mut().enumerate() {
                        *slot = data[(start + k) * cols + c];
                    }
                    emit(&scratch[..len], g, &mut values);
                    g += 1;
                }
            }
        }
    }
    Ok(PackedSparseTensor {
        nm,
        rows,
        cols,
        axis,
        values,
        indexes,
    })
}

/// Scatters kept values back to their dense positions; everything else is zero.
pub fn unpack_nm(sparse: &PackedSparseTensor) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(sparse.rows, sparse.cols);
    let n = sparse.nm.n();
    for g in 0..sparse.group_count() {
        for s in 0..n {
            if let Some((r, c)) = sparse.position(g, s) {
                out.set(r, c, sparse.values[g * n + s]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nm(n: usize, m: usize) -> NmConfig {
        NmConfig::new(n, m).unwrap()
    }

    #[test]
    fn packs_single_row() {
        let d = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0, 4.0]]).unwrap();
        let p = pack_nm(&d, nm(2, 4), GroupAxis::Cols).unwrap();
        assert_eq!(p.values(), &[3.0, 4.0]);
        assert_eq!(p.indexes(), &[2, 3]);
        assert_eq!(unpack_nm(&p).data(), &[0.0, 0.0, 3.0, 4.0]);
    }

    #[test]
    fn packs_per_row_groups() {
        let d = DenseMatrix::from_rows(&[&[1.0, -5.0, 0.0, 2.0], &[0.0, 0.0, 7.0, -1.0]]).unwrap();
        let p = pack_nm(&d, nm(2, 4), GroupAxis::Cols).unwrap();
        assert_eq!(p.values(), &[-5.0, 2.0, 7.0, -1.0]);
        assert_eq!(p.indexes(), &[1, 3, 2, 3]);
    }

    #[test]
    fn dense_pattern_is_lossless() {
        let d = DenseMatrix::from_rows(&[&[1.0, 0.0, -3.0, 4.0], &[5.0, 6.0, 0.0, 8.0]]).unwrap();
        let p = pack_nm(&d, nm(2, 2), GroupAxis::Cols).unwrap();
        assert_eq!(p.values(), d.data());
        assert_eq!(p.indexes(), &[0, 1, 0, 1, 0, 1, 0, 1]);
        assert_eq!(unpack_nm(&p), d);
    }

    #[test]
    fn column_groups() {
        // Groups run down each column.
        let d = DenseMatrix::from_rows(&[&[1.0, 9.0], &[-3.0, 2.0]]).unwrap();
        let p = pack_nm(&d, nm(1, 2), GroupAxis::Rows).unwrap();
        assert_eq!(p.values(), &[-3.0, 9.0]);
        assert_eq!(p.indexes(), &[1, 0]);
        let p = pack_nm(&d, nm(1, 2), GroupAxis::Cols).unwrap();
        assert_eq!(p.values(), &[9.0, -3.0]);
    }

    #[test]
    fn empty_tensor() {
        let d = DenseMatrix::zeros(0, 8);
        let p = pack_nm(&d, nm(2, 8), GroupAxis::Cols).unwrap();
        assert_eq!(p.group_count(), 0);
        let u = unpack_nm(&p);
        assert_eq!((u.rows(), u.cols()), (0, 8));
    }

    #[test]
    fn tail_handling() {
        let d = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0, 4.0, 5.0, 0.5]]).unwrap();
        assert!(matches!(
            pack_nm(&d, nm(2, 4), GroupAxis::Cols),
            Err(Error::Shape(_))
        ));
        let p = pack_nm_with(&d, nm(2, 4), GroupAxis::Cols, TailPolicy::ZeroPad).unwrap();
        assert_eq!(p.values(), &[3.0, 4.0, 5.0, 0.5]);
        assert_eq!(p.indexes(), &[2, 3, 0, 1]);

        // Tail with a single real element has to take a padded slot.
        let d = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0, 4.0, -7.0]]).unwrap();
        let p = pack_nm_with(&d, nm(2, 4), GroupAxis::Cols, TailPolicy::ZeroPad).unwrap();
        assert_eq!(p.values(), &[3.0, 4.0, -7.0, 0.0]);
        assert_eq!(p.indexes(), &[2, 3, 0, 1]);
        assert_eq!(unpack_nm(&p).data(), &[0.0, 0.0, 3.0, 4.0, -7.0]);
    }

    #[test]
    fn rejects_non_finite() {
        let d = DenseMatrix::from_rows(&[&[1.0, f32::INFINITY, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            pack_nm(&d, nm(2, 4), GroupAxis::Cols),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let d =
            DenseMatrix::from_rows(&[&[0.5, -1.5, 2.0, 0.25], &[8.0, 0.0, -0.125, 3.0]]).unwrap();
        let p = pack_nm(&d, nm(2, 4), GroupAxis::Cols).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], b"NMPK");
        assert_eq!(bytes.len(), HEADER_LEN + 4 * 2 + 4);
        // version 1, n=2, m=4, axis=cols(1), rows=2, cols=4
        assert_eq!(&bytes[4..17], &[1, 0, 2, 4, 1, 2, 0, 0, 0, 4, 0, 0, 0]);
        // First value -1.5 as binary16 little-endian: 0xBE00.
        assert_eq!(&bytes[17..19], &[0x00, 0xBE]);
        let back = PackedSparseTensor::read_from(&bytes[..]).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_corrupt_files() {
        let d = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0, 4.0]]).unwrap();
        let p = pack_nm(&d, nm(2, 4), GroupAxis::Cols).unwrap();
        let good = p.to_bytes();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(PackedSparseTensor::read_from(&bad[..]).is_err());

        let mut bad = good.clone();
        let last = bad.len() - 1;
        bad[last] = bad[last - 1]; // duplicate index
        assert!(PackedSparseTensor::read_from(&bad[..]).is_err());

        assert!(PackedSparseTensor::read_from(&good[..good.len() - 1]).is_err());

        let mut bad = good;
        bad[6] = 5; // n > m
        assert!(PackedSparseTensor::read_from(&bad[..]).is_err());
    }
}
