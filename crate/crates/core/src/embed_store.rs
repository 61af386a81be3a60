//! Id-indexed embedding matrices and their binary file format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"BSCP1"                magic
//! u32                     dim
//! u64                     count
//! count * dim * f32       rows, row-major
//! count * (u32 len, utf8) id table
//! ```

pub mod adapter;

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"BSCP1";

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("file truncated: {0}")]
    TruncatedFile(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in row {0}")]
    NonFiniteValue(usize),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("unknown id {0:?}")]
    UnknownId(String),
    #[error("id table entry {0} is not valid UTF-8")]
    InvalidId(usize),
    #[error("{path}: {message}")]
    IoFailure { path: String, message: String },
    #[error("encoder protocol: {0}")]
    Protocol(String),
}

/// Dense `count x dim` matrix of `f32` rows, each tagged with a unique id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if data.len() != ids.len() * dim {
            return Err(StoreError::DimensionMismatch {
                expected: ids.len() * dim,
                got: data.len(),
            });
        }
        if let Some(row) = data
            .chunks_exact(dim)
            .position(|r| r.iter().any(|x| !x.is_finite()))
        {
            return Err(StoreError::NonFiniteValue(row));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(StoreError::DuplicateId(id.clone()));
            }
        }
        Ok(EmbeddingMatrix {
            dim,
            ids,
            data,
            index,
        })
    }

    pub fn from_rows<I, S>(dim: usize, rows: I) -> Result<Self, StoreError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (id, row) in rows {
            if row.len() != dim {
                return Err(StoreError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            ids.push(id.into());
            data.extend_from_slice(&row);
        }
        Self::new(dim, ids, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn lookup(&self, id: &str) -> Result<&[f32], StoreError> {
        self.position(id)
            .map(|i| self.row(i))
            .ok_or_else(|| StoreError::UnknownId(id.to_string()))
    }

    /// Row widened to `f64`.
    pub fn lookup_f64(&self, id: &str) -> Result<Vec<f64>, StoreError> {
        Ok(self.lookup(id)?.iter().map(|&x| f64::from(x)).collect())
    }

    /// Same ids, rows replaced by `f`. Row order is preserved.
    pub fn map_rows(&self, mut f: impl FnMut(&[f32]) -> Vec<f32>) -> Result<Self, StoreError> {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.dim) {
            let out = f(row);
            if out.len() != self.dim {
                return Err(StoreError::DimensionMismatch {
                    expected: self.dim,
                    got: out.len(),
                });
            }
            data.extend(out);
        }
        Self::new(self.dim, self.ids.clone(), data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let id_bytes: usize = self.ids.iter().map(|s| 4 + s.len()).sum();
        let mut out = Vec::with_capacity(17 + self.data.len() * 4 + id_bytes);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(MAGIC.len(), "magic").map_err(|_| StoreError::BadMagic)? != MAGIC {
            return Err(StoreError::BadMagic);
        }
        let dim = u32::from_le_bytes(cur.array("dim")?) as usize;
        let count = u64::from_le_bytes(cur.array("count")?);
        let count = usize::try_from(count)
            .map_err(|_| StoreError::TruncatedFile("count exceeds address space".into()))?;
        if dim == 0 {
            return Err(StoreError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        let n_floats = count
            .checked_mul(dim)
            .ok_or_else(|| StoreError::TruncatedFile("row block size overflows".into()))?;
        let expected_rows = n_floats
            .checked_mul(4)
            .ok_or_else(|| StoreError::TruncatedFile("row block size overflows".into()))?;
        if cur.remaining() < expected_rows {
            return Err(StoreError::TruncatedFile(format!(
                "header declares {count} rows of dim {dim}, only {} row bytes present",
                cur.remaining()
            )));
        }
        let data: Vec<f32> = cur
            .take(expected_rows, "rows")?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let mut ids = Vec::with_capacity(count);
        for i in 0..count {
            let len = u32::from_le_bytes(cur.array("id length")?) as usize;
            let raw = cur.take(len, "id")?;
            let id = std::str::from_utf8(raw).map_err(|_| StoreError::InvalidId(i))?;
            ids.push(id.to_string());
        }
        if cur.remaining() != 0 {
            return Err(StoreError::DimensionMismatch {
                expected: cur.pos,
                got: bytes.len(),
            });
        }
        Self::new(dim, ids, data)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], StoreError> {
        if self.remaining() < n {
            return Err(StoreError::TruncatedFile(format!("while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N], StoreError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| StoreError::IoFailure {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    EmbeddingMatrix::from_bytes(&bytes)
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    let fail = |e: std::io::Error| StoreError::IoFailure {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let file = fs::File::create(path).map_err(fail)?;
    let mut w = BufWriter::new(file);
    w.write_all(&matrix.to_bytes()).map_err(fail)?;
    w.flush().map_err(fail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn two_by_four() -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(
            4,
            vec![
                ("a", vec![1.0, 2.0, 3.0, 4.0]),
                ("b", vec![-0.5, 0.0, 1e-30, f32::MAX]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn reads_header_and_rows() {
        let m = two_by_four();
        let back = EmbeddingMatrix::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.dim(), 4);
        assert_eq!(back.len(), 2);
        assert_eq!(back.lookup("b").unwrap(), m.lookup("b").unwrap());
    }

    #[test]
    fn file_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        let m = two_by_four();
        write_embeddings(&m, &p).unwrap();
        let first = fs::read(&p).unwrap();
        let back = read_embeddings(&p).unwrap();
        assert_eq!(back, m);
        write_embeddings(&back, &p).unwrap();
        assert_eq!(fs::read(&p).unwrap(), first);
    }

    #[test]
    fn empty_matrix_round_trips() {
        let m = EmbeddingMatrix::new(8, vec![], vec![]).unwrap();
        let back = EmbeddingMatrix::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.len(), 0);
        assert_eq!(back.dim(), 8);
    }

    #[test]
    fn truncated_rows_detected() {
        let m = two_by_four();
        let mut bytes = m.to_bytes();
        // declare 3 rows while only 2 are present
        bytes[9..17].copy_from_slice(&3u64.to_le_bytes());
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes),
            Err(StoreError::TruncatedFile(_))
        ));
    }

    #[test]
    fn bad_magic_detected() {
        let mut bytes = two_by_four().to_bytes();
        bytes[0] = b'X';
        assert_eq!(EmbeddingMatrix::from_bytes(&bytes), Err(StoreError::BadMagic));
        assert_eq!(EmbeddingMatrix::from_bytes(b"BS"), Err(StoreError::BadMagic));
    }

    #[test]
    fn nan_row_rejected() {
        let mut bytes = two_by_four().to_bytes();
        let off = 17 + 4 * 5;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(
            EmbeddingMatrix::from_bytes(&bytes),
            Err(StoreError::NonFiniteValue(1))
        );
    }

    #[test]
    fn lookup_missing() {
        assert_eq!(
            two_by_four().lookup("zzz"),
            Err(StoreError::UnknownId("zzz".into()))
        );
    }

    #[test]
    fn large_random_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (count, dim) = (1000, 768);
        let data: Vec<f32> = (0..count * dim).map(|_| rng.random_range(-4.0..4.0)).collect();
        let ids = (0..count).map(|i| format!("doc-{i}")).collect();
        let m = EmbeddingMatrix::new(dim, ids, data).unwrap();
        let back = EmbeddingMatrix::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.lookup("doc-999").unwrap(), m.row(999));
    }

    proptest! {
        #[test]
        fn finite_payloads_round_trip_bit_exactly(
            dim in 1usize..6,
            bits in prop::collection::vec(any::<u32>(), 0..60),
        ) {
            let floats: Vec<f32> = bits
                .into_iter()
                .map(f32::from_bits)
                .filter(|x| x.is_finite())
                .collect();
            let count = floats.len() / dim;
            let data = floats[..count * dim].to_vec();
            let ids = (0..count).map(|i| format!("é{i}")).collect();
            let m = EmbeddingMatrix::new(dim, ids, data.clone()).unwrap();
            let back = EmbeddingMatrix::from_bytes(&m.to_bytes()).unwrap();
            let got: Vec<u32> = back.as_slice().iter().map(|x| x.to_bits()).collect();
            let want: Vec<u32> = data.iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(got, want);
            prop_assert_eq!(back.ids(), m.ids());
        }
    }
}
