//! Binary embedding files.
//!
//! Layout (little-endian): 4-byte magic `GLNE`, u32 version = 1, u32 row
//! count, u32 dim, then `count * dim` IEEE-754 f32 values, row-major. Row
//! `i` is keyed to building ordinal `i` of the manifest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"GLNE";
pub const EMBEDDING_VERSION: u32 = 1;
pub const EMBEDDING_HEADER_BYTES: usize = 16;

/// Default embedding width when files are produced by an upstream extractor.
pub const DEFAULT_EMBEDDING_DIM: usize = 768;

/// A dense `count x dim` matrix of finite f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    count: usize,
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(count: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != count * dim {
            return Err(Error::ShapeMismatch(format!(
                "embedding matrix {count}x{dim} needs {} values, got {}",
                count * dim,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "embedding value at flat index {bad}"
            )));
        }
        Ok(Self { count, dim, values })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Row `i` widened to f64.
    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }
}

/// Reads and validates only the 16-byte header, returning `(count, dim)`.
pub fn read_embedding_header(path: &Path) -> Result<(usize, usize)> {
    let file = File::open(path).map_err(|source| Error::MissingFile {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let mut header = [0u8; EMBEDDING_HEADER_BYTES];
    reader.read_exact(&mut header).map_err(|_| {
        Error::Truncated(format!("{}: header shorter than 16 bytes", path.display()))
    })?;
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != EMBEDDING_MAGIC {
        return Err(Error::BadMagic {
            expected: EMBEDDING_MAGIC,
            found: magic,
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != EMBEDDING_VERSION {
        return Err(Error::VersionMismatch {
            expected: EMBEDDING_VERSION,
            found: version,
        });
    }
    let count = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    Ok((count, dim))
}

/// Reads a full embedding file; the payload must hold exactly
/// `count * dim` f32 values, all finite.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let (count, dim) = read_embedding_header(path)?;
    let file = File::open(path).map_err(|source| Error::MissingFile {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let mut skip = [0u8; EMBEDDING_HEADER_BYTES];
    reader.read_exact(&mut skip)?;
    let expected = count * dim * 4;
    let mut payload = Vec::with_capacity(expected);
    reader.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(Error::Truncated(format!(
            "{}: payload holds {} bytes, header promises {expected}",
            path.display(),
            payload.len()
        )));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingMatrix::new(count, dim, values)
}

/// Writes an embedding file; `read_embeddings` round-trips it bitwise.
pub fn write_embeddings(path: &Path, matrix: &EmbeddingMatrix) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    writer.write_all(&EMBEDDING_MAGIC)?;
    writer.write_all(&EMBEDDING_VERSION.to_le_bytes())?;
    writer.write_all(&(matrix.count as u32).to_le_bytes())?;
    writer.write_all(&(matrix.dim as u32).to_le_bytes())?;
    for v in &matrix.values {
        writer.write_all(&v.to_le_bytes())?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn file_size_matches_header_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.emb");
        let m = EmbeddingMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        write_embeddings(&path, &m).unwrap();
        // 16-byte header + 2*3*4-byte payload.
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 40);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.emb");
        let mut bytes = b"XXXX".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_embeddings(&path),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.emb");
        let m = EmbeddingMatrix::new(2, 2, vec![1.0; 4]).unwrap();
        write_embeddings(&path, &m).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_embeddings(&path), Err(Error::Truncated(_))));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        assert!(matches!(
            EmbeddingMatrix::new(1, 2, vec![1.0, f32::INFINITY]),
            Err(Error::NonFinite(_))
        ));
    }

    proptest! {
        #[test]
        fn write_read_is_the_identity(
            count in 1usize..6,
            dim in 1usize..9,
            seed in 0u64..1000,
        ) {
            use crate::nn::rng::{StreamKind, StreamRng};
            let mut rng = StreamRng::new(seed, StreamKind::Synthetic);
            let values: Vec<f32> = (0..count * dim)
                .map(|_| (rng.normal() * 10.0) as f32)
                .collect();
            let m = EmbeddingMatrix::new(count, dim, values).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.emb");
            write_embeddings(&path, &m).unwrap();
            let back = read_embeddings(&path).unwrap();
            prop_assert_eq!(m, back);
        }
    }
}
