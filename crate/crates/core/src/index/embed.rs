//! Embedders and the unit-norm vector type.

use serde::{Deserialize, Serialize};

use crate::ingest::tokenize;

use super::IndexError;

pub const DEFAULT_DIM: usize = 384;
pub const REFERENCE_EMBEDDER_NAME: &str = "hashed-bow-fnv1a64";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over a byte stream.
pub fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes
        .into_iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub name: String,
    pub dim: usize,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec {
            name: REFERENCE_EMBEDDER_NAME.to_string(),
            dim: DEFAULT_DIM,
        }
    }
}

/// A vector with L2 norm 1 (within 1e-6).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Wraps values that are already unit-norm.
    pub fn new(values: Vec<f32>) -> Result<Self, IndexError> {
        let norm = values.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if values.is_empty() || (norm - 1.0).abs() > 1e-6 {
            return Err(IndexError::NotUnitNorm(norm));
        }
        Ok(EmbeddingVector(values))
    }

    /// Scales `values` to unit length; the zero vector becomes `e0`.
    pub fn normalized(values: &[f64]) -> Self {
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            let mut v = vec![0.0; values.len().max(1)];
            v[0] = 1.0;
            return EmbeddingVector(v);
        }
        EmbeddingVector(values.iter().map(|x| (x / norm) as f32).collect())
    }

    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        EmbeddingVector(v)
    }

    #[cfg(test)]
    pub(crate) fn from_raw(values: Vec<f32>) -> Self {
        EmbeddingVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

/// Dot product of two equal-length slices, accumulated in order in f64.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, IndexError> {
    if u.dim() != v.dim() {
        return Err(IndexError::DimMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    Ok(dot(u.as_slice(), v.as_slice()))
}

/// Anything that turns text into deterministic unit-norm vectors.
pub trait Embedder: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;
    fn embed(&self, text: &str) -> EmbeddingVector;
}

/// Signed feature hashing of lowercased tokens.
///
/// Each token adds ±1 at `h mod dim`, where `h` is the FNV-1a hash of the
/// token and the sign comes from bit 32 of `h`.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    spec: EmbedderSpec,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self, IndexError> {
        if dim < 2 {
            return Err(IndexError::BadDim(dim));
        }
        Ok(HashEmbedder {
            spec: EmbedderSpec {
                name: REFERENCE_EMBEDDER_NAME.to_string(),
                dim,
            },
        })
    }

    pub fn from_spec(spec: &EmbedderSpec) -> Result<Self, IndexError> {
        if spec.name != REFERENCE_EMBEDDER_NAME {
            return Err(IndexError::EmbedderMismatch {
                expected: REFERENCE_EMBEDDER_NAME.to_string(),
                got: spec.name.clone(),
            });
        }
        Self::new(spec.dim)
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(DEFAULT_DIM).unwrap()
    }
}

impl Embedder for HashEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed(&self, text: &str) -> EmbeddingVector {
        let dim = self.spec.dim;
        let mut acc = vec![0.0f64; dim];
        for token in tokenize(text) {
            let h = fnv1a64(token.to_lowercase().bytes());
            let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
            acc[(h % dim as u64) as usize] += sign;
        }
        EmbeddingVector::normalized(&acc)
    }
}

pub fn embed_text(text: &str, spec: &EmbedderSpec) -> Result<EmbeddingVector, IndexError> {
    Ok(HashEmbedder::from_spec(spec)?.embed(text))
}
