//! Exhaustive cosine search over a flat list of records.
//!
//! On-disk layout (all integers little-endian):
//!
//! ```text
//! "VSTR" | version u16 | dim u32 | name_len u32 | name utf8 | count u64
//! count × ( dim × f32 | chunk_len u32 | chunk JSON utf8 )
//! ```

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use crate::ingest::Chunk;

use super::embed::{dot, EmbedderSpec, EmbeddingVector};
use super::IndexError;

pub const MAGIC: &[u8; 4] = b"VSTR";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub id: u64,
    pub score: f64,
    pub chunk: Chunk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    spec: EmbedderSpec,
    /// Row-major, `len() * dim` values.
    vectors: Vec<f32>,
    chunks: Vec<Chunk>,
}

impl VectorStore {
    pub fn new(spec: EmbedderSpec) -> Self {
        VectorStore {
            spec,
            vectors: Vec::new(),
            chunks: Vec::new(),
        }
    }

    pub fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn clear(&mut self) {
        self.vectors.clear();
        self.chunks.clear();
    }

    pub fn vector(&self, id: u64) -> Option<&[f32]> {
        let i = id as usize;
        (i < self.len()).then(|| &self.vectors[i * self.dim()..(i + 1) * self.dim()])
    }

    pub fn chunk(&self, id: u64) -> Option<&Chunk> {
        self.chunks.get(id as usize)
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    /// Appends a record and returns its id (the previous record count).
    pub fn add(&mut self, chunk: Chunk, vector: &EmbeddingVector) -> Result<u64, IndexError> {
        if vector.dim() != self.dim() {
            return Err(IndexError::DimMismatch {
                expected: self.dim(),
                got: vector.dim(),
            });
        }
        let id = self.len() as u64;
        self.vectors.extend_from_slice(vector.as_slice());
        self.chunks.push(chunk);
        Ok(id)
    }

    /// Top `k` records by cosine similarity, ties broken by smaller id.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if query.dim() != self.dim() {
            return Err(IndexError::DimMismatch {
                expected: self.dim(),
                got: query.dim(),
            });
        }
        let k = k.min(self.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let q = query.as_slice();
        let mut scored: Vec<(f64, usize)> = self
            .vectors
            .chunks_exact(self.dim())
            .enumerate()
            .map(|(i, row)| (dot(row, q), i))
            .collect();
        let order =
            |a: &(f64, usize), b: &(f64, usize)| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(score, i)| SearchHit {
                id: i as u64,
                score,
                chunk: self.chunks[i].clone(),
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let name = self.spec.name.as_bytes();
        let mut out = Vec::with_capacity(22 + name.len() + self.vectors.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (row, chunk) in self.vectors.chunks_exact(self.dim()).zip(&self.chunks) {
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
            let json = serde_json::to_vec(chunk).expect("chunk serializes");
            out.extend_from_slice(&(json.len() as u32).to_le_bytes());
            out.extend_from_slice(&json);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(r.corrupt_at(0, "bad magic"));
        }
        let version = u16::from_le_bytes(r.array("version")?);
        if version != FORMAT_VERSION {
            return Err(r.corrupt_at(4, format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(r.array("dim")?) as usize;
        if dim < 2 {
            return Err(r.corrupt_at(6, format!("invalid dim {dim}")));
        }
        let name_len = u32::from_le_bytes(r.array("name length")?) as usize;
        let name_at = r.pos;
        let name = std::str::from_utf8(r.take(name_len, "embedder name")?)
            .map_err(|_| r.corrupt_at(name_at, "embedder name is not UTF-8"))?
            .to_string();
        let count = u64::from_le_bytes(r.array("record count")?);

        let mut store = VectorStore::new(EmbedderSpec { name, dim });
        for _ in 0..count {
            let row = r.take(dim * 4, "vector")?;
            store
                .vectors
                .extend(row.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())));
            let len = u32::from_le_bytes(r.array("chunk length")?) as usize;
            let at = r.pos;
            let chunk: Chunk = serde_json::from_slice(r.take(len, "chunk")?)
                .map_err(|e| r.corrupt_at(at, format!("bad chunk JSON: {e}")))?;
            store.chunks.push(chunk);
        }
        if r.pos != bytes.len() {
            return Err(r.corrupt_at(r.pos, "trailing bytes"));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        fs::write(path, self.to_bytes()).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = fs::read(path).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Loads a store and rejects it unless it was built with `spec`.
    pub fn load_expecting(path: &Path, spec: &EmbedderSpec) -> Result<Self, IndexError> {
        let store = Self::load(path)?;
        if store.spec.name != spec.name {
            return Err(IndexError::EmbedderMismatch {
                expected: spec.name.clone(),
                got: store.spec.name,
            });
        }
        if store.dim() != spec.dim {
            return Err(IndexError::DimMismatch {
                expected: spec.dim,
                got: store.dim(),
            });
        }
        Ok(store)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt_at(&self, offset: usize, message: impl Into<String>) -> IndexError {
        IndexError::Corrupt {
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(self.corrupt_at(self.pos, format!("truncated while reading {what}")));
        };
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N], IndexError> {
        Ok(self.take(N, what)?.try_into().unwrap())
    }
}
