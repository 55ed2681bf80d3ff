//! Exact cosine top-k over every stored chunk.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::embed::{l2_norm, EmbeddingVector};
use super::{Chunk, DocMeta};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("index is empty")]
    Empty,
    #[error("query has dimension {got}, index has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k must be positive")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkHit {
    pub chunk_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    chunk: Chunk,
    vector: Vec<f64>,
    norm: f64,
}

/// Chunks and their vectors, kept sorted by chunk id so that the same corpus
/// produces the same index regardless of ingestion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<Entry>,
    docs: BTreeMap<String, DocMeta>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            docs: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn add_doc(&mut self, meta: DocMeta) {
        self.docs.insert(meta.doc_id.clone(), meta);
    }

    pub fn doc(&self, doc_id: &str) -> Option<&DocMeta> {
        self.docs.get(doc_id)
    }

    /// Insert or replace a chunk.
    pub fn insert(&mut self, chunk: Chunk, vector: EmbeddingVector) -> Result<(), IndexError> {
        if vector.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        let norm = vector.norm();
        let entry = Entry {
            chunk,
            vector: vector.values,
            norm,
        };
        match self
            .entries
            .binary_search_by(|e| e.chunk.chunk_id.as_str().cmp(entry.chunk.chunk_id.as_str()))
        {
            Ok(i) => self.entries[i] = entry,
            Err(i) => self.entries.insert(i, entry),
        }
        Ok(())
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.entries
            .binary_search_by(|e| e.chunk.chunk_id.as_str().cmp(chunk_id))
            .ok()
            .map(|i| &self.entries[i].chunk)
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.entries.iter().map(|e| &e.chunk)
    }

    /// The `min(k, len)` chunks most cosine-similar to `query`, best first,
    /// ties broken by ascending chunk id.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ChunkHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if self.entries.is_empty() {
            return Err(IndexError::Empty);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let qnorm = l2_norm(&query.values);
        let mut scored: Vec<(f64, &str)> = self
            .entries
            .iter()
            .map(|e| {
                let score = if qnorm == 0.0 || e.norm == 0.0 {
                    0.0
                } else {
                    let dot: f64 = query.values.iter().zip(&e.vector).map(|(a, b)| a * b).sum();
                    (dot / (qnorm * e.norm)).clamp(-1.0, 1.0)
                };
                (score, e.chunk.chunk_id.as_str())
            })
            .collect();

        let by_rank = |a: &(f64, &str), b: &(f64, &str)| -> Ordering { b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)) };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_rank);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (score, id))| ChunkHit {
                chunk_id: String::from(id),
                score,
                rank: i as u32 + 1,
            })
            .collect())
    }
}
