//! Curriculum chunking, embedding, exact retrieval and grounding assembly.

pub mod chunk;
pub mod context;
pub mod embed;
pub mod index;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{chunk_text, ChunkError, ChunkSpan};
pub use context::{build_context, source_marker, GroundingContext};
pub use embed::{cosine, EmbedError, Embedder, EmbeddingVector, NgramEmbedder};
pub use index::{ChunkHit, IndexError, VectorIndex};

use crate::ids::derive_id;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumDoc {
    pub doc_id: String,
    pub title: String,
    pub source_path: String,
    pub body: String,
    pub tags: Vec<String>,
}

impl CurriculumDoc {
    /// The id is derived from the source path so re-ingesting a corpus keeps
    /// every doc and chunk id stable.
    pub fn new(source_path: impl Into<String>, title: impl Into<String>, body: impl Into<String>, tags: Vec<String>) -> Self {
        let source_path = source_path.into();
        Self {
            doc_id: derive_id(&["doc", &source_path]),
            title: title.into(),
            source_path,
            body: body.into(),
            tags,
        }
    }

    pub fn meta(&self) -> DocMeta {
        DocMeta {
            doc_id: self.doc_id.clone(),
            title: self.title.clone(),
            source_path: self.source_path.clone(),
            tags: self.tags.clone(),
        }
    }
}

/// A document without its body, kept in the index for citation display.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocMeta {
    pub doc_id: String,
    pub title: String,
    pub source_path: String,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: u32,
    pub text: String,
    /// Character offsets `[start, end)` into the parent body.
    pub char_span: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RagConfig {
    pub chunk_size: usize,
    pub overlap: usize,
    pub k: usize,
    pub budget: usize,
}

impl Default for RagConfig {
    fn default() -> Self {
        Self {
            chunk_size: 800,
            overlap: 120,
            k: 4,
            budget: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("document {0} has an empty body")]
    EmptyBody(String),
    #[error("duplicate document id {0}")]
    DuplicateDoc(String),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

pub fn chunk_document(doc: &CurriculumDoc, chunk_size: usize, overlap: usize) -> Result<Vec<Chunk>, IngestError> {
    if doc.body.trim().is_empty() {
        return Err(IngestError::EmptyBody(doc.source_path.clone()));
    }
    let spans = chunk_text(&doc.body, chunk_size, overlap)?;
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(ordinal, span)| Chunk {
            chunk_id: derive_id(&["chunk", &doc.doc_id, &format!("{ordinal}"), &span.text]),
            doc_id: doc.doc_id.clone(),
            ordinal: ordinal as u32,
            text: span.text,
            char_span: (span.start, span.end),
        })
        .collect())
}

/// Chunk and embed every document into a fresh index.
pub fn build_index(docs: &[CurriculumDoc], embedder: &dyn Embedder, cfg: &RagConfig) -> Result<VectorIndex, IngestError> {
    chunk::check_params(cfg.chunk_size, cfg.overlap)?;
    let mut index = VectorIndex::new(embedder.dim());
    for doc in docs {
        if index.doc(&doc.doc_id).is_some() {
            return Err(IngestError::DuplicateDoc(doc.doc_id.clone()));
        }
        for chunk in chunk_document(doc, cfg.chunk_size, cfg.overlap)? {
            let v = embedder.embed(&chunk.text)?;
            index.insert(chunk, v)?;
        }
        index.add_doc(doc.meta());
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn corpus() -> Vec<CurriculumDoc> {
        vec![
            CurriculumDoc::new(
                "malware.md",
                "Malware",
                "Malware infection spreads through email attachments, drive-by downloads and removable media.",
                vec!["malware".into()],
            ),
            CurriculumDoc::new(
                "custody.md",
                "Chain of custody",
                "Every transfer of seized digital evidence is logged to preserve the chain of custody.",
                vec![],
            ),
            CurriculumDoc::new(
                "hygiene.md",
                "Hygiene",
                "Patch operating systems promptly and run with least privilege to reduce infection risk.",
                vec![],
            ),
        ]
    }

    fn index_with(text_sizes: &[usize]) -> (VectorIndex, Vec<ChunkHit>) {
        let e = NgramEmbedder::new(16);
        let mut idx = VectorIndex::new(16);
        let mut hits = Vec::new();
        for (i, n) in text_sizes.iter().enumerate() {
            let text: String = "x".repeat(*n);
            let id = format!("c{i}");
            let chunk = Chunk {
                chunk_id: id.clone(),
                doc_id: "d".into(),
                ordinal: i as u32,
                text,
                char_span: (0, *n),
            };
            idx.insert(chunk, e.embed("x").unwrap()).unwrap();
            hits.push(ChunkHit { chunk_id: id, score: 1.0, rank: i as u32 + 1 });
        }
        (idx, hits)
    }

    #[test]
    fn exact_match_ranks_first() {
        let e = NgramEmbedder::default();
        let idx = build_index(&corpus(), &e, &RagConfig::default()).unwrap();
        let target = idx.chunks().find(|c| c.text.contains("chain of custody")).unwrap().clone();
        let hits = idx.search(&e.embed(&target.text).unwrap(), 2).unwrap();
        assert_eq!(hits[0].chunk_id, target.chunk_id);
        assert!((hits[0].score - 1.0).abs() < 1e-9);
        assert_eq!(hits[0].rank, 1);
        assert_eq!(hits[1].rank, 2);
    }

    #[test]
    fn k_saturates_at_index_size() {
        let e = NgramEmbedder::default();
        let idx = build_index(&corpus(), &e, &RagConfig::default()).unwrap();
        let hits = idx.search(&e.embed("infection").unwrap(), 50).unwrap();
        assert_eq!(hits.len(), 3);
        assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn search_errors() {
        let e = NgramEmbedder::new(8);
        let empty = VectorIndex::new(8);
        assert_eq!(empty.search(&e.embed("a").unwrap(), 1), Err(IndexError::Empty));
        let idx = build_index(&corpus(), &NgramEmbedder::default(), &RagConfig::default()).unwrap();
        assert_eq!(
            idx.search(&e.embed("a").unwrap(), 1),
            Err(IndexError::DimensionMismatch { expected: 256, got: 8 })
        );
    }

    #[test]
    fn ingestion_order_does_not_matter() {
        let e = NgramEmbedder::default();
        let mut docs = corpus();
        let a = build_index(&docs, &e, &RagConfig::default()).unwrap();
        docs.reverse();
        let b = build_index(&docs, &e, &RagConfig::default()).unwrap();
        assert_eq!(a, b);
        let q = e.embed("evidence transfer").unwrap();
        assert_eq!(a.search(&q, 3).unwrap(), b.search(&q, 3).unwrap());
    }

    #[test]
    fn empty_body_rejected() {
        let doc = CurriculumDoc::new("e.md", "E", "   ", vec![]);
        assert_eq!(
            build_index(&[doc], &NgramEmbedder::default(), &RagConfig::default()),
            Err(IngestError::EmptyBody("e.md".into()))
        );
    }

    #[test]
    fn context_budget_cases() {
        let (idx, hits) = index_with(&[300, 300, 300, 300]);
        let ctx = build_context(&hits, &idx, 1000);
        assert_eq!(ctx.chunk_ids, vec!["c0", "c1", "c2"]);
        assert!(!ctx.insufficient_budget);

        let all = build_context(&hits, &idx, 10_000);
        assert_eq!(all.chunk_ids.len(), 4);

        let none = build_context(&hits, &idx, 299);
        assert!(none.text.is_empty() && none.chunk_ids.is_empty());
        assert!(none.insufficient_budget);
    }

    #[test]
    fn context_cites_verbatim_text() {
        let e = NgramEmbedder::default();
        let idx = build_index(&corpus(), &e, &RagConfig::default()).unwrap();
        let hits = idx.search(&e.embed("malware infection").unwrap(), 3).unwrap();
        let ctx = build_context(&hits, &idx, 4000);
        for id in &ctx.chunk_ids {
            let chunk = idx.chunk(id).unwrap();
            assert!(ctx.text.contains(&chunk.text));
            assert!(ctx.text.contains(&source_marker(id)));
        }
        assert_eq!(ctx.chunk_ids[0], hits[0].chunk_id);
    }
}
