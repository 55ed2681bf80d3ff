//! Grounding text assembled from ranked hits under a character budget.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::index::{ChunkHit, VectorIndex};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingContext {
    pub text: String,
    /// Ids of the chunks included in `text`, in rank order.
    pub chunk_ids: Vec<String>,
    /// Hits were available but the first one alone exceeded the budget.
    pub insufficient_budget: bool,
}

impl GroundingContext {
    pub fn is_empty(&self) -> bool {
        self.chunk_ids.is_empty()
    }
}

pub fn source_marker(chunk_id: &str) -> String {
    format!("[SRC:{chunk_id}]")
}

/// Take whole chunks in rank order while their combined text (in characters,
/// markers not counted) fits in `budget`. Stops at the first chunk that does
/// not fit.
pub fn build_context(hits: &[ChunkHit], index: &VectorIndex, budget: usize) -> GroundingContext {
    let mut ctx = GroundingContext::default();
    let mut used = 0usize;
    for hit in hits {
        let Some(chunk) = index.chunk(&hit.chunk_id) else {
            continue;
        };
        let size = chunk.text.chars().count();
        if used + size > budget {
            break;
        }
        used += size;
        if !ctx.text.is_empty() {
            ctx.text.push('\n');
        }
        ctx.text.push_str(&source_marker(&chunk.chunk_id));
        ctx.text.push('\n');
        ctx.text.push_str(&chunk.text);
        ctx.text.push('\n');
        ctx.chunk_ids.push(chunk.chunk_id.clone());
    }
    ctx.insufficient_budget = ctx.chunk_ids.is_empty() && !hits.is_empty();
    ctx
}
