//! Sliding-window chunking with a whitespace-preferring cut.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A cut that would split a word is moved back to just after the nearest
/// whitespace within this many characters.
pub const SPLIT_WINDOW: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChunkError {
    #[error("chunk_size must be positive")]
    ZeroChunkSize,
    #[error("overlap {overlap} must be smaller than chunk_size {chunk_size}")]
    OverlapTooLarge { chunk_size: usize, overlap: usize },
}

/// One window of a body. `start` and `end` are character (not byte) offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

pub fn check_params(chunk_size: usize, overlap: usize) -> Result<(), ChunkError> {
    if chunk_size == 0 {
        return Err(ChunkError::ZeroChunkSize);
    }
    if overlap >= chunk_size {
        return Err(ChunkError::OverlapTooLarge { chunk_size, overlap });
    }
    Ok(())
}

/// Split `body` into windows of at most `chunk_size` characters where each
/// window starts `overlap` characters before the previous one ended.
///
/// An empty body yields no chunks.
pub fn chunk_text(body: &str, chunk_size: usize, overlap: usize) -> Result<Vec<ChunkSpan>, ChunkError> {
    check_params(chunk_size, overlap)?;
    let chars: Vec<char> = body.chars().collect();
    let n = chars.len();
    let mut byte_at: Vec<usize> = body.char_indices().map(|(b, _)| b).collect();
    byte_at.push(body.len());

    let mut out = Vec::new();
    if n == 0 {
        return Ok(out);
    }
    let mut start = 0usize;
    loop {
        if n - start <= chunk_size {
            out.push(span(body, &byte_at, start, n));
            break;
        }
        let mut end = start + chunk_size;
        let mid_word = !chars[end - 1].is_whitespace() && !chars[end].is_whitespace();
        if mid_word {
            // Keep end > start + overlap so the next window still advances.
            let floor = end.saturating_sub(SPLIT_WINDOW - 1).max(start + overlap + 1);
            if let Some(p) = (floor..end).rev().find(|&p| chars[p - 1].is_whitespace()) {
                end = p;
            }
        }
        out.push(span(body, &byte_at, start, end));
        start = end - overlap;
    }
    Ok(out)
}

fn span(body: &str, byte_at: &[usize], start: usize, end: usize) -> ChunkSpan {
    ChunkSpan {
        start,
        end,
        text: String::from(&body[byte_at[start]..byte_at[end]]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn spans(chunks: &[ChunkSpan]) -> Vec<(usize, usize)> {
        chunks.iter().map(|c| (c.start, c.end)).collect()
    }

    #[test]
    fn short_body_is_one_chunk() {
        let c = chunk_text("chain of custody", 800, 120).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].text, "chain of custody");
    }

    #[test]
    fn arithmetic_window_without_whitespace() {
        let body: String = "a".repeat(1000);
        let c = chunk_text(&body, 400, 50).unwrap();
        assert_eq!(spans(&c), vec![(0, 400), (350, 750), (700, 1000)]);
    }

    #[test]
    fn empty_body_has_no_chunks() {
        assert!(chunk_text("", 10, 2).unwrap().is_empty());
    }

    #[test]
    fn bad_parameters() {
        assert_eq!(chunk_text("x", 0, 0), Err(ChunkError::ZeroChunkSize));
        assert_eq!(
            chunk_text("x", 10, 10),
            Err(ChunkError::OverlapTooLarge { chunk_size: 10, overlap: 10 })
        );
    }

    #[test]
    fn cut_moves_back_to_whitespace() {
        // 'word ' repeated: a cut at 42 lands inside a word.
        let body = "word ".repeat(40);
        let c = chunk_text(&body, 42, 5).unwrap();
        assert_eq!(c[0].end, 40);
        assert!(c[0].text.ends_with(' '));
        assert_eq!(c[1].start, 35);
    }

    #[test]
    fn multibyte_offsets_are_characters() {
        let body = "é".repeat(30);
        let c = chunk_text(&body, 10, 3).unwrap();
        assert_eq!(c[0].text.chars().count(), 10);
        assert_eq!(c[1].start, 7);
    }

    proptest! {
        #[test]
        fn chunks_cover_and_reconstruct(
            words in proptest::collection::vec("[a-zé]{1,12}", 0..200),
            chunk_size in 1usize..300,
            overlap_frac in 0.0f64..1.0,
        ) {
            let body = words.join(" ");
            let overlap = ((chunk_size as f64) * overlap_frac) as usize % chunk_size;
            let chunks = chunk_text(&body, chunk_size, overlap).unwrap();
            if body.is_empty() {
                prop_assert!(chunks.is_empty());
                return Ok(());
            }
            let mut rebuilt = chunks[0].text.clone();
            prop_assert_eq!(chunks[0].start, 0);
            for pair in chunks.windows(2) {
                prop_assert_eq!(pair[1].start, pair[0].end - overlap);
                rebuilt.extend(pair[1].text.chars().skip(overlap));
            }
            prop_assert_eq!(chunks.last().unwrap().end, body.chars().count());
            for c in &chunks {
                let len = c.text.chars().count();
                prop_assert!(len >= 1 && len <= chunk_size + overlap, "{}", format!("{len}"));
            }
            prop_assert_eq!(rebuilt, body);
        }
    }
}
