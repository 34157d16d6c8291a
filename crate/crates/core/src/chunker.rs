//! Paragraph-bounded chunking.
//!
//! Paragraphs are runs of text separated by blank lines. Consecutive
//! paragraphs are packed greedily into chunks of at most `target_chars`
//! characters (the blank-line joiner counts). A paragraph longer than the
//! target becomes a chunk on its own; paragraphs are never split.
//!
//! Offsets are in characters (Unicode scalar values), not bytes.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TARGET_CHARS: usize = 1000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChunkError {
    #[error("target_chars must be at least 1")]
    ZeroTarget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Paragraph {
    pub text: String,
    /// `[start, end)` character offsets in the source text.
    pub char_span: (usize, usize),
}

impl Paragraph {
    pub fn char_len(&self) -> usize {
        self.char_span.1 - self.char_span.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub char_span: (usize, usize),
    pub char_len: usize,
}

pub fn chunk_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal}")
}

/// Splits on runs of two or more newlines. Empty or whitespace-only
/// paragraphs are dropped.
pub fn split_paragraphs(text: &str) -> Vec<Paragraph> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    let push = |from: usize, to: usize, out: &mut Vec<Paragraph>| {
        let slice: String = chars[from..to].iter().collect();
        if !slice.trim().is_empty() {
            out.push(Paragraph {
                text: slice,
                char_span: (from, to),
            });
        }
    };
    while i < chars.len() {
        if chars[i] == '\n' {
            let run_start = i;
            while i < chars.len() && chars[i] == '\n' {
                i += 1;
            }
            if i - run_start >= 2 {
                push(start, run_start, &mut out);
                start = i;
            }
        } else {
            i += 1;
        }
    }
    push(start, chars.len(), &mut out);
    out
}

/// Greedy packing: returns, for each chunk, the range of paragraph indices it
/// covers. The size of a group is measured from the first paragraph's start
/// to the last paragraph's end, so separators count toward the target.
pub fn pack_paragraphs(paragraphs: &[Paragraph], target_chars: usize) -> Result<Vec<Range<usize>>, ChunkError> {
    if target_chars == 0 {
        return Err(ChunkError::ZeroTarget);
    }
    let mut groups = Vec::new();
    let mut i = 0;
    while i < paragraphs.len() {
        let start = i;
        let first = paragraphs[i].char_span.0;
        i += 1;
        while i < paragraphs.len() && paragraphs[i].char_span.1 - first <= target_chars {
            i += 1;
        }
        groups.push(start..i);
    }
    Ok(groups)
}

/// Chunks a normalized document.
pub fn chunk_document(doc_id: &str, text: &str, target_chars: usize) -> Result<Vec<Chunk>, ChunkError> {
    let paragraphs = split_paragraphs(text);
    let groups = pack_paragraphs(&paragraphs, target_chars)?;
    // Char offset -> byte offset, so chunk text is an exact slice of the source.
    let byte_at: Vec<usize> = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .collect();
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(ordinal, group)| {
            let start = paragraphs[group.start].char_span.0;
            let end = paragraphs[group.end - 1].char_span.1;
            Chunk {
                chunk_id: chunk_id(doc_id, ordinal),
                doc_id: doc_id.to_string(),
                ordinal,
                text: text[byte_at[start]..byte_at[end]].to_string(),
                char_span: (start, end),
                char_len: end - start,
            }
        })
        .collect())
}
