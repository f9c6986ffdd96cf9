//! Lossless word segmentation shared by the perturbation generators and the
//! BM25 analyzer.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    Word,
    Separator,
}

/// One run of either alphanumeric characters (a word) or everything else.
/// Concatenating the segment texts in order reproduces the input byte-exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub text: String,
}

/// Splits `text` into a lossless alternation of word and separator segments.
/// Words are maximal runs of alphanumeric characters.
pub fn segment_text(text: &str) -> Vec<Segment> {
    let mut segments: Vec<Segment> = Vec::new();
    for ch in text.chars() {
        let kind = if ch.is_alphanumeric() {
            SegmentKind::Word
        } else {
            SegmentKind::Separator
        };
        match segments.last_mut() {
            Some(last) if last.kind == kind => last.text.push(ch),
            _ => segments.push(Segment {
                kind,
                text: ch.to_string(),
            }),
        }
    }
    segments
}

/// Word tokens of `text`, each with a byte span. Spans tile the input: the
/// first span starts at byte 0, each subsequent span starts where the previous
/// word's trailing separators end, and the last span runs to the end of the
/// input, so concatenating `&text[span]` over all tokens reconstructs `text`
/// whenever at least one word is present.
pub fn tokenize_words(text: &str) -> Vec<(String, Range<usize>)> {
    let mut words: Vec<(String, usize)> = Vec::new(); // (token, start byte)
    let mut current: Option<(String, usize)> = None;
    for (offset, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            match current.as_mut() {
                Some((token, _)) => token.push(ch),
                None => current = Some((ch.to_string(), offset)),
            }
        } else if let Some(done) = current.take() {
            words.push(done);
        }
    }
    if let Some(done) = current.take() {
        words.push(done);
    }

    let n = words.len();
    words
        .iter()
        .enumerate()
        .map(|(i, (token, start))| {
            let span_start = if i == 0 { 0 } else { *start };
            let span_end = if i + 1 < n { words[i + 1].1 } else { text.len() };
            (token.clone(), span_start..span_end)
        })
        .collect()
}

/// Just the word tokens, without spans.
pub fn word_tokens(text: &str) -> Vec<String> {
    tokenize_words(text).into_iter().map(|(t, _)| t).collect()
}

/// Lowercased word tokens — the term stream retrievers index and match on.
pub fn terms(text: &str) -> Vec<String> {
    word_tokens(text)
        .into_iter()
        .map(|t| t.to_lowercase())
        .collect()
}

pub const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "can", "do", "does", "for", "from", "how",
    "i", "in", "is", "it", "me", "my", "of", "on", "or", "that", "the", "this", "to", "was",
    "we", "what", "when", "where", "which", "will", "with", "you",
];

/// Distinct lowercased tokens minus stopwords.
pub fn content_words(text: &str) -> std::collections::BTreeSet<String> {
    terms(text)
        .into_iter()
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}
