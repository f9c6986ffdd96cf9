//! Victim tool-selection models behind one interface.
//!
//! Three families are implemented: sparse BM25 retrieval ([`bm25`]), dense
//! embedding retrieval ([`embedding`]), and LLM in-context selection
//! ([`llm`]). All of them are built once over a corpus snapshot and stay
//! immutable; per-candidate evaluation swaps the target tool's text in through
//! [`ToolSelector::view`], which prepares an isolated view without mutating
//! the shared state. Views of the same selector may be used concurrently.

pub mod bm25;
pub mod embedding;
pub mod http;
pub mod llm;

pub use embedding::{DenseRetriever, EmbeddingProvider, HashEmbedder};
pub use llm::{ChatClient, LlmSelector, PromptTemplate};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::ToolRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Ordered entries with scores, non-increasing; ties broken by ascending
    /// tool id.
    Ranked,
    /// An unordered chosen subset without scores.
    ChosenSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub tool_id: String,
    pub score: f64,
}

/// A selector's output for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Selection {
    Ranked {
        entries: Vec<RankedEntry>,
        /// The requested cutoff.
        k: usize,
    },
    ChosenSet {
        tools: BTreeSet<String>,
        /// Names in the model reply that matched no candidate.
        unmatched: usize,
    },
}

impl Selection {
    pub fn mode(&self) -> SelectionMode {
        match self {
            Selection::Ranked { .. } => SelectionMode::Ranked,
            Selection::ChosenSet { .. } => SelectionMode::ChosenSet,
        }
    }

    /// 1-based rank of `tool_id`, for ranked selections.
    pub fn rank_of(&self, tool_id: &str) -> Option<usize> {
        match self {
            Selection::Ranked { entries, .. } => entries
                .iter()
                .position(|e| e.tool_id == tool_id)
                .map(|i| i + 1),
            Selection::ChosenSet { .. } => None,
        }
    }

    pub fn contains(&self, tool_id: &str) -> bool {
        match self {
            Selection::Ranked { entries, .. } => entries.iter().any(|e| e.tool_id == tool_id),
            Selection::ChosenSet { tools, .. } => tools.contains(tool_id),
        }
    }
}

/// An isolated, possibly text-swapped evaluation view of a selector.
pub trait SelectorView: Send + Sync {
    /// Top-k selection for ranked selectors; the chosen set for LLM selectors
    /// (`k` caps the chosen-set size).
    fn select(&self, query: &str, k: usize) -> Result<Selection>;

    /// The full ranking over every tool. Errors with [`Error::Mode`] for
    /// chosen-set selectors.
    fn rank_all(&self, query: &str) -> Result<Vec<RankedEntry>>;

    /// The raw matching score of one tool. Errors with [`Error::Mode`] for
    /// chosen-set selectors.
    fn score(&self, query: &str, tool_id: &str) -> Result<f64>;
}

/// A victim tool-selection model built over an immutable corpus snapshot.
pub trait ToolSelector: Send + Sync {
    fn name(&self) -> &str;

    fn mode(&self) -> SelectionMode;

    /// Selector parameters for manifests and config fingerprints.
    fn describe(&self) -> serde_json::Value;

    /// Prepares an evaluation view. `swap` replaces the same-id corpus tool's
    /// text for the lifetime of the view (the corpus itself is never mutated).
    /// Errors with [`Error::UnknownToolId`] if the swapped id is not in the
    /// corpus.
    fn view<'a>(&'a self, swap: Option<&ToolRecord>) -> Result<Box<dyn SelectorView + 'a>>;
}

/// Ranks all tools and truncates to the top `k` (clamped to the corpus size).
pub fn retrieve(
    selector: &dyn ToolSelector,
    query: &str,
    swap: Option<&ToolRecord>,
    k: usize,
) -> Result<Selection> {
    selector.view(swap)?.select(query, k)
}

pub(crate) fn sort_ranking(entries: &mut [RankedEntry]) {
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.tool_id.cmp(&b.tool_id))
    });
}

pub(crate) fn swap_index(ids: &[String], swap: Option<&ToolRecord>) -> Result<Option<usize>> {
    match swap {
        None => Ok(None),
        Some(tool) => ids
            .iter()
            .position(|id| *id == tool.tool_id)
            .map(Some)
            .ok_or_else(|| Error::UnknownToolId(tool.tool_id.clone())),
    }
}

/// A vector embedding of a text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity of two equal-dimension, nonzero vectors.
pub fn cosine_score(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Degenerate(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.l2_norm(), b.l2_norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("zero vector has no direction".into()));
    }
    let dot: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x * y)
        .sum();
    Ok(dot / (na * nb))
}
