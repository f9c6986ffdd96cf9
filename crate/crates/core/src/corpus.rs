//! Tool and query corpora: ingestion, query partitioning, hard-query filtering.
//!
//! Corpus files are UTF-8 JSON arrays, one object per record. See
//! `docs/FORMATS.md` in the repository root for the documented schemas.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selectors::{SelectionMode, ToolSelector};

/// A tool's textual metadata plus a stable identifier.
///
/// `tool_id` never changes under perturbation and `parameters` is an opaque
/// blob that must stay byte-identical before and after any attack: those two
/// fields are what the reasoning side of an agent stack uses to invoke the
/// tool, so touching them would break the tool rather than merely re-rank it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRecord {
    pub tool_id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub category: String,
    pub description: String,
    /// Opaque schema blob. Never perturbed.
    #[serde(default)]
    pub parameters: String,
    #[serde(default)]
    pub demonstrations: Vec<String>,
    #[serde(default)]
    pub extras: BTreeMap<String, String>,
}

/// The textual fields of a [`ToolRecord`] that selectors may index and that
/// attacks may target. `parameters` is deliberately not representable here.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Name,
    Category,
    Description,
    Demonstrations,
}

impl FieldKind {
    pub fn all() -> BTreeSet<FieldKind> {
        [
            FieldKind::Name,
            FieldKind::Category,
            FieldKind::Description,
            FieldKind::Demonstrations,
        ]
        .into_iter()
        .collect()
    }
}

impl ToolRecord {
    /// Concatenates the selected fields with single-space joins, in the fixed
    /// order name, category, description, demonstrations. This is the document
    /// text that retrievers index.
    pub fn joined_text(&self, fields: &BTreeSet<FieldKind>) -> String {
        let mut parts: Vec<&str> = Vec::new();
        if fields.contains(&FieldKind::Name) && !self.name.is_empty() {
            parts.push(&self.name);
        }
        if fields.contains(&FieldKind::Category) && !self.category.is_empty() {
            parts.push(&self.category);
        }
        if fields.contains(&FieldKind::Description) && !self.description.is_empty() {
            parts.push(&self.description);
        }
        if fields.contains(&FieldKind::Demonstrations) {
            for demo in &self.demonstrations {
                if !demo.is_empty() {
                    parts.push(demo);
                }
            }
        }
        parts.join(" ")
    }
}

/// A natural-language query with optional ground-truth tool labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    #[serde(default)]
    pub relevant_tool_ids: BTreeSet<String>,
}

/// A deterministic split of the query set into the part visible to the
/// attacker and the held-out remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPartition {
    pub attack_accessible: Vec<String>,
    pub held_out: Vec<String>,
    pub access_fraction: f64,
    pub seed: u64,
}

/// How accessible queries are classified as "hard" (too weakly matched to the
/// target to be worth optimizing on). Hard queries are identified once, on the
/// original pre-attack text, and stay frozen for the whole attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HardQueryPolicy {
    /// A query is hard when (top-1 score − target score) exceeds `theta`.
    /// Units are selector-specific (BM25 scores vs cosine similarities).
    ScoreGapThreshold { theta: f64 },
    /// The `fraction` of accessible queries with the lowest match score
    /// against the target are hard. Exactly `floor(fraction × n)` queries.
    BottomFraction { fraction: f64 },
}

impl Default for HardQueryPolicy {
    fn default() -> Self {
        HardQueryPolicy::BottomFraction { fraction: 0.25 }
    }
}

fn validate_tools(tools: &[ToolRecord], path: &str) -> Result<()> {
    let mut seen: HashSet<&str> = HashSet::new();
    for (index, tool) in tools.iter().enumerate() {
        if tool.tool_id.is_empty() {
            return Err(Error::Parse {
                path: path.to_string(),
                index,
                message: "tool_id must be nonempty".into(),
            });
        }
        if tool.description.is_empty() {
            return Err(Error::Parse {
                path: path.to_string(),
                index,
                message: format!("tool '{}' has an empty description", tool.tool_id),
            });
        }
        if !seen.insert(&tool.tool_id) {
            return Err(Error::Duplicate(tool.tool_id.clone()));
        }
    }
    Ok(())
}

fn parse_record_array<T: serde::de::DeserializeOwned>(raw: &str, path: &str) -> Result<Vec<T>> {
    let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
        path: path.to_string(),
        index: 0,
        message: e.to_string(),
    })?;
    let items = value.as_array().ok_or_else(|| Error::Parse {
        path: path.to_string(),
        index: 0,
        message: "expected a JSON array of records".into(),
    })?;
    items
        .iter()
        .enumerate()
        .map(|(index, item)| {
            serde_json::from_value(item.clone()).map_err(|e| Error::Parse {
                path: path.to_string(),
                index,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Loads a tool corpus from a JSON record array, preserving file order.
/// Rejects records with empty `tool_id`/`description` and duplicate ids.
pub fn load_tool_corpus(path: impl AsRef<Path>) -> Result<Vec<ToolRecord>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path)?;
    let shown = path.display().to_string();
    let tools: Vec<ToolRecord> = parse_record_array(&raw, &shown)?;
    validate_tools(&tools, &shown)?;
    Ok(tools)
}

/// Parses a tool corpus from an in-memory JSON string. Same validation as
/// [`load_tool_corpus`].
pub fn parse_tool_corpus(raw: &str) -> Result<Vec<ToolRecord>> {
    let tools: Vec<ToolRecord> = parse_record_array(raw, "<memory>")?;
    validate_tools(&tools, "<memory>")?;
    Ok(tools)
}

/// Loads a query set from a JSON record array. Query ids must be unique.
pub fn load_query_set(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path)?;
    let shown = path.display().to_string();
    let queries: Vec<QueryRecord> = parse_record_array(&raw, &shown)?;
    let mut seen: HashSet<&str> = HashSet::new();
    for (index, query) in queries.iter().enumerate() {
        if query.query_id.is_empty() {
            return Err(Error::Parse {
                path: shown.clone(),
                index,
                message: "query_id must be nonempty".into(),
            });
        }
        if !seen.insert(&query.query_id) {
            return Err(Error::Duplicate(query.query_id.clone()));
        }
    }
    Ok(queries)
}

/// Checks that every label in `queries` refers to a tool present in `tools`.
pub fn validate_query_labels(queries: &[QueryRecord], tools: &[ToolRecord]) -> Result<()> {
    let ids: HashSet<&str> = tools.iter().map(|t| t.tool_id.as_str()).collect();
    for query in queries {
        for label in &query.relevant_tool_ids {
            if !ids.contains(label.as_str()) {
                return Err(Error::UnknownToolId(format!(
                    "query '{}' labels unknown tool '{}'",
                    query.query_id, label
                )));
            }
        }
    }
    Ok(())
}

/// Splits queries into attacker-accessible and held-out sets.
///
/// The accessible set has exactly `round(access_fraction × n)` members, drawn
/// uniformly without replacement. Identical `(queries, access_fraction, seed)`
/// yield identical partitions.
pub fn partition_queries(
    queries: &[QueryRecord],
    access_fraction: f64,
    seed: u64,
) -> Result<QueryPartition> {
    if queries.is_empty() {
        return Err(Error::EmptyInput("query list".into()));
    }
    if !(access_fraction > 0.0 && access_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "access_fraction must be in (0, 1], got {access_fraction}"
        )));
    }
    let n_accessible = (access_fraction * queries.len() as f64).round() as usize;
    let mut ids: Vec<String> = queries.iter().map(|q| q.query_id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let held_out = ids.split_off(n_accessible.min(ids.len()));
    Ok(QueryPartition {
        attack_accessible: ids,
        held_out,
        access_fraction,
        seed,
    })
}

/// Identifies hard queries among `queries` by scoring each against the
/// target's ORIGINAL text. Only score-producing (retriever) selectors are
/// supported. The returned set is meant to be frozen for the whole attack.
pub fn identify_hard_queries(
    target: &ToolRecord,
    queries: &[QueryRecord],
    selector: &dyn ToolSelector,
    policy: HardQueryPolicy,
) -> Result<BTreeSet<String>> {
    if selector.mode() != SelectionMode::Ranked {
        return Err(Error::UnsupportedSelector(format!(
            "hard-query filtering needs a score-producing retriever, got '{}'",
            selector.name()
        )));
    }
    let view = selector.view(None)?;
    match policy {
        HardQueryPolicy::BottomFraction { fraction } => {
            if !(0.0..1.0).contains(&fraction) {
                return Err(Error::Config(format!(
                    "bottom_fraction must be in [0, 1), got {fraction}"
                )));
            }
            let mut scored: Vec<(f64, &str)> = queries
                .iter()
                .map(|q| Ok((view.score(&q.text, &target.tool_id)?, q.query_id.as_str())))
                .collect::<Result<_>>()?;
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
            let take = (fraction * queries.len() as f64).floor() as usize;
            Ok(scored
                .into_iter()
                .take(take)
                .map(|(_, id)| id.to_string())
                .collect())
        }
        HardQueryPolicy::ScoreGapThreshold { theta } => {
            let mut hard = BTreeSet::new();
            for query in queries {
                let ranking = view.rank_all(&query.text)?;
                let top = ranking.first().map(|e| e.score).unwrap_or(0.0);
                let own = view.score(&query.text, &target.tool_id)?;
                if top - own > theta {
                    hard.insert(query.query_id.clone());
                }
            }
            Ok(hard)
        }
    }
}
