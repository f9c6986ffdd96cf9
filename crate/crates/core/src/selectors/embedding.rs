//! Dense-embedding retrieval: encode query and tool texts, rank by cosine.
//!
//! Two providers ship: [`HashEmbedder`], a deterministic local stand-in that
//! hashes character 3-grams into signed buckets (locality-sensitive to
//! character perturbations, cheap enough for CI), and the remote HTTP provider
//! in [`crate::selectors::http`]. Both sit behind [`EmbeddingProvider`].
//!
//! The retriever embeds every corpus document once at build time and caches
//! query/candidate embeddings by text, so repeated goal evaluations of the
//! same queries cost one encode each.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, RwLock};

use crate::corpus::{FieldKind, ToolRecord};
use crate::error::{Error, Result};
use crate::selectors::{
    cosine_score, sort_ranking, swap_index, EmbeddingVector, RankedEntry, Selection,
    SelectionMode, SelectorView, ToolSelector,
};

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
    fn describe(&self) -> serde_json::Value;
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &byte in bytes {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Lowercases and collapses whitespace runs to single spaces.
fn normalize(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministic local embedder: character 3-grams of the normalized text are
/// hashed with a fixed 64-bit hash into `dim` signed buckets, then the vector
/// is L2-normalized. Equal text yields bit-equal vectors across runs and
/// threads.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(256)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn name(&self) -> &str {
        "hash-3gram"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let normalized = normalize(text);
        if normalized.is_empty() {
            return Err(Error::EmptyInput("text to embed".into()));
        }
        let chars: Vec<char> = normalized.chars().collect();
        let mut values = vec![0.0f64; self.dim];
        let mut accumulate = |gram: &str| {
            let hash = fnv1a64(gram.as_bytes());
            let bucket = (hash % self.dim as u64) as usize;
            let sign = if (hash >> 40) & 1 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
        };
        if chars.len() < 3 {
            accumulate(&normalized);
        } else {
            for window in chars.windows(3) {
                accumulate(&window.iter().collect::<String>());
            }
        }
        let mut vector = EmbeddingVector { values };
        let norm = vector.l2_norm();
        if norm == 0.0 {
            // Signed buckets cancelled out completely; fall back to a single
            // deterministic component so the vector keeps a direction.
            let bucket = (fnv1a64(normalized.as_bytes()) % self.dim as u64) as usize;
            vector.values[bucket] = 1.0;
            return Ok(vector);
        }
        for value in &mut vector.values {
            *value /= norm;
        }
        Ok(vector)
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "hash-3gram", "dim": self.dim })
    }
}

/// Embeds through `provider`, caching by exact text.
pub struct EmbeddingCache {
    provider: Arc<dyn EmbeddingProvider>,
    cache: RwLock<HashMap<String, Arc<EmbeddingVector>>>,
}

impl EmbeddingCache {
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        EmbeddingCache {
            provider,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn get(&self, text: &str) -> Result<Arc<EmbeddingVector>> {
        if let Some(hit) = self.cache.read().expect("cache lock").get(text) {
            return Ok(hit.clone());
        }
        let vector = Arc::new(self.provider.embed(text)?);
        if vector.dim() != self.provider.dim() {
            return Err(Error::ProviderContract(format!(
                "provider '{}' returned dim {} (expected {})",
                self.provider.name(),
                vector.dim(),
                self.provider.dim()
            )));
        }
        self.cache
            .write()
            .expect("cache lock")
            .insert(text.to_string(), vector.clone());
        Ok(vector)
    }
}

/// Cosine-similarity retriever over per-document embeddings.
pub struct DenseRetriever {
    name: String,
    fields: BTreeSet<FieldKind>,
    ids: Vec<String>,
    positions: HashMap<String, usize>,
    doc_vectors: Vec<Arc<EmbeddingVector>>,
    cache: EmbeddingCache,
    provider_description: serde_json::Value,
}

impl DenseRetriever {
    pub fn build(
        tools: &[ToolRecord],
        fields: &BTreeSet<FieldKind>,
        provider: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self> {
        if tools.is_empty() {
            return Err(Error::EmptyInput("tool corpus".into()));
        }
        if fields.is_empty() {
            return Err(Error::Config("field mask must select at least one field".into()));
        }
        let name = format!("dense:{}", provider.name());
        let provider_description = provider.describe();
        let cache = EmbeddingCache::new(provider);
        let ids: Vec<String> = tools.iter().map(|t| t.tool_id.clone()).collect();
        let positions = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let doc_vectors = tools
            .iter()
            .map(|t| cache.get(&t.joined_text(fields)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DenseRetriever {
            name,
            fields: fields.clone(),
            ids,
            positions,
            doc_vectors,
            cache,
            provider_description,
        })
    }
}

pub struct DenseView<'a> {
    retriever: &'a DenseRetriever,
    swap: Option<(usize, Arc<EmbeddingVector>)>,
}

impl DenseView<'_> {
    fn doc_vector(&self, position: usize) -> &EmbeddingVector {
        match &self.swap {
            Some((swapped, vector)) if *swapped == position => vector,
            _ => &self.retriever.doc_vectors[position],
        }
    }
}

impl SelectorView for DenseView<'_> {
    fn select(&self, query: &str, k: usize) -> Result<Selection> {
        let mut entries = self.rank_all(query)?;
        entries.truncate(k.min(self.retriever.ids.len()));
        Ok(Selection::Ranked { entries, k })
    }

    fn rank_all(&self, query: &str) -> Result<Vec<RankedEntry>> {
        let query_vector = self.retriever.cache.get(query)?;
        let mut entries = Vec::with_capacity(self.retriever.ids.len());
        for (position, tool_id) in self.retriever.ids.iter().enumerate() {
            entries.push(RankedEntry {
                tool_id: tool_id.clone(),
                score: cosine_score(&query_vector, self.doc_vector(position))?,
            });
        }
        sort_ranking(&mut entries);
        Ok(entries)
    }

    fn score(&self, query: &str, tool_id: &str) -> Result<f64> {
        let position = *self
            .retriever
            .positions
            .get(tool_id)
            .ok_or_else(|| Error::UnknownToolId(tool_id.to_string()))?;
        let query_vector = self.retriever.cache.get(query)?;
        cosine_score(&query_vector, self.doc_vector(position))
    }
}

impl ToolSelector for DenseRetriever {
    fn name(&self) -> &str {
        &self.name
    }

    fn mode(&self) -> SelectionMode {
        SelectionMode::Ranked
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "dense",
            "provider": self.provider_description,
            "fields": self.fields,
            "docs": self.ids.len(),
        })
    }

    fn view<'a>(&'a self, swap: Option<&ToolRecord>) -> Result<Box<dyn SelectorView + 'a>> {
        let swap = match swap_index(&self.ids, swap)? {
            None => None,
            Some(position) => {
                let tool = swap.expect("position implies swap");
                let vector = self.cache.get(&tool.joined_text(&self.fields))?;
                Some((position, vector))
            }
        };
        Ok(Box::new(DenseView {
            retriever: self,
            swap,
        }))
    }
}
