//! Okapi BM25 over an in-memory inverted index.
//!
//! Scoring uses `idf(t) = ln((N − df + 0.5)/(df + 0.5) + 1)` and the standard
//! tf normalization `tf·(k1+1) / (tf + k1·(1 − b + b·dl/avgdl))`, summed over
//! the query's (lowercased) tokens, repeats included. Scores are never
//! negative and a query sharing no terms with a document scores exactly 0.
//!
//! The greedy attack evaluates thousands of candidate texts against the same
//! corpus, so a candidate is scored through a swapped view: the index keeps
//! the original statistics and the view overlays the one replaced document's
//! term frequencies together with document-frequency and length deltas.
//! Correctness is defined as equality with rebuilding the index from the
//! swapped corpus, which the test suite checks.

use std::collections::{BTreeSet, HashMap};

use crate::corpus::{FieldKind, ToolRecord};
use crate::error::{Error, Result};
use crate::perturb::terms;
use crate::selectors::{
    sort_ranking, swap_index, RankedEntry, Selection, SelectionMode, SelectorView, ToolSelector,
};

#[derive(Debug, Clone, Default)]
struct DocStats {
    tf: HashMap<String, usize>,
    len: usize,
}

fn doc_stats(tool: &ToolRecord, fields: &BTreeSet<FieldKind>) -> DocStats {
    let tokens = terms(&tool.joined_text(fields));
    let mut tf = HashMap::new();
    let len = tokens.len();
    for token in tokens {
        *tf.entry(token).or_insert(0) += 1;
    }
    DocStats { tf, len }
}

#[derive(Debug)]
pub struct Bm25Index {
    k1: f64,
    b: f64,
    fields: BTreeSet<FieldKind>,
    ids: Vec<String>,
    positions: HashMap<String, usize>,
    docs: Vec<DocStats>,
    df: HashMap<String, usize>,
    total_len: usize,
}

impl Bm25Index {
    pub fn build(
        tools: &[ToolRecord],
        fields: &BTreeSet<FieldKind>,
        k1: f64,
        b: f64,
    ) -> Result<Self> {
        if tools.is_empty() {
            return Err(Error::EmptyInput("tool corpus".into()));
        }
        if !(k1 > 0.0) {
            return Err(Error::Config(format!("k1 must be positive, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::Config(format!("b must be in [0, 1], got {b}")));
        }
        if fields.is_empty() {
            return Err(Error::Config("field mask must select at least one field".into()));
        }
        let ids: Vec<String> = tools.iter().map(|t| t.tool_id.clone()).collect();
        let positions = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let docs: Vec<DocStats> = tools.iter().map(|t| doc_stats(t, fields)).collect();
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in &docs {
            for term in doc.tf.keys() {
                *df.entry(term.clone()).or_insert(0) += 1;
            }
        }
        let total_len = docs.iter().map(|d| d.len).sum();
        Ok(Bm25Index {
            k1,
            b,
            fields: fields.clone(),
            ids,
            positions,
            docs,
            df,
            total_len,
        })
    }

    pub fn avgdl(&self) -> f64 {
        self.total_len as f64 / self.docs.len() as f64
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Document frequency of a (lowercased) term in the original corpus.
    pub fn term_df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// idf under the original corpus statistics.
    pub fn term_idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.term_df(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }
}

struct SwapOverlay {
    position: usize,
    doc: DocStats,
    df_delta: HashMap<String, i64>,
    len_delta: i64,
}

pub struct Bm25View<'a> {
    index: &'a Bm25Index,
    swap: Option<SwapOverlay>,
}

impl<'a> Bm25View<'a> {
    fn df(&self, term: &str) -> i64 {
        let base = self.index.df.get(term).copied().unwrap_or(0) as i64;
        let delta = self
            .swap
            .as_ref()
            .and_then(|s| s.df_delta.get(term).copied())
            .unwrap_or(0);
        base + delta
    }

    fn avgdl(&self) -> f64 {
        let total = self.index.total_len as i64
            + self.swap.as_ref().map(|s| s.len_delta).unwrap_or(0);
        total as f64 / self.index.docs.len() as f64
    }

    fn doc(&self, position: usize) -> &DocStats {
        match &self.swap {
            Some(s) if s.position == position => &s.doc,
            _ => &self.index.docs[position],
        }
    }

    fn score_position(&self, query_terms: &[String], position: usize) -> f64 {
        let n = self.index.docs.len() as f64;
        let avgdl = self.avgdl();
        let doc = self.doc(position);
        let dl = doc.len as f64;
        let (k1, b) = (self.index.k1, self.index.b);
        let mut score = 0.0;
        for term in query_terms {
            let tf = doc.tf.get(term).copied().unwrap_or(0) as f64;
            if tf == 0.0 {
                continue;
            }
            let df = self.df(term) as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            let norm = tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            score += idf * norm;
        }
        score
    }
}

impl SelectorView for Bm25View<'_> {
    fn select(&self, query: &str, k: usize) -> Result<Selection> {
        let mut entries = self.rank_all(query)?;
        entries.truncate(k.min(self.index.ids.len()));
        Ok(Selection::Ranked { entries, k })
    }

    fn rank_all(&self, query: &str) -> Result<Vec<RankedEntry>> {
        let query_terms = terms(query);
        let mut entries: Vec<RankedEntry> = (0..self.index.docs.len())
            .map(|position| RankedEntry {
                tool_id: self.index.ids[position].clone(),
                score: self.score_position(&query_terms, position),
            })
            .collect();
        sort_ranking(&mut entries);
        Ok(entries)
    }

    fn score(&self, query: &str, tool_id: &str) -> Result<f64> {
        let position = *self
            .index
            .positions
            .get(tool_id)
            .ok_or_else(|| Error::UnknownToolId(tool_id.to_string()))?;
        Ok(self.score_position(&terms(query), position))
    }
}

impl ToolSelector for Bm25Index {
    fn name(&self) -> &str {
        "bm25"
    }

    fn mode(&self) -> SelectionMode {
        SelectionMode::Ranked
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "bm25",
            "k1": self.k1,
            "b": self.b,
            "fields": self.fields,
            "docs": self.docs.len(),
        })
    }

    fn view<'a>(&'a self, swap: Option<&ToolRecord>) -> Result<Box<dyn SelectorView + 'a>> {
        let overlay = match swap_index(&self.ids, swap)? {
            None => None,
            Some(position) => {
                let tool = swap.expect("position implies swap");
                let doc = doc_stats(tool, &self.fields);
                let old = &self.docs[position];
                let mut df_delta: HashMap<String, i64> = HashMap::new();
                for term in old.tf.keys() {
                    if !doc.tf.contains_key(term) {
                        *df_delta.entry(term.clone()).or_insert(0) -= 1;
                    }
                }
                for term in doc.tf.keys() {
                    if !old.tf.contains_key(term) {
                        *df_delta.entry(term.clone()).or_insert(0) += 1;
                    }
                }
                let len_delta = doc.len as i64 - old.len as i64;
                Some(SwapOverlay {
                    position,
                    doc,
                    df_delta,
                    len_delta,
                })
            }
        };
        Ok(Box::new(Bm25View {
            index: self,
            swap: overlay,
        }))
    }
}
