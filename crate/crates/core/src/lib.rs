//! Black-box text perturbation harness for tool-selection models.
//!
//! The crate attacks the *selection* step of a tool-using agent stack: given a
//! corpus of tools with textual metadata and a victim selection model (sparse
//! BM25 retrieval, dense-embedding retrieval, or an LLM picking tools from an
//! in-context slate), it greedily perturbs the target tool's text — first at
//! the word level, then at the character level — so that the target is ranked
//! higher or chosen more often. An evaluation layer measures the effect with
//! Hit@k and usage probability, runs query-count and budget sweeps with
//! held-out splits, and builds cross-model transfer matrices.
//!
//! Modules:
//! - [`corpus`] — tool/query ingestion, query partitioning, hard-query filtering
//! - [`selectors`] — the victim models behind one selection interface
//! - [`perturb`] — constrained word- and character-level candidate generation
//! - [`attack`] — the two-phase greedy search under a budget ledger
//! - [`eval`] — metrics, experiment protocols, sweeps, transfer matrices

pub mod attack;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod perturb;
pub mod selectors;

pub use error::{Error, Result};
