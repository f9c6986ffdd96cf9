//! Run configuration: a TOML file plus flag overrides.
//!
//! Precedence is flags over config file over built-in defaults. Credentials
//! are referenced by environment-variable name only and never appear in any
//! serialized output. The full key schema is listed in `--help` and in the
//! repository README.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use toolsnare_core::attack::{AttackBudget, AttackOptions, GoalFunction};
use toolsnare_core::corpus::{FieldKind, HardQueryPolicy, QueryRecord, ToolRecord};
use toolsnare_core::error::Error;
use toolsnare_core::eval::protocol::{ProtocolConfig, ProtocolMode};
use toolsnare_core::perturb::{
    mine_insertion_words, AttackSpace, CharOpKind, CharTable, Lexicon, WordOpKind,
};
use toolsnare_core::selectors::bm25::Bm25Index;
use toolsnare_core::selectors::embedding::{DenseRetriever, HashEmbedder};
use toolsnare_core::selectors::http::{HttpChatClient, HttpConfig, HttpEmbedder};
use toolsnare_core::selectors::llm::{LlmSelector, PromptTemplate, WordOverlapClient};
use toolsnare_core::selectors::ToolSelector;

fn default_seed() -> u64 {
    42
}
fn default_parallelism() -> usize {
    1
}
fn default_fraction() -> f64 {
    0.10
}
fn default_hard_fraction() -> f64 {
    0.25
}
fn default_k1() -> f64 {
    1.2
}
fn default_b() -> f64 {
    0.75
}
fn default_top_k() -> usize {
    5
}
fn default_dim() -> usize {
    256
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    3
}
fn default_max_tools() -> usize {
    3
}
fn default_max_candidates() -> usize {
    64
}
fn default_overlap_threshold() -> usize {
    2
}
fn default_per_position() -> usize {
    50
}
fn default_fields() -> Vec<String> {
    vec![
        "name".into(),
        "category".into(),
        "description".into(),
        "demonstrations".into(),
    ]
}
fn default_perturbable() -> Vec<String> {
    vec!["description".into()]
}
fn default_word_ops() -> Vec<String> {
    vec!["synonym_replace".into(), "word_delete".into(), "word_insert".into()]
}
fn default_char_ops() -> Vec<String> {
    vec![
        "char_insert".into(),
        "char_delete".into(),
        "char_swap_adjacent".into(),
        "char_substitute_keyboard".into(),
        "char_substitute_homoglyph".into(),
    ]
}
fn default_max_edits() -> usize {
    64
}
fn default_min_length_ratio() -> f64 {
    0.5
}
fn default_max_insertion_words() -> usize {
    40
}
fn default_ks() -> Vec<usize> {
    vec![1, 3, 5]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub tools: PathBuf,
    pub queries: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionConfig {
    #[serde(default = "default_fraction")]
    pub access_fraction: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            access_fraction: default_fraction(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardQueryConfig {
    /// "bottom_fraction", "score_gap_threshold", or "none".
    pub mode: String,
    #[serde(default = "default_hard_fraction")]
    pub fraction: f64,
    #[serde(default)]
    pub theta: f64,
}

impl Default for HardQueryConfig {
    fn default() -> Self {
        HardQueryConfig {
            mode: "bottom_fraction".into(),
            fraction: default_hard_fraction(),
            theta: 0.0,
        }
    }
}

impl HardQueryConfig {
    pub fn to_policy(&self) -> anyhow::Result<Option<HardQueryPolicy>> {
        match self.mode.as_str() {
            "bottom_fraction" => Ok(Some(HardQueryPolicy::BottomFraction {
                fraction: self.fraction,
            })),
            "score_gap_threshold" => Ok(Some(HardQueryPolicy::ScoreGapThreshold {
                theta: self.theta,
            })),
            "none" => Ok(None),
            other => Err(Error::Config(format!("unknown hard-query mode '{other}'")).into()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectorConfig {
    /// bm25 | local_embedding | remote_embedding | llm_http | llm_word_overlap
    pub kind: String,
    #[serde(default = "default_fields")]
    pub fields: Vec<String>,
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_tools")]
    pub max_tools: usize,
    #[serde(default = "default_max_candidates")]
    pub max_candidates: usize,
    #[serde(default = "default_overlap_threshold")]
    pub overlap_threshold: usize,
    /// Optional override of the LLM instruction prompt.
    #[serde(default)]
    pub instruction: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub target_tool_id: String,
    /// indiscriminate | conditional | llm
    pub mode: String,
    #[serde(default = "default_per_position")]
    pub per_position_budget: usize,
    /// Defaults to 5000 for retriever modes and 2000 for llm mode.
    #[serde(default)]
    pub global_eval_budget: Option<u64>,
    #[serde(default = "default_perturbable")]
    pub perturbable_fields: Vec<String>,
    #[serde(default = "default_word_ops")]
    pub word_ops: Vec<String>,
    #[serde(default = "default_char_ops")]
    pub char_ops: Vec<String>,
    #[serde(default = "default_max_edits")]
    pub max_total_edits: usize,
    #[serde(default = "default_min_length_ratio")]
    pub min_length_ratio: f64,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub keyboard_table: Option<PathBuf>,
    #[serde(default)]
    pub homoglyph_table: Option<PathBuf>,
    #[serde(default)]
    pub insertion_words: Vec<String>,
    /// Mine `word_insert` candidates from the accessible queries' vocabulary.
    #[serde(default)]
    pub insertions_from_queries: bool,
    #[serde(default = "default_max_insertion_words")]
    pub max_insertion_words: usize,
    #[serde(default)]
    pub saliency_ordering: bool,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TransferConfig {
    #[serde(default)]
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub hard_queries: HardQueryConfig,
    pub selector: SelectorConfig,
    pub attack: AttackConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&raw)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn protocol_mode(&self) -> anyhow::Result<ProtocolMode> {
        match self.attack.mode.as_str() {
            "indiscriminate" => Ok(ProtocolMode::Indiscriminate),
            "conditional" => Ok(ProtocolMode::Conditional),
            "llm" => Ok(ProtocolMode::Llm),
            other => Err(Error::Config(format!("unknown attack mode '{other}'")).into()),
        }
    }

    pub fn goal(&self) -> anyhow::Result<GoalFunction> {
        Ok(match self.protocol_mode()? {
            ProtocolMode::Llm => GoalFunction::LlmIndicator {
                max_tools: self.selector.max_tools,
            },
            _ => GoalFunction::RetrieverRank,
        })
    }

    pub fn budget(&self) -> anyhow::Result<AttackBudget> {
        let global = self.attack.global_eval_budget.unwrap_or(
            if self.attack.mode == "llm" { 2000 } else { 5000 },
        );
        Ok(AttackBudget::new(self.attack.per_position_budget, global))
    }

    pub fn protocol_config(&self) -> anyhow::Result<ProtocolConfig> {
        let mode = self.protocol_mode()?;
        let hard_query_policy = if mode == ProtocolMode::Llm {
            None
        } else {
            self.hard_queries.to_policy()?
        };
        Ok(ProtocolConfig {
            mode,
            target_tool_id: self.attack.target_tool_id.clone(),
            access_fraction: self.partition.access_fraction,
            seed: self.seed,
            hard_query_policy,
            goal: self.goal()?,
            budget: self.budget()?,
            ks: self.attack.ks.clone(),
            options: AttackOptions {
                saliency_ordering: self.attack.saliency_ordering,
                parallelism: self.parallelism,
            },
        })
    }
}

fn parse_fields(names: &[String]) -> anyhow::Result<BTreeSet<FieldKind>> {
    let mut fields = BTreeSet::new();
    for name in names {
        let field = match name.as_str() {
            "name" => FieldKind::Name,
            "category" => FieldKind::Category,
            "description" => FieldKind::Description,
            "demonstrations" => FieldKind::Demonstrations,
            other => return Err(Error::Config(format!("unknown field '{other}'")).into()),
        };
        fields.insert(field);
    }
    Ok(fields)
}

fn parse_word_ops(names: &[String]) -> anyhow::Result<BTreeSet<WordOpKind>> {
    let mut ops = BTreeSet::new();
    for name in names {
        ops.insert(match name.as_str() {
            "synonym_replace" => WordOpKind::SynonymReplace,
            "word_delete" => WordOpKind::WordDelete,
            "word_insert" => WordOpKind::WordInsert,
            other => return Err(Error::Config(format!("unknown word op '{other}'")).into()),
        });
    }
    Ok(ops)
}

fn parse_char_ops(names: &[String]) -> anyhow::Result<BTreeSet<CharOpKind>> {
    let mut ops = BTreeSet::new();
    for name in names {
        ops.insert(match name.as_str() {
            "char_insert" => CharOpKind::CharInsert,
            "char_delete" => CharOpKind::CharDelete,
            "char_swap_adjacent" => CharOpKind::CharSwapAdjacent,
            "char_substitute_keyboard" => CharOpKind::CharSubstituteKeyboard,
            "char_substitute_homoglyph" => CharOpKind::CharSubstituteHomoglyph,
            other => return Err(Error::Config(format!("unknown char op '{other}'")).into()),
        });
    }
    Ok(ops)
}

/// Builds the victim selector named by the config over the given corpus.
pub fn build_selector(
    config: &SelectorConfig,
    tools: &[ToolRecord],
) -> anyhow::Result<Box<dyn ToolSelector>> {
    let fields = parse_fields(&config.fields)?;
    let http = || {
        let mut http = HttpConfig::new(config.endpoint.clone(), config.model.clone());
        if !config.api_key_env.is_empty() {
            http.api_key_env = Some(config.api_key_env.clone());
        }
        http.timeout = Duration::from_millis(config.timeout_ms);
        http.max_retries = config.max_retries;
        http
    };
    let template = || {
        let mut template = PromptTemplate::default();
        if let Some(instruction) = &config.instruction {
            template.instruction = instruction.clone();
        }
        template
    };
    let selector: Box<dyn ToolSelector> = match config.kind.as_str() {
        "bm25" => Box::new(Bm25Index::build(tools, &fields, config.k1, config.b)?),
        "local_embedding" => Box::new(DenseRetriever::build(
            tools,
            &fields,
            Arc::new(HashEmbedder::new(config.dim)),
        )?),
        "remote_embedding" => Box::new(DenseRetriever::build(
            tools,
            &fields,
            Arc::new(HttpEmbedder::new(http())),
        )?),
        "llm_http" => Box::new(LlmSelector::new(
            Arc::new(HttpChatClient::new(http())),
            template(),
            tools,
            config.max_tools,
            config.max_candidates,
        )?),
        "llm_word_overlap" => Box::new(LlmSelector::new(
            Arc::new(WordOverlapClient::new(config.overlap_threshold)),
            template(),
            tools,
            config.max_tools,
            config.max_candidates,
        )?),
        other => return Err(Error::Config(format!("unknown selector kind '{other}'")).into()),
    };
    Ok(selector)
}

/// Builds the attack space, optionally mining insertion words from the
/// accessible queries.
pub fn build_space(
    config: &AttackConfig,
    accessible_queries: &[&QueryRecord],
) -> anyhow::Result<AttackSpace> {
    let mut space = AttackSpace {
        perturbable_fields: parse_fields(&config.perturbable_fields)?,
        word_ops: parse_word_ops(&config.word_ops)?,
        char_ops: parse_char_ops(&config.char_ops)?,
        max_total_edits: config.max_total_edits,
        min_length_ratio: config.min_length_ratio,
        lexicon: match &config.lexicon {
            Some(path) => Arc::new(Lexicon::load(path)?),
            None => Lexicon::bundled(),
        },
        insertion_words: config.insertion_words.clone(),
        keyboard: match &config.keyboard_table {
            Some(path) => Arc::new(CharTable::load(path)?),
            None => CharTable::bundled_keyboard(),
        },
        homoglyphs: match &config.homoglyph_table {
            Some(path) => Arc::new(CharTable::load(path)?),
            None => CharTable::bundled_homoglyphs(),
        },
    };
    if config.insertions_from_queries {
        let texts = accessible_queries.iter().map(|q| q.text.as_str());
        let mut mined = mine_insertion_words(texts, config.max_insertion_words);
        space.insertion_words.append(&mut mined);
        space.insertion_words.dedup();
    }
    Ok(space)
}
