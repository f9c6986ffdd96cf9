//! LLM-based in-context tool selection.
//!
//! The selector renders a prompt listing every candidate as a
//! "Tool Name: Tool Description" line, sends it through a [`ChatClient`], and
//! parses tool names back out of the reply by exact-then-normalized matching
//! against the candidate list. Reply names that match nothing are dropped and
//! counted. Two offline clients ship for tests and CI: a scripted client with
//! canned replies, and a deterministic rule-based client that picks every tool
//! whose description shares at least two content words with the query.

use std::collections::BTreeSet;
use std::sync::Mutex;

use crate::corpus::ToolRecord;
use crate::error::{Error, Result};
use crate::selectors::{Selection, SelectionMode, SelectorView, ToolSelector};

pub const DEFAULT_INSTRUCTION: &str = "You need to act as a policy model, that given a question and a modular set, determines the sequence of modules that can be executed sequentially can solve the question.";

/// The prompt layout for LLM-based selection.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PromptTemplate {
    pub instruction: String,
    pub tools_label: String,
    pub query_label: String,
    pub output_label: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            tools_label: "Candidate Tools:".to_string(),
            query_label: "Query:".to_string(),
            output_label: "Output:".to_string(),
        }
    }
}

impl PromptTemplate {
    /// Renders the prompt. Produces exactly one tool line per slate entry.
    pub fn render(&self, query: &str, slate: &[(String, String)]) -> String {
        let mut out = String::new();
        out.push_str(&self.instruction);
        out.push('\n');
        out.push_str(&self.tools_label);
        out.push('\n');
        for (name, description) in slate {
            out.push_str(name);
            out.push_str(": ");
            out.push_str(description);
            out.push('\n');
        }
        out.push_str(&self.query_label);
        out.push(' ');
        out.push_str(query);
        out.push('\n');
        out.push_str(&self.output_label);
        out
    }
}

pub trait ChatClient: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String>;
    fn describe(&self) -> serde_json::Value;
}

/// Replays canned replies in order, repeating the last one when exhausted.
pub struct ScriptedChatClient {
    replies: Vec<String>,
    cursor: Mutex<usize>,
}

impl ScriptedChatClient {
    pub fn new(replies: Vec<String>) -> Self {
        ScriptedChatClient {
            replies,
            cursor: Mutex::new(0),
        }
    }

    pub fn constant(reply: impl Into<String>) -> Self {
        Self::new(vec![reply.into()])
    }
}

impl ChatClient for ScriptedChatClient {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, _prompt: &str) -> Result<String> {
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let reply = self
            .replies
            .get(*cursor)
            .or_else(|| self.replies.last())
            .cloned()
            .unwrap_or_default();
        if *cursor + 1 < self.replies.len() {
            *cursor += 1;
        }
        Ok(reply)
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "scripted", "replies": self.replies.len() })
    }
}

use crate::perturb::content_words;

/// Deterministic rule-based stand-in for an LLM selector: replies with every
/// slate tool whose description shares at least `threshold` content words with
/// the query. Parses the default prompt layout.
pub struct WordOverlapClient {
    threshold: usize,
}

impl WordOverlapClient {
    pub fn new(threshold: usize) -> Self {
        WordOverlapClient { threshold }
    }

    /// The number of shared content words this client requires.
    pub fn threshold(&self) -> usize {
        self.threshold
    }
}

impl Default for WordOverlapClient {
    fn default() -> Self {
        WordOverlapClient::new(2)
    }
}

impl ChatClient for WordOverlapClient {
    fn name(&self) -> &str {
        "word-overlap"
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let template = PromptTemplate::default();
        let mut slate: Vec<(String, String)> = Vec::new();
        let mut query = String::new();
        let mut in_tools = false;
        for line in prompt.lines() {
            if line == template.tools_label {
                in_tools = true;
                continue;
            }
            if let Some(rest) = line.strip_prefix(&template.query_label) {
                in_tools = false;
                query = rest.trim().to_string();
                continue;
            }
            if in_tools {
                if let Some((name, description)) = line.split_once(": ") {
                    slate.push((name.to_string(), description.to_string()));
                }
            }
        }
        let query_words = content_words(&query);
        let chosen: Vec<String> = slate
            .into_iter()
            .filter(|(_, description)| {
                content_words(description)
                    .intersection(&query_words)
                    .count()
                    >= self.threshold
            })
            .map(|(name, _)| name)
            .collect();
        Ok(chosen.join(", "))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "word-overlap", "threshold": self.threshold })
    }
}

fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(|c| c.to_lowercase())
        .collect()
}

fn strip_enumeration(segment: &str) -> &str {
    let trimmed = segment.trim();
    let trimmed = trimmed.trim_start_matches(['-', '*', '•']);
    // Leading "1." / "2)" style numbering.
    let digits_end = trimmed
        .char_indices()
        .take_while(|(_, c)| c.is_ascii_digit())
        .map(|(i, c)| i + c.len_utf8())
        .last();
    if let Some(end) = digits_end {
        let rest = &trimmed[end..];
        if let Some(rest) = rest.strip_prefix(['.', ')']) {
            return rest.trim();
        }
    }
    trimmed.trim()
}

/// Parses tool names out of a model reply. Exact name matches win; otherwise
/// names are compared case-insensitively with punctuation, underscores, and
/// whitespace stripped, resolving ambiguity to the longest candidate name.
/// Returns the chosen ids (capped at `max_tools`) plus the count of reply
/// segments that matched nothing.
fn parse_reply(reply: &str, slate: &[(String, String, String)], max_tools: usize) -> (BTreeSet<String>, usize) {
    let mut chosen: Vec<String> = Vec::new();
    let mut unmatched = 0usize;
    for raw_segment in reply.split([',', ';', '\n']) {
        let segment = strip_enumeration(raw_segment);
        if segment.is_empty() {
            continue;
        }
        let exact = slate.iter().find(|(name, _, _)| name == segment);
        let matched = exact.or_else(|| {
            let normalized_segment = normalize_name(segment);
            if normalized_segment.is_empty() {
                return None;
            }
            slate
                .iter()
                .filter(|(name, _, _)| {
                    let normalized = normalize_name(name);
                    !normalized.is_empty() && normalized_segment.contains(&normalized)
                })
                .max_by_key(|(name, _, _)| name.len())
        });
        match matched {
            Some((_, _, tool_id)) => {
                if !chosen.contains(tool_id) {
                    chosen.push(tool_id.clone());
                }
            }
            None => unmatched += 1,
        }
    }
    chosen.truncate(max_tools);
    (chosen.into_iter().collect(), unmatched)
}

/// LLM-based selector over a small in-context slate.
pub struct LlmSelector {
    client: std::sync::Arc<dyn ChatClient>,
    template: PromptTemplate,
    tools: Vec<ToolRecord>,
    max_tools: usize,
}

impl LlmSelector {
    /// `max_candidates` guards the context budget: corpora larger than this
    /// are rejected up front.
    pub fn new(
        client: std::sync::Arc<dyn ChatClient>,
        template: PromptTemplate,
        tools: &[ToolRecord],
        max_tools: usize,
        max_candidates: usize,
    ) -> Result<Self> {
        if tools.is_empty() {
            return Err(Error::EmptyInput("tool corpus".into()));
        }
        if tools.len() > max_candidates {
            return Err(Error::Config(format!(
                "{} candidate tools exceed the in-context limit of {max_candidates}",
                tools.len()
            )));
        }
        if max_tools == 0 {
            return Err(Error::Config("max_tools must be positive".into()));
        }
        Ok(LlmSelector {
            client,
            template,
            tools: tools.to_vec(),
            max_tools,
        })
    }

    pub fn max_tools(&self) -> usize {
        self.max_tools
    }
}

struct LlmView<'a> {
    selector: &'a LlmSelector,
    /// (name, description, tool_id) with any swap already applied.
    slate: Vec<(String, String, String)>,
}

impl SelectorView for LlmView<'_> {
    fn select(&self, query: &str, k: usize) -> Result<Selection> {
        let lines: Vec<(String, String)> = self
            .slate
            .iter()
            .map(|(name, description, _)| (name.clone(), description.clone()))
            .collect();
        let prompt = self.selector.template.render(query, &lines);
        let reply = self.selector.client.complete(&prompt)?;
        let cap = k.min(self.selector.max_tools).max(1);
        let (tools, unmatched) = parse_reply(&reply, &self.slate, cap);
        Ok(Selection::ChosenSet { tools, unmatched })
    }

    fn rank_all(&self, _query: &str) -> Result<Vec<crate::selectors::RankedEntry>> {
        Err(Error::Mode("LLM selector produces a chosen set, not a ranking".into()))
    }

    fn score(&self, _query: &str, _tool_id: &str) -> Result<f64> {
        Err(Error::Mode("LLM selector produces no matching scores".into()))
    }
}

impl ToolSelector for LlmSelector {
    fn name(&self) -> &str {
        "llm"
    }

    fn mode(&self) -> SelectionMode {
        SelectionMode::ChosenSet
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "llm",
            "client": self.client.describe(),
            "max_tools": self.max_tools,
            "tools": self.tools.len(),
        })
    }

    fn view<'a>(&'a self, swap: Option<&ToolRecord>) -> Result<Box<dyn SelectorView + 'a>> {
        if let Some(tool) = swap {
            if !self.tools.iter().any(|t| t.tool_id == tool.tool_id) {
                return Err(Error::UnknownToolId(tool.tool_id.clone()));
            }
        }
        let slate = self
            .tools
            .iter()
            .map(|tool| {
                let effective = match swap {
                    Some(replacement) if replacement.tool_id == tool.tool_id => replacement,
                    _ => tool,
                };
                (
                    effective.name.clone(),
                    effective.description.clone(),
                    effective.tool_id.clone(),
                )
            })
            .collect();
        Ok(Box::new(LlmView {
            selector: self,
            slate,
        }))
    }
}
