//! Constrained word- and character-level perturbation of a tool's text.
//!
//! Candidates are generated one operation at a time: every emitted candidate
//! differs from its parent by exactly one [`PerturbationOp`]. The constraint
//! set ([`AttackSpace`]) controls which fields may be touched, which operator
//! kinds are enabled, the edit budget, and a minimum-length floor that keeps
//! descriptions from degenerating to near-empty strings. `tool_id` and
//! `parameters` are never perturbable: they are what makes the tool callable.

pub mod lexicon;
pub mod tokenizer;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{FieldKind, ToolRecord};
use crate::error::{Error, Result};
pub use lexicon::{CharTable, Lexicon};
pub use tokenizer::{
    content_words, segment_text, terms, tokenize_words, word_tokens, Segment, SegmentKind,
    STOPWORDS,
};

/// Ranks the content vocabulary of `texts` by frequency (ties alphabetical)
/// and returns the top `cap` words. Feeding accessible-query vocabulary into
/// [`AttackSpace::insertion_words`] is the usual black-box way to arm
/// `word_insert`.
pub fn mine_insertion_words<'a>(texts: impl IntoIterator<Item = &'a str>, cap: usize) -> Vec<String> {
    let mut counts: std::collections::BTreeMap<String, usize> = std::collections::BTreeMap::new();
    for text in texts {
        for term in terms(text) {
            if !STOPWORDS.contains(&term.as_str()) {
                *counts.entry(term).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(cap).map(|(w, _)| w).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordOpKind {
    SynonymReplace,
    WordDelete,
    WordInsert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharOpKind {
    CharInsert,
    CharDelete,
    CharSwapAdjacent,
    CharSubstituteKeyboard,
    CharSubstituteHomoglyph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Word(WordOpKind),
    Char(CharOpKind),
}

/// Which textual field an operation touches. `Parameters` exists only so the
/// constraint can be stated and rejected; no generator ever emits it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRef {
    Name,
    Category,
    Description,
    Demonstration(usize),
    Parameters,
}

impl FieldRef {
    pub fn kind(&self) -> Option<FieldKind> {
        match self {
            FieldRef::Name => Some(FieldKind::Name),
            FieldRef::Category => Some(FieldKind::Category),
            FieldRef::Description => Some(FieldKind::Description),
            FieldRef::Demonstration(_) => Some(FieldKind::Demonstrations),
            FieldRef::Parameters => None,
        }
    }
}

impl std::fmt::Display for FieldRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldRef::Name => write!(f, "name"),
            FieldRef::Category => write!(f, "category"),
            FieldRef::Description => write!(f, "description"),
            FieldRef::Demonstration(i) => write!(f, "demonstrations[{i}]"),
            FieldRef::Parameters => write!(f, "parameters"),
        }
    }
}

/// A single text edit. `locus` is a word index for word-level ops and a
/// character index for character-level ops, interpreted against the parent
/// text at application time. `payload` is the replacement/inserted text and
/// is empty for deletions and adjacent swaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationOp {
    pub kind: OpKind,
    pub field: FieldRef,
    pub locus: usize,
    #[serde(default)]
    pub payload: String,
}

/// The constraint set for candidate generation.
#[derive(Clone)]
pub struct AttackSpace {
    pub perturbable_fields: BTreeSet<FieldKind>,
    pub word_ops: BTreeSet<WordOpKind>,
    pub char_ops: BTreeSet<CharOpKind>,
    pub max_total_edits: usize,
    /// Every candidate's perturbed-field length (in characters) must stay at
    /// or above this fraction of the original field's length.
    pub min_length_ratio: f64,
    pub lexicon: Arc<Lexicon>,
    /// Words offered by `word_insert`. When empty, insertion falls back to the
    /// lexicon synonyms of the word at the insertion site.
    pub insertion_words: Vec<String>,
    pub keyboard: Arc<CharTable>,
    pub homoglyphs: Arc<CharTable>,
}

impl Default for AttackSpace {
    fn default() -> Self {
        AttackSpace {
            perturbable_fields: [FieldKind::Description].into_iter().collect(),
            word_ops: [
                WordOpKind::SynonymReplace,
                WordOpKind::WordDelete,
                WordOpKind::WordInsert,
            ]
            .into_iter()
            .collect(),
            char_ops: [
                CharOpKind::CharInsert,
                CharOpKind::CharDelete,
                CharOpKind::CharSwapAdjacent,
                CharOpKind::CharSubstituteKeyboard,
                CharOpKind::CharSubstituteHomoglyph,
            ]
            .into_iter()
            .collect(),
            max_total_edits: 64,
            min_length_ratio: 0.5,
            lexicon: Lexicon::bundled(),
            insertion_words: Vec::new(),
            keyboard: CharTable::bundled_keyboard(),
            homoglyphs: CharTable::bundled_homoglyphs(),
        }
    }
}

impl AttackSpace {
    /// Stable description of the space for config fingerprints: flags plus
    /// content digests of the lexicon and tables.
    pub fn fingerprint_value(&self) -> serde_json::Value {
        serde_json::json!({
            "perturbable_fields": self.perturbable_fields,
            "word_ops": self.word_ops,
            "char_ops": self.char_ops,
            "max_total_edits": self.max_total_edits,
            "min_length_ratio": self.min_length_ratio,
            "lexicon_digest": self.lexicon.digest(),
            "insertion_words": self.insertion_words,
            "keyboard_digest": self.keyboard.digest(),
            "homoglyph_digest": self.homoglyphs.digest(),
        })
    }
}

/// A tool with zero or more perturbations applied, plus the pristine original
/// for constraint checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateText {
    pub tool: ToolRecord,
    pub ops_applied: Vec<PerturbationOp>,
    original: Arc<ToolRecord>,
}

impl CandidateText {
    pub fn from_original(tool: &ToolRecord) -> Self {
        CandidateText {
            tool: tool.clone(),
            ops_applied: Vec::new(),
            original: Arc::new(tool.clone()),
        }
    }

    pub fn edit_count(&self) -> usize {
        self.ops_applied.len()
    }

    pub fn original_record(&self) -> &ToolRecord {
        &self.original
    }

    pub fn field_text(&self, field: FieldRef) -> Option<&str> {
        field_text_of(&self.tool, field)
    }
}

fn field_text_of(tool: &ToolRecord, field: FieldRef) -> Option<&str> {
    match field {
        FieldRef::Name => Some(&tool.name),
        FieldRef::Category => Some(&tool.category),
        FieldRef::Description => Some(&tool.description),
        FieldRef::Demonstration(i) => tool.demonstrations.get(i).map(String::as_str),
        FieldRef::Parameters => Some(&tool.parameters),
    }
}

fn set_field_text(tool: &mut ToolRecord, field: FieldRef, text: String) {
    match field {
        FieldRef::Name => tool.name = text,
        FieldRef::Category => tool.category = text,
        FieldRef::Description => tool.description = text,
        FieldRef::Demonstration(i) => tool.demonstrations[i] = text,
        FieldRef::Parameters => unreachable!("parameters is rejected before this point"),
    }
}

fn apply_word_op(text: &str, kind: WordOpKind, locus: usize, payload: &str) -> Result<String> {
    let segments = segment_text(text);
    let word_positions: Vec<usize> = segments
        .iter()
        .enumerate()
        .filter(|(_, s)| s.kind == SegmentKind::Word)
        .map(|(i, _)| i)
        .collect();
    let n = word_positions.len();
    let mut segments = segments;
    match kind {
        WordOpKind::SynonymReplace => {
            let seg = *word_positions.get(locus).ok_or_else(|| {
                Error::OutOfBounds(format!("word index {locus} in {n}-word text"))
            })?;
            segments[seg].text = payload.to_string();
        }
        WordOpKind::WordDelete => {
            let seg = *word_positions.get(locus).ok_or_else(|| {
                Error::OutOfBounds(format!("word index {locus} in {n}-word text"))
            })?;
            segments.remove(seg);
            // Drop one adjacent separator so deletion does not leave doubled
            // whitespace: prefer the separator that followed the word.
            if seg < segments.len() && segments[seg].kind == SegmentKind::Separator {
                segments.remove(seg);
            } else if seg > 0 && segments[seg - 1].kind == SegmentKind::Separator {
                segments.remove(seg - 1);
            }
        }
        WordOpKind::WordInsert => {
            if locus > n {
                return Err(Error::OutOfBounds(format!(
                    "word insertion point {locus} in {n}-word text"
                )));
            }
            let word = Segment {
                kind: SegmentKind::Word,
                text: payload.to_string(),
            };
            let space = Segment {
                kind: SegmentKind::Separator,
                text: " ".to_string(),
            };
            if locus == n {
                if n > 0 {
                    segments.push(space);
                }
                segments.push(word);
            } else {
                let seg = word_positions[locus];
                segments.insert(seg, space);
                segments.insert(seg, word);
            }
        }
    }
    Ok(segments.into_iter().map(|s| s.text).collect())
}

fn apply_char_op(text: &str, kind: CharOpKind, locus: usize, payload: &str) -> Result<String> {
    let mut chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    match kind {
        CharOpKind::CharInsert => {
            if locus > n {
                return Err(Error::OutOfBounds(format!(
                    "char insertion point {locus} in {n}-char text"
                )));
            }
            for (i, ch) in payload.chars().enumerate() {
                chars.insert(locus + i, ch);
            }
        }
        CharOpKind::CharDelete => {
            if locus >= n {
                return Err(Error::OutOfBounds(format!(
                    "char index {locus} in {n}-char text"
                )));
            }
            chars.remove(locus);
        }
        CharOpKind::CharSwapAdjacent => {
            if locus + 1 >= n {
                return Err(Error::OutOfBounds(format!(
                    "adjacent swap at {locus} in {n}-char text"
                )));
            }
            chars.swap(locus, locus + 1);
        }
        CharOpKind::CharSubstituteKeyboard | CharOpKind::CharSubstituteHomoglyph => {
            if locus >= n {
                return Err(Error::OutOfBounds(format!(
                    "char index {locus} in {n}-char text"
                )));
            }
            let mut payload_chars = payload.chars();
            let replacement = match (payload_chars.next(), payload_chars.next()) {
                (Some(c), None) => c,
                _ => {
                    return Err(Error::OutOfBounds(
                        "substitution payload must be a single character".into(),
                    ))
                }
            };
            chars[locus] = replacement;
        }
    }
    Ok(chars.into_iter().collect())
}

/// Applies one operation to a candidate, producing the child candidate.
/// Checks the field mask, the edit budget, and locus bounds; all other fields
/// of the tool are untouched.
pub fn apply(op: &PerturbationOp, parent: &CandidateText, space: &AttackSpace) -> Result<CandidateText> {
    if op.field == FieldRef::Parameters {
        return Err(Error::FieldMask("parameters".into()));
    }
    let kind = op
        .field
        .kind()
        .expect("non-parameter field refs always have a kind");
    if !space.perturbable_fields.contains(&kind) {
        return Err(Error::FieldMask(op.field.to_string()));
    }
    if parent.edit_count() + 1 > space.max_total_edits {
        return Err(Error::EditLimit(parent.edit_count()));
    }
    let text = parent
        .field_text(op.field)
        .ok_or_else(|| Error::OutOfBounds(format!("field {} does not exist", op.field)))?;
    let new_text = match op.kind {
        OpKind::Word(kind) => apply_word_op(text, kind, op.locus, &op.payload)?,
        OpKind::Char(kind) => apply_char_op(text, kind, op.locus, &op.payload)?,
    };
    let mut child = parent.clone();
    set_field_text(&mut child.tool, op.field, new_text);
    child.ops_applied.push(op.clone());
    Ok(child)
}

/// One perturbation site: a word index (word phase) or character index
/// (character phase) within a perturbable field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteRef {
    pub field: FieldRef,
    pub index: usize,
}

fn perturbable_field_refs(tool: &ToolRecord, space: &AttackSpace) -> Vec<FieldRef> {
    let mut refs = Vec::new();
    if space.perturbable_fields.contains(&FieldKind::Name) {
        refs.push(FieldRef::Name);
    }
    if space.perturbable_fields.contains(&FieldKind::Category) {
        refs.push(FieldRef::Category);
    }
    if space.perturbable_fields.contains(&FieldKind::Description) {
        refs.push(FieldRef::Description);
    }
    if space.perturbable_fields.contains(&FieldKind::Demonstrations) {
        for i in 0..tool.demonstrations.len() {
            refs.push(FieldRef::Demonstration(i));
        }
    }
    refs
}

/// Word positions across all perturbable fields, in fixed field order.
pub fn word_sites(candidate: &CandidateText, space: &AttackSpace) -> Vec<SiteRef> {
    let mut sites = Vec::new();
    for field in perturbable_field_refs(&candidate.tool, space) {
        let text = candidate.field_text(field).unwrap_or_default();
        for index in 0..word_tokens(text).len() {
            sites.push(SiteRef { field, index });
        }
    }
    sites
}

/// Character positions across all perturbable fields, in fixed field order.
pub fn char_sites(candidate: &CandidateText, space: &AttackSpace) -> Vec<SiteRef> {
    let mut sites = Vec::new();
    for field in perturbable_field_refs(&candidate.tool, space) {
        let text = candidate.field_text(field).unwrap_or_default();
        for index in 0..text.chars().count() {
            sites.push(SiteRef { field, index });
        }
    }
    sites
}

fn original_field_len(candidate: &CandidateText, field: FieldRef) -> usize {
    field_text_of(candidate.original_record(), field)
        .map(|t| t.chars().count())
        .unwrap_or(0)
}

fn length_ok(candidate: &CandidateText, field: FieldRef, space: &AttackSpace, original_len: usize) -> bool {
    let new_len = candidate
        .field_text(field)
        .map(|t| t.chars().count())
        .unwrap_or(0);
    new_len as f64 >= space.min_length_ratio * original_len as f64
}

/// Matches the capitalization of `original` onto `replacement`: Title case and
/// ALL CAPS are preserved, anything else passes through unchanged.
fn match_case(replacement: &str, original: &str) -> String {
    let mut orig_chars = original.chars();
    let first_upper = orig_chars.next().map(char::is_uppercase).unwrap_or(false);
    let all_upper = original.chars().count() > 1 && original.chars().all(|c| !c.is_lowercase());
    if all_upper {
        replacement.to_uppercase()
    } else if first_upper {
        let mut out = String::with_capacity(replacement.len());
        let mut rest = replacement.chars();
        if let Some(first) = rest.next() {
            out.extend(first.to_uppercase());
            out.extend(rest);
        }
        out
    } else {
        replacement.to_string()
    }
}

fn case_of(ch: char, like: char) -> char {
    if like.is_uppercase() {
        ch.to_uppercase().next().unwrap_or(ch)
    } else {
        ch
    }
}

struct CandidateSink<'a> {
    parent: &'a CandidateText,
    space: &'a AttackSpace,
    field: FieldRef,
    original_len: usize,
    budget: usize,
    out: Vec<CandidateText>,
}

impl<'a> CandidateSink<'a> {
    fn full(&self) -> bool {
        self.out.len() >= self.budget
    }

    /// Applies the op and keeps the child if it passes the length floor.
    /// Ops that cannot apply (locus drift, edit limit) are silently dropped:
    /// they are illegal candidates, not errors.
    fn push(&mut self, kind: OpKind, locus: usize, payload: String) {
        if self.full() {
            return;
        }
        let op = PerturbationOp {
            kind,
            field: self.field,
            locus,
            payload,
        };
        if let Ok(child) = apply(&op, self.parent, self.space) {
            if length_ok(&child, self.field, self.space, self.original_len) {
                self.out.push(child);
            }
        }
    }
}

/// Generates at most `budget` word-level candidates at `site`, each exactly
/// one operation away from the parent. Ordering is deterministic: synonym
/// replacements by lexicon rank, then deletion, then insertions.
pub fn gen_word_perturbations(
    parent: &CandidateText,
    site: SiteRef,
    budget: usize,
    space: &AttackSpace,
) -> Vec<CandidateText> {
    if budget == 0 {
        return Vec::new();
    }
    let Some(text) = parent.field_text(site.field) else {
        return Vec::new();
    };
    let tokens = word_tokens(text);
    let Some(token) = tokens.get(site.index) else {
        return Vec::new();
    };
    let token = token.clone();
    let mut sink = CandidateSink {
        parent,
        space,
        field: site.field,
        original_len: original_field_len(parent, site.field),
        budget,
        out: Vec::new(),
    };

    if space.word_ops.contains(&WordOpKind::SynonymReplace) {
        for synonym in space.lexicon.synonyms(&token) {
            let payload = match_case(synonym, &token);
            if payload != *token {
                sink.push(OpKind::Word(WordOpKind::SynonymReplace), site.index, payload);
            }
        }
    }
    if space.word_ops.contains(&WordOpKind::WordDelete) {
        sink.push(OpKind::Word(WordOpKind::WordDelete), site.index, String::new());
    }
    if space.word_ops.contains(&WordOpKind::WordInsert) {
        let fallback;
        let source: &[String] = if space.insertion_words.is_empty() {
            fallback = space.lexicon.synonyms(&token).to_vec();
            &fallback
        } else {
            &space.insertion_words
        };
        for word in source {
            sink.push(OpKind::Word(WordOpKind::WordInsert), site.index, word.clone());
        }
    }
    sink.out
}

/// Generates at most `budget` character-level candidates at `site`, each at
/// character edit distance one from the parent. Operator order is fixed:
/// insert, delete, adjacent swap, keyboard substitution, homoglyph
/// substitution.
pub fn gen_char_perturbations(
    parent: &CandidateText,
    site: SiteRef,
    budget: usize,
    space: &AttackSpace,
) -> Vec<CandidateText> {
    if budget == 0 {
        return Vec::new();
    }
    let Some(text) = parent.field_text(site.field) else {
        return Vec::new();
    };
    let chars: Vec<char> = text.chars().collect();
    let Some(&current) = chars.get(site.index) else {
        return Vec::new();
    };
    let mut sink = CandidateSink {
        parent,
        space,
        field: site.field,
        original_len: original_field_len(parent, site.field),
        budget,
        out: Vec::new(),
    };

    let lower = current.to_lowercase().next().unwrap_or(current);
    if space.char_ops.contains(&CharOpKind::CharInsert) {
        for &neighbor in space.keyboard.lookup(lower) {
            sink.push(
                OpKind::Char(CharOpKind::CharInsert),
                site.index + 1,
                case_of(neighbor, current).to_string(),
            );
        }
    }
    if space.char_ops.contains(&CharOpKind::CharDelete) {
        sink.push(OpKind::Char(CharOpKind::CharDelete), site.index, String::new());
    }
    if space.char_ops.contains(&CharOpKind::CharSwapAdjacent)
        && site.index + 1 < chars.len()
        && chars[site.index] != chars[site.index + 1]
    {
        sink.push(OpKind::Char(CharOpKind::CharSwapAdjacent), site.index, String::new());
    }
    if space.char_ops.contains(&CharOpKind::CharSubstituteKeyboard) {
        for &neighbor in space.keyboard.lookup(lower) {
            let replacement = case_of(neighbor, current);
            if replacement != current {
                sink.push(
                    OpKind::Char(CharOpKind::CharSubstituteKeyboard),
                    site.index,
                    replacement.to_string(),
                );
            }
        }
    }
    if space.char_ops.contains(&CharOpKind::CharSubstituteHomoglyph) {
        for &confusable in space.homoglyphs.lookup(current) {
            if confusable != current {
                sink.push(
                    OpKind::Char(CharOpKind::CharSubstituteHomoglyph),
                    site.index,
                    confusable.to_string(),
                );
            }
        }
    }
    sink.out
}
