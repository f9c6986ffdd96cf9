//! Synonym lexicon and character tables backing the perturbation operators.
//!
//! All three are flat UTF-8 data files with the format
//! `key<TAB>value1,value2,...`; `#`-prefixed lines and blank lines are
//! ignored. Small bundled defaults ship with the crate; callers can load
//! replacements from disk and plug them in through [`crate::perturb::AttackSpace`].

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon_en.tsv");
const BUNDLED_KEYBOARD: &str = include_str!("../../data/qwerty_adjacency.tsv");
const BUNDLED_HOMOGLYPHS: &str = include_str!("../../data/homoglyphs.tsv");

fn parse_tsv_lines(raw: &str, what: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut entries = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, values) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: what.to_string(),
            index: lineno,
            message: "expected key<TAB>value1,value2,...".into(),
        })?;
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        entries.push((key.to_string(), values));
    }
    Ok(entries)
}

/// Word → ranked synonyms. Keys are matched case-insensitively.
#[derive(Debug, Default)]
pub struct Lexicon {
    entries: HashMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn from_tsv(raw: &str, source: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (key, values) in parse_tsv_lines(raw, source)? {
            entries.insert(key.to_lowercase(), values);
        }
        Ok(Lexicon { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)?;
        Self::from_tsv(&raw, &path.display().to_string())
    }

    /// The small English lexicon bundled with the crate.
    pub fn bundled() -> Arc<Lexicon> {
        static BUNDLED: OnceLock<Arc<Lexicon>> = OnceLock::new();
        BUNDLED
            .get_or_init(|| {
                Arc::new(Lexicon::from_tsv(BUNDLED_LEXICON, "bundled lexicon").expect("bundled lexicon parses"))
            })
            .clone()
    }

    /// Ranked synonyms for `word`, best first. Empty when the word is unknown.
    pub fn synonyms(&self, word: &str) -> &[String] {
        self.entries
            .get(&word.to_lowercase())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stable content digest, used in config fingerprints.
    pub fn digest(&self) -> String {
        let mut items: Vec<(&String, &Vec<String>)> = self.entries.iter().collect();
        items.sort();
        crate::fingerprint::digest_value(&serde_json::json!(items
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
            .collect::<Vec<_>>()))
    }
}

/// Single-character substitution table (keyboard neighbors or confusables).
#[derive(Debug, Default)]
pub struct CharTable {
    entries: HashMap<char, Vec<char>>,
}

impl CharTable {
    pub fn from_tsv(raw: &str, source: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (lineno, (key, values)) in parse_tsv_lines(raw, source)?.into_iter().enumerate() {
            let mut key_chars = key.chars();
            let key_char = key_chars.next().ok_or_else(|| Error::Parse {
                path: source.to_string(),
                index: lineno,
                message: "empty key".into(),
            })?;
            if key_chars.next().is_some() {
                return Err(Error::Parse {
                    path: source.to_string(),
                    index: lineno,
                    message: format!("key '{key}' must be a single character"),
                });
            }
            let mut chars = Vec::new();
            for value in values {
                let mut v = value.chars();
                match (v.next(), v.next()) {
                    (Some(c), None) => chars.push(c),
                    _ => {
                        return Err(Error::Parse {
                            path: source.to_string(),
                            index: lineno,
                            message: format!("value '{value}' must be a single character"),
                        })
                    }
                }
            }
            entries.insert(key_char, chars);
        }
        Ok(CharTable { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)?;
        Self::from_tsv(&raw, &path.display().to_string())
    }

    /// Bundled QWERTY adjacency (lowercase keys; callers re-case as needed).
    pub fn bundled_keyboard() -> Arc<CharTable> {
        static BUNDLED: OnceLock<Arc<CharTable>> = OnceLock::new();
        BUNDLED
            .get_or_init(|| {
                Arc::new(
                    CharTable::from_tsv(BUNDLED_KEYBOARD, "bundled keyboard table")
                        .expect("bundled keyboard table parses"),
                )
            })
            .clone()
    }

    /// Bundled confusable-character table (case-specific keys).
    pub fn bundled_homoglyphs() -> Arc<CharTable> {
        static BUNDLED: OnceLock<Arc<CharTable>> = OnceLock::new();
        BUNDLED
            .get_or_init(|| {
                Arc::new(
                    CharTable::from_tsv(BUNDLED_HOMOGLYPHS, "bundled homoglyph table")
                        .expect("bundled homoglyph table parses"),
                )
            })
            .clone()
    }

    pub fn lookup(&self, ch: char) -> &[char] {
        self.entries.get(&ch).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn digest(&self) -> String {
        let mut items: Vec<(String, String)> = self
            .entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.iter().collect::<String>()))
            .collect();
        items.sort();
        crate::fingerprint::digest_value(&serde_json::json!(items))
    }
}
