//! Shared text normalization: term extraction for retrieval and NSP overlap,
//! answer-token matching, the stopword list and the fixed FNV hashes.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Text-level mask placeholder. Scorers map it onto their own mask token.
pub const MASK: &str = "[MASK]";

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Clone)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    /// The bundled English list (`data/stopwords.txt`).
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    pub fn empty() -> Self {
        Self {
            words: HashSet::new(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&raw))
    }

    fn parse(raw: &str) -> Self {
        let words = raw
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Self { words }
    }

    pub fn contains(&self, term: &str) -> bool {
        self.words.contains(term)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Sorted word list, used when persisting configuration.
    pub fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.words.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::english()
    }
}

/// Lowercased maximal alphanumeric runs. Every other character separates terms.
pub fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Lowercase and strip leading/trailing non-alphanumeric characters.
pub fn match_key(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Whitespace tokens of `text` under [`match_key`], empties dropped.
pub fn match_keys(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(match_key)
        .filter(|k| !k.is_empty())
}

/// Content-word set: terms minus stopwords, with the mask placeholder removed.
pub fn content_words(text: &str, stopwords: &Stopwords) -> HashSet<String> {
    terms(&text.replace(MASK, " "))
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .collect()
}

const FNV32_OFFSET: u32 = 0x811c_9dc5;
const FNV32_PRIME: u32 = 0x0100_0193;
const FNV64_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV64_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a_32(bytes: &[u8]) -> u32 {
    bytes.iter().fold(FNV32_OFFSET, |h, &b| {
        (h ^ u32::from(b)).wrapping_mul(FNV32_PRIME)
    })
}

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV64_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV64_PRIME)
    })
}
