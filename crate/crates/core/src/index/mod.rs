//! Hashed n-gram TF-IDF paragraph retrieval.
//!
//! Features are unigrams and bigrams over [`terms`](crate::text::terms).
//! Stopwords are dropped as unigrams but kept inside higher-order n-grams;
//! an n-gram made only of stopwords is dropped. Each n-gram string (terms
//! joined by one space) is hashed with FNV-1a 32 and reduced modulo
//! `2^hash_bits`. Weights are `ln(1 + tf) * idf` with
//! `idf = max(0, ln((N - n + 0.5) / (n + 0.5)))` and queries are ranked by
//! cosine similarity, ties broken by ascending paragraph id.
//!
//! All floating-point reductions (norms and dot products) sum their terms in
//! ascending order so scores depend only on the multiset of contributions.

mod persist;
mod recall;

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{fnv1a_32, terms, Stopwords};

pub use persist::{load_index, load_index_with, save_index, MAGIC, VERSION};
pub use recall::{recall_at_k, RecallCurve};

pub const DEFAULT_HASH_BITS: u32 = 24;
pub const DEFAULT_NGRAM_ORDER: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub para_id: String,
    pub doc_id: String,
    pub text: String,
}

/// Paragraph texts keyed by id; the index itself stores only ids and weights.
#[derive(Debug, Clone, Default)]
pub struct ParagraphStore {
    paragraphs: Vec<Paragraph>,
    by_id: HashMap<String, usize>,
}

impl ParagraphStore {
    pub fn new(paragraphs: Vec<Paragraph>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(paragraphs.len());
        for (i, p) in paragraphs.iter().enumerate() {
            if by_id.insert(p.para_id.clone(), i).is_some() {
                return Err(Error::Build(format!("duplicate para_id {:?}", p.para_id)));
            }
        }
        Ok(Self { paragraphs, by_id })
    }

    /// JSONL `{"para_id", "doc_id", "text"}`.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut paragraphs = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let p: Paragraph = serde_json::from_str(&line)
                .map_err(|e| Error::Invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
            paragraphs.push(p);
        }
        Self::new(paragraphs)
    }

    pub fn get(&self, para_id: &str) -> Option<&Paragraph> {
        self.by_id.get(para_id).map(|&i| &self.paragraphs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Paragraph> {
        self.paragraphs.iter()
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct IndexConfig {
    pub hash_bits: u32,
    pub ngram_order: u32,
    pub stopwords: Stopwords,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            hash_bits: DEFAULT_HASH_BITS,
            ngram_order: DEFAULT_NGRAM_ORDER,
            stopwords: Stopwords::english(),
        }
    }
}

impl IndexConfig {
    fn validate(&self) -> Result<()> {
        if !(1..=32).contains(&self.hash_bits) {
            return Err(Error::Build(format!("hash_bits {} outside 1..=32", self.hash_bits)));
        }
        if self.ngram_order == 0 {
            return Err(Error::Build("ngram_order must be at least 1".into()));
        }
        Ok(())
    }
}

/// N-gram strings of `text` under the feature rules in the module docs.
pub fn ngrams(text: &str, order: u32, stopwords: &Stopwords) -> Vec<String> {
    let toks = terms(text);
    let mut out = Vec::new();
    for n in 1..=order as usize {
        for w in toks.windows(n) {
            let all_stop = w.iter().all(|t| stopwords.contains(t));
            if all_stop || (n == 1 && stopwords.contains(&w[0])) {
                continue;
            }
            out.push(w.join(" "));
        }
    }
    out
}

pub fn feature_bin(gram: &str, hash_bits: u32) -> u32 {
    let h = fnv1a_32(gram.as_bytes());
    if hash_bits >= 32 {
        h
    } else {
        h & ((1u32 << hash_bits) - 1)
    }
}

pub fn idf(num_docs: u64, doc_freq: u64) -> f64 {
    let n = num_docs as f64;
    let df = doc_freq as f64;
    ((n - df + 0.5) / (df + 0.5)).ln().max(0.0)
}

pub fn tf_weight(tf: f64, idf: f64) -> f64 {
    (1.0 + tf).ln() * idf
}

/// Sum after sorting ascending, so the result is independent of input order.
/// An empty slice sums to `+0.0`.
pub fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().fold(0.0, |acc, v| acc + v)
}

fn norm(weights: impl Iterator<Item = f64>) -> f64 {
    let mut sq: Vec<f64> = weights.map(|w| w * w).collect();
    ordered_sum(&mut sq).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub para_id: String,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct TfidfIndex {
    hash_bits: u32,
    ngram_order: u32,
    stopwords: Stopwords,
    para_ids: Vec<String>,
    row_offsets: Vec<u64>,
    bins: Vec<u32>,
    weights: Vec<f64>,
    doc_norms: Vec<f64>,
    /// Sorted by bin; only bins seen in the corpus.
    idf: Vec<(u32, f64)>,
    postings: HashMap<u32, Vec<(u32, f64)>>,
}

fn bin_counts(text: &str, cfg_bits: u32, order: u32, stopwords: &Stopwords) -> Vec<(u32, f64)> {
    let mut counts: HashMap<u32, u32> = HashMap::new();
    for g in ngrams(text, order, stopwords) {
        *counts.entry(feature_bin(&g, cfg_bits)).or_default() += 1;
    }
    let mut v: Vec<(u32, f64)> = counts.into_iter().map(|(b, c)| (b, f64::from(c))).collect();
    v.sort_unstable_by_key(|&(b, _)| b);
    v
}

pub fn build_index<'a, I>(paragraphs: I, config: &IndexConfig) -> Result<TfidfIndex>
where
    I: IntoIterator<Item = &'a Paragraph>,
{
    config.validate()?;
    let mut para_ids = Vec::new();
    let mut seen = HashMap::new();
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::new();
    for p in paragraphs {
        if seen.insert(p.para_id.clone(), ()).is_some() {
            return Err(Error::Build(format!("duplicate para_id {:?}", p.para_id)));
        }
        if p.text.split_whitespace().next().is_none() {
            warn!("skipping empty paragraph {}", p.para_id);
            continue;
        }
        para_ids.push(p.para_id.clone());
        rows.push(bin_counts(&p.text, config.hash_bits, config.ngram_order, &config.stopwords));
    }
    if para_ids.is_empty() {
        return Err(Error::Build("no usable paragraphs".into()));
    }

    let n = para_ids.len() as u64;
    let mut doc_freq: HashMap<u32, u64> = HashMap::new();
    for row in &rows {
        for &(bin, _) in row {
            *doc_freq.entry(bin).or_default() += 1;
        }
    }
    let mut idf_table: Vec<(u32, f64)> = doc_freq.iter().map(|(&b, &df)| (b, idf(n, df))).collect();
    idf_table.sort_unstable_by_key(|&(b, _)| b);
    let idf_of: HashMap<u32, f64> = idf_table.iter().copied().collect();

    let mut row_offsets = Vec::with_capacity(rows.len() + 1);
    let mut bins = Vec::new();
    let mut weights = Vec::new();
    let mut doc_norms = Vec::with_capacity(rows.len());
    row_offsets.push(0);
    for row in rows {
        let start = weights.len();
        for (bin, tf) in row {
            let w = tf_weight(tf, idf_of[&bin]);
            if w > 0.0 {
                bins.push(bin);
                weights.push(w);
            }
        }
        doc_norms.push(norm(weights[start..].iter().copied()));
        row_offsets.push(weights.len() as u64);
    }

    Ok(TfidfIndex::from_parts(
        config.hash_bits,
        config.ngram_order,
        config.stopwords.clone(),
        para_ids,
        row_offsets,
        bins,
        weights,
        doc_norms,
        idf_table,
    ))
}

impl TfidfIndex {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        hash_bits: u32,
        ngram_order: u32,
        stopwords: Stopwords,
        para_ids: Vec<String>,
        row_offsets: Vec<u64>,
        bins: Vec<u32>,
        weights: Vec<f64>,
        doc_norms: Vec<f64>,
        idf: Vec<(u32, f64)>,
    ) -> Self {
        let mut postings: HashMap<u32, Vec<(u32, f64)>> = HashMap::new();
        for row in 0..para_ids.len() {
            let (s, e) = (row_offsets[row] as usize, row_offsets[row + 1] as usize);
            for j in s..e {
                postings.entry(bins[j]).or_default().push((row as u32, weights[j]));
            }
        }
        Self {
            hash_bits,
            ngram_order,
            stopwords,
            para_ids,
            row_offsets,
            bins,
            weights,
            doc_norms,
            idf,
            postings,
        }
    }

    pub fn num_paragraphs(&self) -> usize {
        self.para_ids.len()
    }

    pub fn hash_bits(&self) -> u32 {
        self.hash_bits
    }

    pub fn ngram_order(&self) -> u32 {
        self.ngram_order
    }

    pub fn para_ids(&self) -> &[String] {
        &self.para_ids
    }

    pub fn doc_norms(&self) -> &[f64] {
        &self.doc_norms
    }

    pub fn idf_table(&self) -> &[(u32, f64)] {
        &self.idf
    }

    /// Sparse row `(bin, weight)` for one paragraph, ordered by bin.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let (s, e) = (self.row_offsets[i] as usize, self.row_offsets[i + 1] as usize);
        self.bins[s..e].iter().copied().zip(self.weights[s..e].iter().copied())
    }

    fn idf_of(&self, bin: u32) -> f64 {
        match self.idf.binary_search_by_key(&bin, |&(b, _)| b) {
            Ok(i) => self.idf[i].1,
            Err(_) => idf(self.para_ids.len() as u64, 0),
        }
    }

    /// Weighted query vector; empty when the query has no usable features.
    pub fn query_vector(&self, text: &str) -> Vec<(u32, f64)> {
        bin_counts(text, self.hash_bits, self.ngram_order, &self.stopwords)
            .into_iter()
            .map(|(bin, tf)| (bin, tf_weight(tf, self.idf_of(bin))))
            .filter(|&(_, w)| w > 0.0)
            .collect()
    }

    /// Top-`k` paragraphs by cosine similarity, ties by ascending para_id.
    /// Zero-score paragraphs fill the list when fewer than `k` match; a query
    /// with no weighted features returns nothing.
    pub fn query(&self, text: &str, k: usize) -> Vec<Hit> {
        let qv = self.query_vector(text);
        if qv.is_empty() || k == 0 {
            return Vec::new();
        }
        let qnorm = norm(qv.iter().map(|&(_, w)| w));

        let mut products: HashMap<u32, Vec<f64>> = HashMap::new();
        for &(bin, qw) in &qv {
            if let Some(list) = self.postings.get(&bin) {
                for &(row, dw) in list {
                    products.entry(row).or_default().push(qw * dw);
                }
            }
        }
        let mut scored: Vec<(f64, &str)> = products
            .into_iter()
            .map(|(row, mut prods)| {
                let dot = ordered_sum(&mut prods);
                let denom = qnorm * self.doc_norms[row as usize];
                let s = if denom > 0.0 { (dot / denom).min(1.0) } else { 0.0 };
                (s, self.para_ids[row as usize].as_str())
            })
            .collect();
        let touched: std::collections::HashSet<&str> = scored.iter().map(|&(_, id)| id).collect();
        if scored.len() < k {
            scored.extend(
                self.para_ids
                    .iter()
                    .filter(|id| !touched.contains(id.as_str()))
                    .map(|id| (0.0, id.as_str())),
            );
        }
        scored.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        scored.truncate(k);
        scored
            .into_iter()
            .map(|(score, id)| Hit {
                para_id: id.to_string(),
                score,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn para(id: &str, text: &str) -> Paragraph {
        Paragraph {
            para_id: id.into(),
            doc_id: id.into(),
            text: text.into(),
        }
    }

    fn three_docs() -> Vec<Paragraph> {
        vec![
            para("d1", "the cat sat"),
            para("d2", "the dog sat"),
            para("d3", "cats and dogs"),
        ]
    }

    #[test]
    fn ngram_rules() {
        let sw = Stopwords::english();
        assert_eq!(ngrams("The cat sat", 2, &sw), vec!["cat", "sat", "the cat", "cat sat"]);
        assert!(ngrams("the and", 2, &sw).is_empty());
    }

    #[test]
    fn idf_of_three_doc_corpus() {
        let idx = build_index(&three_docs(), &IndexConfig::default()).unwrap();
        assert_eq!(idx.num_paragraphs(), 3);
        let cat = feature_bin("cat", DEFAULT_HASH_BITS);
        let got = idx.idf_of(cat);
        assert!((got - (2.5f64 / 1.5).ln()).abs() < 1e-15);
        assert!((got - 0.51).abs() < 0.005);
        // "sat" is in 2 of 3 docs: ln(1.5/2.5) < 0, clamped
        assert_eq!(idx.idf_of(feature_bin("sat", DEFAULT_HASH_BITS)), 0.0);
    }

    #[test]
    fn term_in_every_doc_has_zero_idf() {
        let docs = vec![para("a", "apple x"), para("b", "apple y")];
        let idx = build_index(&docs, &IndexConfig::default()).unwrap();
        assert_eq!(idx.idf_of(feature_bin("apple", DEFAULT_HASH_BITS)), 0.0);
        assert!(idx.idf_table().iter().all(|&(_, v)| v >= 0.0));
    }

    #[test]
    fn duplicate_id_is_a_build_error() {
        let docs = vec![para("a", "x"), para("a", "y")];
        match build_index(&docs, &IndexConfig::default()) {
            Err(Error::Build(m)) => assert!(m.contains("\"a\"")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_corpus_is_a_build_error() {
        assert!(build_index(&[para("a", "   ")], &IndexConfig::default()).is_err());
        assert!(build_index(&[], &IndexConfig::default()).is_err());
    }

    #[test]
    fn query_examples() {
        let idx = build_index(&three_docs(), &IndexConfig::default()).unwrap();
        let hits = idx.query("cat sat", 1);
        assert_eq!(hits[0].para_id, "d1");
        let all = idx.query("cat sat", 10);
        assert_eq!(all.len(), 3);
        assert!(all.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(all.iter().all(|h| (0.0..=1.0).contains(&h.score)));
        // zero-score tail ordered by id
        assert_eq!(all[1].para_id, "d2");
        assert!(idx.query("the and", 5).is_empty());
    }

    #[test]
    fn bins_respect_hash_bits() {
        let cfg = IndexConfig {
            hash_bits: 4,
            ..IndexConfig::default()
        };
        let idx = build_index(&three_docs(), &cfg).unwrap();
        assert!((0..3).all(|i| idx.row(i).all(|(b, w)| b < 16 && w.is_finite() && w > 0.0)));
    }
}
