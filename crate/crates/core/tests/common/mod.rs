//! Independent reference implementations and fixture generators shared by the
//! integration tests. Nothing here calls into the retrieval or statistics code
//! it checks.

#![allow(dead_code)]

use std::collections::HashSet;

use ctxprobe::index::Paragraph;
use ctxprobe::probe::{Corpus, Fact};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: &[&str] = &[
    "river", "castle", "music", "paris", "rome", "physics", "painter", "born", "city", "king",
    "queen", "north", "south", "ocean", "mountain", "poet", "novel", "church", "bridge", "river2",
    "the", "of", "in", "and", "a", "was", "is", "to", "at", "by",
];

fn fnv1a32(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c9dc5;
    for b in bytes {
        h ^= *b as u32;
        h = h.wrapping_mul(0x01000193);
    }
    h
}

fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Dense bag of hashed unigram/bigram counts.
fn dense_counts(text: &str, bits: u32, stop: &HashSet<String>) -> Vec<f64> {
    let mut v = vec![0.0; 1 << bits];
    let toks = tokens(text);
    let mask = (1u32 << bits) - 1;
    for (i, t) in toks.iter().enumerate() {
        if !stop.contains(t) {
            v[(fnv1a32(t.as_bytes()) & mask) as usize] += 1.0;
        }
        if let Some(next) = toks.get(i + 1) {
            if !(stop.contains(t) && stop.contains(next)) {
                let g = format!("{t} {next}");
                v[(fnv1a32(g.as_bytes()) & mask) as usize] += 1.0;
            }
        }
    }
    v
}

fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().fold(0.0, |a, x| a + x)
}

/// Brute-force ranker: dense TF-IDF vectors for every paragraph, cosine
/// against the query, sorted by score then id.
pub struct DenseOracle {
    bits: u32,
    stop: HashSet<String>,
    idf: Vec<f64>,
    docs: Vec<(String, Vec<f64>, f64)>,
}

impl DenseOracle {
    pub fn new(paragraphs: &[Paragraph], bits: u32, stop: &HashSet<String>) -> Self {
        let counts: Vec<(&str, Vec<f64>)> = paragraphs
            .iter()
            .filter(|p| !p.text.trim().is_empty())
            .map(|p| (p.para_id.as_str(), dense_counts(&p.text, bits, stop)))
            .collect();
        let n = counts.len() as f64;
        let idf: Vec<f64> = (0..1usize << bits)
            .map(|b| {
                let df = counts.iter().filter(|(_, v)| v[b] > 0.0).count() as f64;
                ((n - df + 0.5) / (df + 0.5)).ln().max(0.0)
            })
            .collect();
        let mut oracle = DenseOracle {
            bits,
            stop: stop.clone(),
            idf,
            docs: Vec::new(),
        };
        oracle.docs = counts
            .iter()
            .map(|(id, c)| {
                let w = oracle.weigh(c);
                let n = norm(&w);
                (id.to_string(), w, n)
            })
            .collect();
        oracle
    }

    fn weigh(&self, counts: &[f64]) -> Vec<f64> {
        counts
            .iter()
            .zip(&self.idf)
            .map(|(&c, &w)| if c > 0.0 { (1.0 + c).ln() * w } else { 0.0 })
            .collect()
    }

    /// `(id, score)` of the best `k` paragraphs.
    pub fn top_k(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let q = self.weigh(&dense_counts(query, self.bits, &self.stop));
        let qn = norm(&q);
        if qn == 0.0 || k == 0 {
            return Vec::new();
        }
        let active: Vec<usize> = (0..q.len()).filter(|&b| q[b] > 0.0).collect();
        let mut scored: Vec<(String, f64)> = self
            .docs
            .iter()
            .map(|(id, d, dn)| {
                let dot = sorted_sum(active.iter().filter(|&&b| d[b] > 0.0).map(|&b| q[b] * d[b]).collect());
                let denom = qn * dn;
                let s = if denom > 0.0 { (dot / denom).min(1.0) } else { 0.0 };
                (id.clone(), s)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }
}

fn norm(v: &[f64]) -> f64 {
    sorted_sum(v.iter().filter(|x| **x > 0.0).map(|x| x * x).collect()).sqrt()
}

pub fn dense_top_k(paragraphs: &[Paragraph], query: &str, bits: u32, k: usize, stop: &HashSet<String>) -> Vec<(String, f64)> {
    DenseOracle::new(paragraphs, bits, stop).top_k(query, k)
}

/// Two-sided sign-test p-values for every split of `n` untied pairs, by
/// counting all `2^n` sign vectors at least as extreme as the observed one.
/// Entry `w` is the p-value for `w` wins and `n - w` losses.
pub fn enumerated_sign_p(n: u32) -> Vec<f64> {
    let mut by_wins = vec![0u64; n as usize + 1];
    for mask in 0u64..(1u64 << n) {
        by_wins[mask.count_ones() as usize] += 1;
    }
    let total = (1u64 << n) as f64;
    (0..=n as usize)
        .map(|w| {
            let m = w.min(n as usize - w);
            let extreme: u64 = (0..=n as usize)
                .filter(|&k| k.min(n as usize - k) <= m)
                .map(|k| by_wins[k])
                .sum();
            extreme as f64 / total
        })
        .collect()
}

/// A random corpus of short paragraphs drawn from [`WORDS`]; some paragraphs
/// are repeated verbatim so score ties occur.
pub fn random_corpus(rng: &mut ChaCha8Rng, max_paragraphs: usize) -> Vec<Paragraph> {
    let n = rng.random_range(5..=max_paragraphs);
    let mut out: Vec<Paragraph> = Vec::with_capacity(n);
    for i in 0..n {
        let text = if i > 0 && rng.random_bool(0.1) {
            out[rng.random_range(0..i)].text.clone()
        } else {
            let len = rng.random_range(3..=15);
            let words: Vec<&str> = (0..len).map(|_| *WORDS.choose(rng).expect("non-empty")).collect();
            let mut s = words.join(" ");
            s.push('.');
            s
        };
        out.push(Paragraph {
            para_id: format!("p{:04}", rng.random_range(0..100_000) * 1000 + i),
            doc_id: format!("d{i}"),
            text,
        });
    }
    out
}

pub fn random_query(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(1..=5);
    (0..len).map(|_| *WORDS.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

/// Facts whose subjects never occur in the corpus and whose answers are
/// corpus words (or, sometimes, a word absent from every paragraph).
pub fn random_facts(rng: &mut ChaCha8Rng, n: usize) -> Vec<Fact> {
    (0..n)
        .map(|i| {
            let answer = if rng.random_bool(0.2) {
                "zeppelin".to_string()
            } else {
                WORDS[..20].choose(rng).expect("non-empty").to_string()
            };
            Fact {
                uuid: format!("f{i:03}"),
                corpus: Corpus::TREx,
                relation: "P0".into(),
                subject: format!("subj{i} {}", WORDS.choose(rng).expect("non-empty")),
                answer,
                cloze_template: "[X] is linked to [Y] .".into(),
                question_template: Some("What is [X] linked to?".into()),
                evidence: None,
            }
        })
        .collect()
}

/// Fraction (in percent) of facts whose answer is a whole token of some paragraph.
pub fn answer_anywhere(paragraphs: &[Paragraph], facts: &[Fact]) -> f64 {
    let present = facts
        .iter()
        .filter(|f| {
            paragraphs.iter().any(|p| {
                p.text
                    .split_whitespace()
                    .any(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).eq_ignore_ascii_case(&f.answer))
            })
        })
        .count();
    100.0 * present as f64 / facts.len() as f64
}

pub fn stopword_set() -> HashSet<String> {
    ctxprobe::text::Stopwords::english().sorted().into_iter().map(str::to_string).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random scoring request over a random candidate vocabulary.
pub fn random_request(rng: &mut ChaCha8Rng, id: usize) -> ctxprobe::scorer::ScoreRequest {
    use ctxprobe::featurize::Mode;
    use ctxprobe::scorer::{ScoreRequest, Vocabulary};
    use rand::seq::SliceRandom;

    let mut pool: Vec<&str> = WORDS[..20].to_vec();
    pool.shuffle(rng);
    let size = rng.random_range(2..=12);
    let vocab = Vocabulary::new(pool[..size].iter().map(|s| s.to_string())).expect("distinct words");
    let query = format!("{} [MASK] {} .", random_query(rng), random_query(rng));
    let context = match rng.random_range(0..4) {
        0 => None,
        1 => Some(String::new()),
        _ => Some(format!("{} {}.", random_query(rng), random_query(rng))),
    };
    let mode = *[Mode::TwoSegment, Mode::OneSegment, Mode::SeparatorOnly].choose(rng).expect("non-empty");
    ScoreRequest {
        id: format!("r{id}"),
        query,
        context,
        mode,
        top_k: rng.random_range(1..=size + 2),
        candidates: std::sync::Arc::new(vocab),
    }
}
