//! Deterministic stand-ins for a masked LM.
//!
//! * `uniform`: every candidate gets `1/|V|`.
//! * `prior`: candidates follow a unigram frequency table.
//! * `copy`: mixes the prior with the candidate counts found in the context,
//!   `P(t) = lambda * count(t) / total + (1 - lambda) * prior(t)`. With a
//!   separator (two_segment, separator_only) the context is only consulted
//!   when its overlap NSP exceeds the gate; in one_segment it always is.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{mock_nsp, Prediction, ScoreRequest, Scorer};
use crate::error::{Error, Result};
use crate::text::{match_key, match_keys, Stopwords};
use crate::vocab::Vocabulary;

pub const DEFAULT_LAMBDA: f64 = 0.9;
pub const DEFAULT_GATE: f64 = 0.5;

/// Unigram frequencies. Every scored candidate needs positive mass.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorTable {
    counts: HashMap<String, f64>,
}

impl PriorTable {
    pub fn new(counts: HashMap<String, f64>) -> Result<Self> {
        if let Some((t, c)) = counts.iter().find(|(_, c)| !c.is_finite() || **c < 0.0) {
            return Err(Error::Invalid(format!("prior count for {t:?} is {c}")));
        }
        Ok(Self { counts })
    }

    /// Lines of `token<TAB>count`.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut counts = HashMap::new();
        for (i, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (tok, count) = line
                .split_once(['\t', ' '])
                .ok_or_else(|| Error::Invalid(format!("{}:{}: expected token and count", path.display(), i + 1)))?;
            let count: f64 = count
                .trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("{}:{}: bad count", path.display(), i + 1)))?;
            counts.insert(tok.to_string(), count);
        }
        Self::new(counts)
    }

    pub fn distribution(&self, vocab: &Vocabulary) -> Result<Vec<f64>> {
        let raw: Vec<f64> = vocab
            .tokens()
            .iter()
            .map(|t| self.counts.get(t).copied().unwrap_or(0.0))
            .collect();
        if let Some(i) = raw.iter().position(|&c| c <= 0.0) {
            return Err(Error::Invalid(format!(
                "candidate {:?} has no prior mass",
                vocab.tokens()[i]
            )));
        }
        let total: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|c| c / total).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MockKind {
    Uniform,
    Prior {
        table: PriorTable,
    },
    Copy {
        lambda: f64,
        gate: f64,
        /// Uniform when absent.
        #[serde(default)]
        prior: Option<PriorTable>,
    },
}

impl MockKind {
    pub fn copy() -> Self {
        MockKind::Copy {
            lambda: DEFAULT_LAMBDA,
            gate: DEFAULT_GATE,
            prior: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockScorer {
    kind: MockKind,
    stopwords: Stopwords,
}

impl MockScorer {
    pub fn new(kind: MockKind) -> Result<Self> {
        if let MockKind::Copy { lambda, gate, .. } = &kind {
            if !(0.0..=1.0).contains(lambda) || !(0.0..=1.0).contains(gate) {
                return Err(Error::Invalid(format!("copy mock needs lambda and gate in [0, 1], got {lambda}, {gate}")));
            }
        }
        Ok(Self {
            kind,
            stopwords: Stopwords::english(),
        })
    }

    pub fn uniform() -> Self {
        Self::new(MockKind::Uniform).expect("valid")
    }

    pub fn copy() -> Self {
        Self::new(MockKind::copy()).expect("valid")
    }

    pub fn kind(&self) -> &MockKind {
        &self.kind
    }

    fn prior(&self, prior: Option<&PriorTable>, vocab: &Vocabulary) -> Result<Vec<f64>> {
        match prior {
            Some(table) => table.distribution(vocab),
            None => Ok(vec![1.0 / vocab.len() as f64; vocab.len()]),
        }
    }

    /// Occurrences of each candidate among the context tokens.
    fn context_counts(vocab: &Vocabulary, context: &str) -> Vec<f64> {
        let mut by_key: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, t) in vocab.tokens().iter().enumerate() {
            by_key.entry(match_key(t)).or_default().push(i);
        }
        let mut counts = vec![0.0; vocab.len()];
        for key in match_keys(context) {
            if let Some(ix) = by_key.get(&key) {
                for &i in ix {
                    counts[i] += 1.0;
                }
            }
        }
        counts
    }
}

impl Scorer for MockScorer {
    fn name(&self) -> String {
        match &self.kind {
            MockKind::Uniform => "mock-uniform".into(),
            MockKind::Prior { .. } => "mock-prior".into(),
            MockKind::Copy { lambda, gate, .. } => format!("mock-copy(lambda={lambda},gate={gate})"),
        }
    }

    fn score(&self, req: &ScoreRequest) -> Result<Prediction> {
        req.validate()?;
        let vocab = req.candidates.as_ref();
        let context = req.context_text();
        let nsp = context.map(|c| mock_nsp(&req.query, c, &self.stopwords));
        let probs = match &self.kind {
            MockKind::Uniform => self.prior(None, vocab)?,
            MockKind::Prior { table } => self.prior(Some(table), vocab)?,
            MockKind::Copy { lambda, gate, prior } => {
                let prior = self.prior(prior.as_ref(), vocab)?;
                let open = match (context, nsp) {
                    (Some(_), Some(p)) => !req.mode.separates() || p > *gate,
                    _ => false,
                };
                let counts = match context {
                    Some(c) if open => Self::context_counts(vocab, c),
                    _ => Vec::new(),
                };
                let total: f64 = counts.iter().sum();
                if total > 0.0 {
                    counts
                        .iter()
                        .zip(&prior)
                        .map(|(c, p)| lambda * c / total + (1.0 - lambda) * p)
                        .collect()
                } else {
                    prior
                }
            }
        };
        Ok(Prediction::from_probs(&req.id, vocab, &probs, req.top_k, nsp))
    }
}
