//! Masked-LM scoring contract: a distribution over a candidate vocabulary
//! for the mask position, plus an optional next-sentence probability.

mod mock;
pub mod remote;
pub mod server;
pub mod wire;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::Mode;
use crate::text::{content_words, Stopwords};
pub use crate::vocab::Vocabulary;

pub use mock::{MockKind, MockScorer, PriorTable, DEFAULT_GATE, DEFAULT_LAMBDA};
pub use remote::RemoteScorer;

/// Probability above which a context counts as a "next sentence".
pub const NSP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct ScoreRequest {
    pub id: String,
    pub query: String,
    pub context: Option<String>,
    pub mode: Mode,
    pub candidates: Arc<Vocabulary>,
    pub top_k: usize,
}

impl ScoreRequest {
    /// The context if it carries any text.
    pub fn context_text(&self) -> Option<&str> {
        self.context.as_deref().filter(|c| !c.trim().is_empty())
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Invalid("top_k must be at least 1".into()));
        }
        if self.candidates.is_empty() {
            return Err(Error::Invalid("empty candidate vocabulary".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub fact_uuid: String,
    /// Natural-log probabilities aligned with the request vocabulary.
    pub candidate_logprobs: Vec<f64>,
    pub top_k: Vec<TokenScore>,
    pub nsp_prob: Option<f64>,
    pub argmax_token: String,
}

/// Indices of the `k` best candidates: logprob descending, vocabulary order on ties.
pub(crate) fn rank(logprobs: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..logprobs.len()).collect();
    order.sort_by(|&a, &b| logprobs[b].total_cmp(&logprobs[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

impl Prediction {
    pub fn from_probs(id: &str, vocab: &Vocabulary, probs: &[f64], top_k: usize, nsp_prob: Option<f64>) -> Self {
        let logprobs: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        Self::from_logprobs(id, vocab, logprobs, top_k, nsp_prob)
    }

    pub fn from_logprobs(id: &str, vocab: &Vocabulary, logprobs: Vec<f64>, top_k: usize, nsp_prob: Option<f64>) -> Self {
        let top: Vec<TokenScore> = rank(&logprobs, top_k.max(1))
            .into_iter()
            .map(|i| TokenScore {
                token: vocab.tokens()[i].clone(),
                logprob: logprobs[i],
            })
            .collect();
        Self {
            fact_uuid: id.to_string(),
            argmax_token: top[0].token.clone(),
            candidate_logprobs: logprobs,
            top_k: top,
            nsp_prob,
        }
    }

    pub fn logprob_of(&self, vocab: &Vocabulary, token: &str) -> Option<f64> {
        vocab.position(token).map(|i| self.candidate_logprobs[i])
    }

    /// Check the invariants any scorer must honour.
    pub fn check(&self, vocab: &Vocabulary, top_k: usize) -> std::result::Result<(), String> {
        if self.candidate_logprobs.len() != vocab.len() {
            return Err(format!(
                "{} logprobs for {} candidates",
                self.candidate_logprobs.len(),
                vocab.len()
            ));
        }
        if self.candidate_logprobs.iter().any(|l| l.is_nan() || *l > 1e-12) {
            return Err("logprobs must be finite or -inf and at most 0".into());
        }
        let mass: f64 = self.candidate_logprobs.iter().map(|l| l.exp()).sum();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(format!("candidate probabilities sum to {mass}"));
        }
        if self.top_k.len() != top_k.min(vocab.len()) {
            return Err(format!("top_k has {} entries, expected {}", self.top_k.len(), top_k.min(vocab.len())));
        }
        for ts in &self.top_k {
            match vocab.position(&ts.token) {
                Some(i) if self.candidate_logprobs[i] == ts.logprob => {}
                Some(_) => return Err(format!("top_k logprob for {:?} disagrees", ts.token)),
                None => return Err(format!("top_k token {:?} not a candidate", ts.token)),
            }
        }
        if self.top_k.first().map(|t| &t.token) != Some(&self.argmax_token) {
            return Err("argmax differs from top_k head".into());
        }
        if let Some(p) = self.nsp_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("nsp_prob {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

pub trait Scorer: Send + Sync {
    fn name(&self) -> String;
    fn score(&self, request: &ScoreRequest) -> Result<Prediction>;
}

impl<S: Scorer + ?Sized> Scorer for Arc<S> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn score(&self, request: &ScoreRequest) -> Result<Prediction> {
        (**self).score(request)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn score(&self, request: &ScoreRequest) -> Result<Prediction> {
        (**self).score(request)
    }
}

/// Jaccard overlap of lowercased content-word sets; 0 when both are empty.
pub fn mock_nsp(query: &str, context: &str, stopwords: &Stopwords) -> f64 {
    let q = content_words(query, stopwords);
    let c = content_words(context, stopwords);
    let union = q.union(&c).count();
    if union == 0 {
        return 0.0;
    }
    q.intersection(&c).count() as f64 / union as f64
}

pub fn nsp_classify(prediction: &Prediction) -> Result<bool> {
    prediction
        .nsp_prob
        .map(|p| p > NSP_THRESHOLD)
        .ok_or_else(|| Error::Invalid(format!("prediction {} has no nsp_prob", prediction.fact_uuid)))
}
