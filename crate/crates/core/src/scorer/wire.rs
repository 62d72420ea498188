//! JSON bodies for `POST /v1/score` and `GET /v1/health`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Prediction, ScoreRequest, TokenScore};
use crate::error::Result;
use crate::featurize::Mode;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRequest {
    pub id: String,
    pub query: String,
    pub context: Option<String>,
    pub mode: Mode,
    pub candidates: Vec<String>,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub id: String,
    pub candidate_logprobs: Vec<f64>,
    pub top_k: Vec<TokenScore>,
    pub nsp_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    pub error: String,
}

impl From<&ScoreRequest> for WireRequest {
    fn from(r: &ScoreRequest) -> Self {
        Self {
            id: r.id.clone(),
            query: r.query.clone(),
            context: r.context.clone(),
            mode: r.mode,
            candidates: r.candidates.tokens().to_vec(),
            top_k: r.top_k,
        }
    }
}

impl WireRequest {
    pub fn into_request(self) -> Result<ScoreRequest> {
        let req = ScoreRequest {
            id: self.id,
            query: self.query,
            context: self.context,
            mode: self.mode,
            candidates: Arc::new(Vocabulary::new(self.candidates)?),
            top_k: self.top_k,
        };
        req.validate()?;
        Ok(req)
    }
}

impl From<Prediction> for WireResponse {
    fn from(p: Prediction) -> Self {
        Self {
            id: p.fact_uuid,
            candidate_logprobs: p.candidate_logprobs,
            top_k: p.top_k,
            nsp_prob: p.nsp_prob,
        }
    }
}

impl WireResponse {
    pub fn into_prediction(self) -> Prediction {
        let argmax_token = self.top_k.first().map(|t| t.token.clone()).unwrap_or_default();
        Prediction {
            fact_uuid: self.id,
            candidate_logprobs: self.candidate_logprobs,
            top_k: self.top_k,
            nsp_prob: self.nsp_prob,
            argmax_token,
        }
    }
}
