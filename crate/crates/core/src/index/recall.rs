use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ParagraphStore, TfidfIndex};
use crate::context::answer_in_text;
use crate::probe::Fact;

/// `(k, recall %)` for k = 1..=k_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub points: Vec<(usize, f64)>,
}

impl RecallCurve {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.points.iter().find(|p| p.0 == k).map(|p| p.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,recall\n");
        for (k, r) in &self.points {
            s.push_str(&format!("{k},{r}\n"));
        }
        s
    }
}

/// Percentage of facts whose answer appears in at least one of the top-k
/// paragraphs retrieved for `query_fn(fact)`.
pub fn recall_at_k<F>(
    index: &TfidfIndex,
    store: &ParagraphStore,
    facts: &[Fact],
    query_fn: F,
    k_max: usize,
) -> RecallCurve
where
    F: Fn(&Fact) -> String + Sync,
{
    let first_hit: Vec<Option<usize>> = facts
        .par_iter()
        .map(|f| {
            index
                .query(&query_fn(f), k_max)
                .iter()
                .position(|h| {
                    store
                        .get(&h.para_id)
                        .is_some_and(|p| answer_in_text(&p.text, &f.answer))
                })
                .map(|r| r + 1)
        })
        .collect();

    let mut hits_at = vec![0usize; k_max + 1];
    for r in first_hit.into_iter().flatten() {
        hits_at[r] += 1;
    }
    let mut cumulative = 0;
    let points = (1..=k_max)
        .map(|k| {
            cumulative += hits_at[k];
            let pct = if facts.is_empty() {
                0.0
            } else {
                100.0 * cumulative as f64 / facts.len() as f64
            };
            (k, pct)
        })
        .collect();
    RecallCurve { points }
}
