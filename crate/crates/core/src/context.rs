//! Per-fact contexts: oracle evidence, retrieved paragraph, same-relation
//! adversarial evidence and imported generations.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{ParagraphStore, TfidfIndex};
use crate::probe::{instantiate_cloze, to_natural_question, Fact, FactSet};
use crate::text::{fnv1a_64, match_key, match_keys, MASK};

pub const DEFAULT_MAX_SENTENCES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    None,
    Oracle,
    Retrieved,
    Adversarial,
    Generated,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::None,
        Strategy::Oracle,
        Strategy::Retrieved,
        Strategy::Adversarial,
        Strategy::Generated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Oracle => "oracle",
            Strategy::Retrieved => "retrieved",
            Strategy::Adversarial => "adversarial",
            Strategy::Generated => "generated",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    #[default]
    Question,
    Cloze,
}

impl FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "question" => Ok(QueryMode::Question),
            "cloze" => Ok(QueryMode::Cloze),
            _ => Err(Error::Invalid(format!("unknown query mode {s:?}"))),
        }
    }
}

/// One line of a contexts file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    #[serde(rename = "uuid")]
    pub fact_uuid: String,
    pub strategy: Strategy,
    pub text: String,
    /// Paragraph id, donor fact uuid or generation batch id.
    pub source_id: String,
    pub answer_present: bool,
}

impl Context {
    pub fn none(fact: &Fact) -> Self {
        Self {
            fact_uuid: fact.uuid.clone(),
            strategy: Strategy::None,
            text: String::new(),
            source_id: String::new(),
            answer_present: false,
        }
    }

    /// A retrieval that returned nothing.
    pub fn is_miss(&self) -> bool {
        self.strategy == Strategy::Retrieved && self.text.is_empty()
    }

    fn new(fact: &Fact, strategy: Strategy, text: String, source_id: String) -> Self {
        let answer_present = answer_in_text(&text, &fact.answer);
        Self {
            fact_uuid: fact.uuid.clone(),
            strategy,
            text,
            source_id,
            answer_present,
        }
    }
}

/// Token-level membership: some whitespace token of `text` equals `answer`
/// after lowercasing and trimming edge punctuation on both sides.
pub fn answer_in_text(text: &str, answer: &str) -> bool {
    let key = match_key(answer);
    !key.is_empty() && match_keys(text).any(|t| t == key)
}

pub fn answer_in_context(context: &Context, answer: &str) -> bool {
    answer_in_text(&context.text, answer)
}

/// Split after `.`, `!` or `?` when followed by whitespace and then an
/// uppercase letter, or by the end of the text.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let end = pos + c.len_utf8();
        let rest = &chars[i + 1..];
        let boundary = match rest.first() {
            None => true,
            Some(&(_, n)) if n.is_whitespace() => match rest.iter().find(|(_, ch)| !ch.is_whitespace()) {
                None => true,
                Some(&(_, ch)) => ch.is_uppercase(),
            },
            _ => false,
        };
        if boundary {
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

pub fn truncate_sentences(text: &str, max_sentences: usize) -> String {
    split_sentences(text)
        .into_iter()
        .take(max_sentences)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn oracle_context(fact: &Fact, max_sentences: usize) -> Result<Context> {
    let evidence = fact
        .evidence
        .as_deref()
        .filter(|e| !e.trim().is_empty())
        .ok_or_else(|| Error::MissingEvidence {
            uuid: fact.uuid.clone(),
        })?;
    let text = truncate_sentences(evidence, max_sentences);
    Ok(Context::new(fact, Strategy::Oracle, text, fact.uuid.clone()))
}

/// Text sent to the retriever for a fact.
pub fn retrieval_query(fact: &Fact, mode: QueryMode) -> Result<String> {
    match mode {
        QueryMode::Question => to_natural_question(fact),
        QueryMode::Cloze => Ok(instantiate_cloze(fact)?.text.replace(MASK, " ")),
    }
}

/// Top-ranked paragraph overall. A query with no usable features yields an
/// empty Retrieved context (see [`Context::is_miss`]).
pub fn retrieved_context(
    fact: &Fact,
    index: &TfidfIndex,
    store: &ParagraphStore,
    mode: QueryMode,
) -> Result<Context> {
    let query = retrieval_query(fact, mode)?;
    let (text, source) = match index.query(&query, 1).into_iter().next() {
        Some(hit) => {
            let p = store.get(&hit.para_id).ok_or_else(|| {
                Error::Invalid(format!("index paragraph {} missing from corpus", hit.para_id))
            })?;
            (p.text.clone(), hit.para_id)
        }
        None => (String::new(), String::new()),
    };
    Ok(Context::new(fact, Strategy::Retrieved, text, source))
}

fn donor_rng(seed: u64, uuid: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a_64(uuid.as_bytes()))
}

/// Facts that may lend their evidence to `fact`: same relation, different
/// uuid and answer, non-empty evidence. Order follows the fact set.
pub fn eligible_donors<'a>(fact: &Fact, facts: &'a FactSet) -> Vec<&'a Fact> {
    facts
        .facts
        .iter()
        .filter(|d| {
            d.relation == fact.relation
                && d.uuid != fact.uuid
                && d.answer != fact.answer
                && d.evidence.as_deref().is_some_and(|e| !e.trim().is_empty())
        })
        .collect()
}

/// Oracle context of a uniformly drawn donor. The draw uses a stream seeded
/// by `seed ^ fnv1a_64(uuid)` so it does not depend on processing order.
pub fn adversarial_context(fact: &Fact, facts: &FactSet, seed: u64, max_sentences: usize) -> Result<Context> {
    let donors = eligible_donors(fact, facts);
    if donors.is_empty() {
        return Err(Error::NoDonor {
            uuid: fact.uuid.clone(),
            relation: fact.relation.clone(),
        });
    }
    let pick = donor_rng(seed, &fact.uuid).random_range(0..donors.len());
    let donor = donors[pick];
    let borrowed = oracle_context(donor, max_sentences)?;
    Ok(Context::new(fact, Strategy::Adversarial, borrowed.text, donor.uuid.clone()))
}

#[derive(Deserialize)]
struct GeneratedRecord {
    uuid: String,
    text: String,
}

#[derive(Debug, Clone, Default)]
pub struct GeneratedImport {
    pub contexts: BTreeMap<String, Context>,
    /// Facts with no generated entry.
    pub missing: Vec<String>,
    pub unknown: Vec<String>,
    pub duplicates: Vec<String>,
}

/// Read JSONL `{"uuid", "text"}` produced by an external generator.
pub fn import_generated(path: &Path, facts: &FactSet) -> Result<GeneratedImport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let batch = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let by_uuid: BTreeMap<&str, &Fact> = facts.facts.iter().map(|f| (f.uuid.as_str(), f)).collect();
    let mut out = GeneratedImport::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GeneratedRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let Some(fact) = by_uuid.get(rec.uuid.as_str()) else {
            warn!("generated entry for unknown uuid {}", rec.uuid);
            out.unknown.push(rec.uuid);
            continue;
        };
        if out.contexts.contains_key(&rec.uuid) {
            warn!("duplicate generated entry for {}, keeping the first", rec.uuid);
            out.duplicates.push(rec.uuid);
            continue;
        }
        let ctx = Context::new(fact, Strategy::Generated, rec.text, batch.clone());
        out.contexts.insert(rec.uuid, ctx);
    }
    out.missing = facts
        .facts
        .iter()
        .filter(|f| !out.contexts.contains_key(&f.uuid))
        .map(|f| f.uuid.clone())
        .collect();
    Ok(out)
}

/// Inputs the strategies draw on. Missing sources make the strategy fail globally.
#[derive(Clone, Copy, Default)]
pub struct ContextSources<'a> {
    pub retriever: Option<(&'a TfidfIndex, &'a ParagraphStore)>,
    pub generated: Option<&'a GeneratedImport>,
    pub query_mode: QueryMode,
    pub max_sentences: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub uuid: String,
    pub strategy: Strategy,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ContextBatch {
    pub contexts: Vec<Context>,
    pub skipped: Vec<Skip>,
}

/// Build one context per fact for `strategy`, or a skip entry explaining why not.
pub fn build_contexts(facts: &FactSet, strategy: Strategy, sources: &ContextSources<'_>) -> Result<ContextBatch> {
    if strategy == Strategy::Retrieved && sources.retriever.is_none() {
        return Err(Error::Validation("retrieved contexts need an index and corpus".into()));
    }
    if strategy == Strategy::Generated && sources.generated.is_none() {
        return Err(Error::Validation("generated contexts need an imported generation file".into()));
    }
    let max_sentences = if sources.max_sentences == 0 {
        DEFAULT_MAX_SENTENCES
    } else {
        sources.max_sentences
    };
    let results: Vec<Result<Context>> = facts
        .facts
        .par_iter()
        .map(|fact| match strategy {
            Strategy::None => Ok(Context::none(fact)),
            Strategy::Oracle => oracle_context(fact, max_sentences),
            Strategy::Retrieved => {
                let (index, store) = sources.retriever.expect("checked above");
                retrieved_context(fact, index, store, sources.query_mode)
            }
            Strategy::Adversarial => adversarial_context(fact, facts, sources.seed, max_sentences),
            Strategy::Generated => sources
                .generated
                .and_then(|g| g.contexts.get(&fact.uuid).cloned())
                .ok_or_else(|| Error::Invalid("no generated entry".into())),
        })
        .collect();
    let mut batch = ContextBatch::default();
    for (fact, r) in facts.facts.iter().zip(results) {
        match r {
            Ok(c) => batch.contexts.push(c),
            Err(e) => batch.skipped.push(Skip {
                uuid: fact.uuid.clone(),
                strategy,
                reason: e.to_string(),
            }),
        }
    }
    Ok(batch)
}

pub fn write_contexts(path: &Path, contexts: &[Context]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for c in contexts {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_contexts(path: &Path) -> Result<Vec<Context>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Unique uuids in `contexts` that are not in `facts`.
pub fn orphan_uuids(contexts: &[Context], facts: &FactSet) -> Vec<String> {
    let known: HashSet<&str> = facts.facts.iter().map(|f| f.uuid.as_str()).collect();
    let mut out: Vec<String> = contexts
        .iter()
        .filter(|c| !known.contains(c.fact_uuid.as_str()))
        .map(|c| c.fact_uuid.clone())
        .collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{build_index, IndexConfig, Paragraph};
    use crate::probe::Corpus;

    fn fact(uuid: &str, relation: &str, answer: &str, evidence: Option<&str>) -> Fact {
        Fact {
            uuid: uuid.into(),
            corpus: Corpus::TREx,
            relation: relation.into(),
            subject: format!("Subject{uuid}"),
            answer: answer.into(),
            cloze_template: "[X] lives in [Y] .".into(),
            question_template: Some("Where does [X] live?".into()),
            evidence: evidence.map(str::to_string),
        }
    }

    #[test]
    fn answer_matching_examples() {
        assert!(answer_in_text("He was born in Paris, France.", "Paris"));
        assert!(!answer_in_text("He lives in Parisian suburbs.", "Paris"));
        assert!(!answer_in_text("", "Paris"));
        assert!(answer_in_text("paris", "PARIS."));
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(split_sentences("A b. C d! E f? G"), vec!["A b.", "C d!", "E f?", "G"]);
        // no split before lowercase or without whitespace
        assert_eq!(split_sentences("Born in St. louis. Then x.y. Done."), vec![
            "Born in St. louis.",
            "Then x.y.",
            "Done."
        ]);
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn oracle_truncates_to_five() {
        let eight = (1..=8).map(|i| format!("Sentence {i}.")).collect::<Vec<_>>().join("  ");
        let f = fact("1", "r", "x", Some(&eight));
        let c = oracle_context(&f, 5).unwrap();
        assert_eq!(split_sentences(&c.text).len(), 5);
        assert_eq!(c.text, "Sentence 1. Sentence 2. Sentence 3. Sentence 4. Sentence 5.");

        let f = fact("2", "r", "x", Some("One here. Two there."));
        assert_eq!(oracle_context(&f, 5).unwrap().text, "One here. Two there.");

        let f = fact("3", "r", "x", None);
        assert!(matches!(oracle_context(&f, 5), Err(Error::MissingEvidence { uuid }) if uuid == "3"));
    }

    #[test]
    fn adversarial_forced_choice_and_no_donor() {
        let set = FactSet {
            facts: vec![
                fact("a", "cap", "Paris", Some("It is Paris.")),
                fact("b", "cap", "Rome", Some("It is Rome.")),
                fact("c", "solo", "Oslo", Some("It is Oslo.")),
            ],
            ..Default::default()
        };
        let ca = adversarial_context(&set.facts[0], &set, 7, 5).unwrap();
        assert_eq!(ca.source_id, "b");
        assert!(!ca.answer_present);
        let cb = adversarial_context(&set.facts[1], &set, 7, 5).unwrap();
        assert_eq!(cb.source_id, "a");
        assert!(matches!(
            adversarial_context(&set.facts[2], &set, 7, 5),
            Err(Error::NoDonor { .. })
        ));
    }

    #[test]
    fn adversarial_requires_evidence_and_distinct_answer() {
        let set = FactSet {
            facts: vec![
                fact("a", "cap", "Paris", Some("It is Paris.")),
                fact("b", "cap", "Paris", Some("Also Paris.")),
                fact("c", "cap", "Rome", None),
            ],
            ..Default::default()
        };
        assert!(eligible_donors(&set.facts[0], &set).is_empty());
    }

    #[test]
    fn retrieval_self_hit_and_miss() {
        let paras = vec![
            Paragraph { para_id: "p1".into(), doc_id: "d".into(), text: "Subjecta lives in Paris.".into() },
            Paragraph { para_id: "p2".into(), doc_id: "d".into(), text: "Unrelated text about rivers.".into() },
        ];
        let store = ParagraphStore::new(paras.clone()).unwrap();
        let idx = build_index(&paras, &IndexConfig::default()).unwrap();
        let f = fact("a", "r", "Paris", None);
        let c = retrieved_context(&f, &idx, &store, QueryMode::Question).unwrap();
        assert_eq!(c.source_id, "p1");
        assert!(c.answer_present);

        let mut stop = f.clone();
        stop.subject = "it".into();
        stop.question_template = Some("Where does [X] do?".into());
        let c = retrieved_context(&stop, &idx, &store, QueryMode::Question).unwrap();
        assert!(c.is_miss());
    }

    #[test]
    fn generated_import_reports_gaps() {
        let set = FactSet {
            facts: vec![fact("a", "r", "x", None), fact("b", "r", "y", None)],
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gen.jsonl");
        std::fs::write(
            &p,
            "{\"uuid\":\"a\",\"text\":\"first x\"}\n{\"uuid\":\"a\",\"text\":\"second\"}\n{\"uuid\":\"zz\",\"text\":\"?\"}\n",
        )
        .unwrap();
        let g = import_generated(&p, &set).unwrap();
        assert_eq!(g.contexts.len(), 1);
        assert_eq!(g.contexts["a"].text, "first x");
        assert!(g.contexts["a"].answer_present);
        assert_eq!(g.duplicates, vec!["a"]);
        assert_eq!(g.unknown, vec!["zz"]);
        assert_eq!(g.missing, vec!["b"]);

        std::fs::write(&p, "").unwrap();
        assert!(import_generated(&p, &set).unwrap().contexts.is_empty());
    }

    #[test]
    fn build_contexts_records_skips() {
        let set = FactSet {
            facts: vec![fact("a", "r", "x", Some("X here.")), fact("b", "r", "y", None)],
            ..Default::default()
        };
        let src = ContextSources::default();
        let batch = build_contexts(&set, Strategy::Oracle, &src).unwrap();
        assert_eq!(batch.contexts.len() + batch.skipped.len(), 2);
        assert_eq!(batch.skipped[0].uuid, "b");
        assert!(build_contexts(&set, Strategy::Retrieved, &src).is_err());
    }
}
