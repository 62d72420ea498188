//! Probe facts: JSONL ingestion, cloze and question instantiation,
//! vocabulary filtering and dataset statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::MASK;
use crate::vocab::Vocabulary;

const SUBJECT_SLOT: &str = "[X]";
const OBJECT_SLOT: &str = "[Y]";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum Corpus {
    GoogleRE,
    TREx,
    SQuAD,
    Other(String),
}

impl Corpus {
    pub fn name(&self) -> &str {
        match self {
            Corpus::GoogleRE => "GoogleRE",
            Corpus::TREx => "TREx",
            Corpus::SQuAD => "SQuAD",
            Corpus::Other(n) => n,
        }
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<String> for Corpus {
    fn from(s: String) -> Self {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "googlere" => Corpus::GoogleRE,
            "trex" => Corpus::TREx,
            "squad" => Corpus::SQuAD,
            _ => Corpus::Other(s),
        }
    }
}

impl From<Corpus> for String {
    fn from(c: Corpus) -> Self {
        c.name().to_string()
    }
}

impl FromStr for Corpus {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(Corpus::from(s.to_string()))
    }
}

/// One relational probe item with a single-token answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub uuid: String,
    pub corpus: Corpus,
    pub relation: String,
    pub subject: String,
    pub answer: String,
    pub cloze_template: String,
    pub question_template: Option<String>,
    pub evidence: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationTemplate {
    pub template: String,
    pub question: Option<String>,
}

pub type RelationTemplates = BTreeMap<String, RelationTemplate>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactSet {
    pub facts: Vec<Fact>,
    pub relations: RelationTemplates,
}

/// A per-record ingestion failure. Loading never aborts on these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub uuid: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOutcome {
    pub facts: FactSet,
    pub errors: Vec<RecordError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClozeQuery {
    pub fact_uuid: String,
    pub text: String,
    pub answer: String,
}

#[derive(Deserialize)]
struct EvidenceRecord {
    #[serde(default)]
    text: Option<String>,
}

/// Raw LAMA-layout line. `template`/`question` are per-fact overrides (SQuAD).
#[derive(Deserialize)]
pub struct FactRecord {
    pub uuid: String,
    pub relation: String,
    pub sub_label: String,
    pub obj_label: String,
    #[serde(default)]
    evidences: Option<Vec<EvidenceRecord>>,
    #[serde(default)]
    pub template: Option<String>,
    #[serde(default)]
    pub question: Option<String>,
}

impl FactRecord {
    pub fn evidence(&self) -> Option<String> {
        self.evidences
            .iter()
            .flatten()
            .filter_map(|e| e.text.as_deref())
            .map(str::trim)
            .find(|t| !t.is_empty())
            .map(str::to_string)
    }
}

#[derive(Deserialize)]
struct RelationRecord {
    relation: String,
    template: String,
    #[serde(default)]
    question: Option<String>,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn load_relations(path: &Path) -> Result<RelationTemplates> {
    let mut out = RelationTemplates::new();
    for (line_no, line) in read_lines(path)? {
        let rec: RelationRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Invalid(format!("{}:{line_no}: {e}", path.display()))
        })?;
        check_cloze_template(&rec.template)?;
        out.insert(
            rec.relation,
            RelationTemplate {
                template: rec.template,
                question: rec.question,
            },
        );
    }
    Ok(out)
}

/// Parse raw fact lines, isolating malformed records.
/// Parsed records keyed by 1-based line number.
pub type NumberedRecords = Vec<(usize, FactRecord)>;

pub fn read_fact_records(path: &Path) -> Result<(NumberedRecords, Vec<RecordError>)> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (line, raw) in read_lines(path)? {
        match serde_json::from_str::<FactRecord>(&raw) {
            Ok(r) => records.push((line, r)),
            Err(e) => errors.push(RecordError {
                line,
                uuid: None,
                message: format!("malformed record: {e}"),
            }),
        }
    }
    Ok((records, errors))
}

fn check_cloze_template(t: &str) -> Result<()> {
    let xs = t.matches(SUBJECT_SLOT).count();
    let ys = t.matches(OBJECT_SLOT).count();
    if xs != 1 || ys != 1 {
        return Err(Error::Template(format!(
            "{t:?} must contain exactly one {SUBJECT_SLOT} and one {OBJECT_SLOT}"
        )));
    }
    Ok(())
}

pub fn load_facts(path: &Path, corpus: Corpus, relations: &RelationTemplates) -> Result<LoadOutcome> {
    let (records, mut errors) = read_fact_records(path)?;
    let mut set = FactSet::default();
    let mut seen = HashSet::new();
    for (line, rec) in records {
        let err = |message: String| RecordError {
            line,
            uuid: Some(rec.uuid.clone()),
            message,
        };
        if !seen.insert(rec.uuid.clone()) {
            warn!("{}:{line}: duplicate uuid {}, later record rejected", path.display(), rec.uuid);
            errors.push(err("duplicate uuid".into()));
            continue;
        }
        let answer = rec.obj_label.trim();
        if answer.is_empty() || answer.chars().any(char::is_whitespace) {
            errors.push(err(format!("answer {:?} is not a single token", rec.obj_label)));
            continue;
        }
        let shared = relations.get(&rec.relation);
        let Some(cloze) = rec.template.clone().or_else(|| shared.map(|r| r.template.clone())) else {
            errors.push(err(format!("no template for relation {}", rec.relation)));
            continue;
        };
        if let Err(e) = check_cloze_template(&cloze) {
            errors.push(err(e.to_string()));
            continue;
        }
        let question = rec
            .question
            .clone()
            .or_else(|| shared.and_then(|r| r.question.clone()));
        set.relations
            .entry(rec.relation.clone())
            .or_insert_with(|| RelationTemplate {
                template: cloze.clone(),
                question: question.clone(),
            });
        set.facts.push(Fact {
            evidence: rec.evidence(),
            uuid: rec.uuid,
            corpus: corpus.clone(),
            relation: rec.relation,
            subject: rec.sub_label,
            answer: answer.to_string(),
            cloze_template: cloze,
            question_template: question,
        });
    }
    Ok(LoadOutcome { facts: set, errors })
}

impl FactSet {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn get(&self, uuid: &str) -> Option<&Fact> {
        self.facts.iter().find(|f| f.uuid == uuid)
    }

    /// Append another set. Facts whose uuid is already present are returned as rejects.
    pub fn extend(&mut self, other: FactSet) -> Vec<String> {
        let mut seen: HashSet<String> = self.facts.iter().map(|f| f.uuid.clone()).collect();
        let mut rejected = Vec::new();
        for f in other.facts {
            if seen.insert(f.uuid.clone()) {
                self.facts.push(f);
            } else {
                rejected.push(f.uuid);
            }
        }
        for (k, v) in other.relations {
            self.relations.entry(k).or_insert(v);
        }
        rejected
    }
}

pub fn instantiate_cloze(fact: &Fact) -> Result<ClozeQuery> {
    check_cloze_template(&fact.cloze_template)?;
    let text = fact
        .cloze_template
        .replace(OBJECT_SLOT, MASK)
        .replace(SUBJECT_SLOT, &fact.subject);
    Ok(ClozeQuery {
        fact_uuid: fact.uuid.clone(),
        text,
        answer: fact.answer.clone(),
    })
}

pub fn to_natural_question(fact: &Fact) -> Result<String> {
    let template = fact
        .question_template
        .as_deref()
        .ok_or_else(|| Error::MissingTemplate {
            relation: fact.relation.clone(),
        })?;
    if !template.contains(SUBJECT_SLOT) {
        return Err(Error::Template(format!("question {template:?} lacks {SUBJECT_SLOT}")));
    }
    let mut q = template.replace(SUBJECT_SLOT, &fact.subject).trim_end().to_string();
    if !q.ends_with('?') {
        q.push('?');
    }
    Ok(q)
}

#[derive(Debug, Clone)]
pub struct Filtered {
    pub facts: FactSet,
    pub removed_fraction: f64,
}

pub fn filter_by_vocab(facts: &FactSet, vocab: &Vocabulary) -> Filtered {
    let kept: Vec<Fact> = facts
        .facts
        .iter()
        .filter(|f| vocab.contains(&f.answer))
        .cloned()
        .collect();
    let used: HashSet<&str> = kept.iter().map(|f| f.relation.as_str()).collect();
    let relations = facts
        .relations
        .iter()
        .filter(|(k, _)| used.contains(k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let removed_fraction = if facts.is_empty() {
        0.0
    } else {
        (facts.len() - kept.len()) as f64 / facts.len() as f64
    };
    Filtered {
        facts: FactSet {
            facts: kept,
            relations,
        },
        removed_fraction,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub facts: usize,
    pub relations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub per_relation: BTreeMap<Corpus, BTreeMap<String, usize>>,
    pub per_corpus: BTreeMap<Corpus, CorpusStats>,
    pub total: usize,
}

impl DatasetStats {
    /// Tally `(corpus, relation)` pairs, one per fact.
    pub fn from_pairs<I: IntoIterator<Item = (Corpus, String)>>(pairs: I) -> Self {
        let mut stats = DatasetStats::default();
        for (corpus, relation) in pairs {
            *stats.per_relation.entry(corpus).or_default().entry(relation).or_default() += 1;
            stats.total += 1;
        }
        for (corpus, rels) in &stats.per_relation {
            stats.per_corpus.insert(
                corpus.clone(),
                CorpusStats {
                    facts: rels.values().sum(),
                    relations: rels.len(),
                },
            );
        }
        stats
    }
}

pub fn dataset_stats(facts: &FactSet) -> DatasetStats {
    DatasetStats::from_pairs(facts.facts.iter().map(|f| (f.corpus.clone(), f.relation.clone())))
}
