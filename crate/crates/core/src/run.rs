//! End-to-end runs: load probe, build contexts, score every (fact, strategy)
//! pair plus a context-free baseline, and write predictions, a report and a
//! manifest.
//!
//! Scoring appends to `predictions/<strategy>.partial.jsonl` as results
//! arrive. A rerun with the same configuration skips uuids already present
//! there, so an interrupted run resumes where it stopped. Finished files are
//! rewritten sorted by uuid, which makes them independent of concurrency.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::context::{build_contexts, import_generated, retrieval_query, write_contexts, Context, ContextSources, QueryMode, Skip, Strategy, DEFAULT_MAX_SENTENCES};
use crate::error::{Error, Result};
use crate::eval::{evaluate, report::write_report, write_records, RunRecord};
use crate::featurize::Mode;
use crate::index::{build_index, load_index, recall_at_k, IndexConfig, ParagraphStore, TfidfIndex};
use crate::probe::{dataset_stats, filter_by_vocab, instantiate_cloze, load_facts, load_relations, Corpus, Fact, FactSet, RecordError};
use crate::scorer::{MockKind, MockScorer, PriorTable, RemoteScorer, ScoreRequest, Scorer, DEFAULT_GATE, DEFAULT_LAMBDA};
use crate::vocab::Vocabulary;

pub const SEED_ENV: &str = "CTXPROBE_SEED";
const CONTEXT_HEAD_CHARS: usize = 200;
const MANIFEST_FLUSH_EVERY: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactSource {
    pub path: PathBuf,
    pub corpus: Corpus,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn default_gate() -> f64 {
    DEFAULT_GATE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScorerSpec {
    Uniform,
    Prior {
        prior: PathBuf,
    },
    Copy {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_gate")]
        gate: f64,
        #[serde(default)]
        prior: Option<PathBuf>,
    },
    /// Endpoint falls back to `CTXPROBE_ENDPOINT`.
    Remote {
        #[serde(default)]
        endpoint: Option<String>,
    },
}

impl ScorerSpec {
    pub fn build(&self, max_in_flight: usize) -> Result<Arc<dyn Scorer>> {
        Ok(match self {
            ScorerSpec::Uniform => Arc::new(MockScorer::uniform()),
            ScorerSpec::Prior { prior } => Arc::new(MockScorer::new(MockKind::Prior {
                table: PriorTable::load(prior)?,
            })?),
            ScorerSpec::Copy { lambda, gate, prior } => Arc::new(MockScorer::new(MockKind::Copy {
                lambda: *lambda,
                gate: *gate,
                prior: prior.as_deref().map(PriorTable::load).transpose()?,
            })?),
            ScorerSpec::Remote { endpoint: Some(ep) } => Arc::new(RemoteScorer::new(ep, max_in_flight)?),
            ScorerSpec::Remote { endpoint: None } => Arc::new(RemoteScorer::from_env(max_in_flight)?),
        })
    }
}

fn default_concurrency() -> usize {
    8
}
fn default_max_sentences() -> usize {
    DEFAULT_MAX_SENTENCES
}
fn default_top_k() -> usize {
    10
}
fn default_recall_k() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub facts: Vec<FactSource>,
    pub relations: PathBuf,
    pub vocab: PathBuf,
    /// Paragraph JSONL; needed for retrieved contexts.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// Saved index. Built from `corpus` when absent.
    #[serde(default)]
    pub index: Option<PathBuf>,
    #[serde(default)]
    pub generated: Option<PathBuf>,
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub mode: Mode,
    pub scorer: ScorerSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub query_mode: QueryMode,
    #[serde(default = "default_max_sentences")]
    pub max_sentences: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_recall_k")]
    pub recall_k: usize,
}

/// Set `dotted.key` in a JSON tree; the value is parsed as JSON when it can be.
fn set_path(root: &mut serde_json::Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Validation(format!("cannot set {key}: {part} is not inside an object")))?;
        if i == parts.len() - 1 {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

impl RunConfig {
    /// Read a JSON config, apply `key=value` overrides and resolve relative
    /// paths against the config file's directory. `CTXPROBE_SEED` replaces the
    /// file's seed; an explicit `seed=` override wins over both.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tree: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            set_path(&mut tree, "seed", &seed)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("override {o:?} is not key=value")))?;
            set_path(&mut tree, k.trim(), v.trim())?;
        }
        let mut cfg: RunConfig =
            serde_json::from_value(tree).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for f in &mut self.facts {
            fix(&mut f.path);
        }
        fix(&mut self.relations);
        fix(&mut self.vocab);
        fix(&mut self.out_dir);
        for p in [&mut self.corpus, &mut self.index, &mut self.generated].into_iter().flatten() {
            fix(p);
        }
        match &mut self.scorer {
            ScorerSpec::Prior { prior } => fix(prior),
            ScorerSpec::Copy { prior: Some(p), .. } => fix(p),
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.strategies.is_empty() {
            problems.push("strategies is empty".to_string());
        }
        if self.facts.is_empty() {
            problems.push("no fact files".to_string());
        }
        if self.concurrency == 0 || self.top_k == 0 {
            problems.push("concurrency and top_k must be positive".to_string());
        }
        let mut need = |p: &Path, what: &str| {
            if !p.is_file() {
                problems.push(format!("{what} {} does not exist", p.display()));
            }
        };
        for f in &self.facts {
            need(&f.path, "facts file");
        }
        need(&self.relations, "relations file");
        need(&self.vocab, "vocab file");
        if let Some(p) = &self.index {
            need(p, "index");
        }
        if let Some(p) = &self.corpus {
            need(p, "corpus");
        }
        if let Some(p) = &self.generated {
            need(p, "generated file");
        }
        match &self.scorer {
            ScorerSpec::Prior { prior } | ScorerSpec::Copy { prior: Some(prior), .. } => need(prior, "prior table"),
            _ => {}
        }
        if self.strategies.contains(&Strategy::Retrieved) && self.corpus.is_none() {
            problems.push("retrieved strategy needs a corpus".to_string());
        }
        if self.strategies.contains(&Strategy::Generated) && self.generated.is_none() {
            problems.push("generated strategy needs a generated file".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }

    /// Hash of everything that affects predictions (not `out_dir` or `concurrency`).
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.concurrency = 0;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub uuid: String,
    pub strategy: Strategy,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub scorer: String,
    pub status: String,
    pub facts_loaded: usize,
    pub facts_after_vocab_filter: usize,
    pub removed_fraction: f64,
    pub load_errors: Vec<RecordError>,
    pub skips: Vec<Skip>,
    pub failures: Vec<Failure>,
    pub scored: BTreeMap<String, usize>,
    /// Relative artifact path → SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&raw)?)
    }

    fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Records already present in a partial predictions file. A torn last line
/// from an interrupted write is ignored.
fn read_partial(path: &Path) -> Result<Vec<RunRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        match serde_json::from_str::<RunRecord>(&line) {
            Ok(r) => out.push(r),
            Err(_) if !line.trim().is_empty() => warn!("dropping torn line in {}", path.display()),
            Err(_) => {}
        }
    }
    Ok(out)
}

pub struct RunOutcome {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn predictions_path(&self, strategy: Strategy) -> PathBuf {
        predictions_path(&self.out_dir, strategy)
    }
}

pub fn predictions_path(out_dir: &Path, strategy: Strategy) -> PathBuf {
    out_dir.join("predictions").join(format!("{}.jsonl", strategy.name()))
}

struct Retriever {
    index: TfidfIndex,
    store: ParagraphStore,
}

struct Pipeline<'a> {
    cfg: &'a RunConfig,
    vocab: Arc<Vocabulary>,
    scorer: Arc<dyn Scorer>,
    pool: rayon::ThreadPool,
    manifest: Mutex<Manifest>,
    manifest_path: PathBuf,
}

impl Pipeline<'_> {
    fn flush_manifest(&self) -> Result<()> {
        self.manifest.lock().unwrap().save(&self.manifest_path)
    }

    fn request(&self, fact: &Fact, ctx: &Context) -> Result<ScoreRequest> {
        let q = instantiate_cloze(fact)?;
        Ok(ScoreRequest {
            id: fact.uuid.clone(),
            query: q.text,
            context: (!ctx.text.is_empty()).then(|| ctx.text.clone()),
            mode: self.cfg.mode,
            candidates: self.vocab.clone(),
            top_k: self.cfg.top_k,
        })
    }

    fn record(&self, fact: &Fact, ctx: &Context, baseline: Option<f64>) -> Result<RunRecord> {
        let req = self.request(fact, ctx)?;
        let pred = self.scorer.score(&req)?;
        let answer_logprob = pred
            .logprob_of(&self.vocab, &fact.answer)
            .ok_or_else(|| Error::Invalid(format!("answer {} not in vocabulary", fact.answer)))?;
        Ok(RunRecord {
            fact_uuid: fact.uuid.clone(),
            relation: fact.relation.clone(),
            corpus: fact.corpus.clone(),
            strategy: ctx.strategy,
            mode: self.cfg.mode,
            answer: fact.answer.clone(),
            argmax_token: pred.argmax_token,
            answer_logprob,
            answer_logprob_nocontext: if ctx.strategy == Strategy::None {
                Some(answer_logprob)
            } else {
                baseline
            },
            nsp_prob: pred.nsp_prob,
            answer_present: ctx.answer_present,
            query: req.query,
            context_head: ctx.text.chars().take(CONTEXT_HEAD_CHARS).collect(),
            context_source: ctx.source_id.clone(),
            top_k: pred.top_k,
        })
    }

    /// Score every context not yet in the partial file, then write the sorted final file.
    fn score_strategy(
        &self,
        strategy: Strategy,
        facts: &FactSet,
        contexts: &[Context],
        baseline: &HashMap<String, f64>,
    ) -> Result<Vec<RunRecord>> {
        let dir = self.cfg.out_dir.join("predictions");
        let final_path = predictions_path(&self.cfg.out_dir, strategy);
        let partial_path = dir.join(format!("{}.partial.jsonl", strategy.name()));

        let mut done = read_partial(&partial_path)?;
        let done_ids: HashSet<String> = done.iter().map(|r| r.fact_uuid.clone()).collect();
        if !done_ids.is_empty() {
            info!("{strategy}: resuming with {} records already scored", done_ids.len());
        }
        // rewrite without any torn tail before appending
        write_records(&partial_path, &done)?;
        let by_uuid: HashMap<&str, &Fact> = facts.facts.iter().map(|f| (f.uuid.as_str(), f)).collect();
        let pending: Vec<&Context> = contexts.iter().filter(|c| !done_ids.contains(&c.fact_uuid)).collect();

        let writer = Mutex::new((
            OpenOptions::new()
                .append(true)
                .open(&partial_path)
                .map_err(|e| Error::io(&partial_path, e))?,
            0usize,
        ));
        let results: Vec<std::result::Result<RunRecord, Failure>> = self.pool.install(|| {
            pending
                .par_iter()
                .map(|ctx| {
                    let fact = by_uuid[ctx.fact_uuid.as_str()];
                    let fail = |e: Error| Failure {
                        uuid: fact.uuid.clone(),
                        strategy,
                        error: e.to_string(),
                    };
                    let rec = self
                        .record(fact, ctx, baseline.get(&fact.uuid).copied())
                        .map_err(fail)?;
                    let line = serde_json::to_string(&rec).map_err(|e| fail(e.into()))?;
                    let mut w = writer.lock().unwrap();
                    writeln!(w.0, "{line}").map_err(|e| fail(Error::io(&partial_path, e)))?;
                    w.1 += 1;
                    if w.1 % MANIFEST_FLUSH_EVERY == 0 {
                        let mut m = self.manifest.lock().unwrap();
                        *m.scored.entry(strategy.name().into()).or_default() = done_ids.len() + w.1;
                        let _ = m.save(&self.manifest_path);
                    }
                    Ok(rec)
                })
                .collect()
        });
        drop(writer);

        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(rec) => done.push(rec),
                Err(f) => failures.push(f),
            }
        }
        done.sort_by(|a, b| a.fact_uuid.cmp(&b.fact_uuid));
        write_records(&final_path, &done)?;
        std::fs::remove_file(&partial_path).map_err(|e| Error::io(&partial_path, e))?;
        {
            let mut m = self.manifest.lock().unwrap();
            m.failures.extend(failures);
            m.scored.insert(strategy.name().into(), done.len());
            m.artifacts
                .insert(format!("predictions/{}.jsonl", strategy.name()), sha256_file(&final_path)?);
        }
        self.flush_manifest()?;
        Ok(done)
    }
}

fn load_probe(cfg: &RunConfig) -> Result<(FactSet, Vec<RecordError>, usize)> {
    let templates = load_relations(&cfg.relations)?;
    let mut facts = FactSet::default();
    let mut errors = Vec::new();
    for src in &cfg.facts {
        let out = load_facts(&src.path, src.corpus.clone(), &templates)?;
        errors.extend(out.errors);
        for uuid in facts.extend(out.facts) {
            errors.push(RecordError {
                line: 0,
                uuid: Some(uuid),
                message: format!("duplicate uuid across fact files ({})", src.path.display()),
            });
        }
    }
    let loaded = facts.len();
    Ok((facts, errors, loaded))
}

fn load_retriever(cfg: &RunConfig) -> Result<Option<Retriever>> {
    let Some(corpus) = &cfg.corpus else {
        return Ok(None);
    };
    let store = ParagraphStore::load(corpus)?;
    let index = match &cfg.index {
        Some(p) => load_index(p)?,
        None => build_index(store.iter(), &IndexConfig::default())?,
    };
    Ok(Some(Retriever { index, store }))
}

/// Execute a full run. Validation problems surface as [`Error::Validation`]
/// before any work starts; per-fact scoring errors go to the manifest.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    for sub in ["predictions", "contexts", "report"] {
        std::fs::create_dir_all(out.join(sub)).map_err(|e| Error::io(out.join(sub), e))?;
    }
    let manifest_path = out.join("manifest.json");
    let fingerprint = cfg.fingerprint();
    if let Ok(prev) = Manifest::load(&manifest_path) {
        if prev.config_hash != fingerprint {
            info!("configuration changed; discarding previous partial results");
            for s in Strategy::ALL {
                let p = out.join("predictions").join(format!("{}.partial.jsonl", s.name()));
                let _ = std::fs::remove_file(p);
            }
        }
    }

    let (facts, load_errors, loaded) = load_probe(cfg)?;
    let vocab = Arc::new(Vocabulary::load(&cfg.vocab)?);
    let filtered = filter_by_vocab(&facts, &vocab);
    let facts = filtered.facts;
    info!(
        "{} facts loaded, {} kept after vocabulary filter",
        loaded,
        facts.len()
    );

    let retriever = load_retriever(cfg)?;
    let generated = cfg.generated.as_deref().map(|p| import_generated(p, &facts)).transpose()?;
    let sources = ContextSources {
        retriever: retriever.as_ref().map(|r| (&r.index, &r.store)),
        generated: generated.as_ref(),
        query_mode: cfg.query_mode,
        max_sentences: cfg.max_sentences,
        seed: cfg.seed,
    };

    let scorer = cfg.scorer.build(cfg.concurrency)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| Error::Validation(e.to_string()))?;
    let pipeline = Pipeline {
        cfg,
        vocab,
        scorer: scorer.clone(),
        pool,
        manifest: Mutex::new(Manifest {
            config_hash: fingerprint,
            seed: cfg.seed,
            scorer: scorer.name(),
            status: "in_progress".into(),
            facts_loaded: loaded,
            facts_after_vocab_filter: facts.len(),
            removed_fraction: filtered.removed_fraction,
            load_errors,
            ..Default::default()
        }),
        manifest_path: manifest_path.clone(),
    };
    pipeline.flush_manifest()?;

    let mut strategies = vec![Strategy::None];
    strategies.extend(cfg.strategies.iter().copied().filter(|s| *s != Strategy::None));

    let mut baseline_records = Vec::new();
    let mut baseline_lp = HashMap::new();
    let mut runs = Vec::new();
    for strategy in strategies {
        let batch = build_contexts(&facts, strategy, &sources)?;
        let ctx_path = out.join("contexts").join(format!("{}.jsonl", strategy.name()));
        write_contexts(&ctx_path, &batch.contexts)?;
        pipeline.manifest.lock().unwrap().skips.extend(batch.skipped);
        let records = pipeline.score_strategy(strategy, &facts, &batch.contexts, &baseline_lp)?;
        if strategy == Strategy::None {
            if records.is_empty() && !facts.is_empty() {
                pipeline.manifest.lock().unwrap().status = "failed".into();
                pipeline.flush_manifest()?;
                let first = pipeline.manifest.lock().unwrap().failures.first().cloned();
                return Err(Error::Invalid(format!(
                    "baseline scoring failed for every fact{}",
                    first.map(|f| format!(": {}", f.error)).unwrap_or_default()
                )));
            }
            baseline_lp = records
                .iter()
                .map(|r| (r.fact_uuid.clone(), r.answer_logprob))
                .collect();
            baseline_records = records;
        } else {
            runs.push((strategy.name().to_string(), records));
        }
    }

    let mut report = evaluate(&baseline_records, &runs)?;
    report.dataset = Some(dataset_stats(&facts));
    if let Some(r) = &retriever {
        let mode = cfg.query_mode;
        let curve = recall_at_k(
            &r.index,
            &r.store,
            &facts.facts,
            |f| retrieval_query(f, mode).unwrap_or_default(),
            cfg.recall_k,
        );
        report.recall_curve = Some(curve);
    }
    let examples: Vec<RunRecord> = runs.iter().flat_map(|(_, rs)| rs.iter().cloned()).collect();
    let report_dir = out.join("report");
    write_report(&report, &examples, &report_dir)?;

    let mut manifest = pipeline.manifest.into_inner().unwrap();
    manifest
        .artifacts
        .insert("report/report.json".into(), sha256_file(&report_dir.join("report.json"))?);
    manifest.status = "complete".into();
    manifest.save(&manifest_path)?;
    Ok(RunOutcome {
        manifest,
        out_dir: out.clone(),
    })
}
