use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use ctxprobe::context::{build_contexts, import_generated, write_contexts, ContextSources, QueryMode, Strategy, DEFAULT_MAX_SENTENCES};
use ctxprobe::eval::{evaluate, read_records, report::write_report, RunRecord};
use ctxprobe::index::{build_index, load_index, save_index, IndexConfig, ParagraphStore};
use ctxprobe::probe::{load_facts, load_relations, read_fact_records, Corpus, DatasetStats};
use ctxprobe::run::{run, RunConfig, SEED_ENV};
use ctxprobe::scorer::{server, MockKind, MockScorer, PriorTable};
use ctxprobe::{Error, Result};

#[derive(Parser)]
#[command(name = "ctxprobe", version, about = "Probe how contexts change masked-LM cloze predictions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or query a hashed TF-IDF paragraph index.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Build contexts for every fact under one strategy.
    #[command(subcommand)]
    Contexts(ContextsCmd),
    /// Run a full experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config field, e.g. `--set scorer.lambda=0.5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Evaluate prediction files against a no-context baseline.
    Report {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long, required = true)]
        preds: Vec<PathBuf>,
        #[arg(long)]
        facts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a mock scorer over the wire protocol.
    ServeMock {
        #[arg(long, default_value_t = 8750)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, value_enum, default_value_t = MockName::Copy)]
        scorer: MockName,
        #[arg(long, default_value_t = ctxprobe::scorer::DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long, default_value_t = ctxprobe::scorer::DEFAULT_GATE)]
        gate: f64,
        /// TSV of `token<TAB>count`; required for `prior`, optional base for `copy`.
        #[arg(long)]
        prior: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum IndexCmd {
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24)]
        hash_bits: u32,
        #[arg(long, default_value_t = 2)]
        ngrams: u32,
    },
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
        /// Paragraph JSONL used to print hit texts.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ContextsCmd {
    Build(ContextsBuild),
}

#[derive(Args)]
struct ContextsBuild {
    #[arg(long)]
    facts: PathBuf,
    /// Relation templates; defaults to `relations.jsonl` beside the facts file.
    #[arg(long)]
    relations: Option<PathBuf>,
    #[arg(long, default_value = "TREx")]
    corpus_name: String,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Paragraph JSONL holding texts for the index.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    generated: Option<PathBuf>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = QueryArg::Question)]
    query_mode: QueryArg,
    #[arg(long, default_value_t = DEFAULT_MAX_SENTENCES)]
    max_sentences: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Oracle,
    Retrieved,
    Adversarial,
    Generated,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Oracle => Strategy::Oracle,
            StrategyArg::Retrieved => Strategy::Retrieved,
            StrategyArg::Adversarial => Strategy::Adversarial,
            StrategyArg::Generated => Strategy::Generated,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum QueryArg {
    Question,
    Cloze,
}

#[derive(Clone, Copy, ValueEnum)]
enum MockName {
    Copy,
    Uniform,
    Prior,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Validation(_) | Error::MissingCorpus(_) | Error::Unpaired { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Index(IndexCmd::Build {
            corpus,
            out,
            hash_bits,
            ngrams,
        }) => {
            require(&corpus)?;
            let store = ParagraphStore::load(&corpus)?;
            let config = IndexConfig {
                hash_bits,
                ngram_order: ngrams,
                ..IndexConfig::default()
            };
            let index = build_index(store.iter(), &config)?;
            save_index(&index, &out)?;
            println!("indexed {} paragraphs into {}", index.num_paragraphs(), out.display());
            Ok(())
        }
        Command::Index(IndexCmd::Query { index, text, k, corpus }) => {
            require(&index)?;
            let idx = load_index(&index)?;
            let store = corpus.as_deref().map(ParagraphStore::load).transpose()?;
            for hit in idx.query(&text, k) {
                let body = store
                    .as_ref()
                    .and_then(|s| s.get(&hit.para_id))
                    .map(|p| p.text.as_str())
                    .unwrap_or("");
                println!("{:.6}\t{}\t{}", hit.score, hit.para_id, body);
            }
            Ok(())
        }
        Command::Contexts(ContextsCmd::Build(args)) => contexts_build(args),
        Command::Run { config, set } => {
            require(&config)?;
            let cfg = RunConfig::load(&config, &set)?;
            let outcome = run(&cfg)?;
            let m = &outcome.manifest;
            println!(
                "run {}: {} facts scored, {} skips, {} failures; artifacts in {}",
                m.status,
                m.facts_after_vocab_filter,
                m.skips.len(),
                m.failures.len(),
                outcome.out_dir.display()
            );
            Ok(())
        }
        Command::Report {
            baseline,
            preds,
            facts,
            out,
        } => report(&baseline, &preds, &facts, &out),
        Command::ServeMock {
            port,
            host,
            scorer,
            lambda,
            gate,
            prior,
        } => {
            let prior = prior.as_deref().map(PriorTable::load).transpose()?;
            let kind = match scorer {
                MockName::Uniform => MockKind::Uniform,
                MockName::Prior => MockKind::Prior {
                    table: prior.ok_or_else(|| Error::Validation("--scorer prior needs --prior".into()))?,
                },
                MockName::Copy => MockKind::Copy { lambda, gate, prior },
            };
            let mock = MockScorer::new(kind).map_err(|e| Error::Validation(e.to_string()))?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Error::Validation(format!("bad address {host}:{port}: {e}")))?;
            let handle = server::spawn(Arc::new(mock), addr)?;
            println!("serving mock scorer at {}", handle.endpoint());
            loop {
                std::thread::park();
            }
        }
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{} does not exist", path.display())))
    }
}

fn contexts_build(a: ContextsBuild) -> Result<()> {
    let strategy = Strategy::from(a.strategy);
    let relations = a
        .relations
        .clone()
        .unwrap_or_else(|| a.facts.with_file_name("relations.jsonl"));
    for p in [Some(&a.facts), Some(&relations), a.index.as_ref(), a.corpus.as_ref(), a.generated.as_ref()]
        .into_iter()
        .flatten()
    {
        require(p)?;
    }
    let templates = load_relations(&relations)?;
    let loaded = load_facts(&a.facts, Corpus::from(a.corpus_name.clone()), &templates)?;
    for e in &loaded.errors {
        warn!("facts line {}: {}", e.line, e.message);
    }
    let facts = loaded.facts;

    let store = a.corpus.as_deref().map(ParagraphStore::load).transpose()?;
    let index = match (&a.index, &store) {
        (Some(p), _) => Some(load_index(p)?),
        (None, Some(s)) if strategy == Strategy::Retrieved => Some(build_index(s.iter(), &IndexConfig::default())?),
        _ => None,
    };
    if strategy == Strategy::Retrieved && store.is_none() {
        return Err(Error::Validation("retrieved contexts need --corpus for paragraph texts".into()));
    }
    let generated = a.generated.as_deref().map(|p| import_generated(p, &facts)).transpose()?;
    let sources = ContextSources {
        retriever: index.as_ref().zip(store.as_ref()),
        generated: generated.as_ref(),
        query_mode: match a.query_mode {
            QueryArg::Question => QueryMode::Question,
            QueryArg::Cloze => QueryMode::Cloze,
        },
        max_sentences: a.max_sentences,
        seed: a.seed,
    };
    let batch = build_contexts(&facts, strategy, &sources)?;
    for s in &batch.skipped {
        warn!("skipped {}: {}", s.uuid, s.reason);
    }
    write_contexts(&a.out, &batch.contexts)?;
    println!(
        "{} {} contexts written to {} ({} skipped)",
        batch.contexts.len(),
        strategy.name(),
        a.out.display(),
        batch.skipped.len()
    );
    Ok(())
}

fn label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    stem.trim_end_matches(".partial").to_string()
}

fn report(baseline: &Path, preds: &[PathBuf], facts: &Path, out: &Path) -> Result<()> {
    for p in std::iter::once(baseline).chain(preds.iter().map(PathBuf::as_path)).chain([facts]) {
        require(p)?;
    }
    let (records, errors) = read_fact_records(facts)?;
    if !errors.is_empty() {
        warn!("{} unreadable lines in {}", errors.len(), facts.display());
    }
    let known: HashMap<String, String> = records.into_iter().map(|(_, r)| (r.uuid, r.relation)).collect();

    let base = read_records(baseline)?;
    let mut runs: Vec<(String, Vec<RunRecord>)> = Vec::new();
    for p in preds {
        runs.push((label(p), read_records(p)?));
    }
    let unknown: Vec<&str> = base
        .iter()
        .chain(runs.iter().flat_map(|(_, r)| r.iter()))
        .filter(|r| !known.contains_key(&r.fact_uuid))
        .map(|r| r.fact_uuid.as_str())
        .take(5)
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Validation(format!(
            "predictions reference uuids missing from {}: {}",
            facts.display(),
            unknown.join(", ")
        )));
    }

    let mut report = evaluate(&base, &runs)?;
    report.dataset = Some(DatasetStats::from_pairs(
        base.iter().map(|r| (r.corpus.clone(), r.relation.clone())),
    ));
    let examples: Vec<RunRecord> = runs.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    write_report(&report, &examples, out)?;
    println!("report written to {}", out.display());
    Ok(())
}
