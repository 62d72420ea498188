//! Build a hashed TF-IDF index over paragraphs, persist it, query it and
//! compute the recall@k curve for the probe's questions.
//!
//! `cargo run --example retrieval [-- "query text"]`

use std::path::PathBuf;

use ctxprobe::context::{retrieval_query, QueryMode};
use ctxprobe::index::{build_index, load_index, recall_at_k, save_index, IndexConfig, ParagraphStore};
use ctxprobe::probe::{load_facts, load_relations, Corpus};

fn main() -> ctxprobe::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/synthetic");
    let store = ParagraphStore::load(&data.join("corpus.jsonl"))?;
    let index = build_index(store.iter(), &IndexConfig::default())?;

    let tmp = std::env::temp_dir().join("ctxprobe-example.idx");
    save_index(&index, &tmp)?;
    let index = load_index(&tmp)?;
    println!("{} paragraphs indexed, {} weighted bins", index.num_paragraphs(), index.idf_table().len());

    let text = std::env::args().nth(1).unwrap_or_else(|| "Where was Bruno Brandt born?".into());
    println!("\ntop hits for {text:?}");
    for hit in index.query(&text, 5) {
        let para = store.get(&hit.para_id).expect("indexed paragraph has text");
        println!("  {:.4}  {:<12} {}", hit.score, hit.para_id, para.text);
    }

    let templates = load_relations(&data.join("relations.jsonl"))?;
    let facts = load_facts(&data.join("facts.jsonl"), Corpus::TREx, &templates)?.facts;
    for mode in [QueryMode::Question, QueryMode::Cloze] {
        let curve = recall_at_k(&index, &store, &facts.facts, |f| retrieval_query(f, mode).unwrap_or_default(), 5);
        println!("\nrecall@k with {mode:?} queries\n{}", curve.to_csv());
    }
    std::fs::remove_file(&tmp).ok();
    Ok(())
}
