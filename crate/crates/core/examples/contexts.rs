//! Build every context strategy for the bundled probe and show, per strategy,
//! how often the context contains the answer.

use std::path::PathBuf;

use ctxprobe::context::{build_contexts, import_generated, ContextSources, Strategy};
use ctxprobe::index::{build_index, IndexConfig, ParagraphStore};
use ctxprobe::probe::{load_facts, load_relations, Corpus};

fn main() -> ctxprobe::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/synthetic");
    let templates = load_relations(&data.join("relations.jsonl"))?;
    let facts = load_facts(&data.join("facts.jsonl"), Corpus::TREx, &templates)?.facts;
    let store = ParagraphStore::load(&data.join("corpus.jsonl"))?;
    let index = build_index(store.iter(), &IndexConfig::default())?;
    let generated = import_generated(&data.join("generated.jsonl"), &facts)?;

    let sources = ContextSources {
        retriever: Some((&index, &store)),
        generated: Some(&generated),
        seed: 13,
        ..ContextSources::default()
    };
    let probe = &facts.facts[1];
    println!("fact {}: {} / {}\n", probe.uuid, probe.subject, probe.answer);
    for strategy in Strategy::ALL {
        let batch = build_contexts(&facts, strategy, &sources)?;
        let present = batch.contexts.iter().filter(|c| c.answer_present).count();
        println!(
            "{:<12} {:>3} contexts, {:>3} skipped, answer present in {present}",
            strategy.name(),
            batch.contexts.len(),
            batch.skipped.len()
        );
        if let Some(c) = batch.contexts.iter().find(|c| c.fact_uuid == probe.uuid) {
            println!("             [{}] {:?}", c.source_id, c.text);
        }
    }
    Ok(())
}
