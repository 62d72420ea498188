//! Load a LAMA-style probe, filter it to the candidate vocabulary and print
//! per-relation counts along with the cloze and question forms of a few facts.
//!
//! `cargo run --example probe_stats [-- <facts.jsonl> <relations.jsonl> <vocab.txt>]`

use std::path::PathBuf;

use ctxprobe::probe::{dataset_stats, filter_by_vocab, instantiate_cloze, load_facts, load_relations, to_natural_question, Corpus};
use ctxprobe::vocab::Vocabulary;

fn main() -> ctxprobe::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/synthetic");
    let args: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    let (facts_path, rel_path, vocab_path) = match args.as_slice() {
        [f, r, v] => (f.clone(), r.clone(), v.clone()),
        _ => (data.join("facts.jsonl"), data.join("relations.jsonl"), data.join("vocab.txt")),
    };

    let templates = load_relations(&rel_path)?;
    let loaded = load_facts(&facts_path, Corpus::TREx, &templates)?;
    for e in &loaded.errors {
        println!("skipped line {}: {}", e.line, e.message);
    }
    let vocab = Vocabulary::load(&vocab_path)?;
    let filtered = filter_by_vocab(&loaded.facts, &vocab);
    println!(
        "{} facts, {:.1}% removed by the vocabulary filter",
        filtered.facts.len(),
        100.0 * filtered.removed_fraction
    );

    let stats = dataset_stats(&filtered.facts);
    for (corpus, rels) in &stats.per_relation {
        for (rel, n) in rels {
            println!("{corpus}\t{rel}\t{n}");
        }
    }

    for fact in filtered.facts.facts.iter().step_by(10) {
        let cloze = instantiate_cloze(fact)?;
        println!("\n{}  answer={}", fact.uuid, fact.answer);
        println!("  cloze:    {}", cloze.text);
        println!("  question: {}", to_natural_question(fact)?);
    }
    Ok(())
}
