//! Score one cloze query with the copy mock under different contexts and
//! input modes. The copy mock moves probability toward candidates that appear
//! in the context, but in modes that keep query and context apart it only
//! does so when the context looks like a next sentence.

use std::sync::Arc;

use ctxprobe::featurize::Mode;
use ctxprobe::scorer::{nsp_classify, MockScorer, ScoreRequest, Scorer, Vocabulary};

fn show(scorer: &MockScorer, vocab: &Arc<Vocabulary>, context: Option<&str>, mode: Mode) -> ctxprobe::Result<()> {
    let req = ScoreRequest {
        id: "demo".into(),
        query: "Alma Adler was born in [MASK] .".into(),
        context: context.map(str::to_string),
        mode,
        candidates: vocab.clone(),
        top_k: 3,
    };
    let pred = scorer.score(&req)?;
    let top: Vec<String> = pred.top_k.iter().map(|t| format!("{} {:.2}", t.token, t.logprob)).collect();
    let nsp = match pred.nsp_prob {
        Some(p) => format!("{p:.2} (next sentence: {})", nsp_classify(&pred)?),
        None => "n/a".into(),
    };
    println!("{:<14} {:<45} top: {:<40} nsp: {nsp}", mode.name(), format!("{context:?}"), top.join(", "));
    Ok(())
}

fn main() -> ctxprobe::Result<()> {
    let vocab = Arc::new(Vocabulary::new(
        ["Paris", "Rome", "Vienna", "Madrid"].iter().map(|s| s.to_string()),
    )?);
    let scorer = MockScorer::copy();
    let own = "Alma Adler was born in Vienna.";
    let donor = "Bruno Brandt was born in Madrid.";

    show(&scorer, &vocab, None, Mode::TwoSegment)?;
    for mode in [Mode::TwoSegment, Mode::OneSegment] {
        show(&scorer, &vocab, Some(own), mode)?;
        show(&scorer, &vocab, Some(donor), mode)?;
    }
    println!("\nuniform mock ignores context:");
    show(&MockScorer::uniform(), &vocab, Some(own), Mode::TwoSegment)?;
    Ok(())
}
