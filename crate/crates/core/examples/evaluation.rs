//! Evaluation statistics on small hand-made inputs: relation-weighted P@1,
//! the exact two-sided sign test and Spearman correlation with tied ranks.

use std::collections::BTreeMap;

use ctxprobe::eval::stats::{sign_test_counts, spearman};
use ctxprobe::eval::{sign_test, weighted_average, DEFAULT_WEIGHTS};
use ctxprobe::probe::Corpus;

fn main() -> ctxprobe::Result<()> {
    let per_corpus = BTreeMap::from([
        (Corpus::GoogleRE, 10.5),
        (Corpus::TREx, 32.3),
        (Corpus::SQuAD, 17.4),
    ]);
    let avg = weighted_average(&per_corpus, &DEFAULT_WEIGHTS)?;
    println!("weighted P@1 over corpora (weights 3/41/1): {avg:.2}");

    for (wins, losses) in [(10, 0), (7, 3), (12, 3), (0, 0)] {
        let t = sign_test_counts(wins, losses, 0);
        println!("sign test {wins} wins / {losses} losses: p = {:.6}{}", t.p_value, if t.degenerate { " (no untied pairs)" } else { "" });
    }

    let oracle: BTreeMap<String, f64> = [("P19", 95.0), ("P101", 88.0), ("P413", 91.0), ("P106", 70.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let none: BTreeMap<String, f64> = [("P19", 30.0), ("P101", 12.0), ("P413", 91.0), ("P106", 8.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let t = sign_test(&oracle, &none)?;
    println!("oracle vs none per relation: {} wins, {} losses, {} ties, p = {:.4}", t.wins, t.losses, t.ties, t.p_value);

    let nsp = [0.05, 0.2, 0.2, 0.6, 0.9, 0.95];
    let delta = [-0.4, -0.1, 0.0, 0.3, 0.3, 0.7];
    println!("spearman(nsp, delta) = {:?}", spearman(&nsp, &delta));
    println!("spearman of a constant = {:?}", spearman(&[1.0, 1.0, 1.0], &[0.1, 0.2, 0.3]));
    Ok(())
}
