mod common;

use ctxprobe::index::{build_index, load_index, recall_at_k, save_index, IndexConfig, ParagraphStore};
use ctxprobe::text::Stopwords;
use proptest::prelude::*;

fn config(bits: u32) -> IndexConfig {
    IndexConfig {
        hash_bits: bits,
        ..IndexConfig::default()
    }
}

fn assert_matches_oracle(seed: u64, bits: u32) {
    let mut rng = common::rng(seed);
    let paras = common::random_corpus(&mut rng, 120);
    let index = build_index(&paras, &config(bits)).unwrap();
    let oracle = common::DenseOracle::new(&paras, bits, &common::stopword_set());
    for _ in 0..15 {
        let q = common::random_query(&mut rng);
        let got: Vec<(String, f64)> = index.query(&q, 10).into_iter().map(|h| (h.para_id, h.score)).collect();
        let want = oracle.top_k(&q, 10);
        assert_eq!(got, want, "seed {seed}, bits {bits}, query {q:?}");
    }
}

#[test]
fn matches_dense_oracle_with_heavy_collisions() {
    for seed in 0..6 {
        assert_matches_oracle(seed, 6);
    }
}

#[test]
fn matches_dense_oracle_with_sparse_bins() {
    for seed in 100..106 {
        assert_matches_oracle(seed, 14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_equivalence_random_seeds(seed in any::<u64>(), bits in 4u32..=12) {
        assert_matches_oracle(seed, bits);
    }

    #[test]
    fn persisted_index_answers_identically(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let paras = common::random_corpus(&mut rng, 60);
        let index = build_index(&paras, &IndexConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.idx");
        save_index(&index, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        for _ in 0..10 {
            let q = common::random_query(&mut rng);
            let a = index.query(&q, 10);
            let b = loaded.query(&q, 10);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(&x.para_id, &y.para_id);
                prop_assert_eq!(x.score.to_bits(), y.score.to_bits());
            }
        }
    }

    #[test]
    fn recall_is_monotone_and_complete(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let paras = common::random_corpus(&mut rng, 40);
        let facts = common::random_facts(&mut rng, 30);
        let store = ParagraphStore::new(paras.clone()).unwrap();
        let index = build_index(&paras, &IndexConfig::default()).unwrap();
        let n = index.num_paragraphs();
        let curve = recall_at_k(&index, &store, &facts, |f| f.subject.clone(), n);
        for w in curve.points.windows(2) {
            prop_assert!(w[0].1 <= w[1].1);
        }
        prop_assert_eq!(curve.at(n).unwrap(), common::answer_anywhere(&paras, &facts));
    }
}

#[test]
fn stopword_only_query_is_empty_in_both() {
    let mut rng = common::rng(5);
    let paras = common::random_corpus(&mut rng, 50);
    let index = build_index(&paras, &IndexConfig::default()).unwrap();
    assert!(index.query("the of and", 10).is_empty());
    assert!(common::dense_top_k(&paras, "the of and", 12, 10, &common::stopword_set()).is_empty());
}

#[test]
fn custom_stopwords_change_features() {
    let paras = common::random_corpus(&mut common::rng(9), 30);
    let cfg = IndexConfig {
        hash_bits: 12,
        stopwords: Stopwords::empty(),
        ..IndexConfig::default()
    };
    let index = build_index(&paras, &cfg).unwrap();
    let got: Vec<String> = index.query("the river", 5).into_iter().map(|h| h.para_id).collect();
    let want: Vec<String> = common::dense_top_k(&paras, "the river", 12, 5, &Default::default())
        .into_iter()
        .map(|h| h.0)
        .collect();
    assert_eq!(got, want);
}
