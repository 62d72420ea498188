//! Aggregates over scored records: P@1 per relation and corpus, weighted
//! averages, sign tests, better/worse splits, NSP rates and the NSP versus
//! |ΔP(answer)| relationship.
//!
//! Every reduction first orders records by uuid so floating-point results do
//! not depend on input order or partitioning.

pub mod report;
pub mod stats;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::context::Strategy;
use crate::error::{Error, Result};
use crate::featurize::Mode;
use crate::probe::Corpus;
use crate::scorer::{TokenScore, NSP_THRESHOLD};
pub use stats::{sign_test_counts, sign_test_pairs, SignTest};

/// Relation counts per corpus used for the headline average (SQuAD counts once).
pub const DEFAULT_WEIGHTS: [(Corpus, f64); 3] = [
    (Corpus::GoogleRE, 3.0),
    (Corpus::TREx, 41.0),
    (Corpus::SQuAD, 1.0),
];

/// One scored (fact, context) pair, serialized as a predictions-file line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fact_uuid: String,
    pub relation: String,
    pub corpus: Corpus,
    pub strategy: Strategy,
    pub mode: Mode,
    pub answer: String,
    pub argmax_token: String,
    pub answer_logprob: f64,
    pub answer_logprob_nocontext: Option<f64>,
    pub nsp_prob: Option<f64>,
    pub answer_present: bool,
    #[serde(default)]
    pub query: String,
    #[serde(default)]
    pub context_head: String,
    #[serde(default)]
    pub context_source: String,
    #[serde(default)]
    pub top_k: Vec<TokenScore>,
}

impl RunRecord {
    pub fn correct(&self) -> bool {
        self.argmax_token == self.answer
    }
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn by_uuid(records: &[RunRecord]) -> Vec<&RunRecord> {
    let mut v: Vec<&RunRecord> = records.iter().collect();
    v.sort_by(|a, b| a.fact_uuid.cmp(&b.fact_uuid));
    v
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecisionTable {
    pub per_relation: BTreeMap<String, f64>,
    /// Mean of the per-relation values within each corpus.
    pub per_corpus: BTreeMap<Corpus, f64>,
    pub relation_corpus: BTreeMap<String, Corpus>,
    pub counts: BTreeMap<String, usize>,
}

pub fn precision_at_1(records: &[RunRecord]) -> PrecisionTable {
    let mut hits: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut table = PrecisionTable::default();
    for r in by_uuid(records) {
        let e = hits.entry(&r.relation).or_default();
        e.0 += usize::from(r.correct());
        e.1 += 1;
        table
            .relation_corpus
            .entry(r.relation.clone())
            .or_insert_with(|| r.corpus.clone());
    }
    let mut corpus_vals: BTreeMap<Corpus, Vec<f64>> = BTreeMap::new();
    for (rel, (ok, n)) in hits {
        let p = 100.0 * ok as f64 / n as f64;
        table.per_relation.insert(rel.to_string(), p);
        table.counts.insert(rel.to_string(), n);
        corpus_vals
            .entry(table.relation_corpus[rel].clone())
            .or_default()
            .push(p);
    }
    for (corpus, vals) in corpus_vals {
        table
            .per_corpus
            .insert(corpus, vals.iter().sum::<f64>() / vals.len() as f64);
    }
    table
}

/// `Σ w·p / Σ w` over the weighted corpora, all of which must be present.
pub fn weighted_average(per_corpus: &BTreeMap<Corpus, f64>, weights: &[(Corpus, f64)]) -> Result<f64> {
    let missing: Vec<String> = weights
        .iter()
        .filter(|(c, _)| !per_corpus.contains_key(c))
        .map(|(c, _)| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingCorpus(missing));
    }
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(Error::Invalid("weights sum to zero".into()));
    }
    Ok(weights.iter().map(|(c, w)| w * per_corpus[c]).sum::<f64>() / total)
}

/// Weights for whichever corpora a run covers: the default weight for known
/// corpora, the relation count for any other.
pub fn present_weights(table: &PrecisionTable) -> Vec<(Corpus, f64)> {
    table
        .per_corpus
        .keys()
        .map(|c| {
            let w = DEFAULT_WEIGHTS
                .iter()
                .find(|(k, _)| k == c)
                .map(|(_, w)| *w)
                .unwrap_or_else(|| table.relation_corpus.values().filter(|rc| *rc == c).count() as f64);
            (c.clone(), w)
        })
        .collect()
}

/// Per-relation sign test of A against B; both must cover the same relations.
pub fn sign_test(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> Result<SignTest> {
    if a.keys().ne(b.keys()) {
        return Err(Error::Invalid("sign test needs identical relation sets".into()));
    }
    let t = sign_test_pairs(a.iter().map(|(k, v)| (*v, b[k])));
    if t.degenerate {
        warn!("sign test has no untied relations; p-value set to 1");
    }
    Ok(t)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BetterWorse {
    pub better_present: f64,
    pub better_absent: f64,
    pub worse_present: f64,
    pub worse_absent: f64,
    pub better_total: f64,
    pub worse_total: f64,
    pub n_relations_improved: usize,
    pub n_paired: usize,
}

/// Fact-level changes against the context-free run: better means
/// incorrect → correct, worse the reverse. Percentages are over all pairs.
pub fn delta_analysis(records: &[RunRecord], baseline: &[RunRecord]) -> Result<BetterWorse> {
    let base: HashMap<&str, &RunRecord> = baseline.iter().map(|r| (r.fact_uuid.as_str(), r)).collect();
    let mut cells = [0usize; 4];
    let mut paired_base = Vec::with_capacity(records.len());
    for r in by_uuid(records) {
        let b = base.get(r.fact_uuid.as_str()).ok_or_else(|| Error::Unpaired {
            uuid: r.fact_uuid.clone(),
        })?;
        paired_base.push((*b).clone());
        match (b.correct(), r.correct(), r.answer_present) {
            (false, true, true) => cells[0] += 1,
            (false, true, false) => cells[1] += 1,
            (true, false, true) => cells[2] += 1,
            (true, false, false) => cells[3] += 1,
            _ => {}
        }
    }
    let n = records.len();
    let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
    let with = precision_at_1(records);
    let without = precision_at_1(&paired_base);
    let improved = with
        .per_relation
        .iter()
        .filter(|(rel, p)| without.per_relation.get(*rel).is_some_and(|b| *p > b))
        .count();
    Ok(BetterWorse {
        better_present: pct(cells[0]),
        better_absent: pct(cells[1]),
        worse_present: pct(cells[2]),
        worse_absent: pct(cells[3]),
        better_total: pct(cells[0] + cells[1]),
        worse_total: pct(cells[2] + cells[3]),
        n_relations_improved: improved,
        n_paired: n,
    })
}

/// Percentage of records with `nsp_prob > 0.5`.
pub fn nsp_rate(records: &[RunRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Invalid("nsp rate of an empty run".into()));
    }
    let mut hits = 0;
    for r in records {
        let p = r.nsp_prob.ok_or_else(|| Error::Invalid(format!("record {} has no nsp_prob", r.fact_uuid)))?;
        hits += usize::from(p > NSP_THRESHOLD);
    }
    Ok(100.0 * hits as f64 / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NspBin {
    pub upper: f64,
    /// Absent for empty bins.
    pub mean_delta: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NspDelta {
    pub bins: Vec<NspBin>,
    pub spearman_rho: f64,
    /// False when either variable is constant; rho is then reported as 0.
    pub rho_defined: bool,
}

impl NspDelta {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_hi,mean_delta,count\n");
        for b in &self.bins {
            let m = b.mean_delta.map(|m| m.to_string()).unwrap_or_default();
            s.push_str(&format!("{:.1},{m},{}\n", b.upper, b.count));
        }
        s
    }
}

pub const NSP_BINS: usize = 10;

/// |ΔP| = |P(a|q) − P(a|q+c)| in probability space, grouped into ten
/// equal-width NSP bins, plus Spearman's rho over the raw pairs.
pub fn nsp_delta_correlation(records: &[RunRecord]) -> Result<NspDelta> {
    if records.len() < 2 {
        return Err(Error::Invalid("need at least two records".into()));
    }
    let mut nsp = Vec::with_capacity(records.len());
    let mut delta = Vec::with_capacity(records.len());
    for r in by_uuid(records) {
        let p = r.nsp_prob.ok_or_else(|| Error::Invalid(format!("record {} has no nsp_prob", r.fact_uuid)))?;
        let base = r.answer_logprob_nocontext.ok_or_else(|| Error::Unpaired {
            uuid: r.fact_uuid.clone(),
        })?;
        nsp.push(p);
        delta.push((base.exp() - r.answer_logprob.exp()).abs());
    }
    let mut sums = vec![Vec::new(); NSP_BINS];
    for (&p, &d) in nsp.iter().zip(&delta) {
        let b = ((p * NSP_BINS as f64).floor() as usize).min(NSP_BINS - 1);
        sums[b].push(d);
    }
    let bins = sums
        .into_iter()
        .enumerate()
        .map(|(i, ds)| NspBin {
            upper: (i + 1) as f64 / NSP_BINS as f64,
            mean_delta: (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64),
            count: ds.len(),
        })
        .collect();
    let rho = stats::spearman(&nsp, &delta);
    if rho.is_none() {
        warn!("spearman rho undefined for constant input; reporting 0");
    }
    Ok(NspDelta {
        bins,
        spearman_rho: rho.unwrap_or(0.0),
        rho_defined: rho.is_some(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub strategy: Strategy,
    pub n_records: usize,
    pub precision: PrecisionTable,
    pub weighted_average_p1: Option<f64>,
    pub better_worse: Option<BetterWorse>,
    pub nsp_rate_percent: Option<f64>,
    pub nsp_rate_per_corpus: BTreeMap<Corpus, f64>,
    pub nsp_delta: Option<NspDelta>,
}

pub fn summarize(label: &str, records: &[RunRecord], baseline: Option<&[RunRecord]>) -> Result<RunSummary> {
    let precision = precision_at_1(records);
    let weighted = if precision.per_corpus.is_empty() {
        None
    } else {
        Some(weighted_average(&precision.per_corpus, &present_weights(&precision))?)
    };
    let has_nsp = !records.is_empty() && records.iter().all(|r| r.nsp_prob.is_some());
    let mut per_corpus = BTreeMap::new();
    if has_nsp {
        let mut groups: BTreeMap<Corpus, Vec<RunRecord>> = BTreeMap::new();
        for r in records {
            groups.entry(r.corpus.clone()).or_default().push(r.clone());
        }
        for (c, rs) in groups {
            per_corpus.insert(c, nsp_rate(&rs)?);
        }
    }
    let nsp_delta = if has_nsp && records.len() >= 2 && records.iter().all(|r| r.answer_logprob_nocontext.is_some()) {
        Some(nsp_delta_correlation(records)?)
    } else {
        None
    };
    Ok(RunSummary {
        label: label.to_string(),
        strategy: records.first().map(|r| r.strategy).unwrap_or(Strategy::None),
        n_records: records.len(),
        weighted_average_p1: weighted,
        better_worse: baseline.map(|b| delta_analysis(records, b)).transpose()?,
        nsp_rate_percent: if has_nsp { Some(nsp_rate(records)?) } else { None },
        nsp_rate_per_corpus: per_corpus,
        nsp_delta,
        precision,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTestEntry {
    pub a: String,
    pub b: String,
    pub test: SignTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub baseline: RunSummary,
    pub runs: Vec<RunSummary>,
    pub sign_tests: Vec<SignTestEntry>,
    pub recall_curve: Option<crate::index::RecallCurve>,
    pub dataset: Option<crate::probe::DatasetStats>,
}

/// Summaries for the baseline and every labelled run, and pairwise sign
/// tests over the relations all of them share.
pub fn evaluate(baseline: &[RunRecord], runs: &[(String, Vec<RunRecord>)]) -> Result<EvalReport> {
    let base = summarize("none", baseline, None)?;
    let mut summaries = Vec::new();
    for (label, recs) in runs {
        summaries.push(summarize(label, recs, Some(baseline))?);
    }
    let all: Vec<&RunSummary> = std::iter::once(&base).chain(summaries.iter()).collect();
    let mut sign_tests = Vec::new();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let (a, b) = (&all[i].precision.per_relation, &all[j].precision.per_relation);
            let shared: Vec<&String> = a.keys().filter(|k| b.contains_key(*k)).collect();
            let pick = |m: &BTreeMap<String, f64>| -> BTreeMap<String, f64> {
                shared.iter().map(|k| ((*k).clone(), m[*k])).collect()
            };
            sign_tests.push(SignTestEntry {
                a: all[j].label.clone(),
                b: all[i].label.clone(),
                test: sign_test(&pick(b), &pick(a))?,
            });
        }
    }
    Ok(EvalReport {
        baseline: base,
        runs: summaries,
        sign_tests,
        recall_curve: None,
        dataset: None,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn rec(uuid: &str, relation: &str, answer: &str, argmax: &str) -> RunRecord {
        RunRecord {
            fact_uuid: uuid.into(),
            relation: relation.into(),
            corpus: Corpus::TREx,
            strategy: Strategy::None,
            mode: Mode::TwoSegment,
            answer: answer.into(),
            argmax_token: argmax.into(),
            answer_logprob: -1.0,
            answer_logprob_nocontext: None,
            nsp_prob: None,
            answer_present: false,
            query: String::new(),
            context_head: String::new(),
            context_source: String::new(),
            top_k: Vec::new(),
        }
    }

    #[test]
    fn p1_two_of_three() {
        let rs = vec![rec("1", "r", "a", "a"), rec("2", "r", "b", "b"), rec("3", "r", "c", "a")];
        let t = precision_at_1(&rs);
        assert!((t.per_relation["r"] - 66.67).abs() < 0.01);
        assert_eq!(t.per_corpus[&Corpus::TREx], t.per_relation["r"]);
    }

    #[test]
    fn corpus_p1_is_relation_macro() {
        let rs = vec![
            rec("1", "r1", "a", "a"),
            rec("2", "r2", "a", "b"),
            rec("3", "r2", "a", "b"),
            rec("4", "r2", "a", "b"),
        ];
        assert_eq!(precision_at_1(&rs).per_corpus[&Corpus::TREx], 50.0);
    }

    #[test]
    fn weighted_average_table_cells() {
        let cells = |g: f64, t: f64, s: f64| -> BTreeMap<Corpus, f64> {
            [(Corpus::GoogleRE, g), (Corpus::TREx, t), (Corpus::SQuAD, s)].into()
        };
        for (g, t, s, want) in [(10.5, 32.3, 17.4, 30.5), (40.8, 43.1, 34.3, 42.8), (78.0, 62.6, 61.7, 63.6)] {
            let got = weighted_average(&cells(g, t, s), &DEFAULT_WEIGHTS).unwrap();
            assert!((got - want).abs() < 0.05, "{got} vs {want}");
        }
        let same = weighted_average(&cells(7.0, 7.0, 7.0), &DEFAULT_WEIGHTS).unwrap();
        assert!((same - 7.0).abs() < 1e-12);
        let partial: BTreeMap<Corpus, f64> = [(Corpus::TREx, 1.0)].into();
        match weighted_average(&partial, &DEFAULT_WEIGHTS) {
            Err(Error::MissingCorpus(m)) => assert_eq!(m, vec!["GoogleRE", "SQuAD"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sign_test_requires_same_relations() {
        let a: BTreeMap<String, f64> = [("x".to_string(), 1.0)].into();
        let b: BTreeMap<String, f64> = [("y".to_string(), 1.0)].into();
        assert!(sign_test(&a, &b).is_err());
    }

    #[test]
    fn delta_cells_and_pairing() {
        let base = vec![rec("1", "r", "a", "b"), rec("2", "r", "a", "a"), rec("3", "r", "a", "b")];
        let mut ctx = vec![rec("1", "r", "a", "a"), rec("2", "r", "a", "b"), rec("3", "r", "a", "a")];
        ctx[0].answer_present = true;
        let bw = delta_analysis(&ctx, &base).unwrap();
        assert!((bw.better_present - 100.0 / 3.0).abs() < 1e-12);
        assert!((bw.better_absent - 100.0 / 3.0).abs() < 1e-12);
        assert!((bw.worse_absent - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(bw.better_total, bw.better_present + bw.better_absent);
        assert_eq!(bw.worse_total, bw.worse_present + bw.worse_absent);
        assert_eq!(bw.n_relations_improved, 1);

        let same = delta_analysis(&base, &base).unwrap();
        assert_eq!((same.better_total, same.worse_total, same.n_relations_improved), (0.0, 0.0, 0));

        let orphan = vec![rec("9", "r", "a", "a")];
        assert!(matches!(delta_analysis(&orphan, &base), Err(Error::Unpaired { uuid }) if uuid == "9"));
    }

    #[test]
    fn nsp_rate_examples() {
        let mut rs = vec![rec("1", "r", "a", "a"), rec("2", "r", "a", "a")];
        assert!(nsp_rate(&rs).is_err());
        for r in &mut rs {
            r.nsp_prob = Some(1.0);
        }
        assert_eq!(nsp_rate(&rs).unwrap(), 100.0);
        rs[1].nsp_prob = Some(0.5);
        assert_eq!(nsp_rate(&rs).unwrap(), 50.0);
    }

    #[test]
    fn nsp_delta_identity_and_constant() {
        let mut rs = Vec::new();
        for (i, p) in [0.05, 0.15, 0.42, 0.77, 0.99, 1.0].iter().enumerate() {
            let mut r = rec(&i.to_string(), "r", "a", "a");
            r.nsp_prob = Some(*p);
            // P(a|q) = 1, P(a|q+c) = 1 - p so |ΔP| = p
            r.answer_logprob_nocontext = Some(0.0);
            r.answer_logprob = (1.0 - p).ln();
            rs.push(r);
        }
        let d = nsp_delta_correlation(&rs).unwrap();
        assert!(d.rho_defined);
        assert!((d.spearman_rho - 1.0).abs() < 1e-12);
        assert_eq!(d.bins.len(), 10);
        assert_eq!(d.bins[9].count, 2);
        assert_eq!(d.bins.iter().map(|b| b.count).sum::<usize>(), 6);
        assert!(d.bins[2].mean_delta.is_none());

        for r in &mut rs {
            r.nsp_prob = Some(0.3);
        }
        let d = nsp_delta_correlation(&rs).unwrap();
        assert!(!d.rho_defined);
        assert_eq!(d.spearman_rho, 0.0);
        assert!(nsp_delta_correlation(&rs[..1]).is_err());
    }
}
