//! Report files: full JSON, TSV tables, CSV curves and a per-example dump.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{EvalReport, RunRecord, RunSummary};
use crate::error::{Error, Result};

const CONTEXT_HEAD_CHARS: usize = 80;

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into())
}

fn summaries(report: &EvalReport) -> Vec<&RunSummary> {
    std::iter::once(&report.baseline).chain(report.runs.iter()).collect()
}

/// P@1 per relation and corpus, one column per run.
pub fn precision_tsv(report: &EvalReport) -> String {
    let runs = summaries(report);
    let mut s = String::from("corpus\trelation");
    for r in &runs {
        let _ = write!(s, "\t{}", r.label);
    }
    s.push('\n');
    let mut rows: BTreeSet<(String, String)> = BTreeSet::new();
    for r in &runs {
        for (rel, c) in &r.precision.relation_corpus {
            rows.insert((c.to_string(), rel.clone()));
        }
    }
    let corpora: BTreeSet<String> = rows.iter().map(|(c, _)| c.clone()).collect();
    for corpus in &corpora {
        for (_, rel) in rows.iter().filter(|(c, _)| c == corpus) {
            let _ = write!(s, "{corpus}\t{rel}");
            for r in &runs {
                let _ = write!(s, "\t{}", fmt_opt(r.precision.per_relation.get(rel).copied()));
            }
            s.push('\n');
        }
        let _ = write!(s, "{corpus}\tTotal");
        for r in &runs {
            let v = r.precision.per_corpus.iter().find(|(c, _)| c.name() == corpus).map(|(_, v)| *v);
            let _ = write!(s, "\t{}", fmt_opt(v));
        }
        s.push('\n');
    }
    s.push_str("\tweighted average");
    for r in &runs {
        let _ = write!(s, "\t{}", fmt_opt(r.weighted_average_p1));
    }
    s.push('\n');
    s
}

pub fn better_worse_tsv(report: &EvalReport) -> String {
    let mut s = String::from(
        "run\tbetter_total\tbetter_present\tbetter_absent\tworse_total\tworse_present\tworse_absent\trelations_improved\tpaired\n",
    );
    for r in &report.runs {
        if let Some(b) = &r.better_worse {
            let _ = writeln!(
                s,
                "{}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{}\t{}",
                r.label,
                b.better_total,
                b.better_present,
                b.better_absent,
                b.worse_total,
                b.worse_present,
                b.worse_absent,
                b.n_relations_improved,
                b.n_paired
            );
        }
    }
    s
}

pub fn nsp_rate_tsv(report: &EvalReport) -> String {
    let mut s = String::from("run\tcorpus\tnsp_rate\n");
    for r in &report.runs {
        for (c, v) in &r.nsp_rate_per_corpus {
            let _ = writeln!(s, "{}\t{c}\t{v:.1}", r.label);
        }
        if let Some(v) = r.nsp_rate_percent {
            let _ = writeln!(s, "{}\tall\t{v:.1}", r.label);
        }
    }
    s
}

pub fn sign_tests_tsv(report: &EvalReport) -> String {
    let mut s = String::from("a\tb\twins\tlosses\tties\tp_value\n");
    for e in &report.sign_tests {
        let t = &e.test;
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}\t{:e}", e.a, e.b, t.wins, t.losses, t.ties, t.p_value);
    }
    s
}

/// Query, context head, top-3 candidates with logprobs to one decimal, NSP.
pub fn example_dump(records: &[RunRecord]) -> String {
    let mut s = String::from("uuid\tstrategy\tanswer\tquery\tcontext\ttop3\tnsp\n");
    for r in records {
        let head: String = r.context_head.chars().take(CONTEXT_HEAD_CHARS).collect();
        let top: Vec<String> = r
            .top_k
            .iter()
            .take(3)
            .map(|t| format!("{} [{:.1}]", t.token, t.logprob))
            .collect();
        let nsp = r.nsp_prob.map(|p| format!("{p:.2}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{nsp}",
            r.fact_uuid,
            r.strategy,
            r.answer,
            r.query.replace('\t', " "),
            head.replace(['\t', '\n'], " "),
            top.join(", ")
        );
    }
    s
}

fn write(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Write every artifact of `report` into `dir`.
pub fn write_report(report: &EvalReport, examples: &[RunRecord], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("report.json"), &serde_json::to_string_pretty(report)?)?;
    write(&dir.join("precision.tsv"), &precision_tsv(report))?;
    write(&dir.join("better_worse.tsv"), &better_worse_tsv(report))?;
    write(&dir.join("nsp_rate.tsv"), &nsp_rate_tsv(report))?;
    write(&dir.join("sign_tests.tsv"), &sign_tests_tsv(report))?;
    if let Some(curve) = &report.recall_curve {
        write(&dir.join("recall.csv"), &curve.to_csv())?;
    }
    for r in &report.runs {
        if let Some(d) = &r.nsp_delta {
            write(&dir.join(format!("nsp_bins_{}.csv", r.label)), &d.to_csv())?;
        }
    }
    write(&dir.join("examples.tsv"), &example_dump(examples))
}
