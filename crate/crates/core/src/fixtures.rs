//! Deterministic synthetic probe with closed-form expectations.
//!
//! Fifty facts over five relations, every one with a one-sentence evidence
//! that states the answer. Subjects use words unique to each fact, so a
//! fact's own evidence overlaps its cloze query well above the NSP gate
//! while a same-relation donor's evidence shares only the template words and
//! stays below it.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde_json::json;

use crate::error::{Error, Result};
use crate::index::Paragraph;

const FIRST: [&str; 50] = [
    "Alma", "Bruno", "Carla", "Dario", "Elsa", "Fabio", "Greta", "Hugo", "Ilse", "Jonas",
    "Katja", "Lukas", "Mira", "Nils", "Olga", "Pavel", "Rosa", "Sven", "Tilda", "Udo",
    "Vera", "Walter", "Xenia", "Yusuf", "Zora", "Anselm", "Bettina", "Cyril", "Dagmar", "Emil",
    "Frieda", "Gustav", "Hedda", "Ivo", "Jolanda", "Kasimir", "Leonie", "Magnus", "Nadia", "Oskar",
    "Petra", "Quentin", "Ruth", "Severin", "Thea", "Ulrich", "Valentin", "Wilma", "Xaver", "Yvonne",
];

const LAST: [&str; 50] = [
    "Adler", "Brandt", "Castell", "Dorn", "Eckhart", "Falk", "Gruber", "Hahn", "Imhof", "Jaeger",
    "Kessler", "Lorenz", "Mahler", "Nagel", "Oswald", "Pfeiffer", "Quast", "Reiter", "Stark", "Thaler",
    "Ullmann", "Vogt", "Wendt", "Xylander", "Zeller", "Albrecht", "Bauer", "Conrad", "Dietz", "Ebner",
    "Fuchs", "Gerber", "Haas", "Ilg", "Jung", "Kraus", "Lang", "Moser", "Neumann", "Ott",
    "Probst", "Roth", "Seidel", "Thiel", "Unger", "Voss", "Winkler", "Ziegler", "Yilmaz", "Zimmer",
];

struct RelationSpec {
    id: &'static str,
    template: &'static str,
    question: &'static str,
    answers: [&'static str; 4],
    distractor: &'static str,
}

const RELATIONS: [RelationSpec; 5] = [
    RelationSpec {
        id: "P101",
        template: "[X] works in the field of [Y] .",
        question: "What field does [X] work in?",
        answers: ["physics", "chemistry", "biology", "geology"],
        distractor: "Courses in [Y] attract many students every year.",
    },
    RelationSpec {
        id: "P19",
        template: "[X] was born in [Y] .",
        question: "Where was [X] born?",
        answers: ["Paris", "Rome", "Vienna", "Madrid"],
        distractor: "The museums of [Y] draw crowds of tourists.",
    },
    RelationSpec {
        id: "P413",
        template: "[X] plays in [Y] position .",
        question: "What position does [X] play?",
        answers: ["goalkeeper", "defender", "midfielder", "forward"],
        distractor: "A good [Y] needs stamina and vision.",
    },
    RelationSpec {
        id: "P106",
        template: "[X] is a [Y] by profession .",
        question: "What is the profession of [X]?",
        answers: ["lawyer", "painter", "singer", "surgeon"],
        distractor: "Training as a [Y] takes many years.",
    },
    RelationSpec {
        id: "P1412",
        template: "[X] speaks [Y] fluently .",
        question: "Which language does [X] speak?",
        answers: ["French", "German", "Italian", "Spanish"],
        distractor: "Textbooks teaching [Y] sell well abroad.",
    },
];

pub const SYNTHETIC_FACTS: usize = 50;
const PER_RELATION: usize = SYNTHETIC_FACTS / RELATIONS.len();

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFact {
    pub uuid: String,
    pub relation: String,
    pub subject: String,
    pub answer: String,
    pub evidence: String,
}

/// Values the copy mock must reproduce on this probe.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectations {
    /// Uniform prior, no context: argmax is the first vocabulary token, so a
    /// relation scores the share of its facts whose answer is that token.
    pub p1_none: BTreeMap<String, f64>,
    /// Every evidence contains its answer and no other candidate.
    pub p1_oracle: BTreeMap<String, f64>,
    /// one_segment admits the donor evidence, whose single candidate is a
    /// different answer.
    pub p1_adversarial_one_segment: BTreeMap<String, f64>,
}

impl Expectations {
    pub fn macro_average(per_relation: &BTreeMap<String, f64>) -> f64 {
        per_relation.values().sum::<f64>() / per_relation.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticProbe {
    pub facts: Vec<SyntheticFact>,
    pub vocab: Vec<String>,
    pub paragraphs: Vec<Paragraph>,
    /// `(uuid, text)` generations; even-numbered facts get the right answer.
    pub generated: Vec<(String, String)>,
}

pub fn synthetic_probe() -> SyntheticProbe {
    let vocab: Vec<String> = RELATIONS
        .iter()
        .flat_map(|r| r.answers.iter().map(|a| a.to_string()))
        .collect();
    let mut facts = Vec::with_capacity(SYNTHETIC_FACTS);
    let mut generated = Vec::with_capacity(SYNTHETIC_FACTS);
    for (ri, rel) in RELATIONS.iter().enumerate() {
        for j in 0..PER_RELATION {
            let n = ri * PER_RELATION + j;
            let subject = format!("{} {}", FIRST[n], LAST[n]);
            let answer = rel.answers[j % rel.answers.len()].to_string();
            let evidence = sentence(rel.template, &subject, &answer);
            let uuid = format!("syn-{:03}", n + 1);
            let guess = if n.is_multiple_of(2) { answer.clone() } else { rel.answers[(j + 1) % 4].to_string() };
            generated.push((
                uuid.clone(),
                format!(
                    "{} {}",
                    rel.question.replace("[X]", &subject),
                    sentence(rel.template, &subject, &guess)
                ),
            ));
            facts.push(SyntheticFact {
                uuid,
                relation: rel.id.to_string(),
                subject,
                answer,
                evidence,
            });
        }
    }
    let mut paragraphs: Vec<Paragraph> = facts
        .iter()
        .map(|f| Paragraph {
            para_id: format!("p-{}", f.uuid),
            doc_id: format!("doc-{}", f.subject.replace(' ', "_")),
            text: f.evidence.clone(),
        })
        .collect();
    for rel in &RELATIONS {
        for a in rel.answers {
            paragraphs.push(Paragraph {
                para_id: format!("x-{}-{a}", rel.id),
                doc_id: format!("topic-{a}"),
                text: rel.distractor.replace("[Y]", a),
            });
        }
    }
    SyntheticProbe {
        facts,
        vocab,
        paragraphs,
        generated,
    }
}

/// Fill a cloze template and tidy the spacing before the final period.
fn sentence(template: &str, subject: &str, answer: &str) -> String {
    template
        .replace("[X]", subject)
        .replace("[Y]", answer)
        .replace(" .", ".")
}

impl SyntheticProbe {
    pub fn expectations(&self) -> Expectations {
        let first = &self.vocab[0];
        let mut by_rel: BTreeMap<&str, Vec<&SyntheticFact>> = BTreeMap::new();
        for f in &self.facts {
            by_rel.entry(&f.relation).or_default().push(f);
        }
        let mut e = Expectations {
            p1_none: BTreeMap::new(),
            p1_oracle: BTreeMap::new(),
            p1_adversarial_one_segment: BTreeMap::new(),
        };
        for (rel, fs) in by_rel {
            let hits = fs.iter().filter(|f| &f.answer == first).count();
            e.p1_none.insert(rel.to_string(), 100.0 * hits as f64 / fs.len() as f64);
            e.p1_oracle.insert(rel.to_string(), 100.0);
            e.p1_adversarial_one_segment.insert(rel.to_string(), 0.0);
        }
        e
    }

    /// Write `facts.jsonl`, `relations.jsonl`, `vocab.txt`, `corpus.jsonl`
    /// and `generated.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut facts = Vec::new();
        for f in &self.facts {
            let line = json!({
                "uuid": f.uuid,
                "relation": f.relation,
                "sub_label": f.subject,
                "obj_label": f.answer,
                "evidences": [{"text": f.evidence}],
            });
            writeln!(facts, "{line}").expect("in-memory write");
        }
        let mut rels = Vec::new();
        for r in &RELATIONS {
            let line = json!({"relation": r.id, "template": r.template, "question": r.question});
            writeln!(rels, "{line}").expect("in-memory write");
        }
        let mut corpus = Vec::new();
        for p in &self.paragraphs {
            writeln!(corpus, "{}", serde_json::to_string(p)?).expect("in-memory write");
        }
        let mut generated = Vec::new();
        for (uuid, text) in &self.generated {
            writeln!(generated, "{}", json!({"uuid": uuid, "text": text})).expect("in-memory write");
        }
        let vocab = self.vocab.join("\n") + "\n";
        for (name, bytes) in [
            ("facts.jsonl", facts),
            ("relations.jsonl", rels),
            ("corpus.jsonl", corpus),
            ("generated.jsonl", generated),
            ("vocab.txt", vocab.into_bytes()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
