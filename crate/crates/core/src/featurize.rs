//! Token layout for (query, context) pairs.
//!
//! | mode             | tokens                        | segment ids        |
//! |------------------|-------------------------------|--------------------|
//! | `two_segment`    | `[CLS] q [SEP] c [SEP]`       | 0 through first SEP, then 1 |
//! | `one_segment`    | `[CLS] q c [SEP]`             | all 0              |
//! | `separator_only` | `[CLS] q [SEP] c [SEP]`       | all 0              |
//!
//! The context is cut from its tail until the sequence fits in
//! [`MAX_LEN`]; the query is never truncated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::context::Strategy;
use crate::error::{Error, Result};
use crate::text::MASK;

pub const MAX_LEN: usize = 512;
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    TwoSegment,
    OneSegment,
    SeparatorOnly,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::TwoSegment => "two_segment",
            Mode::OneSegment => "one_segment",
            Mode::SeparatorOnly => "separator_only",
        }
    }

    /// Whether query and context are divided by a separator.
    pub fn separates(self) -> bool {
        !matches!(self, Mode::OneSegment)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_segment" => Ok(Mode::TwoSegment),
            "one_segment" => Ok(Mode::OneSegment),
            "separator_only" => Ok(Mode::SeparatorOnly),
            _ => Err(Error::Invalid(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeaturizedInput {
    pub tokens: Vec<String>,
    pub segment_ids: Vec<u8>,
    pub mask_index: usize,
    pub mode: Mode,
    pub provenance: Option<(String, Strategy)>,
}

/// Reference tokenizer: whitespace split, each punctuation character its
/// own token, `[MASK]` kept whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut pieces = chunk.split(MASK).peekable();
        while let Some(piece) = pieces.next() {
            split_punct(piece, &mut out);
            if pieces.peek().is_some() {
                out.push(MASK.to_string());
            }
        }
    }
    out
}

fn split_punct(piece: &str, out: &mut Vec<String>) {
    let mut word = String::new();
    for c in piece.chars() {
        if c.is_alphanumeric() {
            word.push(c);
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
}

pub fn assemble(query: &[String], context: &[String], mode: Mode) -> Result<FeaturizedInput> {
    let masks = query.iter().filter(|t| *t == MASK).count();
    if masks != 1 {
        return Err(Error::Invalid(format!("query must contain exactly one {MASK}, found {masks}")));
    }
    if context.iter().any(|t| t == MASK) {
        return Err(Error::Invalid(format!("context must not contain {MASK}")));
    }
    let base = query.len() + 2;
    if base > MAX_LEN {
        return Err(Error::QueryTooLong {
            len: base,
            max: MAX_LEN,
        });
    }
    // one more SEP when the context sits in its own segment
    let extra = usize::from(mode.separates());
    let room = MAX_LEN.saturating_sub(base + extra);
    let ctx = &context[..context.len().min(room)];

    let mut tokens = Vec::with_capacity(base + extra + ctx.len());
    tokens.push(CLS.to_string());
    tokens.extend(query.iter().cloned());
    if ctx.is_empty() {
        tokens.push(SEP.to_string());
    } else if mode.separates() {
        tokens.push(SEP.to_string());
        tokens.extend(ctx.iter().cloned());
        tokens.push(SEP.to_string());
    } else {
        tokens.extend(ctx.iter().cloned());
        tokens.push(SEP.to_string());
    }

    let first_segment = query.len() + 2;
    let segment_ids = (0..tokens.len())
        .map(|i| u8::from(mode == Mode::TwoSegment && i >= first_segment))
        .collect();
    let mask_index = tokens.iter().position(|t| t == MASK).expect("query holds the mask");
    Ok(FeaturizedInput {
        tokens,
        segment_ids,
        mask_index,
        mode,
        provenance: None,
    })
}

/// Tokenize and assemble in one step.
pub fn featurize(query: &str, context: Option<&str>, mode: Mode) -> Result<FeaturizedInput> {
    let q = tokenize(query);
    let c = context.map(tokenize).unwrap_or_default();
    assemble(&q, &c, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split(' ').map(str::to_string).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Paris, France."), toks("Paris , France ."));
        assert_eq!(tokenize("X is [MASK] ."), toks("X is [MASK] ."));
        assert_eq!(tokenize("X is [MASK]."), toks("X is [MASK] ."));
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn two_segment_layout() {
        let q = toks("The capital of France is [MASK] .");
        let c = toks("Paris is the capital .");
        let f = assemble(&q, &c, Mode::TwoSegment).unwrap();
        assert_eq!(
            f.tokens,
            toks("[CLS] The capital of France is [MASK] . [SEP] Paris is the capital . [SEP]")
        );
        assert_eq!(f.segment_ids, [vec![0u8; 9], vec![1u8; 6]].concat());
        assert_eq!(f.mask_index, 6);
    }

    #[test]
    fn truncates_context_tail() {
        let mut q: Vec<String> = (0..299).map(|i| format!("q{i}")).collect();
        q.push(MASK.into());
        let c: Vec<String> = (0..300).map(|i| format!("c{i}")).collect();
        let f = assemble(&q, &c, Mode::TwoSegment).unwrap();
        assert_eq!(f.tokens.len(), 512);
        let ctx_len = f.segment_ids.iter().filter(|&&s| s == 1).count() - 1;
        assert_eq!(ctx_len, 209);
        assert_eq!(f.tokens[302 + 208], "c208");
    }

    #[test]
    fn empty_context_has_single_segment() {
        let q = toks("A is [MASK]");
        let f = assemble(&q, &[], Mode::TwoSegment).unwrap();
        assert_eq!(f.tokens, toks("[CLS] A is [MASK] [SEP]"));
        assert!(f.segment_ids.iter().all(|&s| s == 0));
    }

    #[test]
    fn query_too_long() {
        let mut q: Vec<String> = (0..511).map(|i| format!("q{i}")).collect();
        q.push(MASK.into());
        assert!(matches!(
            assemble(&q, &[], Mode::OneSegment),
            Err(Error::QueryTooLong { len: 514, .. })
        ));
    }

    #[test]
    fn query_filling_budget_drops_context() {
        let mut q: Vec<String> = (0..509).map(|i| format!("q{i}")).collect();
        q.push(MASK.into());
        let f = assemble(&q, &toks("x y"), Mode::TwoSegment).unwrap();
        assert_eq!(f.tokens.len(), 512);
        assert_eq!(f.tokens.last().unwrap(), SEP);
        assert!(f.segment_ids.iter().all(|&s| s == 0));
    }

    fn word() -> impl proptest::strategy::Strategy<Value = String> {
        "[a-z]{1,6}"
    }

    proptest! {
        #[test]
        fn layout_invariants(
            q in prop::collection::vec(word(), 0..400),
            mask_at in 0usize..400,
            c in prop::collection::vec(word(), 0..700),
            mode_ix in 0usize..3,
        ) {
            let mode = [Mode::TwoSegment, Mode::OneSegment, Mode::SeparatorOnly][mode_ix];
            let mut q = q;
            let at = mask_at.min(q.len());
            q.insert(at, MASK.to_string());
            let f = assemble(&q, &c, mode).unwrap();
            prop_assert!(f.tokens.len() <= MAX_LEN);
            prop_assert_eq!(f.tokens.iter().filter(|t| *t == MASK).count(), 1);
            prop_assert_eq!(&f.tokens[f.mask_index], MASK);
            prop_assert_eq!(&f.tokens[1..=q.len()], &q[..]);
            let seps: Vec<usize> = f.tokens.iter().enumerate().filter(|(_, t)| *t == SEP).map(|(i, _)| i).collect();
            match mode {
                Mode::TwoSegment => {
                    let first = seps[0];
                    prop_assert_eq!(first, q.len() + 1);
                    for (i, s) in f.segment_ids.iter().enumerate() {
                        prop_assert_eq!(*s, u8::from(i > first));
                    }
                }
                Mode::OneSegment => {
                    prop_assert_eq!(seps, vec![f.tokens.len() - 1]);
                    prop_assert!(f.segment_ids.iter().all(|&s| s == 0));
                }
                Mode::SeparatorOnly => {
                    prop_assert_eq!(seps[0], q.len() + 1);
                    prop_assert!(f.segment_ids.iter().all(|&s| s == 0));
                }
            }
            let none_two = assemble(&q, &[], Mode::TwoSegment).unwrap();
            let none_one = assemble(&q, &[], Mode::OneSegment).unwrap();
            prop_assert_eq!(none_two, none_one.clone().with_mode(Mode::TwoSegment));
            prop_assert_eq!(assemble(&q, &c, mode).unwrap(), f);
        }
    }

    impl FeaturizedInput {
        fn with_mode(mut self, mode: Mode) -> Self {
            self.mode = mode;
            self
        }
    }
}
