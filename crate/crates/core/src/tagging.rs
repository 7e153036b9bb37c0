//! Linearized label sequences built from tagger tokens and spans.
//!
//! Per-tuple patterns, concatenated over the tuple set:
//!
//! | task  | pattern                          |
//! |-------|----------------------------------|
//! | ATE   | `<aspect> a`                     |
//! | UABSA | `<pol> a`                        |
//! | AOPE  | `<aspect> a <opinion> o`         |
//! | ASTE  | `<pol> a <opinion> o`            |
//!
//! where `<pol>` is one of `<pos>`, `<neu>`, `<neg>`. A sentence with no tuples
//! is labeled with the single token `<none>`.

use std::fmt;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::types::{tuple_conforms, Polarity, SentimentTuple, Task, TupleSet};

pub const ASPECT: &str = "<aspect>";
pub const OPINION: &str = "<opinion>";
pub const POS: &str = "<pos>";
pub const NEU: &str = "<neu>";
pub const NEG: &str = "<neg>";
pub const NONE: &str = "<none>";

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Model specials. They may never appear inside a label span.
pub const RESERVED: [&str; 4] = [PAD, BOS, EOS, UNK];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaggerToken {
    Aspect,
    Opinion,
    Pos,
    Neu,
    Neg,
}

impl TaggerToken {
    pub const ALL: [TaggerToken; 5] = [
        TaggerToken::Aspect,
        TaggerToken::Opinion,
        TaggerToken::Pos,
        TaggerToken::Neu,
        TaggerToken::Neg,
    ];

    pub fn surface(self) -> &'static str {
        match self {
            TaggerToken::Aspect => ASPECT,
            TaggerToken::Opinion => OPINION,
            TaggerToken::Pos => POS,
            TaggerToken::Neu => NEU,
            TaggerToken::Neg => NEG,
        }
    }

    pub fn from_surface(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.surface() == s)
    }

    pub fn for_polarity(p: Polarity) -> Self {
        match p {
            Polarity::Pos => TaggerToken::Pos,
            Polarity::Neu => TaggerToken::Neu,
            Polarity::Neg => TaggerToken::Neg,
        }
    }

    fn polarity(self) -> Option<Polarity> {
        match self {
            TaggerToken::Pos => Some(Polarity::Pos),
            TaggerToken::Neu => Some(Polarity::Neu),
            TaggerToken::Neg => Some(Polarity::Neg),
            _ => None,
        }
    }

    fn in_task(self, task: Task) -> bool {
        let schema = task.schema();
        match self {
            TaggerToken::Aspect => !schema.requires_polarity,
            TaggerToken::Opinion => schema.requires_opinion,
            _ => schema.requires_polarity,
        }
    }
}

impl fmt::Display for TaggerToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.surface())
    }
}

/// Whether `token` is a tagger token or the empty-label sentinel.
pub fn is_marker(token: &str) -> bool {
    token == NONE || TaggerToken::from_surface(token).is_some()
}

/// Tagger tokens a task's labels may use, plus `<none>` and the end marker.
pub fn tagger_vocabulary(task: Task) -> Vec<&'static str> {
    TaggerToken::ALL
        .into_iter()
        .filter(|t| t.in_task(task))
        .map(TaggerToken::surface)
        .chain([NONE, EOS])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("empty label sequence")]
    Empty,
    #[error("word {word:?} precedes the first tagger token")]
    WordBeforeTag { word: String },
    #[error("tag {tag} is not part of the {task} grammar")]
    TagNotInTask { tag: String, task: Task },
    #[error("{OPINION} at token {position} has no preceding aspect segment")]
    OpinionWithoutAspect { position: usize },
    #[error("empty span after the tag at token {position}")]
    EmptySpan { position: usize },
    #[error("aspect segment at token {position} is missing its {OPINION} part")]
    MissingOpinion { position: usize },
    #[error("{NONE} must be the only token of a label")]
    MisplacedSentinel,
    #[error("reserved token {token:?} inside a span")]
    ReservedToken { token: String },
}

/// A label sequence as a flat list of tokens, kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TaggedSequence {
    pub task: Task,
    tokens: Vec<String>,
}

impl TaggedSequence {
    pub fn from_tokens(tokens: Vec<String>, task: Task) -> Self {
        Self { task, tokens }
    }

    pub fn from_text(text: &str, task: Task) -> Self {
        Self {
            task,
            tokens: text.split_whitespace().map(str::to_owned).collect(),
        }
    }

    pub fn empty_label(task: Task) -> Self {
        Self {
            task,
            tokens: vec![NONE.to_owned()],
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_empty_label(&self) -> bool {
        self.tokens.len() == 1 && self.tokens[0] == NONE
    }

    pub fn parse(&self) -> Result<TupleSet, FormatError> {
        parse_tokens(&self.tokens, self.task)
    }

    /// Non-marker tokens, i.e. the words the label's spans are made of.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str).filter(|t| !is_marker(t))
    }
}

impl fmt::Display for TaggedSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

pub fn serialize(tuples: &TupleSet, task: Task) -> Result<TaggedSequence> {
    let schema = task.schema();
    if tuples.is_empty() {
        return Ok(TaggedSequence::empty_label(task));
    }
    let mut tokens = Vec::new();
    for t in tuples {
        if !tuple_conforms(t, schema) {
            return Err(Error::SchemaViolation {
                tuple: t.to_string(),
                task,
            });
        }
        let head = match t.polarity() {
            Some(p) => TaggerToken::for_polarity(p),
            None => TaggerToken::Aspect,
        };
        tokens.push(head.surface().to_owned());
        tokens.extend(t.aspect().split_whitespace().map(str::to_owned));
        if let Some(o) = t.opinion() {
            tokens.push(OPINION.to_owned());
            tokens.extend(o.split_whitespace().map(str::to_owned));
        }
    }
    Ok(TaggedSequence { task, tokens })
}

pub fn parse(sequence: &str, task: Task) -> Result<TupleSet, FormatError> {
    let tokens: Vec<&str> = sequence.split_whitespace().collect();
    parse_tokens(&tokens, task)
}

pub fn validate(sequence: &str, task: Task) -> bool {
    parse(sequence, task).is_ok()
}

enum State<'a> {
    Start,
    Aspect {
        head: TaggerToken,
        at: usize,
        words: Vec<&'a str>,
    },
    Opinion {
        head: TaggerToken,
        at: usize,
        aspect: Vec<&'a str>,
        words: Vec<&'a str>,
    },
}

/// Single left-to-right pass over the task's regular grammar.
pub fn parse_tokens<S: AsRef<str>>(tokens: &[S], task: Task) -> Result<TupleSet, FormatError> {
    if tokens.is_empty() {
        return Err(FormatError::Empty);
    }
    if tokens.iter().any(|t| t.as_ref() == NONE) {
        return if tokens.len() == 1 {
            Ok(TupleSet::new())
        } else {
            Err(FormatError::MisplacedSentinel)
        };
    }
    let requires_opinion = task.schema().requires_opinion;
    let mut out = TupleSet::new();
    let mut state = State::Start;

    for (i, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        let Some(tag) = TaggerToken::from_surface(tok) else {
            if RESERVED.contains(&tok) {
                return Err(FormatError::ReservedToken {
                    token: tok.to_owned(),
                });
            }
            match &mut state {
                State::Start => {
                    return Err(FormatError::WordBeforeTag {
                        word: tok.to_owned(),
                    })
                }
                State::Aspect { words, .. } | State::Opinion { words, .. } => words.push(tok),
            }
            continue;
        };
        if !tag.in_task(task) {
            return Err(FormatError::TagNotInTask {
                tag: tok.to_owned(),
                task,
            });
        }
        if tag == TaggerToken::Opinion {
            state = match state {
                State::Aspect { head, at, words } => {
                    if words.is_empty() {
                        return Err(FormatError::EmptySpan { position: at });
                    }
                    State::Opinion {
                        head,
                        at: i,
                        aspect: words,
                        words: Vec::new(),
                    }
                }
                _ => return Err(FormatError::OpinionWithoutAspect { position: i }),
            };
        } else {
            finish(state, requires_opinion, &mut out)?;
            state = State::Aspect {
                head: tag,
                at: i,
                words: Vec::new(),
            };
        }
    }
    finish(state, requires_opinion, &mut out)?;
    Ok(out)
}

fn finish(state: State<'_>, requires_opinion: bool, out: &mut TupleSet) -> Result<(), FormatError> {
    let (head, aspect, opinion) = match state {
        State::Start => return Ok(()),
        State::Aspect { head, at, words } => {
            if words.is_empty() {
                return Err(FormatError::EmptySpan { position: at });
            }
            if requires_opinion {
                return Err(FormatError::MissingOpinion { position: at });
            }
            (head, words, None)
        }
        State::Opinion {
            head,
            at,
            aspect,
            words,
        } => {
            if words.is_empty() {
                return Err(FormatError::EmptySpan { position: at });
            }
            (head, aspect, Some(words.join(" ")))
        }
    };
    let tuple = SentimentTuple::new(&aspect.join(" "), opinion.as_deref(), head.polarity())
        .expect("spans checked non-empty");
    out.push(tuple);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(a: &str, o: Option<&str>, p: Option<Polarity>) -> SentimentTuple {
        SentimentTuple::new(a, o, p).unwrap()
    }

    #[test]
    fn serialize_aste_example() {
        let set = TupleSet::from_tuples([t("apple", Some("sweet"), Some(Polarity::Pos))]);
        assert_eq!(
            serialize(&set, Task::Aste).unwrap().to_string(),
            "<pos> apple <opinion> sweet"
        );
    }

    #[test]
    fn serialize_empty_is_sentinel() {
        assert_eq!(serialize(&TupleSet::new(), Task::Ate).unwrap().to_string(), "<none>");
        assert!(parse("<none>", Task::Ate).unwrap().is_empty());
    }

    #[test]
    fn serialize_uabsa_in_canonical_order() {
        let ex = crate::types::Example::new(
            "the battery life is poor but the screen is great",
            [
                t("screen", None, Some(Polarity::Pos)),
                t("battery life", None, Some(Polarity::Neg)),
            ],
        )
        .unwrap();
        assert_eq!(
            serialize(ex.tuples(), Task::Uabsa).unwrap().to_string(),
            "<neg> battery life <pos> screen"
        );
    }

    #[test]
    fn serialize_rejects_nonconforming() {
        let set = TupleSet::from_tuples([t("apple", None, None)]);
        assert!(matches!(
            serialize(&set, Task::Aste),
            Err(Error::SchemaViolation { .. })
        ));
    }

    #[test]
    fn parse_aste_example() {
        let got = parse("<pos> apple <opinion> sweet", Task::Aste).unwrap();
        assert_eq!(
            got,
            TupleSet::from_tuples([t("apple", Some("sweet"), Some(Polarity::Pos))])
        );
    }

    #[test]
    fn parse_errors() {
        use FormatError::*;
        let cases: &[(&str, Task, FormatError)] = &[
            ("<opinion> sweet", Task::Aste, OpinionWithoutAspect { position: 0 }),
            ("apple <aspect>", Task::Ate, WordBeforeTag { word: "apple".into() }),
            (
                "<pos> apple",
                Task::Ate,
                TagNotInTask {
                    tag: POS.into(),
                    task: Task::Ate,
                },
            ),
            (
                "<aspect> apple",
                Task::Uabsa,
                TagNotInTask {
                    tag: ASPECT.into(),
                    task: Task::Uabsa,
                },
            ),
            ("<aspect> <aspect> x", Task::Ate, EmptySpan { position: 0 }),
            ("<pos> apple <opinion>", Task::Aste, EmptySpan { position: 2 }),
            ("<aspect> apple", Task::Aope, MissingOpinion { position: 0 }),
            ("<aspect> a <opinion> b <opinion> c", Task::Aope, OpinionWithoutAspect { position: 4 }),
            ("<none> <aspect> a", Task::Ate, MisplacedSentinel),
            ("", Task::Ate, Empty),
            ("<aspect> </s>", Task::Ate, ReservedToken { token: EOS.into() }),
        ];
        for (seq, task, want) in cases {
            assert_eq!(parse(seq, *task).unwrap_err(), *want, "{seq:?}");
        }
    }

    #[test]
    fn validate_examples() {
        assert!(validate("<aspect> apple", Task::Ate));
        assert!(!validate("apple <aspect>", Task::Ate));
        assert!(!validate("<pos> apple", Task::Ate));
    }

    #[test]
    fn vocabulary_per_task() {
        assert_eq!(tagger_vocabulary(Task::Ate), [ASPECT, NONE, EOS]);
        assert_eq!(tagger_vocabulary(Task::Aste), [OPINION, POS, NEU, NEG, NONE, EOS]);
        assert_eq!(tagger_vocabulary(Task::Aope), [ASPECT, OPINION, NONE, EOS]);
        assert!(!tagger_vocabulary(Task::Uabsa).contains(&ASPECT));
    }

    #[test]
    fn multiword_spans_and_duplicates() {
        let got = parse("<neg> battery life <pos> screen <neg> battery life", Task::Uabsa).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got.as_slice()[0].aspect(), "battery life");
    }
}
