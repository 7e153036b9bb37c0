//! Domain vocabulary: tasks, sentiment tuples, examples, corpora and transfer pairs.
//!
//! Spans are stored as surface text with collapsed whitespace. Comparisons go
//! through [`normalize_span`], so two tuples that differ only in casing or
//! spacing are the same tuple.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "POS")]
    Pos,
    #[serde(rename = "NEU")]
    Neu,
    #[serde(rename = "NEG")]
    Neg,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Pos, Polarity::Neu, Polarity::Neg];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Pos => "POS",
            Polarity::Neu => "NEU",
            Polarity::Neg => "NEG",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "POS" | "POSITIVE" => Ok(Polarity::Pos),
            "NEU" | "NEUTRAL" => Ok(Polarity::Neu),
            "NEG" | "NEGATIVE" => Ok(Polarity::Neg),
            _ => Err(Error::Config(format!("unknown polarity {s:?}"))),
        }
    }
}

/// The four extraction tasks, distinguished by which tuple elements they carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "ATE")]
    Ate,
    #[serde(rename = "UABSA")]
    Uabsa,
    #[serde(rename = "AOPE")]
    Aope,
    #[serde(rename = "ASTE")]
    Aste,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Ate, Task::Uabsa, Task::Aope, Task::Aste];

    pub fn schema(self) -> TaskSchema {
        let (requires_opinion, requires_polarity) = match self {
            Task::Ate => (false, false),
            Task::Uabsa => (false, true),
            Task::Aope => (true, false),
            Task::Aste => (true, true),
        };
        TaskSchema {
            task: self,
            requires_opinion,
            requires_polarity,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Ate => "ATE",
            Task::Uabsa => "UABSA",
            Task::Aope => "AOPE",
            Task::Aste => "ASTE",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ATE" => Ok(Task::Ate),
            "UABSA" => Ok(Task::Uabsa),
            "AOPE" => Ok(Task::Aope),
            "ASTE" => Ok(Task::Aste),
            _ => Err(Error::Config(format!("unknown task {s:?}"))),
        }
    }
}

/// Which tuple elements a task requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskSchema {
    pub task: Task,
    pub requires_opinion: bool,
    pub requires_polarity: bool,
}

/// Lowercases and collapses runs of whitespace. Punctuation is kept.
pub fn normalize_span(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One extracted tuple. Which optional elements are present depends on the task.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawTuple", into = "RawTuple")]
pub struct SentimentTuple {
    aspect: String,
    opinion: Option<String>,
    polarity: Option<Polarity>,
}

#[derive(Serialize, Deserialize)]
struct RawTuple {
    aspect: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    opinion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    polarity: Option<Polarity>,
}

impl TryFrom<RawTuple> for SentimentTuple {
    type Error = Error;

    fn try_from(raw: RawTuple) -> Result<Self> {
        SentimentTuple::new(&raw.aspect, raw.opinion.as_deref(), raw.polarity)
    }
}

impl From<SentimentTuple> for RawTuple {
    fn from(t: SentimentTuple) -> Self {
        RawTuple {
            aspect: t.aspect,
            opinion: t.opinion,
            polarity: t.polarity,
        }
    }
}

impl SentimentTuple {
    pub fn new(aspect: &str, opinion: Option<&str>, polarity: Option<Polarity>) -> Result<Self> {
        let aspect = collapse_whitespace(aspect);
        if aspect.is_empty() {
            return Err(Error::EmptyAspect);
        }
        let opinion = match opinion.map(collapse_whitespace) {
            Some(o) if o.is_empty() => return Err(Error::EmptyOpinion),
            other => other,
        };
        Ok(Self {
            aspect,
            opinion,
            polarity,
        })
    }

    pub fn aspect(&self) -> &str {
        &self.aspect
    }

    pub fn opinion(&self) -> Option<&str> {
        self.opinion.as_deref()
    }

    pub fn polarity(&self) -> Option<Polarity> {
        self.polarity
    }

    /// Normalized identity used for equality, hashing and evaluation.
    pub fn key(&self) -> (String, Option<String>, Option<Polarity>) {
        (
            normalize_span(&self.aspect),
            self.opinion.as_deref().map(normalize_span),
            self.polarity,
        )
    }
}

impl PartialEq for SentimentTuple {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for SentimentTuple {}

impl Hash for SentimentTuple {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl fmt::Display for SentimentTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.aspect)?;
        if let Some(o) = &self.opinion {
            write!(f, ", {o}")?;
        }
        if let Some(p) = self.polarity {
            write!(f, ", {p}")?;
        }
        f.write_str(")")
    }
}

/// True iff the tuple carries exactly the elements the schema asks for.
pub fn tuple_conforms(t: &SentimentTuple, schema: TaskSchema) -> bool {
    t.opinion.is_some() == schema.requires_opinion && t.polarity.is_some() == schema.requires_polarity
}

/// An ordered, duplicate-free list of tuples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<SentimentTuple>", into = "Vec<SentimentTuple>")]
pub struct TupleSet(Vec<SentimentTuple>);

impl TupleSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    /// Keeps the first occurrence of each tuple, preserving order.
    pub fn from_tuples(tuples: impl IntoIterator<Item = SentimentTuple>) -> Self {
        let mut out: Vec<SentimentTuple> = Vec::new();
        for t in tuples {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        Self(out)
    }

    pub fn push(&mut self, t: SentimentTuple) {
        if !self.0.contains(&t) {
            self.0.push(t);
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SentimentTuple> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[SentimentTuple] {
        &self.0
    }

    /// Order-insensitive equality.
    pub fn same_set(&self, other: &TupleSet) -> bool {
        self.len() == other.len() && self.0.iter().all(|t| other.0.contains(t))
    }

    pub fn conforms(&self, schema: TaskSchema) -> bool {
        self.0.iter().all(|t| tuple_conforms(t, schema))
    }
}

impl From<Vec<SentimentTuple>> for TupleSet {
    fn from(v: Vec<SentimentTuple>) -> Self {
        Self::from_tuples(v)
    }
}

impl From<TupleSet> for Vec<SentimentTuple> {
    fn from(s: TupleSet) -> Self {
        s.0
    }
}

impl<'a> IntoIterator for &'a TupleSet {
    type Item = &'a SentimentTuple;
    type IntoIter = std::slice::Iter<'a, SentimentTuple>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Display for TupleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str("}")
    }
}

/// Position of the first contiguous, normalized occurrence of `span` in `tokens`.
pub fn find_span(tokens: &[String], span: &str) -> Option<usize> {
    let needle: Vec<String> = span.split_whitespace().map(str::to_lowercase).collect();
    if needle.is_empty() || needle.len() > tokens.len() {
        return None;
    }
    (0..=tokens.len() - needle.len()).find(|&start| {
        needle
            .iter()
            .zip(&tokens[start..])
            .all(|(n, t)| *n == t.to_lowercase())
    })
}

/// A whitespace-tokenized sentence with its gold tuples in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    tokens: Vec<String>,
    tuples: TupleSet,
}

impl Example {
    /// Validates every span against the sentence and sorts tuples canonically:
    /// by aspect position, then opinion position, then polarity.
    pub fn new(sentence: &str, tuples: impl IntoIterator<Item = SentimentTuple>) -> Result<Self> {
        let tokens: Vec<String> = sentence.split_whitespace().map(str::to_owned).collect();
        Self::from_tokens(tokens, tuples)
    }

    pub fn from_tokens(
        tokens: Vec<String>,
        tuples: impl IntoIterator<Item = SentimentTuple>,
    ) -> Result<Self> {
        let set = TupleSet::from_tuples(tuples);
        let mut keyed = Vec::with_capacity(set.len());
        for t in set.0 {
            let a = find_span(&tokens, t.aspect()).ok_or_else(|| Error::SpanNotInSentence {
                span: t.aspect().to_owned(),
            })?;
            let o = match t.opinion() {
                Some(o) => Some(
                    find_span(&tokens, o)
                        .ok_or_else(|| Error::SpanNotInSentence { span: o.to_owned() })?,
                ),
                None => None,
            };
            keyed.push(((a, o, t.polarity()), t));
        }
        keyed.sort_by_key(|x| x.0);
        Ok(Self {
            tokens,
            tuples: TupleSet(keyed.into_iter().map(|(_, t)| t).collect()),
        })
    }

    pub fn unlabeled(sentence: &str) -> Self {
        Self {
            tokens: sentence.split_whitespace().map(str::to_owned).collect(),
            tuples: TupleSet::new(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn sentence(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn tuples(&self) -> &TupleSet {
        &self.tuples
    }

    pub fn without_labels(&self) -> Self {
        Self {
            tokens: self.tokens.clone(),
            tuples: TupleSet::new(),
        }
    }
}

/// Canonical ordering helper for callers holding a sentence and an unordered set.
pub fn canonical_order(tokens: &[String], tuples: &TupleSet) -> Result<TupleSet> {
    Example::from_tokens(tokens.to_vec(), tuples.iter().cloned()).map(|e| e.tuples)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainId(pub String);

impl DomainId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DomainId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

/// A domain-labeled split of examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub domain: DomainId,
    pub task: Task,
    pub split: Split,
    pub labeled: bool,
    examples: Vec<Example>,
}

impl Corpus {
    pub fn new(
        domain: DomainId,
        task: Task,
        split: Split,
        labeled: bool,
        examples: Vec<Example>,
    ) -> Result<Self> {
        let schema = task.schema();
        for ex in &examples {
            if !labeled && !ex.tuples().is_empty() {
                return Err(Error::Config(format!(
                    "unlabeled corpus {domain} contains tuples for {:?}",
                    ex.sentence()
                )));
            }
            if let Some(t) = ex.tuples().iter().find(|t| !tuple_conforms(t, schema)) {
                return Err(Error::SchemaViolation {
                    tuple: t.to_string(),
                    task,
                });
            }
        }
        Ok(Self {
            domain,
            task,
            split,
            labeled,
            examples,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Same sentences with every tuple list emptied.
    pub fn to_unlabeled(&self) -> Corpus {
        Corpus {
            domain: self.domain.clone(),
            task: self.task,
            split: self.split,
            labeled: false,
            examples: self.examples.iter().map(Example::without_labels).collect(),
        }
    }

    pub fn take(&self, n: usize) -> Corpus {
        Corpus {
            examples: self.examples.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }
}

/// An ordered source to target evaluation configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransferPair {
    pub source: DomainId,
    pub target: DomainId,
    pub task: Task,
}

impl TransferPair {
    pub fn new(source: impl Into<DomainId>, target: impl Into<DomainId>, task: Task) -> Result<Self> {
        let (source, target) = (source.into(), target.into());
        if source == target {
            return Err(Error::Config(format!(
                "transfer pair needs distinct domains, got {source} twice"
            )));
        }
        Ok(Self {
            source,
            target,
            task,
        })
    }

    pub fn label(&self) -> String {
        format!("{}→{}", self.source, self.target)
    }
}

impl From<String> for DomainId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl PartialOrd for SentimentTuple {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SentimentTuple {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tuple(a: &str, o: Option<&str>, p: Option<Polarity>) -> SentimentTuple {
        SentimentTuple::new(a, o, p).unwrap()
    }

    #[test]
    fn conforms_examples() {
        let aste = Task::Aste.schema();
        assert!(tuple_conforms(&tuple("apple", Some("sweet"), Some(Polarity::Pos)), aste));
        assert!(!tuple_conforms(&tuple("apple", None, None), aste));
        assert!(tuple_conforms(
            &tuple("apple", None, Some(Polarity::Pos)),
            Task::Uabsa.schema()
        ));
    }

    #[test]
    fn conforms_exhaustive_shapes() {
        let shapes = [
            (false, false, Task::Ate),
            (false, true, Task::Uabsa),
            (true, false, Task::Aope),
            (true, true, Task::Aste),
        ];
        for task in Task::ALL {
            for &(has_o, has_p, owner) in &shapes {
                let t = tuple(
                    "apple",
                    has_o.then_some("sweet"),
                    has_p.then_some(Polarity::Pos),
                );
                assert_eq!(tuple_conforms(&t, task.schema()), task == owner, "{task} {t}");
            }
        }
    }

    #[test]
    fn empty_aspect_rejected() {
        assert!(matches!(SentimentTuple::new("  ", None, None), Err(Error::EmptyAspect)));
    }

    #[test]
    fn example_rejects_non_contiguous_span() {
        let err = Example::new("the apple is very sweet", [tuple("apple sweet", None, None)]);
        assert!(matches!(err, Err(Error::SpanNotInSentence { .. })));
        let ok = Example::new("The Apple is sweet .", [tuple("apple", None, None)]);
        assert!(ok.is_ok());
    }

    #[test]
    fn canonical_order_and_dedup() {
        let ex = Example::new(
            "the screen is bright but the battery life is short",
            [
                tuple("battery life", Some("short"), Some(Polarity::Neg)),
                tuple("screen", Some("bright"), Some(Polarity::Pos)),
                tuple("Screen", Some("bright"), Some(Polarity::Pos)),
            ],
        )
        .unwrap();
        let aspects: Vec<_> = ex.tuples().iter().map(|t| t.aspect()).collect();
        assert_eq!(aspects, ["screen", "battery life"]);
    }

    #[test]
    fn ties_broken_by_opinion_then_polarity() {
        let ex = Example::new(
            "food good and bad",
            [
                tuple("food", Some("bad"), Some(Polarity::Neg)),
                tuple("food", Some("good"), Some(Polarity::Neg)),
                tuple("food", Some("good"), Some(Polarity::Pos)),
            ],
        )
        .unwrap();
        let got: Vec<String> = ex.tuples().iter().map(|t| t.to_string()).collect();
        assert_eq!(got, ["(food, good, POS)", "(food, good, NEG)", "(food, bad, NEG)"]);
    }

    #[test]
    fn unlabeled_corpus_rejects_tuples() {
        let ex = Example::new("the apple", [tuple("apple", None, None)]).unwrap();
        let err = Corpus::new("R".into(), Task::Ate, Split::Train, false, vec![ex]);
        assert!(err.is_err());
    }

    #[test]
    fn transfer_pair_rejects_same_domain() {
        assert!(TransferPair::new("L", "L", Task::Ate).is_err());
        assert_eq!(TransferPair::new("S", "R", Task::Ate).unwrap().label(), "S→R");
    }
}
