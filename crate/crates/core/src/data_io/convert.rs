//! Converters from the public release formats of the benchmark datasets.

use std::collections::BTreeMap;
use std::str::FromStr;

use regex::Regex;

use crate::error::{Error, Result};
use crate::types::{Corpus, DomainId, Example, Polarity, SentimentTuple, Split, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpstreamFormat {
    /// `tokens####w=O w=T-POS ...`, one sentence per line. Tags `T` or `T-<POL>`.
    UnifiedTags,
    /// `tokens####[([2], [5], 'POS'), ...]` with 0-based token indices.
    Triplets,
    /// Tab-separated `s_id, sentence, target_tags, opinion_words_tags` with
    /// `word\B`-style tags, one row per target, header on line 1.
    Towe,
}

impl FromStr for UpstreamFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unified-tags" => Ok(Self::UnifiedTags),
            "triplets" => Ok(Self::Triplets),
            "towe" => Ok(Self::Towe),
            _ => Err(Error::Config(format!(
                "unknown upstream format {s:?} (expected unified-tags, triplets or towe)"
            ))),
        }
    }
}

/// Drops the elements `task` does not use.
pub fn project_tuple(t: &SentimentTuple, task: Task) -> Result<SentimentTuple> {
    let schema = task.schema();
    let opinion = if schema.requires_opinion {
        Some(t.opinion().ok_or_else(|| missing(t, task))?)
    } else {
        None
    };
    let polarity = if schema.requires_polarity {
        Some(t.polarity().ok_or_else(|| missing(t, task))?)
    } else {
        None
    };
    SentimentTuple::new(t.aspect(), opinion, polarity)
}

fn missing(t: &SentimentTuple, task: Task) -> Error {
    Error::SchemaViolation {
        tuple: t.to_string(),
        task,
    }
}

pub fn convert(format: UpstreamFormat, text: &str, task: Task, domain: DomainId, split: Split) -> Result<Corpus> {
    let rows = match format {
        UpstreamFormat::UnifiedTags => unified_tags(text)?,
        UpstreamFormat::Triplets => triplets(text)?,
        UpstreamFormat::Towe => towe(text)?,
    };
    let mut examples = Vec::with_capacity(rows.len());
    for (line, tokens, tuples) in rows {
        let projected = tuples
            .iter()
            .map(|t| project_tuple(t, task))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| row_err(line, e.to_string()))?;
        examples.push(Example::from_tokens(tokens, projected).map_err(|e| row_err(line, e.to_string()))?);
    }
    Corpus::new(domain, task, split, true, examples)
}

type Row = (usize, Vec<String>, Vec<SentimentTuple>);

fn row_err(line: usize, message: String) -> Error {
    Error::Parse {
        path: "<upstream>".into(),
        line,
        message,
    }
}

fn span(tokens: &[String], indices: &[usize], line: usize) -> Result<String> {
    let (lo, hi) = match (indices.iter().min(), indices.iter().max()) {
        (Some(&lo), Some(&hi)) if hi < tokens.len() => (lo, hi),
        _ => return Err(row_err(line, format!("bad span indices {indices:?}"))),
    };
    Ok(tokens[lo..=hi].join(" "))
}

fn unified_tags(text: &str) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line = i + 1;
        let (_, tagged) = raw
            .split_once("####")
            .ok_or_else(|| row_err(line, "missing #### separator".into()))?;
        let mut tokens = Vec::new();
        let mut tuples = Vec::new();
        let mut open: Option<(usize, Option<Polarity>)> = None;
        let close = |open: &mut Option<(usize, Option<Polarity>)>, end: usize, tokens: &[String], tuples: &mut Vec<SentimentTuple>| -> Result<()> {
            if let Some((start, pol)) = open.take() {
                tuples.push(SentimentTuple::new(&tokens[start..end].join(" "), None, pol)?);
            }
            Ok(())
        };
        for item in tagged.split_whitespace() {
            let (word, tag) = item
                .rsplit_once('=')
                .ok_or_else(|| row_err(line, format!("untagged token {item:?}")))?;
            let idx = tokens.len();
            tokens.push(word.to_owned());
            let current = match tag {
                "O" => None,
                "T" => Some(None),
                t if t.starts_with("T-") => Some(Some(t[2..].parse::<Polarity>()?)),
                t => return Err(row_err(line, format!("unknown tag {t:?}"))),
            };
            match (current, open) {
                (Some(p), Some((_, q))) if p == q => {}
                (Some(p), _) => {
                    close(&mut open, idx, &tokens, &mut tuples)?;
                    open = Some((idx, p));
                }
                (None, _) => close(&mut open, idx, &tokens, &mut tuples)?,
            }
        }
        let end = tokens.len();
        close(&mut open, end, &tokens, &mut tuples)?;
        rows.push((line, tokens, tuples));
    }
    Ok(rows)
}

fn triplets(text: &str) -> Result<Vec<Row>> {
    let re = Regex::new(r"\(\s*\[([\d,\s]*)\]\s*,\s*\[([\d,\s]*)\]\s*,\s*'(POS|NEU|NEG)'\s*\)").expect("valid regex");
    let indices = |s: &str| -> Vec<usize> { s.split(',').filter_map(|x| x.trim().parse().ok()).collect() };
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line = i + 1;
        let (sentence, labels) = raw
            .split_once("####")
            .ok_or_else(|| row_err(line, "missing #### separator".into()))?;
        let tokens: Vec<String> = sentence.split_whitespace().map(str::to_owned).collect();
        let mut tuples = Vec::new();
        for cap in re.captures_iter(labels) {
            let aspect = span(&tokens, &indices(&cap[1]), line)?;
            let opinion = span(&tokens, &indices(&cap[2]), line)?;
            let pol: Polarity = cap[3].parse()?;
            tuples.push(SentimentTuple::new(&aspect, Some(&opinion), Some(pol))?);
        }
        rows.push((line, tokens, tuples));
    }
    Ok(rows)
}

fn bio_spans(tags: &str, line: usize) -> Result<(Vec<String>, Vec<Vec<usize>>)> {
    let mut words = Vec::new();
    let mut spans: Vec<Vec<usize>> = Vec::new();
    for (i, item) in tags.split_whitespace().enumerate() {
        let (word, tag) = item
            .rsplit_once('\\')
            .ok_or_else(|| row_err(line, format!("untagged token {item:?}")))?;
        words.push(word.to_owned());
        match tag {
            "B" => spans.push(vec![i]),
            "I" => match spans.last_mut() {
                Some(s) if s.last() == Some(&(i - 1)) => s.push(i),
                _ => spans.push(vec![i]),
            },
            "O" => {}
            t => return Err(row_err(line, format!("unknown tag {t:?}"))),
        }
    }
    Ok((words, spans))
}

fn towe(text: &str) -> Result<Vec<Row>> {
    let mut by_id: BTreeMap<String, Row> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let line = i + 1;
        let cols: Vec<&str> = raw.split('\t').collect();
        let [sid, _sentence, target_tags, opinion_tags] = cols[..] else {
            return Err(row_err(line, format!("expected 4 columns, found {}", cols.len())));
        };
        let (tokens, targets) = bio_spans(target_tags, line)?;
        let (_, opinions) = bio_spans(opinion_tags, line)?;
        let entry = by_id.entry(sid.to_owned()).or_insert_with(|| {
            order.push(sid.to_owned());
            (line, tokens.clone(), Vec::new())
        });
        for target in &targets {
            let aspect = span(&tokens, target, line)?;
            for op in &opinions {
                let opinion = span(&tokens, op, line)?;
                entry.2.push(SentimentTuple::new(&aspect, Some(&opinion), None)?);
            }
        }
    }
    Ok(order.into_iter().filter_map(|id| by_id.remove(&id)).collect())
}
