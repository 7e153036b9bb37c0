//! Greedy decoding, either restricted to the source words plus the task's
//! tagger tokens (text-to-label) or over the whole vocabulary (label-to-text).

use std::collections::BTreeSet;

use crate::error::Result;
use crate::model::{Seq2SeqModel, TokenId, Vocab, EOS_ID};
use crate::tagging::{tagger_vocabulary, TaggedSequence};
use crate::types::Task;

pub const DEFAULT_LABEL_MAX_LEN: usize = 64;
pub const DEFAULT_SENTENCE_MAX_LEN: usize = 128;

/// The token ids a constrained decoder may emit. Always contains the end marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSet {
    allowed: BTreeSet<TokenId>,
}

impl ConstraintSet {
    /// Sentence ids (after out-of-vocabulary mapping) plus the task's tagger
    /// vocabulary, `<none>` and the end marker.
    pub fn for_sentence(vocab: &Vocab, sentence: &[TokenId], task: Task) -> Self {
        let mut allowed: BTreeSet<TokenId> = sentence.iter().copied().collect();
        allowed.extend(tagger_vocabulary(task).into_iter().filter_map(|t| vocab.id(t)));
        allowed.insert(EOS_ID);
        Self { allowed }
    }

    pub fn full(vocab: &Vocab) -> Self {
        Self {
            allowed: (0..vocab.len()).collect(),
        }
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.allowed.contains(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.allowed.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }
}

/// Index of the highest score among `allowed` (or all ids); ties go to the lowest id.
pub fn argmax(scores: &[f32], allowed: Option<&ConstraintSet>) -> TokenId {
    let mut best: Option<(TokenId, f32)> = None;
    let mut consider = |id: TokenId| {
        let s = scores[id];
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((id, s));
        }
    };
    match allowed {
        Some(set) => set.iter().filter(|&id| id < scores.len()).for_each(&mut consider),
        None => (0..scores.len()).for_each(&mut consider),
    }
    best.map(|(id, _)| id).unwrap_or(EOS_ID)
}

/// Greedy decoding of at most `max_len` tokens. The end marker is not included
/// in the output.
pub fn greedy<M: Seq2SeqModel>(
    model: &M,
    source: &[TokenId],
    allowed: Option<&ConstraintSet>,
    max_len: usize,
) -> Result<Vec<TokenId>> {
    let mut state = model.begin(source)?;
    let mut out = Vec::new();
    while out.len() < max_len {
        let next = argmax(model.scores(&state), allowed);
        if next == EOS_ID {
            break;
        }
        out.push(next);
        if out.len() < max_len {
            model.advance(&mut state, next)?;
        }
    }
    Ok(out)
}

/// Text-to-label decoding restricted to the sentence's words and tagger tokens.
pub fn constrained_generate<M: Seq2SeqModel, S: AsRef<str>>(
    model: &M,
    sentence: &[S],
    task: Task,
    max_len: usize,
) -> Result<TaggedSequence> {
    let vocab = model.vocab();
    let ids = vocab.encode(sentence);
    let allowed = ConstraintSet::for_sentence(vocab, &ids, task);
    let out = greedy(model, &ids, Some(&allowed), max_len)?;
    Ok(TaggedSequence::from_tokens(vocab.decode(&out), task))
}

/// Label-to-text decoding over the whole vocabulary.
pub fn free_generate<M: Seq2SeqModel>(
    model: &M,
    label: &TaggedSequence,
    max_len: usize,
) -> Result<Vec<String>> {
    let vocab = model.vocab();
    let ids = vocab.encode(label.tokens());
    let out = greedy(model, &ids, None, max_len)?;
    Ok(vocab.decode(&out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_respects_constraint_and_ties() {
        let scores = [0.0, 5.0, 1.0, 1.0, 9.0];
        assert_eq!(argmax(&scores, None), 4);
        let set = ConstraintSet {
            allowed: [2, 3].into_iter().collect(),
        };
        assert_eq!(argmax(&scores, Some(&set)), 2);
    }

    #[test]
    fn constraint_set_contents() {
        let vocab = Vocab::from_words(["the", "apple", "pear"]);
        let ids = vocab.encode(&["the", "apple"]);
        let u = ConstraintSet::for_sentence(&vocab, &ids, Task::Ate);
        let words: Vec<&str> = u.iter().map(|i| vocab.token(i).unwrap()).collect();
        assert_eq!(words, ["</s>", "<aspect>", "<none>", "the", "apple"]);
        assert!(!u.contains(vocab.id("pear").unwrap()));
    }
}
