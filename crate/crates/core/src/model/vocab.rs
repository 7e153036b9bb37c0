use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagging::{self, TaggerToken};

pub type TokenId = usize;

pub const PAD_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;
pub const UNK_ID: TokenId = 3;

/// Word-level vocabulary. Specials occupy ids 0..4, then the tagger tokens and
/// `<none>`, then corpus words in first-seen order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    pub fn new() -> Self {
        let fixed = [tagging::PAD, tagging::BOS, tagging::EOS, tagging::UNK]
            .into_iter()
            .chain(TaggerToken::ALL.into_iter().map(TaggerToken::surface))
            .chain([tagging::NONE]);
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in fixed {
            v.insert(t);
        }
        v
    }

    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self::new();
        for w in words {
            v.insert(w);
        }
        v
    }

    pub fn insert(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Maps unknown words to `<unk>`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK_ID))
            .collect()
    }

    pub fn encode_strict<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<TokenId>> {
        tokens
            .iter()
            .map(|t| {
                self.id(t.as_ref())
                    .ok_or_else(|| Error::UnknownWord(t.as_ref().to_owned()))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(tagging::UNK).to_owned())
            .collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_ids() {
        let v = Vocab::from_words(["the", "apple", "the"]);
        assert_eq!(v.id(tagging::EOS), Some(EOS_ID));
        assert_eq!(v.id(tagging::UNK), Some(UNK_ID));
        assert_eq!(v.id(tagging::NONE), Some(9));
        assert_eq!(v.len(), 12);
        assert_eq!(v.encode(&["apple", "pear"]), vec![11, UNK_ID]);
        assert!(v.encode_strict(&["pear"]).is_err());
    }
}
