use super::tokenize::split_tokens;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const SN: TokenId = 4;
pub const SEP: TokenId = 5;
pub const DIGIT_BASE: TokenId = 6;
pub const BUCKET_BASE: TokenId = DIGIT_BASE + 10;
/// Number of reserved bucket tokens `[BKT0]..[BKT99]`.
pub const MAX_BUCKETS: usize = 100;
/// Size of the fixed reserved prefix.
pub const RESERVED: usize = BUCKET_BASE + MAX_BUCKETS;

pub const PAD_STR: &str = "[PAD]";
pub const BOS_STR: &str = "[BOS]";
pub const EOS_STR: &str = "[EOS]";
pub const UNK_STR: &str = "[UNK]";
pub const SN_STR: &str = "[SN]";
pub const SEP_STR: &str = "[SEP]";

pub fn digit_id(d: u32) -> TokenId {
    debug_assert!(d < 10);
    DIGIT_BASE + d as usize
}

pub fn bucket_token(i: usize) -> String {
    format!("[BKT{i}]")
}

pub fn bucket_token_id(i: usize) -> Result<TokenId> {
    if i >= MAX_BUCKETS {
        return Err(Error::Parameter(format!("bucket {i} exceeds the {MAX_BUCKETS} reserved bucket tokens")));
    }
    Ok(BUCKET_BASE + i)
}

/// Bucket index of a bucket token id.
pub fn bucket_of(id: TokenId) -> Option<usize> {
    (BUCKET_BASE..RESERVED).contains(&id).then(|| id - BUCKET_BASE)
}

/// Digit value of a digit token id.
pub fn digit_of(id: TokenId) -> Option<u32> {
    (DIGIT_BASE..BUCKET_BASE).contains(&id).then(|| (id - DIGIT_BASE) as u32)
}

fn reserved_tokens() -> Vec<String> {
    let mut v: Vec<String> =
        [PAD_STR, BOS_STR, EOS_STR, UNK_STR, SN_STR, SEP_STR].iter().map(|s| s.to_string()).collect();
    v.extend((0..10).map(|d| d.to_string()));
    v.extend((0..MAX_BUCKETS).map(bucket_token));
    v
}

/// Word-level vocabulary. Ids `0..RESERVED` are the same for every
/// vocabulary; corpus words follow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        Vocabulary::from_tokens(tokens).map_err(serde::de::Error::custom)
    }
}

impl Vocabulary {
    /// Vocabulary holding only the reserved tokens.
    pub fn reserved_only() -> Self {
        Self::from_tokens(reserved_tokens()).expect("reserved tokens are unique")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED || tokens[..RESERVED] != reserved_tokens()[..] {
            return Err(Error::Data("vocabulary does not start with the reserved tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
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

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Reserved tokens first, then corpus tokens by descending frequency with
/// lexicographic tie-breaking, up to `max_size` entries in total.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], max_size: usize) -> Result<Vocabulary> {
    if max_size < RESERVED {
        return Err(Error::Parameter(format!(
            "vocabulary size {max_size} is smaller than the {RESERVED} reserved tokens"
        )));
    }
    if corpus.is_empty() {
        return Err(Error::Parameter("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut vocab = Vocabulary::reserved_only();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for text in corpus {
        for tok in split_tokens(text.as_ref()) {
            if vocab.id(tok).is_none() {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    for (tok, _) in ranked.into_iter().take(max_size - RESERVED) {
        vocab.index.insert(tok.to_string(), vocab.tokens.len());
        vocab.tokens.push(tok.to_string());
    }
    Ok(vocab)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_then_lexicographic_order() {
        let v = build_vocab(&["a a b"], 200).unwrap();
        assert!(v.id("a").unwrap() < v.id("b").unwrap());
        let v = build_vocab(&["b a"], 200).unwrap();
        assert_eq!(v.id("a"), Some(RESERVED));
        assert_eq!(v.id("b"), Some(RESERVED + 1));
    }

    #[test]
    fn reserved_prefix_is_fixed() {
        let a = build_vocab(&["x y z"], 500).unwrap();
        let b = build_vocab(&["completely different words here"], 500).unwrap();
        assert_eq!(a.tokens()[..RESERVED], b.tokens()[..RESERVED]);
        assert_eq!(a.id(PAD_STR), Some(0));
        assert_eq!(a.id(SN_STR), Some(SN));
        assert_eq!(a.id("7"), Some(digit_id(7)));
        assert_eq!(a.id("[BKT3]"), Some(BUCKET_BASE + 3));
    }

    #[test]
    fn size_limits() {
        assert!(matches!(build_vocab(&["a"], RESERVED - 1), Err(Error::Parameter(_))));
        let v = build_vocab(&["c b a a"], RESERVED + 1).unwrap();
        assert_eq!(v.len(), RESERVED + 1);
        assert_eq!(v.token(RESERVED), Some("a"));
    }

    #[test]
    fn digits_in_corpus_reuse_reserved_ids() {
        let v = build_vocab(&["in 2 parks"], 500).unwrap();
        assert_eq!(v.len(), RESERVED + 2);
    }

    #[test]
    fn serde_round_trip() {
        let v = build_vocab(&["the cat sat"], 500).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
    }
}
