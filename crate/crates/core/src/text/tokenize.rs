//! Word-level tokenizer.
//!
//! Text is split on whitespace; each chunk then sheds leading `(` and any
//! trailing run of closing punctuation as separate tokens. Bracketed control
//! tokens such as `[SN]`, `[SEP]` or `[BKT4]` are recognised anywhere in a
//! chunk, and the digits directly after `[SN]` become one token per digit.
//!
//! Canonical spacing is what [`detokenize`] produces: single spaces, no space
//! before closing punctuation or after `(`, and `[SN]` glued to its digits.

use super::vocab::{self, TokenId, Vocabulary, SN_STR, UNK};

const CLOSE: &[char] = &['.', ',', '!', '?', ';', ':', ')'];
const OPEN: &[char] = &['('];

fn control_token_len(s: &str) -> Option<usize> {
    let rest = s.strip_prefix('[')?;
    let close = rest.find(']')?;
    let inner = &rest[..close];
    let ok = !inner.is_empty() && inner.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit());
    ok.then_some(close + 2)
}

fn split_chunk<'a>(mut chunk: &'a str, out: &mut Vec<&'a str>) {
    while !chunk.is_empty() {
        if let Some(n) = control_token_len(chunk) {
            let (tok, rest) = chunk.split_at(n);
            out.push(tok);
            chunk = rest;
            if tok == SN_STR {
                while let Some(c) = chunk.chars().next().filter(char::is_ascii_digit) {
                    let (d, rest) = chunk.split_at(c.len_utf8());
                    out.push(d);
                    chunk = rest;
                }
            }
            continue;
        }
        if chunk.starts_with(OPEN) {
            let (tok, rest) = chunk.split_at(1);
            out.push(tok);
            chunk = rest;
            continue;
        }
        // word up to the next control token, then split off trailing punctuation
        let end = chunk[1..].find('[').map(|i| i + 1).filter(|&i| control_token_len(&chunk[i..]).is_some());
        let (word, rest) = chunk.split_at(end.unwrap_or(chunk.len()));
        let core = word.trim_end_matches(CLOSE);
        if !core.is_empty() {
            out.push(core);
        }
        let tail = &word[core.len()..];
        for (i, c) in tail.char_indices() {
            out.push(&tail[i..i + c.len_utf8()]);
        }
        chunk = rest;
    }
}

/// Surface tokens of `text`, independent of any vocabulary.
pub fn split_tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        split_chunk(chunk, &mut out);
    }
    out
}

pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<TokenId> {
    split_tokens(text).into_iter().map(|t| vocab.id(t).unwrap_or(UNK)).collect()
}

fn is_close(tok: &str) -> bool {
    let mut cs = tok.chars();
    matches!((cs.next(), cs.next()), (Some(c), None) if CLOSE.contains(&c))
}

/// Renders ids as canonical text; PAD, BOS and EOS are dropped.
pub fn detokenize(ids: &[TokenId], vocab: &Vocabulary) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    let mut in_marker = false;
    for &id in ids {
        if matches!(id, vocab::PAD | vocab::BOS | vocab::EOS) {
            continue;
        }
        let tok = vocab.token(id).unwrap_or(vocab::UNK_STR);
        let is_digit = vocab::digit_of(id).is_some();
        let glue = match prev {
            None => true,
            Some(p) => (in_marker && is_digit) || is_close(tok) || p == "(",
        };
        if !glue {
            out.push(' ');
        }
        out.push_str(tok);
        in_marker = id == vocab::SN || (in_marker && is_digit);
        prev = Some(tok);
    }
    out
}
