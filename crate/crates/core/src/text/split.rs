//! Rule-based sentence boundary detection.
//!
//! A boundary follows `.`, `!` or `?` (optionally followed by closing quotes
//! or brackets) when the next non-whitespace character is an uppercase
//! letter, a digit or a control token. A `.` ending a known abbreviation or a
//! single-letter initial does not end a sentence.

use serde::{Deserialize, Serialize};

/// Tokens that never end a sentence when followed by a period.
pub const ABBREVIATIONS: &[&str] = &[
    "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "Sr.", "Jr.", "St.", "Mt.", "Gen.", "Col.", "Capt.", "Lt.", "Sgt.", "Gov.",
    "Sen.", "Rep.", "Rev.", "Hon.", "Inc.", "Ltd.", "Co.", "Corp.", "vs.", "etc.", "e.g.", "i.e.", "cf.", "al.",
    "approx.", "No.", "Fig.", "Jan.", "Feb.", "Mar.", "Apr.", "Jun.", "Jul.", "Aug.", "Sep.", "Sept.", "Oct.", "Nov.",
    "Dec.", "U.S.", "U.K.", "U.N.", "E.U.", "a.m.", "p.m.",
];

/// Byte range of one sentence within its source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub begin: usize,
    pub end: usize,
}

/// Pluggable splitter interface.
pub trait SentenceSplitter: Send + Sync {
    fn split(&self, text: &str) -> Vec<Span>;
}

#[derive(Debug, Clone, Default)]
pub struct RuleSplitter;

impl SentenceSplitter for RuleSplitter {
    fn split(&self, text: &str) -> Vec<Span> {
        split_sentences(text)
    }
}

fn is_abbreviation(word_with_period: &str) -> bool {
    let w = word_with_period.trim_start_matches(['(', '"', '\'']);
    if ABBREVIATIONS.contains(&w) {
        return true;
    }
    // single-letter initials such as "J."
    let mut cs = w.chars();
    matches!((cs.next(), cs.next(), cs.next()), (Some(c), Some('.'), None) if c.is_uppercase())
}

fn push_trimmed(text: &str, begin: usize, end: usize, out: &mut Vec<Span>) {
    let seg = &text[begin..end];
    let lead = seg.len() - seg.trim_start().len();
    let trimmed = seg.trim();
    if !trimmed.is_empty() {
        out.push(Span { begin: begin + lead, end: begin + lead + trimmed.len() });
    }
}

/// Sentence spans of `text`. Text without a boundary is one sentence; an
/// all-whitespace text has none.
pub fn split_sentences(text: &str) -> Vec<Span> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if !matches!(c, b'.' | b'!' | b'?') {
            i += 1;
            continue;
        }
        let mut end = i + 1;
        while end < bytes.len() && matches!(bytes[end], b'"' | b'\'' | b')' | b']') {
            end += 1;
        }
        let ws = text[end..].len() - text[end..].trim_start().len();
        let next = text[end + ws..].chars().next();
        let starts_sentence = ws > 0 && next.is_some_and(|n| n.is_uppercase() || n.is_ascii_digit() || n == '[');
        if starts_sentence && c == b'.' {
            let word_start = text[..i].rfind(char::is_whitespace).map_or(0, |p| p + 1);
            if is_abbreviation(&text[word_start..=i]) {
                i = end;
                continue;
            }
        }
        if starts_sentence {
            push_trimmed(text, start, end, &mut spans);
            start = end;
        }
        i = end;
    }
    push_trimmed(text, start, text.len(), &mut spans);
    spans
}

/// Text paired with its sentence spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    text: String,
    spans: Vec<Span>,
}

impl Document {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let spans = split_sentences(&text);
        Document { text, spans }
    }

    pub fn with_splitter(text: impl Into<String>, splitter: &dyn SentenceSplitter) -> Self {
        let text = text.into();
        let spans = splitter.split(&text);
        Document { text, spans }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn sentence_count(&self) -> usize {
        self.spans.len()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &str> {
        self.spans.iter().map(|s| &self.text[s.begin..s.end])
    }

    /// Sentences joined by single spaces.
    pub fn canonical(&self) -> String {
        self.sentences().collect::<Vec<_>>().join(" ")
    }
}
