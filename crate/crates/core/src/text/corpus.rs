//! Controlled examples and the JSONL corpus format.
//!
//! One JSON object per line with `document` and `summary`; generated or
//! preprocessed corpora also carry `gold_tokens`, `gold_sents` and `control`.

use super::split::Document;
use super::tokenize::split_tokens;
use crate::control::{strip_control, ControlScheme};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledExample {
    pub document: Document,
    pub summary: Document,
    /// Content tokens of the summary, not counting EOS or control tokens.
    pub gold_tokens: usize,
    pub gold_sents: usize,
    /// Scheme already applied to `summary`; `None` for raw summaries.
    pub control: ControlScheme,
}

impl ControlledExample {
    /// Raw example with gold lengths measured by the tokenizer and splitter.
    pub fn new(document: impl Into<String>, summary: impl Into<String>) -> Result<Self> {
        let document = Document::new(document);
        let summary = Document::new(summary);
        let gold_tokens = split_tokens(summary.text()).len();
        let gold_sents = summary.sentence_count();
        if gold_tokens == 0 || gold_sents == 0 {
            return Err(Error::Data("summary is empty".into()));
        }
        Ok(ControlledExample { document, summary, gold_tokens, gold_sents, control: ControlScheme::None })
    }

    /// Summary text with any control annotation removed.
    pub fn clean_summary(&self) -> String {
        if self.control == ControlScheme::None {
            self.summary.text().to_string()
        } else {
            strip_control(self.summary.text()).0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub document: String,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_tokens: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sents: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlScheme>,
}

impl From<&ControlledExample> for CorpusRecord {
    fn from(ex: &ControlledExample) -> Self {
        CorpusRecord {
            document: ex.document.text().to_string(),
            summary: ex.summary.text().to_string(),
            gold_tokens: Some(ex.gold_tokens),
            gold_sents: Some(ex.gold_sents),
            control: (ex.control != ControlScheme::None).then(|| ex.control.clone()),
        }
    }
}

impl TryFrom<CorpusRecord> for ControlledExample {
    type Error = Error;

    fn try_from(r: CorpusRecord) -> Result<Self> {
        let control = r.control.unwrap_or(ControlScheme::None);
        let clean = if control == ControlScheme::None { r.summary.clone() } else { strip_control(&r.summary).0 };
        let measured = ControlledExample::new(r.document, clean)?;
        let ex = ControlledExample {
            gold_tokens: r.gold_tokens.unwrap_or(measured.gold_tokens),
            gold_sents: r.gold_sents.unwrap_or(measured.gold_sents),
            summary: Document::new(r.summary),
            control,
            document: measured.document,
        };
        if ex.gold_tokens == 0 || ex.gold_sents == 0 {
            return Err(Error::Data("gold lengths must be positive".into()));
        }
        Ok(ex)
    }
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<ControlledExample>> {
    let records: Vec<CorpusRecord> = read_jsonl(&path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            ControlledExample::try_from(r)
                .map_err(|e| Error::Data(format!("{} record {}: {e}", path.as_ref().display(), i + 1)))
        })
        .collect()
}

pub fn write_corpus(path: impl AsRef<Path>, examples: &[ControlledExample]) -> Result<()> {
    let records: Vec<CorpusRecord> = examples.iter().map(CorpusRecord::from).collect();
    write_jsonl(path, &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gold_lengths_measured() {
        let ex = ControlledExample::new("Doc text here.", "Dr. Lee ran. Ann sat.").unwrap();
        assert_eq!(ex.gold_sents, 2);
        assert_eq!(ex.gold_tokens, 8);
        assert!(ControlledExample::new("doc", "   ").is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let exs = vec![
            ControlledExample::new("One. Two.", "One.").unwrap(),
            ControlledExample::new("Three four.", "Four.").unwrap(),
        ];
        write_corpus(&path, &exs).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), exs);
    }

    #[test]
    fn minimal_records_accepted_and_bad_lines_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"document\":\"A b.\",\"summary\":\"A.\"}\n\nnot json\n").unwrap();
        let err = read_corpus(&path).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        std::fs::write(&path, "{\"document\":\"A b.\",\"summary\":\"A.\"}\n").unwrap();
        let exs = read_corpus(&path).unwrap();
        assert_eq!((exs[0].gold_tokens, exs[0].gold_sents), (2, 1));
    }
}
