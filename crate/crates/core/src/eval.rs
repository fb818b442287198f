//! Rouge, length accuracy and the evaluation harness.

use crate::control::{ControlScheme, LengthUnit};
use crate::decode::{generate, GenConfig, Generation};
use crate::error::{Error, Result};
use crate::model::Bundle;
use crate::parallel::{try_map_ordered, Execution};
use crate::text::corpus::ControlledExample;
use crate::text::tokenize::split_tokens;
use crate::train::csv_error;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rouge {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Lowercased word tokens with punctuation-only tokens dropped.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    split_tokens(text).into_iter().filter(|t| t.chars().any(char::is_alphanumeric)).map(str::to_lowercase).collect()
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap between `cand` and `refr`. Empty denominators give 0.
pub fn rouge_n<T: Eq + Hash>(cand: &[T], refr: &[T], n: usize) -> Result<Rouge> {
    if n == 0 {
        return Err(Error::Parameter("rouge n must be at least 1".into()));
    }
    let c = ngram_counts(cand, n);
    let r = ngram_counts(refr, n);
    let overlap: usize = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    let ratio = |den: usize| if den == 0 { 0.0 } else { overlap as f64 / den as f64 };
    let precision = ratio(cand.len().saturating_sub(n - 1));
    let recall = ratio(refr.len().saturating_sub(n - 1));
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(Rouge { precision, recall, f1 })
}

/// Rouge-n F1 between two texts.
pub fn rouge_text(cand: &str, refr: &str, n: usize) -> Result<f64> {
    Ok(rouge_n(&rouge_tokens(cand), &rouge_tokens(refr), n)?.f1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub length: usize,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthMetrics {
    pub count: usize,
    pub n_exact: usize,
    pub n_over: usize,
    pub n_under: usize,
    pub acc: f64,
    pub diff: f64,
    pub pct_exact: f64,
    pub pct_over: f64,
    pub pct_under: f64,
    /// Accuracy grouped by reference length, ascending.
    pub per_length: Vec<CurvePoint>,
}

/// Aggregates `(generated, reference)` length pairs.
pub fn length_metrics(pairs: &[(usize, usize)]) -> Result<LengthMetrics> {
    if pairs.is_empty() {
        return Err(Error::Parameter("no length pairs to aggregate".into()));
    }
    let count = pairs.len();
    let (mut n_exact, mut n_over, mut n_under, mut abs) = (0, 0, 0, 0usize);
    let mut groups: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for &(g, r) in pairs {
        let bin = groups.entry(r).or_default();
        bin.1 += 1;
        match g.cmp(&r) {
            std::cmp::Ordering::Equal => {
                n_exact += 1;
                bin.0 += 1;
            }
            std::cmp::Ordering::Greater => n_over += 1,
            std::cmp::Ordering::Less => n_under += 1,
        }
        abs += g.abs_diff(r);
    }
    let n = count as f64;
    let per_length = groups
        .into_iter()
        .map(|(length, (hit, count))| CurvePoint { length, accuracy: hit as f64 / count as f64, count })
        .collect();
    Ok(LengthMetrics {
        count,
        n_exact,
        n_over,
        n_under,
        acc: n_exact as f64 / n,
        diff: abs as f64 / n,
        pct_exact: 100.0 * n_exact as f64 / n,
        pct_over: 100.0 * n_over as f64 / n,
        pct_under: 100.0 * n_under as f64 / n,
        per_length,
    })
}

/// Anything that turns an example into a summary, optionally at a requested length.
pub trait Summarizer: Sync {
    fn summarize(&self, ex: &ControlledExample, length: Option<usize>) -> Result<Generation>;
}

/// Returns the reference summary regardless of the request.
pub struct OracleSummarizer;

impl Summarizer for OracleSummarizer {
    fn summarize(&self, ex: &ControlledExample, length: Option<usize>) -> Result<Generation> {
        Ok(Generation::measure(ex.clean_summary(), None, length))
    }
}

/// A trained bundle decoding with a fixed [`GenConfig`].
pub struct ModelSummarizer<'a> {
    pub bundle: &'a Bundle,
    pub gen: GenConfig,
}

impl Summarizer for ModelSummarizer<'_> {
    fn summarize(&self, ex: &ControlledExample, length: Option<usize>) -> Result<Generation> {
        let mut cfg = self.gen.clone();
        if length.is_some() {
            cfg.length = length;
        }
        generate(self.bundle, ex.document.text(), &cfg)
    }
}

/// Unit the scheme controls, or `requested` for uncontrolled models.
pub fn resolve_unit(scheme: &ControlScheme, requested: Option<LengthUnit>) -> Result<LengthUnit> {
    match (scheme.unit(), requested) {
        (Some(u), Some(r)) if u != r => {
            Err(Error::Config(format!("scheme {} controls {u:?}, evaluation asked for {r:?}", scheme.name())))
        }
        (Some(u), _) => Ok(u),
        (None, r) => Ok(r.unwrap_or(LengthUnit::Tokens)),
    }
}

fn measured(g: &Generation, unit: LengthUnit) -> usize {
    match unit {
        LengthUnit::Tokens => g.gen_tokens,
        LengthUnit::Sentences => g.gen_sents,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub summary: String,
    pub reference: String,
    pub gen_tokens: usize,
    pub gen_sents: usize,
    pub claimed_len: Option<usize>,
    pub requested_len: Option<usize>,
    pub gen_len: usize,
    pub gold_len: usize,
    pub rouge1_f: f64,
    pub rouge2_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scheme: String,
    pub unit: LengthUnit,
    pub gold_lengths: bool,
    pub rouge1_f: f64,
    pub rouge2_f: f64,
    #[serde(flatten)]
    pub lengths: LengthMetrics,
}

impl EvalReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Decodes every example and scores it against its reference. With
/// `gold_lengths` the gold length in `unit` is requested for each example.
pub fn evaluate(
    summarizer: &dyn Summarizer,
    examples: &[ControlledExample],
    scheme: &ControlScheme,
    unit: LengthUnit,
    gold_lengths: bool,
    exec: Execution,
) -> Result<(EvalReport, Vec<ExampleResult>)> {
    if examples.is_empty() {
        return Err(Error::Data("evaluation corpus is empty".into()));
    }
    let results = try_map_ordered(examples, exec, |_, ex| {
        let gold_len = unit.of(ex);
        let g = summarizer.summarize(ex, gold_lengths.then_some(gold_len))?;
        let reference = ex.clean_summary();
        let (c, r) = (rouge_tokens(&g.summary), rouge_tokens(&reference));
        Ok::<_, Error>(ExampleResult {
            rouge1_f: rouge_n(&c, &r, 1)?.f1,
            rouge2_f: rouge_n(&c, &r, 2)?.f1,
            gen_len: measured(&g, unit),
            gold_len,
            reference,
            summary: g.summary,
            gen_tokens: g.gen_tokens,
            gen_sents: g.gen_sents,
            claimed_len: g.claimed_len,
            requested_len: g.requested_len,
        })
    })?;
    let pairs: Vec<(usize, usize)> = results.iter().map(|r| (r.gen_len, r.gold_len)).collect();
    let n = results.len() as f64;
    let report = EvalReport {
        scheme: scheme.to_string(),
        unit,
        gold_lengths,
        rouge1_f: results.iter().map(|r| r.rouge1_f).sum::<f64>() / n,
        rouge2_f: results.iter().map(|r| r.rouge2_f).sum::<f64>() / n,
        lengths: length_metrics(&pairs)?,
    };
    Ok((report, results))
}

/// Requests every length in `lengths` on every example and records how often
/// the output has exactly that length.
pub fn fixed_length_sweep(
    summarizer: &dyn Summarizer,
    examples: &[ControlledExample],
    unit: LengthUnit,
    lengths: std::ops::RangeInclusive<usize>,
    exec: Execution,
) -> Result<Vec<CurvePoint>> {
    let mut rows = Vec::new();
    for length in lengths {
        let hits = try_map_ordered(examples, exec, |_, ex| {
            Ok::<_, Error>(measured(&summarizer.summarize(ex, Some(length))?, unit) == length)
        })?;
        let count = hits.len();
        let hit = hits.iter().filter(|&&h| h).count();
        let accuracy = if count == 0 { 0.0 } else { hit as f64 / count as f64 };
        rows.push(CurvePoint { length, accuracy, count });
    }
    Ok(rows)
}

/// Writes `length,accuracy,count` rows.
pub fn write_curve_csv(path: impl AsRef<Path>, rows: &[CurvePoint]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
