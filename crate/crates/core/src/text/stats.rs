//! Summary length statistics.

use super::corpus::ControlledExample;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub max: usize,
    pub min: usize,
    pub mean: f64,
    pub median: f64,
    pub p75: usize,
    pub p95: usize,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub tokens: LengthStats,
    pub sentences: LengthStats,
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p/100 * n)`, counting from 1.
pub fn percentile(sorted: &[usize], p: f64) -> usize {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

pub fn length_stats(values: &[usize]) -> Result<LengthStats> {
    if values.is_empty() {
        return Err(Error::Parameter("statistics of an empty set".into()));
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    let mean = v.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0 };
    let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(LengthStats {
        max: v[n - 1],
        min: v[0],
        mean,
        median,
        p75: percentile(&v, 75.0),
        p95: percentile(&v, 95.0),
        std: var.sqrt(),
    })
}

/// Token and sentence statistics of the gold summaries.
pub fn corpus_stats(examples: &[ControlledExample]) -> Result<CorpusStats> {
    let tokens: Vec<usize> = examples.iter().map(|e| e.gold_tokens).collect();
    let sentences: Vec<usize> = examples.iter().map(|e| e.gold_sents).collect();
    Ok(CorpusStats { count: examples.len(), tokens: length_stats(&tokens)?, sentences: length_stats(&sentences)? })
}
