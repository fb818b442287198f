//! Synthetic summarisation corpus.
//!
//! A document is a run of short templated sentences, each with its own
//! subject, verb and object drawn without replacement. Some sentences are
//! flagged salient by a leading keyword ("Notably, ..."). The reference
//! summary restates the first `K` salient sentences, in document order,
//! without the keyword. `K` follows a configurable categorical distribution,
//! and every document carries up to `extra_salient_max` salient sentences
//! beyond `K`, so the summary length is only partly recoverable from the
//! document alone.

use super::corpus::ControlledExample;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const NAMES: &[&str] = &[
    "Alice", "Bruno", "Carla", "Diego", "Elena", "Farid", "Greta", "Hiro", "Ines", "Jonas", "Kiara", "Liam", "Maya",
    "Nils", "Olga", "Pablo", "Quinn", "Rosa", "Sami", "Tara", "Umar", "Vera", "Wendy", "Xavier", "Yara", "Zane",
    "Amir", "Beth", "Cyrus", "Dana",
];
const VERBS: &[&str] = &[
    "bought",
    "sold",
    "painted",
    "fixed",
    "found",
    "lost",
    "carried",
    "cleaned",
    "moved",
    "hid",
    "opened",
    "closed",
    "borrowed",
    "repaired",
    "delivered",
    "stole",
    "packed",
    "counted",
    "weighed",
    "tested",
    "shipped",
    "ordered",
    "burned",
    "planted",
];
const OBJECTS: &[&str] = &[
    "apples",
    "boats",
    "chairs",
    "drums",
    "engines",
    "fences",
    "guitars",
    "hats",
    "ink",
    "jackets",
    "kites",
    "lamps",
    "maps",
    "nets",
    "ovens",
    "pianos",
    "quilts",
    "rugs",
    "saws",
    "tents",
    "umbrellas",
    "vans",
    "wagons",
    "boxes",
    "yarn",
    "zippers",
    "bricks",
    "candles",
    "ladders",
    "mirrors",
];
/// Every word appears in exactly one modifier.
const MODIFIERS: &[&str] = &[
    "yesterday",
    "today",
    "again",
    "quietly",
    "last week",
    "at noon",
    "very slowly",
    "in Paris",
    "on Sunday",
    "before dawn",
    "after lunch",
    "near Rome",
];
const SALIENT_KEYS: &[&str] = &["Notably", "Importantly", "Crucially"];
const FILLER_KEYS: &[&str] = &["Meanwhile", "Later", "Also"];
const TITLE: &str = "Dr.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    /// Relative weight of summary sentence count `i + 1`.
    pub summary_sentence_weights: Vec<f64>,
    pub extra_salient_max: usize,
    pub modifier_prob: f64,
    pub filler_key_prob: f64,
    pub title_prob: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            train: 4000,
            dev: 500,
            test: 500,
            min_sentences: 8,
            max_sentences: 20,
            summary_sentence_weights: vec![0.07, 0.14, 0.27, 0.25, 0.14, 0.08, 0.03, 0.02],
            extra_salient_max: 2,
            modifier_prob: 0.5,
            filler_key_prob: 0.25,
            title_prob: 0.1,
        }
    }
}

impl SynthSpec {
    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }

    fn validate(&self) -> Result<()> {
        let max_k = self.summary_sentence_weights.len();
        if self.total() == 0 || self.min_sentences == 0 || self.max_sentences < self.min_sentences {
            return Err(Error::Parameter("synthetic spec sizes must be positive and ordered".into()));
        }
        if max_k == 0
            || self.summary_sentence_weights.iter().any(|w| w.is_nan() || *w < 0.0)
            || self.summary_sentence_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Parameter("summary_sentence_weights must be non-negative with a positive sum".into()));
        }
        if max_k > self.min_sentences {
            return Err(Error::Parameter("longest summary exceeds the shortest document".into()));
        }
        if self.max_sentences > NAMES.len().min(VERBS.len()) {
            return Err(Error::Parameter(format!(
                "at most {} sentences per document are supported",
                NAMES.len().min(VERBS.len())
            )));
        }
        for p in [self.modifier_prob, self.filler_key_prob, self.title_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Parameter("probabilities must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Generated corpus split into train/dev/test.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: Vec<ControlledExample>,
    pub dev: Vec<ControlledExample>,
    pub test: Vec<ControlledExample>,
}

struct Clause {
    core: String,
}

fn sample_weighted<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn one_example<R: Rng>(spec: &SynthSpec, rng: &mut R) -> Result<ControlledExample> {
    let n = rng.gen_range(spec.min_sentences..=spec.max_sentences);
    let k = sample_weighted(&spec.summary_sentence_weights, rng) + 1;
    let m = (k + rng.gen_range(0..=spec.extra_salient_max)).min(n);

    let names: Vec<&str> = NAMES.choose_multiple(rng, n).copied().collect();
    let verbs: Vec<&str> = VERBS.choose_multiple(rng, n).copied().collect();
    let objects: Vec<&str> = OBJECTS.choose_multiple(rng, n).copied().collect();
    let mut modifiers: Vec<&str> = MODIFIERS.to_vec();
    modifiers.shuffle(rng);
    let mut salient: Vec<usize> = (0..n).collect::<Vec<_>>().choose_multiple(rng, m).copied().collect();
    salient.sort_unstable();

    let mut titled = false;
    let clauses: Vec<Clause> = (0..n)
        .map(|i| {
            let mut subject = names[i].to_string();
            if !titled && rng.gen::<f64>() < spec.title_prob {
                titled = true;
                subject = format!("{TITLE} {subject}");
            }
            let mut core = format!("{subject} {} {}", verbs[i], objects[i]);
            if rng.gen::<f64>() < spec.modifier_prob {
                if let Some(m) = modifiers.pop() {
                    core.push(' ');
                    core.push_str(m);
                }
            }
            core.push('.');
            Clause { core }
        })
        .collect();

    let mut doc = Vec::with_capacity(n);
    for (i, c) in clauses.iter().enumerate() {
        if salient.binary_search(&i).is_ok() {
            let key = SALIENT_KEYS.choose(rng).unwrap();
            doc.push(format!("{key}, {}", c.core));
        } else if rng.gen::<f64>() < spec.filler_key_prob {
            let key = FILLER_KEYS.choose(rng).unwrap();
            doc.push(format!("{key}, {}", c.core));
        } else {
            doc.push(c.core.clone());
        }
    }
    let summary: Vec<&str> = salient[..k].iter().map(|&i| clauses[i].core.as_str()).collect();
    let ex = ControlledExample::new(doc.join(" "), summary.join(" "))?;
    debug_assert_eq!(ex.gold_sents, k);
    Ok(ex)
}

/// `spec.total()` examples, deterministic in `seed`.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<Vec<ControlledExample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.total()).map(|_| one_example(spec, &mut rng)).collect()
}

/// Generates and splits in train/dev/test order.
pub fn generate_splits(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus> {
    let mut all = generate_synthetic_corpus(spec, seed)?;
    let test = all.split_off(spec.train + spec.dev);
    let dev = all.split_off(spec.train);
    Ok(SynthCorpus { train: all, dev, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::split::split_sentences;
    use crate::text::tokenize::split_tokens;

    fn small(total: usize) -> SynthSpec {
        SynthSpec { train: total, dev: 0, test: 0, ..SynthSpec::default() }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_synthetic_corpus(&small(50), 7).unwrap();
        let b = generate_synthetic_corpus(&small(50), 7).unwrap();
        let c = generate_synthetic_corpus(&small(50), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gold_lengths_match_tokenizer_and_splitter() {
        for ex in generate_synthetic_corpus(&small(2000), 3).unwrap() {
            assert_eq!(ex.gold_sents, split_sentences(ex.summary.text()).len());
            assert_eq!(ex.gold_tokens, split_tokens(ex.summary.text()).len());
            let n = ex.document.sentence_count();
            assert!((8..=20).contains(&n), "{n} sentences in {:?}", ex.document.text());
        }
    }

    #[test]
    fn summary_sentences_are_salient_sentences_in_order() {
        for ex in generate_synthetic_corpus(&small(200), 4).unwrap() {
            let salient: Vec<String> = ex
                .document
                .sentences()
                .filter_map(|s| SALIENT_KEYS.iter().find_map(|k| s.strip_prefix(&format!("{k}, ")).map(str::to_string)))
                .collect();
            let summary: Vec<&str> = ex.summary.sentences().collect();
            assert!(salient.len() >= summary.len() && salient.len() <= summary.len() + 2);
            assert_eq!(&salient[..summary.len()], &summary[..]);
        }
    }

    #[test]
    fn mean_sentence_count_near_target() {
        let exs = generate_synthetic_corpus(&small(10_000), 11).unwrap();
        let mean = exs.iter().map(|e| e.gold_sents as f64).sum::<f64>() / exs.len() as f64;
        assert!((3.3..=4.3).contains(&mean), "mean {mean}");
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = SynthSpec { min_sentences: 9, max_sentences: 8, ..SynthSpec::default() };
        assert!(matches!(generate_synthetic_corpus(&spec, 0), Err(Error::Parameter(_))));
        let spec = SynthSpec { summary_sentence_weights: vec![], ..SynthSpec::default() };
        assert!(generate_synthetic_corpus(&spec, 0).is_err());
    }
}
