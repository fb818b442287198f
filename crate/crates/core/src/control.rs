//! Text-side length control: sentence enumeration, count prefixes and
//! length buckets, plus the inverse transforms applied to model output.

use crate::error::{Error, Result};
use crate::text::corpus::ControlledExample;
use crate::text::split::Document;
use crate::text::stats::percentile;
use crate::text::vocab::{bucket_token, MAX_BUCKETS, SEP_STR, SN_STR};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Unit in which a summary length is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    Tokens,
    Sentences,
}

impl LengthUnit {
    pub fn of(self, ex: &ControlledExample) -> usize {
        match self {
            LengthUnit::Tokens => ex.gold_tokens,
            LengthUnit::Sentences => ex.gold_sents,
        }
    }
}

impl FromStr for LengthUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tokens" => Ok(LengthUnit::Tokens),
            "sentences" => Ok(LengthUnit::Sentences),
            _ => Err(Error::Config(format!("unknown length unit {s:?}"))),
        }
    }
}

/// Left edges of length buckets. Bucket `i` holds lengths in
/// `edges[i]..edges[i + 1]`; the last bucket is open-ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Buckets {
    edges: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Buckets {
    type Error = Error;

    fn try_from(edges: Vec<usize>) -> Result<Self> {
        Buckets::new(edges)
    }
}

impl From<Buckets> for Vec<usize> {
    fn from(b: Buckets) -> Self {
        b.edges
    }
}

impl Buckets {
    pub fn new(edges: Vec<usize>) -> Result<Self> {
        if edges.first() != Some(&0) {
            return Err(Error::Parameter("bucket edges must start at 0".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(format!("bucket edges must be strictly increasing: {edges:?}")));
        }
        if edges.len() > MAX_BUCKETS {
            return Err(Error::Parameter(format!("at most {MAX_BUCKETS} buckets are supported")));
        }
        Ok(Buckets { edges })
    }

    /// `k` buckets of width `ceil(P99 / k)` over the given lengths.
    pub fn fit(lengths: &[usize], k: usize) -> Result<Self> {
        if k == 0 || lengths.is_empty() {
            return Err(Error::Parameter("bucket fitting needs k >= 1 and a non-empty length set".into()));
        }
        let mut sorted = lengths.to_vec();
        sorted.sort_unstable();
        let p99 = percentile(&sorted, 99.0);
        let width = p99.div_ceil(k).max(1);
        Buckets::new((0..k).map(|i| i * width).collect())
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn bucket_id(&self, length: usize) -> Result<usize> {
        bucket_id(length, &self.edges)
    }
}

/// Index of the bucket containing `length`.
pub fn bucket_id(length: usize, edges: &[usize]) -> Result<usize> {
    if length == 0 {
        return Err(Error::Parameter("length must be at least 1".into()));
    }
    Ok(edges.partition_point(|&e| e <= length).saturating_sub(1))
}

/// Scheme applied to training targets. One scheme per trained model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlScheme {
    None,
    BucketsTok(Buckets),
    BucketsSent(Buckets),
    SentPrefix,
    SentEnum,
    Repilot,
}

impl ControlScheme {
    pub fn name(&self) -> &'static str {
        match self {
            ControlScheme::None => "none",
            ControlScheme::BucketsTok(_) => "buckets-tok",
            ControlScheme::BucketsSent(_) => "buckets-sent",
            ControlScheme::SentPrefix => "sentprefix",
            ControlScheme::SentEnum => "sentenum",
            ControlScheme::Repilot => "repilot",
        }
    }

    /// Unit the scheme controls; `None` for the unconditioned baseline.
    pub fn unit(&self) -> Option<LengthUnit> {
        match self {
            ControlScheme::None => None,
            ControlScheme::BucketsTok(_) | ControlScheme::Repilot => Some(LengthUnit::Tokens),
            ControlScheme::BucketsSent(_) | ControlScheme::SentPrefix | ControlScheme::SentEnum => {
                Some(LengthUnit::Sentences)
            }
        }
    }

    pub fn is_text_side(&self) -> bool {
        !matches!(self, ControlScheme::None | ControlScheme::Repilot)
    }

    /// Control text a decoder is force-fed to request `length` units.
    pub fn control_prefix(&self, length: usize) -> Result<String> {
        if length == 0 {
            return Err(Error::Parameter("requested length must be at least 1".into()));
        }
        Ok(match self {
            ControlScheme::SentPrefix | ControlScheme::SentEnum => format!("{SN_STR}{length} {SEP_STR}"),
            ControlScheme::BucketsTok(b) | ControlScheme::BucketsSent(b) => bucket_token(b.bucket_id(length)?),
            ControlScheme::None | ControlScheme::Repilot => String::new(),
        })
    }

    /// Annotated training target for `ex`.
    pub fn annotate(&self, ex: &ControlledExample) -> Result<String> {
        let summary = &ex.summary;
        Ok(match self {
            ControlScheme::None | ControlScheme::Repilot => summary.text().to_string(),
            ControlScheme::SentEnum => annotate_sentenum(summary),
            ControlScheme::SentPrefix => annotate_sentprefix(summary),
            ControlScheme::BucketsTok(b) => annotate_bucket(summary.text(), b, ex.gold_tokens)?,
            ControlScheme::BucketsSent(b) => annotate_bucket(summary.text(), b, ex.gold_sents)?,
        })
    }

    /// Copy of a raw example with its summary annotated under this scheme.
    pub fn apply(&self, ex: &ControlledExample) -> Result<ControlledExample> {
        if ex.control != ControlScheme::None {
            return Err(Error::Data(format!("example is already annotated with {}", ex.control)));
        }
        Ok(ControlledExample { summary: Document::new(self.annotate(ex)?), control: self.clone(), ..ex.clone() })
    }
}

impl fmt::Display for ControlScheme {
    /// `buckets-tok:0,12,24` for bucket schemes, the bare name otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        if let ControlScheme::BucketsTok(b) | ControlScheme::BucketsSent(b) = self {
            let edges: Vec<String> = b.edges.iter().map(usize::to_string).collect();
            write!(f, ":{}", edges.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for ControlScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, edges) = match s.split_once(':') {
            Some((n, e)) => (n, Some(e)),
            None => (s, None),
        };
        let buckets = || -> Result<Buckets> {
            let e = edges.ok_or_else(|| Error::Config(format!("{name} needs edges, e.g. {name}:0,10,20")))?;
            let parsed = e
                .split(',')
                .map(|x| x.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad bucket edge {x:?}"))))
                .collect::<Result<Vec<_>>>()?;
            Buckets::new(parsed).map_err(|e| Error::Config(e.to_string()))
        };
        let scheme = match name {
            "none" => ControlScheme::None,
            "sentprefix" => ControlScheme::SentPrefix,
            "sentenum" => ControlScheme::SentEnum,
            "repilot" => ControlScheme::Repilot,
            "buckets-tok" => return Ok(ControlScheme::BucketsTok(buckets()?)),
            "buckets-sent" => return Ok(ControlScheme::BucketsSent(buckets()?)),
            _ => return Err(Error::Config(format!("unknown control scheme {s:?}"))),
        };
        if edges.is_some() {
            return Err(Error::Config(format!("{name} takes no bucket edges")));
        }
        Ok(scheme)
    }
}

impl Serialize for ControlScheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ControlScheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Scheme named in a run configuration. Bucket edges are fitted to the
/// training split when the scheme is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SchemeKind {
    None,
    BucketsTok(usize),
    BucketsSent(usize),
    SentPrefix,
    SentEnum,
    Repilot,
}

pub const DEFAULT_TOKEN_BUCKETS: usize = 10;
pub const DEFAULT_SENTENCE_BUCKETS: usize = 4;

impl SchemeKind {
    pub fn resolve(self, train: &[ControlledExample]) -> Result<ControlScheme> {
        let lengths = |unit: LengthUnit| train.iter().map(|e| unit.of(e)).collect::<Vec<_>>();
        Ok(match self {
            SchemeKind::None => ControlScheme::None,
            SchemeKind::SentPrefix => ControlScheme::SentPrefix,
            SchemeKind::SentEnum => ControlScheme::SentEnum,
            SchemeKind::Repilot => ControlScheme::Repilot,
            SchemeKind::BucketsTok(k) => ControlScheme::BucketsTok(Buckets::fit(&lengths(LengthUnit::Tokens), k)?),
            SchemeKind::BucketsSent(k) => ControlScheme::BucketsSent(Buckets::fit(&lengths(LengthUnit::Sentences), k)?),
        })
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeKind::None => f.write_str("none"),
            SchemeKind::BucketsTok(k) => write!(f, "buckets-tok-{k}"),
            SchemeKind::BucketsSent(k) => write!(f, "buckets-sent-{k}"),
            SchemeKind::SentPrefix => f.write_str("sentprefix"),
            SchemeKind::SentEnum => f.write_str("sentenum"),
            SchemeKind::Repilot => f.write_str("repilot"),
        }
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    /// `none`, `sentprefix`, `sentenum`, `repilot`, `buckets-tok[-k]`,
    /// `buckets-sent[-k]`.
    fn from_str(s: &str) -> Result<Self> {
        let count = |rest: &str, default: usize| -> Result<usize> {
            if rest.is_empty() {
                return Ok(default);
            }
            let k = rest
                .strip_prefix('-')
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|k| (1..=MAX_BUCKETS).contains(k))
                .ok_or_else(|| Error::Config(format!("bad bucket count in {s:?}")))?;
            Ok(k)
        };
        match s {
            "none" => Ok(SchemeKind::None),
            "sentprefix" => Ok(SchemeKind::SentPrefix),
            "sentenum" => Ok(SchemeKind::SentEnum),
            "repilot" => Ok(SchemeKind::Repilot),
            _ => {
                if let Some(rest) = s.strip_prefix("buckets-tok") {
                    Ok(SchemeKind::BucketsTok(count(rest, DEFAULT_TOKEN_BUCKETS)?))
                } else if let Some(rest) = s.strip_prefix("buckets-sent") {
                    Ok(SchemeKind::BucketsSent(count(rest, DEFAULT_SENTENCE_BUCKETS)?))
                } else {
                    Err(Error::Config(format!("unknown control scheme {s:?}")))
                }
            }
        }
    }
}

impl TryFrom<String> for SchemeKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SchemeKind> for String {
    fn from(k: SchemeKind) -> Self {
        k.to_string()
    }
}

/// `[SN]ℓ [SEP] [SN]1 s1 [SN]2 s2 ...` with sentence text kept verbatim.
pub fn annotate_sentenum(summary: &Document) -> String {
    let mut out = format!("{SN_STR}{} {SEP_STR}", summary.sentence_count());
    for (k, s) in summary.sentences().enumerate() {
        out.push_str(&format!(" {SN_STR}{} {s}", k + 1));
    }
    out
}

/// `[SN]ℓ [SEP] summary` without inline markers.
pub fn annotate_sentprefix(summary: &Document) -> String {
    format!("{SN_STR}{} {SEP_STR} {}", summary.sentence_count(), summary.canonical())
}

/// `[BKTi] summary` where `i` is the bucket of `length`.
pub fn annotate_bucket(summary: &str, buckets: &Buckets, length: usize) -> Result<String> {
    Ok(format!("{} {}", bucket_token(buckets.bucket_id(length)?), summary.trim()))
}

/// Claimed length of a leading `[SN]digits [SEP]` header.
fn parse_header(header: &str) -> Option<usize> {
    let digits = header.trim().strip_prefix(SN_STR)?.trim();
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Deletes every `[SN]` marker with the digits glued to it, and every `[SEP]`.
fn delete_markers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    loop {
        let next_sn = rest.find(SN_STR);
        let next_sep = rest.find(SEP_STR);
        let (at, len) = match (next_sn, next_sep) {
            (None, None) => break,
            (Some(a), Some(b)) if b < a => (b, SEP_STR.len()),
            (None, Some(b)) => (b, SEP_STR.len()),
            (Some(a), _) => {
                let after = &rest[a + SN_STR.len()..];
                let digits = after.len() - after.trim_start_matches(|c: char| c.is_ascii_digit()).len();
                (a, SN_STR.len() + digits)
            }
        };
        out.push_str(&rest[..at]);
        out.push(' ');
        rest = &rest[at + len..];
    }
    out.push_str(rest);
    out
}

fn canonical_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes SentEnum/SentPrefix annotation from possibly malformed text.
/// Returns the clean text and the length claimed by a well-formed header.
pub fn strip_sentenum(text: &str) -> (String, Option<usize>) {
    let trimmed = text.trim_start();
    let mut claimed = None;
    let mut body = trimmed;
    if trimmed.starts_with(SN_STR) {
        if let Some(sep) = trimmed.find(SEP_STR) {
            claimed = parse_header(&trimmed[..sep]);
            body = &trimmed[sep + SEP_STR.len()..];
        }
    }
    let mut clean = delete_markers(body);
    // deletion can splice a new marker together from its neighbours
    while clean.contains(SN_STR) || clean.contains(SEP_STR) {
        clean = delete_markers(&clean);
    }
    (canonical_whitespace(&clean), claimed)
}

fn bucket_marker_len(s: &str) -> Option<usize> {
    let inner = s.strip_prefix("[BKT")?;
    let digits = inner.len() - inner.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    (digits > 0 && inner[digits..].starts_with(']')).then_some(4 + digits + 1)
}

/// Removes bucket tokens anywhere in the text.
pub fn strip_buckets(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < text.len() {
        if let Some(n) = bucket_marker_len(&text[i..]) {
            out.push(' ');
            i += n;
            continue;
        }
        let c = text[i..].chars().next().unwrap();
        out.push(c);
        i += c.len_utf8();
    }
    canonical_whitespace(&out)
}

/// Removes every control annotation this crate produces.
pub fn strip_control(text: &str) -> (String, Option<usize>) {
    let mut clean = strip_buckets(text);
    loop {
        let (next, _) = strip_sentenum(&clean);
        let next = strip_buckets(&next);
        if next == clean {
            break;
        }
        clean = next;
    }
    (clean, strip_sentenum(&strip_buckets(text)).1)
}
