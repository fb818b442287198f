//! Greedy and beam decoding with forced control prefixes, optional length
//! penalty and repeated n-gram blocking.

use crate::control::{strip_control, ControlScheme};
use crate::error::{Error, Result};
use crate::model::{round_length, Bundle, DecoderState, Memory, Model};
use crate::position::{PositionPlan, PositionScheme};
use crate::tensor::kernels::log_softmax;
use crate::text::split::split_sentences;
use crate::text::tokenize::{detokenize, split_tokens, tokenize};
use crate::text::vocab::{TokenId, BOS, EOS, PAD};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::HashSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthSource {
    /// Length supplied by the caller.
    User,
    /// Length head estimate (reverse positions) or the model's own prefix.
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// `None` decodes greedily.
    pub beam: Option<usize>,
    /// Exponent α of `((5 + len) / 6)^α`; 0 disables the penalty.
    pub length_penalty: f64,
    pub ngram_block: Option<usize>,
    pub max_steps: usize,
    pub length: Option<usize>,
    pub length_source: LengthSource,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            beam: None,
            length_penalty: 0.0,
            ngram_block: None,
            max_steps: 96,
            length: None,
            length_source: LengthSource::User,
        }
    }
}

impl GenConfig {
    pub fn validate(&self, max_tgt_len: usize) -> Result<()> {
        if self.beam == Some(0) {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        if self.ngram_block == Some(0) {
            return Err(Error::Config("ngram_block must be at least 1".into()));
        }
        if self.max_steps == 0 || self.max_steps > max_tgt_len {
            return Err(Error::Config(format!("max_steps {} outside 1..={max_tgt_len}", self.max_steps)));
        }
        if !self.length_penalty.is_finite() {
            return Err(Error::Config("length_penalty must be finite".into()));
        }
        Ok(())
    }
}

/// Autoregressive scorer driven by the decoders below.
pub trait StepModel {
    type State: Clone;
    fn vocab_size(&self) -> usize;
    fn start(&self) -> Self::State;
    /// Consumes `token` as the input of step `t` and returns next-token logits.
    fn logits(&self, state: &mut Self::State, token: TokenId, t: usize) -> Result<Vec<f64>>;
}

/// A trained model bound to one encoded document and a position plan.
pub struct ModelStepper<'a> {
    pub model: &'a Model,
    pub memory: &'a Memory,
    pub plan: PositionPlan,
}

impl StepModel for ModelStepper<'_> {
    type State = DecoderState;

    fn vocab_size(&self) -> usize {
        self.model.config().vocab_size
    }

    fn start(&self) -> DecoderState {
        self.model.new_state()
    }

    fn logits(&self, state: &mut DecoderState, token: TokenId, t: usize) -> Result<Vec<f64>> {
        self.model.step(self.memory, state, token, self.plan.index(t)?)
    }
}

/// Tokens that would complete an n-gram already present in `prefix`.
pub fn ngram_block(prefix: &[TokenId], n: usize) -> HashSet<TokenId> {
    let mut out = HashSet::new();
    if n == 0 || prefix.len() < n - 1 {
        return out;
    }
    let tail = &prefix[prefix.len() - (n - 1)..];
    for i in 0..prefix.len().saturating_sub(n - 1) {
        if &prefix[i..i + n - 1] == tail {
            out.insert(prefix[i + n - 1]);
        }
    }
    out
}

/// `((5 + len) / 6)^α`.
pub fn length_penalty(len: usize, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 1.0;
    }
    ((5.0 + len as f64) / 6.0).powf(alpha)
}

/// A finished or truncated hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Output tokens, forced prefix included, EOS excluded.
    pub tokens: Vec<TokenId>,
    pub logprob: f64,
    pub score: f64,
    /// Ended with EOS rather than at the step limit.
    pub finished: bool,
}

fn log_probs(logits: &[f64], history: &[TokenId], cfg: &GenConfig) -> Vec<f64> {
    let mut lp = log_softmax(logits);
    for id in [PAD, BOS] {
        if id < lp.len() {
            lp[id] = f64::NEG_INFINITY;
        }
    }
    if let Some(n) = cfg.ngram_block {
        for id in ngram_block(history, n) {
            lp[id] = f64::NEG_INFINITY;
        }
    }
    lp
}

/// Highest-scoring token; the smallest id wins ties.
fn argmax(lp: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, &v) in lp.iter().enumerate() {
        if v > lp[best] {
            best = i;
        }
    }
    best
}

pub fn greedy<M: StepModel>(m: &M, prefix: &[TokenId], cfg: &GenConfig) -> Result<Hypothesis> {
    let mut state = m.start();
    let mut tokens = Vec::new();
    let mut logprob = 0.0;
    let mut input = BOS;
    for t in 0..cfg.max_steps {
        let logits = m.logits(&mut state, input, t)?;
        let lp = log_probs(&logits, &tokens, cfg);
        let next = if t < prefix.len() { prefix[t] } else { argmax(&lp) };
        logprob += lp[next];
        if next == EOS {
            let score = logprob / length_penalty(tokens.len(), cfg.length_penalty);
            return Ok(Hypothesis { tokens, logprob, score, finished: true });
        }
        tokens.push(next);
        input = next;
    }
    let score = logprob / length_penalty(tokens.len(), cfg.length_penalty);
    Ok(Hypothesis { tokens, logprob, score, finished: false })
}

struct Live<S> {
    tokens: Vec<TokenId>,
    logprob: f64,
    state: S,
}

fn better(a: &Hypothesis, b: &Hypothesis) -> bool {
    match a.score.partial_cmp(&b.score) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) | None => false,
        Some(Ordering::Equal) => a.tokens < b.tokens,
    }
}

/// Beam search over `width` live hypotheses. Candidates are ranked by
/// log-probability, ties broken by parent rank then token id. Finished
/// hypotheses are ranked by `logprob / lp(len)`.
pub fn beam_search<M: StepModel>(m: &M, prefix: &[TokenId], width: usize, cfg: &GenConfig) -> Result<Hypothesis> {
    if width == 0 {
        return Err(Error::Parameter("beam width must be at least 1".into()));
    }
    let alpha = cfg.length_penalty;
    let mut live = vec![Live { tokens: Vec::new(), logprob: 0.0, state: m.start() }];
    let mut done: Vec<Hypothesis> = Vec::new();
    for t in 0..cfg.max_steps {
        let mut cands: Vec<(f64, usize, TokenId)> = Vec::new();
        let mut states = Vec::with_capacity(live.len());
        for (hi, h) in live.iter().enumerate() {
            let mut state = h.state.clone();
            let input = h.tokens.last().copied().unwrap_or(BOS);
            let logits = m.logits(&mut state, input, t)?;
            let lp = log_probs(&logits, &h.tokens, cfg);
            if t < prefix.len() {
                cands.push((h.logprob + lp[prefix[t]], hi, prefix[t]));
            } else {
                for (tok, &v) in lp.iter().enumerate() {
                    if v > f64::NEG_INFINITY {
                        cands.push((h.logprob + v, hi, tok));
                    }
                }
            }
            states.push(state);
        }
        cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next = Vec::with_capacity(width);
        for &(lp, hi, tok) in &cands {
            if next.len() == width {
                break;
            }
            let parent = &live[hi];
            if tok == EOS {
                let score = lp / length_penalty(parent.tokens.len(), alpha);
                done.push(Hypothesis { tokens: parent.tokens.clone(), logprob: lp, score, finished: true });
                continue;
            }
            let mut tokens = parent.tokens.clone();
            tokens.push(tok);
            next.push(Live { tokens, logprob: lp, state: states[hi].clone() });
        }
        live = next;
        if live.is_empty() {
            break;
        }
        let best_done = done.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        let best_live = live.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
        // log-probabilities only fall, so without a penalty nothing live can win
        if alpha == 0.0 && best_done >= best_live {
            break;
        }
        if alpha != 0.0 && done.len() >= width {
            break;
        }
    }
    for h in live {
        let score = h.logprob / length_penalty(h.tokens.len(), alpha);
        done.push(Hypothesis { tokens: h.tokens, logprob: h.logprob, score, finished: false });
    }
    let mut best: Option<Hypothesis> = None;
    for h in done {
        if best.as_ref().is_none_or(|b| better(&h, b)) {
            best = Some(h);
        }
    }
    best.ok_or_else(|| Error::Numeric("beam search produced no hypothesis".into()))
}

/// Decoded summary with its measured and claimed lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub summary: String,
    pub gen_tokens: usize,
    pub gen_sents: usize,
    pub claimed_len: Option<usize>,
    pub requested_len: Option<usize>,
}

impl Generation {
    /// Measures a clean summary.
    pub fn measure(summary: String, claimed_len: Option<usize>, requested_len: Option<usize>) -> Self {
        let gen_tokens = split_tokens(&summary).len();
        let gen_sents = split_sentences(&summary).len();
        Generation { summary, gen_tokens, gen_sents, claimed_len, requested_len }
    }
}

/// Resolved length request and the decoder setup it implies.
struct Request {
    length: Option<usize>,
    plan: PositionPlan,
    prefix: Vec<TokenId>,
}

fn resolve(bundle: &Bundle, memory: &Memory, cfg: &GenConfig) -> Result<Request> {
    let model_cfg = bundle.model.config();
    let max = model_cfg.max_index();
    let scheme = &bundle.scheme;
    let length = match (cfg.length_source, scheme) {
        (_, ControlScheme::None) => None,
        (LengthSource::User, _) => Some(
            cfg.length.ok_or_else(|| Error::Parameter(format!("scheme {} needs a requested length", scheme.name())))?,
        ),
        (LengthSource::Predicted, ControlScheme::Repilot) => Some(round_length(bundle.model.predict_length(memory)?)),
        (LengthSource::Predicted, _) => None,
    };
    if length == Some(0) {
        return Err(Error::Parameter("requested length must be at least 1".into()));
    }
    let plan = match model_cfg.position_scheme {
        PositionScheme::Forward => PositionPlan::forward(max),
        PositionScheme::Reverse => {
            let l = length.ok_or_else(|| Error::Parameter("reverse positions need a length".into()))?;
            PositionPlan::reverse(l, 0, max)
        }
    };
    let prefix = match length {
        Some(l) if scheme.is_text_side() => tokenize(&scheme.control_prefix(l)?, &bundle.vocab),
        _ => Vec::new(),
    };
    Ok(Request { length, plan, prefix })
}

/// Summarizes `document` under the bundle's control scheme.
pub fn generate(bundle: &Bundle, document: &str, cfg: &GenConfig) -> Result<Generation> {
    let model = &bundle.model;
    cfg.validate(model.config().max_tgt_len)?;
    let src = tokenize(document, &bundle.vocab);
    if src.is_empty() {
        return Err(Error::Data("empty document".into()));
    }
    let memory = model.encode(&src)?;
    let req = resolve(bundle, &memory, cfg)?;
    let stepper = ModelStepper { model, memory: &memory, plan: req.plan };
    let hyp = match cfg.beam {
        None => greedy(&stepper, &req.prefix, cfg)?,
        Some(w) => beam_search(&stepper, &req.prefix, w, cfg)?,
    };
    let raw = detokenize(&hyp.tokens, &bundle.vocab);
    let (clean, claimed) = strip_control(&raw);
    let claimed =
        if matches!(bundle.scheme, ControlScheme::SentEnum | ControlScheme::SentPrefix) { claimed } else { None };
    Ok(Generation::measure(clean, claimed, req.length))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlScheme;
    use crate::model::{Model, ModelConfig};
    use crate::text::vocab::{build_vocab, digit_id, SEP, SN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Fixed table of logits indexed by the full history.
    struct Toy {
        vocab: usize,
        seed: u64,
    }

    impl StepModel for Toy {
        type State = Vec<TokenId>;

        fn vocab_size(&self) -> usize {
            self.vocab
        }

        fn start(&self) -> Vec<TokenId> {
            Vec::new()
        }

        fn logits(&self, state: &mut Vec<TokenId>, token: TokenId, _t: usize) -> Result<Vec<f64>> {
            state.push(token);
            let h = state.iter().fold(self.seed, |a, &x| a.wrapping_mul(1_000_003).wrapping_add(x as u64 + 1));
            let mut rng = ChaCha8Rng::seed_from_u64(h);
            Ok((0..self.vocab).map(|_| rng.gen_range(-2.0..2.0)).collect())
        }
    }

    #[test]
    fn ngram_examples() {
        assert_eq!(ngram_block(&[7, 8, 7], 2), HashSet::from([8]));
        assert!(ngram_block(&[7, 8, 7], 5).is_empty());
        assert!(ngram_block(&[7, 8, 7], 4).is_empty());
        assert_eq!(ngram_block(&[7, 8], 1), HashSet::from([7, 8]));
    }

    #[test]
    fn penalty_off_is_raw_logprob() {
        assert_eq!(length_penalty(17, 0.0), 1.0);
        let toy = Toy { vocab: 6, seed: 1 };
        let cfg = GenConfig { max_steps: 6, ..GenConfig::default() };
        let h = beam_search(&toy, &[], 3, &cfg).unwrap();
        assert_eq!(h.score, h.logprob);
    }

    /// The toy restricted to EOS and token 6.
    struct Two(Toy);

    impl StepModel for Two {
        type State = Vec<TokenId>;

        fn vocab_size(&self) -> usize {
            7
        }

        fn start(&self) -> Vec<TokenId> {
            Vec::new()
        }

        fn logits(&self, s: &mut Vec<TokenId>, tok: TokenId, t: usize) -> Result<Vec<f64>> {
            let mut l = self.0.logits(s, tok, t)?;
            for (i, v) in l.iter_mut().enumerate() {
                if i != EOS && i != 6 {
                    *v = f64::NEG_INFINITY;
                }
            }
            Ok(l)
        }
    }

    /// Scores every sequence over {6} up to the step limit, with or without EOS.
    fn exhaustive<M: StepModel>(m: &M, cfg: &GenConfig) -> Hypothesis {
        let alpha = cfg.length_penalty;
        let mut all = Vec::new();
        let mut stack = vec![(Vec::<TokenId>::new(), 0.0, m.start())];
        while let Some((tokens, lp, state)) = stack.pop() {
            let t = tokens.len();
            if t == cfg.max_steps {
                all.push(Hypothesis { score: lp / length_penalty(t, alpha), tokens, logprob: lp, finished: false });
                continue;
            }
            let mut s = state.clone();
            let l = log_probs(&m.logits(&mut s, tokens.last().copied().unwrap_or(BOS), t).unwrap(), &tokens, cfg);
            let e = lp + l[EOS];
            all.push(Hypothesis {
                score: e / length_penalty(t, alpha),
                tokens: tokens.clone(),
                logprob: e,
                finished: true,
            });
            let mut next = tokens;
            next.push(6);
            stack.push((next, lp + l[6], s));
        }
        all.into_iter().reduce(|a, b| if better(&b, &a) { b } else { a }).unwrap()
    }

    #[test]
    fn wide_beam_matches_exhaustive_search() {
        for seed in 0..20 {
            let toy = Two(Toy { vocab: 7, seed });
            for alpha in [0.0, 1.0] {
                let cfg = GenConfig { max_steps: 4, length_penalty: alpha, ..GenConfig::default() };
                let beam = beam_search(&toy, &[], 64, &cfg).unwrap();
                let brute = exhaustive(&toy, &cfg);
                assert_eq!(beam.tokens, brute.tokens, "seed {seed} alpha {alpha}");
                assert_eq!(beam.finished, brute.finished);
                assert!((beam.score - brute.score).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn width_one_equals_greedy() {
        for seed in 0..50 {
            let toy = Toy { vocab: 9, seed };
            let cfg = GenConfig { max_steps: 12, ..GenConfig::default() };
            let g = greedy(&toy, &[], &cfg).unwrap();
            let b = beam_search(&toy, &[], 1, &cfg).unwrap();
            assert_eq!(g, b, "seed {seed}");
        }
    }

    #[test]
    fn deterministic_and_prefix_forced() {
        let toy = Toy { vocab: 12, seed: 5 };
        let cfg = GenConfig { max_steps: 10, ..GenConfig::default() };
        let prefix = [SN, digit_id(3), SEP];
        let a = beam_search(&toy, &prefix, 3, &cfg).unwrap();
        assert_eq!(a, beam_search(&toy, &prefix, 3, &cfg).unwrap());
        assert_eq!(&a.tokens[..3], &prefix);
        assert_eq!(&greedy(&toy, &prefix, &cfg).unwrap().tokens[..3], &prefix);
    }

    #[test]
    fn blocking_removes_repeats() {
        for seed in 0..100 {
            let toy = Toy { vocab: 8, seed };
            let cfg = GenConfig { max_steps: 30, ngram_block: Some(2), ..GenConfig::default() };
            let h = greedy(&toy, &[], &cfg).unwrap();
            let grams: Vec<_> = h.tokens.windows(2).collect();
            let unique: HashSet<_> = grams.iter().collect();
            assert_eq!(grams.len(), unique.len(), "seed {seed}: {:?}", h.tokens);
        }
    }

    fn bundle(scheme: ControlScheme, pos: PositionScheme, head: bool) -> Bundle {
        let vocab = build_vocab(&["Ann ran far . Bob sat ."], 500).unwrap();
        let cfg = ModelConfig {
            vocab_size: vocab.len(),
            d_model: 8,
            heads: 2,
            ffn: 16,
            enc_layers: 1,
            dec_layers: 1,
            max_src_len: 32,
            max_tgt_len: 24,
            position_scheme: pos,
            length_head: head,
            length_hidden: 4,
            ..ModelConfig::default()
        };
        let model = Model::init(cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        Bundle { model, scheme, vocab }
    }

    #[test]
    fn generate_requests() {
        let b = bundle(ControlScheme::SentEnum, PositionScheme::Forward, false);
        let cfg = GenConfig { length: Some(3), max_steps: 20, ..GenConfig::default() };
        let g = generate(&b, "Ann ran far. Bob sat.", &cfg).unwrap();
        assert_eq!(g.claimed_len, Some(3));
        assert_eq!(g.requested_len, Some(3));
        let missing = GenConfig { length: None, ..cfg.clone() };
        assert!(matches!(generate(&b, "Ann ran.", &missing), Err(Error::Parameter(_))));

        let r = bundle(ControlScheme::Repilot, PositionScheme::Reverse, true);
        let g =
            generate(&r, "Ann ran far.", &GenConfig { length_source: LengthSource::Predicted, ..cfg.clone() }).unwrap();
        assert!(g.requested_len.unwrap() >= 1);
        assert!(g.gen_tokens <= 20);
        let n = bundle(ControlScheme::None, PositionScheme::Forward, false);
        assert_eq!(generate(&n, "Ann ran far.", &missing).unwrap().requested_len, None);
    }

    #[test]
    fn repilot_request_starts_at_row_before_length() {
        let r = bundle(ControlScheme::Repilot, PositionScheme::Reverse, true);
        let mem = r.model.encode(&[20, 21]).unwrap();
        let req = resolve(&r, &mem, &GenConfig { length: Some(8), ..GenConfig::default() }).unwrap();
        assert_eq!(req.plan.index(0).unwrap(), 7);
        assert!(req.prefix.is_empty());
        let s = bundle(ControlScheme::SentEnum, PositionScheme::Forward, false);
        let req = resolve(&s, &mem, &GenConfig { length: Some(3), ..GenConfig::default() }).unwrap();
        assert_eq!(req.prefix, [SN, digit_id(3), SEP]);
    }
}
