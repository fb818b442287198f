//! Inference: encoding once per document and incremental decoding with a
//! key/value cache. Every step runs the same row-wise kernels as the
//! teacher-forced pass, so cached and full decoding agree bit for bit.

use super::Model;
use crate::error::{Error, Result};
use crate::position::PositionPlan;
use crate::tensor::{Tape, Tensor};

/// Encoder output for one document plus per-layer cross-attention keys
/// and values.
#[derive(Debug, Clone)]
pub struct Memory {
    pub states: Tensor,
    pub mask: Vec<bool>,
    /// The source was cut to `max_src_len`.
    pub truncated: bool,
    cross_k: Vec<Tensor>,
    cross_v: Vec<Tensor>,
}

/// Self-attention cache of one decoder hypothesis.
#[derive(Debug, Clone, Default)]
pub struct DecoderState {
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    steps: usize,
}

impl DecoderState {
    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Nearest integer, at least 1.
pub fn round_length(pred: f64) -> usize {
    if pred.is_nan() {
        return 1;
    }
    pred.round().max(1.0) as usize
}

impl Model {
    pub fn encode(&self, src: &[usize]) -> Result<Memory> {
        let max = self.config.max_src_len;
        let truncated = src.len() > max;
        if truncated {
            log::warn!("source of {} tokens truncated to {max}", src.len());
        }
        let src = &src[..src.len().min(max)];
        let mut tape = Tape::new();
        let (out, mask) = self.encode_tape(&mut tape, src, None)?;
        let states = tape.value(out).clone();
        let (mut cross_k, mut cross_v) = (Vec::new(), Vec::new());
        for l in &self.layout.dec {
            let m = tape.leaf(states.clone());
            let k = self.linear(&mut tape, m, l.cross_attn.wk, l.cross_attn.bk)?;
            let v = self.linear(&mut tape, m, l.cross_attn.wv, l.cross_attn.bv)?;
            cross_k.push(tape.value(k).clone());
            cross_v.push(tape.value(v).clone());
        }
        Ok(Memory { states, mask, truncated, cross_k, cross_v })
    }

    pub fn new_state(&self) -> DecoderState {
        let n = self.layout.dec.len();
        DecoderState { k: vec![Vec::new(); n], v: vec![Vec::new(); n], steps: 0 }
    }

    /// Feeds `token` at decoder position row `position` and returns the
    /// next-token logits.
    pub fn step(&self, mem: &Memory, state: &mut DecoderState, token: usize, position: usize) -> Result<Vec<f64>> {
        if state.k.len() != self.layout.dec.len() {
            return Err(Error::Parameter("decoder state belongs to a different model".into()));
        }
        if position > self.config.max_index() {
            return Err(Error::Parameter(format!(
                "decoder position {position} beyond table bound {}",
                self.config.max_index()
            )));
        }
        let d = self.config.d_model;
        let rows = state.steps + 1;
        let mut tape = Tape::new();
        let mut x = self.embed(&mut tape, &[token], self.layout.dec_pos, &[position])?;
        for (li, l) in self.layout.dec.iter().enumerate() {
            let h = self.norm(&mut tape, x, l.ln1)?;
            let k_new = self.linear(&mut tape, h, l.self_attn.wk, l.self_attn.bk)?;
            let v_new = self.linear(&mut tape, h, l.self_attn.wv, l.self_attn.bv)?;
            state.k[li].extend_from_slice(tape.value(k_new).data());
            state.v[li].extend_from_slice(tape.value(v_new).data());
            let k = tape.leaf(Tensor::new(vec![rows, d], state.k[li].clone())?);
            let v = tape.leaf(Tensor::new(vec![rows, d], state.v[li].clone())?);
            let a = self.attend(&mut tape, h, k, v, l.self_attn, true, None)?;
            x = tape.add(x, a)?;
            let h = self.norm(&mut tape, x, l.ln2)?;
            let k = tape.leaf(mem.cross_k[li].clone());
            let v = tape.leaf(mem.cross_v[li].clone());
            let c = self.attend(&mut tape, h, k, v, l.cross_attn, false, Some(&mem.mask))?;
            x = tape.add(x, c)?;
            let h = self.norm(&mut tape, x, l.ln3)?;
            let f = self.ffn(&mut tape, h, l.ffn)?;
            x = tape.add(x, f)?;
        }
        state.steps = rows;
        let logits = self.output_logits(&mut tape, x)?;
        Ok(tape.value(logits).data().to_vec())
    }

    /// Next-token logits after `prefix` (BOS first), recomputing the whole
    /// decoder pass.
    pub fn decode_step(&self, mem: &Memory, prefix: &[usize], plan: &PositionPlan) -> Result<Vec<f64>> {
        if plan.scheme != self.config.position_scheme {
            return Err(Error::Config(format!(
                "{:?} position plan given to a {:?} model",
                plan.scheme, self.config.position_scheme
            )));
        }
        if prefix.is_empty() || prefix.len() > self.config.max_tgt_len {
            return Err(Error::Parameter(format!(
                "decoder prefix length {} outside 1..={}",
                prefix.len(),
                self.config.max_tgt_len
            )));
        }
        let positions = crate::position::position_indices(plan, prefix.len())?;
        let mut tape = Tape::new();
        let memory = tape.leaf(mem.states.clone());
        let logits = self.decode_tape(&mut tape, memory, &mem.mask, prefix, &positions, None)?;
        let v = self.config.vocab_size;
        let data = tape.value(logits).data();
        Ok(data[data.len() - v..].to_vec())
    }

    /// Length head estimate in tokens (not rounded).
    pub fn predict_length(&self, mem: &Memory) -> Result<f64> {
        let mut tape = Tape::new();
        let memory = tape.leaf(mem.states.clone());
        let pred = self.head_tape(&mut tape, memory, &mem.mask)?;
        Ok(tape.value(pred).item() * self.config.length_scale())
    }
}
