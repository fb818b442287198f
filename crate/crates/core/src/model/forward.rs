//! Tape construction for the encoder, the teacher-forced decoder and the
//! length head.

use super::{Attn, Ffn, Model, Norm, LN_EPS};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};
use crate::text::vocab::PAD;
use rand::{Rng, RngCore};

/// Inverted dropout applied while building a training tape.
pub struct DropoutSpec<'r> {
    pub rate: f64,
    pub rng: &'r mut dyn RngCore,
}

impl DropoutSpec<'_> {
    fn mask(&mut self, n: usize) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.rate);
        (0..n).map(|_| if self.rng.gen::<f64>() < self.rate { 0.0 } else { keep }).collect()
    }
}

/// Loss nodes and their values for one training example.
#[derive(Debug, Clone, Copy)]
pub struct ExampleLoss {
    pub total: Var,
    pub ce: Option<f64>,
    pub len_loss: Option<f64>,
    /// Length head output in tokens.
    pub len_pred: Option<f64>,
}

type Drop<'a, 'r> = Option<&'a mut DropoutSpec<'r>>;

impl Model {
    pub(crate) fn p<'p>(&'p self, tape: &mut Tape<'p>, ix: usize) -> Var {
        tape.param(ix, self.params.get(ix))
    }

    fn maybe_dropout(&self, tape: &mut Tape<'_>, x: Var, drop: &mut Drop<'_, '_>) -> Result<Var> {
        match drop {
            Some(d) if d.rate > 0.0 => {
                let mask = d.mask(tape.value(x).numel());
                tape.dropout(x, mask)
            }
            _ => Ok(x),
        }
    }

    pub(crate) fn norm<'p>(&'p self, tape: &mut Tape<'p>, x: Var, n: Norm) -> Result<Var> {
        let (g, b) = (self.p(tape, n.g), self.p(tape, n.b));
        tape.layer_norm(x, g, b, LN_EPS)
    }

    pub(crate) fn linear<'p>(&'p self, tape: &mut Tape<'p>, x: Var, w: usize, b: usize) -> Result<Var> {
        let (w, b) = (self.p(tape, w), self.p(tape, b));
        tape.affine(x, w, b)
    }

    pub(crate) fn ffn<'p>(&'p self, tape: &mut Tape<'p>, x: Var, f: Ffn) -> Result<Var> {
        let h = self.linear(tape, x, f.w1, f.b1)?;
        let h = tape.relu(h);
        self.linear(tape, h, f.w2, f.b2)
    }

    /// Attention of `q_in` rows over precomputed keys and values.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn attend<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        q_in: Var,
        k: Var,
        v: Var,
        a: Attn,
        causal: bool,
        key_mask: Option<&[bool]>,
    ) -> Result<Var> {
        let q = self.linear(tape, q_in, a.wq, a.bq)?;
        let out = tape.attention(q, k, v, self.config.heads, causal, key_mask)?;
        self.linear(tape, out, a.wo, a.bo)
    }

    pub(crate) fn embed<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        ids: &[usize],
        table: usize,
        positions: &[usize],
    ) -> Result<Var> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::Data(format!("token id {bad} outside vocabulary of {}", self.config.vocab_size)));
        }
        let tok = self.p(tape, self.layout.tok_emb);
        let tok = tape.gather(tok, ids)?;
        let pos = self.p(tape, table);
        let pos = tape.gather(pos, positions)?;
        tape.add(tok, pos)
    }

    /// Encoder states `[n×d]` for `src` (already within `max_src_len`).
    pub(crate) fn encode_tape<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        src: &[usize],
        mut drop: Drop<'_, '_>,
    ) -> Result<(Var, Vec<bool>)> {
        if src.is_empty() || src.len() > self.config.max_src_len {
            return Err(Error::Data(format!("source length {} outside 1..={}", src.len(), self.config.max_src_len)));
        }
        let mask: Vec<bool> = src.iter().map(|&t| t != PAD).collect();
        if !mask.iter().any(|&m| m) {
            return Err(Error::Data("source holds only padding".into()));
        }
        let positions: Vec<usize> = (0..src.len()).collect();
        let mut x = self.embed(tape, src, self.layout.enc_pos, &positions)?;
        x = self.maybe_dropout(tape, x, &mut drop)?;
        for l in self.layout.enc.clone() {
            let h = self.norm(tape, x, l.ln1)?;
            let k = self.linear(tape, h, l.attn.wk, l.attn.bk)?;
            let v = self.linear(tape, h, l.attn.wv, l.attn.bv)?;
            let a = self.attend(tape, h, k, v, l.attn, false, Some(&mask))?;
            let a = self.maybe_dropout(tape, a, &mut drop)?;
            x = tape.add(x, a)?;
            let h = self.norm(tape, x, l.ln2)?;
            let f = self.ffn(tape, h, l.ffn)?;
            let f = self.maybe_dropout(tape, f, &mut drop)?;
            x = tape.add(x, f)?;
        }
        let out = self.norm(tape, x, self.layout.enc_ln)?;
        Ok((out, mask))
    }

    /// Teacher-forced logits `[T×V]` for decoder inputs at the given rows
    /// of the decoder position table.
    pub(crate) fn decode_tape<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        memory: Var,
        mem_mask: &[bool],
        inputs: &[usize],
        positions: &[usize],
        mut drop: Drop<'_, '_>,
    ) -> Result<Var> {
        if inputs.is_empty() || inputs.len() != positions.len() {
            return Err(Error::Dimension(format!(
                "decoder got {} inputs and {} positions",
                inputs.len(),
                positions.len()
            )));
        }
        if let Some(&bad) = positions.iter().find(|&&p| p > self.config.max_index()) {
            return Err(Error::Parameter(format!(
                "decoder position {bad} beyond table bound {}",
                self.config.max_index()
            )));
        }
        let mut x = self.embed(tape, inputs, self.layout.dec_pos, positions)?;
        x = self.maybe_dropout(tape, x, &mut drop)?;
        for l in self.layout.dec.clone() {
            let h = self.norm(tape, x, l.ln1)?;
            let k = self.linear(tape, h, l.self_attn.wk, l.self_attn.bk)?;
            let v = self.linear(tape, h, l.self_attn.wv, l.self_attn.bv)?;
            let a = self.attend(tape, h, k, v, l.self_attn, true, None)?;
            let a = self.maybe_dropout(tape, a, &mut drop)?;
            x = tape.add(x, a)?;
            let h = self.norm(tape, x, l.ln2)?;
            let k = self.linear(tape, memory, l.cross_attn.wk, l.cross_attn.bk)?;
            let v = self.linear(tape, memory, l.cross_attn.wv, l.cross_attn.bv)?;
            let c = self.attend(tape, h, k, v, l.cross_attn, false, Some(mem_mask))?;
            let c = self.maybe_dropout(tape, c, &mut drop)?;
            x = tape.add(x, c)?;
            let h = self.norm(tape, x, l.ln3)?;
            let f = self.ffn(tape, h, l.ffn)?;
            let f = self.maybe_dropout(tape, f, &mut drop)?;
            x = tape.add(x, f)?;
        }
        self.output_logits(tape, x)
    }

    pub(crate) fn output_logits<'p>(&'p self, tape: &mut Tape<'p>, x: Var) -> Result<Var> {
        let h = self.norm(tape, x, self.layout.dec_ln)?;
        self.linear(tape, h, self.layout.out_w, self.layout.out_b)
    }

    /// Scaled length prediction `[1×1]` from mean-pooled unmasked states.
    pub(crate) fn head_tape<'p>(&'p self, tape: &mut Tape<'p>, memory: Var, mask: &[bool]) -> Result<Var> {
        let head = self.layout.head.ok_or_else(|| Error::Config("model has no length head".into()))?;
        let rows: Vec<usize> = mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect();
        let pooled = tape.mean_rows(memory, &rows)?;
        self.ffn(tape, pooled, head)
    }

    /// Joint training loss `(1-λ)·ce + λ·mse` for one example. The length
    /// term is present only when the model has a head and `λ > 0`; at
    /// `λ = 1` the decoder is not run at all.
    #[allow(clippy::too_many_arguments)]
    pub fn example_loss<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        src: &[usize],
        dec_inputs: &[usize],
        dec_targets: &[usize],
        positions: &[usize],
        gold_tokens: usize,
        lambda: f64,
        mut drop: Option<&mut DropoutSpec<'_>>,
    ) -> Result<ExampleLoss> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Parameter(format!("joint loss weight {lambda} outside [0, 1]")));
        }
        let use_head = self.layout.head.is_some() && lambda > 0.0;
        if lambda == 1.0 && !use_head {
            return Err(Error::Config("length-only training needs a length head".into()));
        }
        let (memory, mask) = self.encode_tape(tape, src, drop.as_deref_mut())?;
        let ce = if lambda < 1.0 {
            let logits = self.decode_tape(tape, memory, &mask, dec_inputs, positions, drop)?;
            Some(tape.cross_entropy(logits, dec_targets, PAD)?)
        } else {
            None
        };
        let len = if use_head {
            let pred = self.head_tape(tape, memory, &mask)?;
            let target = tape.leaf(Tensor::new(vec![1, 1], vec![gold_tokens as f64 / self.config.length_scale()])?);
            Some((tape.mse(pred, target)?, tape.value(pred).item() * self.config.length_scale()))
        } else {
            None
        };
        let total = match (ce, len) {
            (Some(c), None) => c,
            (None, Some((l, _))) => l,
            (Some(c), Some((l, _))) => {
                let c = tape.scale(c, 1.0 - lambda);
                let l = tape.scale(l, lambda);
                tape.add(c, l)?
            }
            (None, None) => unreachable!("lambda < 1 or a head is in use"),
        };
        Ok(ExampleLoss {
            total,
            ce: ce.map(|c| tape.value(c).item()),
            len_loss: len.map(|(l, _)| tape.value(l).item()),
            len_pred: len.map(|(_, p)| p),
        })
    }
}

/// `(1-λ)·ce + λ·len` on plain numbers.
pub fn joint_loss(ce: f64, len_loss: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("joint loss weight {lambda} outside [0, 1]")));
    }
    Ok((1.0 - lambda) * ce + lambda * len_loss)
}
