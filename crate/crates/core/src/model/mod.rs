//! Pre-norm encoder-decoder transformer with learned absolute positions and
//! an optional length regression head.

mod forward;
mod infer;
mod io;

pub use forward::{joint_loss, DropoutSpec, ExampleLoss};
pub use infer::{round_length, DecoderState, Memory};
pub use io::{load_bundle, save_bundle, sidecar_path, Bundle, Sidecar};

use crate::error::{Error, Result};
use crate::position::PositionScheme;
use crate::tensor::{ParamSet, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_src_len: usize,
    /// Longest decoder target, EOS included.
    pub max_tgt_len: usize,
    pub position_scheme: PositionScheme,
    pub length_head: bool,
    pub length_hidden: usize,
    pub dropout: f64,
    /// Extra decoder position rows beyond `max_tgt_len` for positive noise.
    pub position_headroom: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 4096,
            d_model: 64,
            enc_layers: 2,
            dec_layers: 2,
            heads: 4,
            ffn: 256,
            max_src_len: 256,
            max_tgt_len: 128,
            position_scheme: PositionScheme::Forward,
            length_head: false,
            length_hidden: 64,
            dropout: 0.1,
            position_headroom: 8,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad(format!("d_model {} must be a positive multiple of heads {}", self.d_model, self.heads));
        }
        if self.vocab_size == 0 || self.ffn == 0 || self.max_src_len == 0 || self.max_tgt_len == 0 {
            return bad("vocab_size, ffn and sequence bounds must be positive".into());
        }
        if self.enc_layers == 0 {
            return bad("at least one encoder layer is required".into());
        }
        if self.length_head && self.length_hidden == 0 {
            return bad("length_hidden must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Largest decoder position index.
    pub fn max_index(&self) -> usize {
        self.max_tgt_len + self.position_headroom
    }

    /// Scale between raw token counts and length head outputs.
    pub fn length_scale(&self) -> f64 {
        self.max_tgt_len as f64
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub g: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Attn {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Ffn {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncLayer {
    pub ln1: Norm,
    pub attn: Attn,
    pub ln2: Norm,
    pub ffn: Ffn,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecLayer {
    pub ln1: Norm,
    pub self_attn: Attn,
    pub ln2: Norm,
    pub cross_attn: Attn,
    pub ln3: Norm,
    pub ffn: Ffn,
}

/// Parameter indices into the model's [`ParamSet`].
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub tok_emb: usize,
    pub enc_pos: usize,
    pub dec_pos: usize,
    pub enc: Vec<EncLayer>,
    pub enc_ln: Norm,
    pub dec: Vec<DecLayer>,
    pub dec_ln: Norm,
    pub out_w: usize,
    pub out_b: usize,
    pub head: Option<Ffn>,
}

/// Parameter allocator: name, shape and initializer to index.
type Slot<'a> = dyn FnMut(&str, &[usize], Init) -> Result<usize> + 'a;

#[derive(Debug, Clone, Copy)]
enum Init {
    Normal(f64),
    Const(f64),
}

impl Layout {
    /// Walks every parameter in a fixed order; `slot` returns its index.
    fn build(cfg: &ModelConfig, mut slot: impl FnMut(&str, &[usize], Init) -> Result<usize>) -> Result<Layout> {
        let (d, f, v) = (cfg.d_model, cfg.ffn, cfg.vocab_size);
        let w = |fan_in: usize| Init::Normal(1.0 / (fan_in as f64).sqrt());
        let norm = |slot: &mut Slot, p: &str| -> Result<Norm> {
            Ok(Norm {
                g: slot(&format!("{p}.g"), &[d], Init::Const(1.0))?,
                b: slot(&format!("{p}.b"), &[d], Init::Const(0.0))?,
            })
        };
        let attn = |slot: &mut Slot, p: &str| -> Result<Attn> {
            let mut lin = |n: &str| -> Result<(usize, usize)> {
                Ok((slot(&format!("{p}.w{n}"), &[d, d], w(d))?, slot(&format!("{p}.b{n}"), &[d], Init::Const(0.0))?))
            };
            let (wq, bq) = lin("q")?;
            let (wk, bk) = lin("k")?;
            let (wv, bv) = lin("v")?;
            let (wo, bo) = lin("o")?;
            Ok(Attn { wq, bq, wk, bk, wv, bv, wo, bo })
        };
        let ffn = |slot: &mut Slot, p: &str, i: usize, h: usize, o: usize| {
            Ok::<_, Error>(Ffn {
                w1: slot(&format!("{p}.w1"), &[i, h], w(i))?,
                b1: slot(&format!("{p}.b1"), &[h], Init::Const(0.0))?,
                w2: slot(&format!("{p}.w2"), &[h, o], w(h))?,
                b2: slot(&format!("{p}.b2"), &[o], Init::Const(0.0))?,
            })
        };
        let emb = Init::Normal(0.1);
        let tok_emb = slot("tok_emb", &[v, d], emb)?;
        let enc_pos = slot("enc_pos", &[cfg.max_src_len, d], emb)?;
        let dec_pos = slot("dec_pos", &[cfg.max_index() + 1, d], emb)?;
        let mut enc = Vec::with_capacity(cfg.enc_layers);
        for l in 0..cfg.enc_layers {
            let p = format!("enc.{l}");
            enc.push(EncLayer {
                ln1: norm(&mut slot, &format!("{p}.ln1"))?,
                attn: attn(&mut slot, &format!("{p}.attn"))?,
                ln2: norm(&mut slot, &format!("{p}.ln2"))?,
                ffn: ffn(&mut slot, &format!("{p}.ffn"), d, f, d)?,
            });
        }
        let enc_ln = norm(&mut slot, "enc.ln")?;
        let mut dec = Vec::with_capacity(cfg.dec_layers);
        for l in 0..cfg.dec_layers {
            let p = format!("dec.{l}");
            dec.push(DecLayer {
                ln1: norm(&mut slot, &format!("{p}.ln1"))?,
                self_attn: attn(&mut slot, &format!("{p}.self"))?,
                ln2: norm(&mut slot, &format!("{p}.ln2"))?,
                cross_attn: attn(&mut slot, &format!("{p}.cross"))?,
                ln3: norm(&mut slot, &format!("{p}.ln3"))?,
                ffn: ffn(&mut slot, &format!("{p}.ffn"), d, f, d)?,
            });
        }
        let dec_ln = norm(&mut slot, "dec.ln")?;
        let out_w = slot("out.w", &[d, v], w(d))?;
        let out_b = slot("out.b", &[v], Init::Const(0.0))?;
        let head = if cfg.length_head { Some(ffn(&mut slot, "len_head", d, cfg.length_hidden, 1)?) } else { None };
        Ok(Layout { tok_emb, enc_pos, dec_pos, enc, enc_ln, dec, dec_ln, out_w, out_b, head })
    }
}

/// Configuration, parameters and their layout.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamSet,
    layout: Layout,
}

impl Model {
    /// Freshly initialised model.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Model> {
        config.validate()?;
        let mut params = ParamSet::default();
        let layout = Layout::build(&config, |name, shape, init| {
            let t = match init {
                Init::Normal(std) => Tensor::randn(shape, std, rng),
                Init::Const(c) => Tensor::filled(shape, c),
            };
            params.push(name, t)
        })?;
        Ok(Model { config, params, layout })
    }

    /// Model over existing parameters, checked by name and shape.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Model> {
        config.validate()?;
        let mut expected = 0;
        let layout = Layout::build(&config, |name, shape, _| {
            expected += 1;
            let ix = params.index_of(name).ok_or_else(|| Error::Data(format!("checkpoint lacks parameter {name}")))?;
            if params.get(ix).shape() != shape {
                return Err(Error::Data(format!(
                    "parameter {name} has shape {:?}, config expects {shape:?}",
                    params.get(ix).shape()
                )));
            }
            Ok(ix)
        })?;
        if expected != params.len() {
            return Err(Error::Data(format!("checkpoint has {} tensors, config expects {expected}", params.len())));
        }
        Ok(Model { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }
}
