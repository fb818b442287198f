//! Multi-task training: teacher-forced generation loss plus the length
//! regression loss, averaged per batch and applied with Adam.

use crate::control::ControlScheme;
use crate::error::{Error, Result};
use crate::model::{round_length, Bundle, DropoutSpec, Model, ModelConfig};
use crate::parallel::{try_map_ordered, Execution};
use crate::position::{sample_noise, PositionPlan, PositionScheme};
use crate::tensor::{adam_step, AdamConfig, AdamState, Tape};
use crate::text::corpus::ControlledExample;
use crate::text::tokenize::tokenize;
use crate::text::vocab::{TokenId, Vocabulary, BOS, EOS};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Weight of the length loss in `(1-λ)·ce + λ·len`.
    pub lambda: f64,
    pub seed: u64,
    /// Sample the per-sequence position offset (reverse positions only).
    pub noise: bool,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    /// Global gradient norm bound; 0 disables clipping.
    pub clip_norm: f64,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lambda: 0.1,
            seed: 1,
            noise: true,
            patience: 3,
            clip_norm: 1.0,
            execution: Execution::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.clip_norm < 0.0 {
            return Err(Error::Config("lr must be positive and clip_norm non-negative".into()));
        }
        Ok(())
    }
}

/// Tokenized example: source ids and target ids ending in EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub src: Vec<TokenId>,
    pub target: Vec<TokenId>,
    pub gold_tokens: usize,
    pub gold_sents: usize,
}

/// One decoder training instance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub src: Vec<TokenId>,
    pub dec_inputs: Vec<TokenId>,
    pub dec_targets: Vec<TokenId>,
    pub plan: PositionPlan,
    pub positions: Vec<usize>,
    pub gold_tokens: usize,
}

/// Tokenizes `ex`, annotating its summary under `scheme` when it is raw.
pub fn prepare_example(ex: &ControlledExample, scheme: &ControlScheme, vocab: &Vocabulary) -> Result<Prepared> {
    let target_text = if ex.control == *scheme {
        ex.summary.text().to_string()
    } else if ex.control == ControlScheme::None {
        scheme.annotate(ex)?
    } else {
        return Err(Error::Config(format!("example annotated with {} but the run uses {scheme}", ex.control)));
    };
    let mut target = tokenize(&target_text, vocab);
    target.push(EOS);
    Ok(Prepared {
        src: tokenize(ex.document.text(), vocab),
        target,
        gold_tokens: ex.gold_tokens,
        gold_sents: ex.gold_sents,
    })
}

/// Decoder inputs, targets and positions for one prepared example. Reverse
/// position plans count down from the gold token length; `noise` draws one
/// offset per sequence.
pub fn make_item<R: Rng + ?Sized>(p: &Prepared, config: &ModelConfig, noise: bool, rng: &mut R) -> Result<BatchItem> {
    if p.target.len() > config.max_tgt_len {
        return Err(Error::Data(format!(
            "target of {} tokens exceeds max_tgt_len {}",
            p.target.len(),
            config.max_tgt_len
        )));
    }
    let plan = match config.position_scheme {
        PositionScheme::Forward => PositionPlan::forward(config.max_index()),
        PositionScheme::Reverse => {
            let delta = if noise { sample_noise(rng) } else { 0 };
            PositionPlan::reverse(p.gold_tokens, delta, config.max_index())
        }
    };
    let steps = p.target.len();
    let mut dec_inputs = Vec::with_capacity(steps);
    dec_inputs.push(BOS);
    dec_inputs.extend_from_slice(&p.target[..steps - 1]);
    let positions = crate::position::position_indices(&plan, steps)?;
    let src = p.src[..p.src.len().min(config.max_src_len)].to_vec();
    Ok(BatchItem { src, dec_inputs, dec_targets: p.target.clone(), plan, positions, gold_tokens: p.gold_tokens })
}

/// Model inputs for a batch of examples under `scheme`.
pub fn prepare_batch<R: Rng + ?Sized>(
    examples: &[ControlledExample],
    scheme: &ControlScheme,
    vocab: &Vocabulary,
    config: &ModelConfig,
    noise: bool,
    rng: &mut R,
) -> Result<Vec<BatchItem>> {
    if examples.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    check_scheme(scheme, config)?;
    examples.iter().map(|ex| make_item(&prepare_example(ex, scheme, vocab)?, config, noise, rng)).collect()
}

fn check_scheme(scheme: &ControlScheme, config: &ModelConfig) -> Result<()> {
    let want = if *scheme == ControlScheme::Repilot { PositionScheme::Reverse } else { PositionScheme::Forward };
    if config.position_scheme != want {
        return Err(Error::Config(format!(
            "scheme {} needs {want:?} positions, model has {:?}",
            scheme.name(),
            config.position_scheme
        )));
    }
    Ok(())
}

/// Per-epoch training log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_ce: Option<f64>,
    pub train_len_loss: Option<f64>,
    pub dev_ce: Option<f64>,
    pub dev_len_diff: Option<f64>,
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[EpochMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Where per-epoch artifacts go.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub dir: PathBuf,
}

impl TrainOutput {
    pub fn best(&self) -> PathBuf {
        self.dir.join("best.ckpt")
    }

    pub fn last(&self) -> PathBuf {
        self.dir.join("last.ckpt")
    }

    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.csv")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev loss.
    pub bundle: Bundle,
    pub metrics: Vec<EpochMetrics>,
}

struct ExampleResult {
    grads: Vec<Option<Vec<f64>>>,
    ce: Option<f64>,
    len_loss: Option<f64>,
    len_pred: Option<f64>,
}

fn example_grads(
    model: &Model,
    item: &BatchItem,
    lambda: f64,
    dropout_seed: Option<u64>,
    want_grads: bool,
) -> Result<ExampleResult> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed.unwrap_or(0));
    let mut spec = DropoutSpec { rate: model.config().dropout, rng: &mut rng };
    let drop = dropout_seed.is_some().then_some(&mut spec);
    let loss = model.example_loss(
        &mut tape,
        &item.src,
        &item.dec_inputs,
        &item.dec_targets,
        &item.positions,
        item.gold_tokens,
        lambda,
        drop,
    )?;
    let grads = if want_grads {
        let g = tape.backward(loss.total)?;
        tape.param_grads(&g, model.params().len())
    } else {
        Vec::new()
    };
    Ok(ExampleResult { grads, ce: loss.ce, len_loss: loss.len_loss, len_pred: loss.len_pred })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Teacher-forced dev metrics: mean per-example CE, mean absolute
/// difference of the rounded length prediction, and the selection loss.
fn dev_metrics(
    model: &Model,
    dev: &[BatchItem],
    lambda: f64,
    exec: Execution,
) -> Result<(Option<f64>, Option<f64>, f64)> {
    let results = try_map_ordered(dev, exec, |_, item| example_grads(model, item, lambda, None, false))?;
    let ce = mean(results.iter().filter_map(|r| r.ce));
    let len_loss = mean(results.iter().filter_map(|r| r.len_loss));
    let diff = mean(
        results
            .iter()
            .zip(dev)
            .filter_map(|(r, item)| r.len_pred.map(|p| (round_length(p) as f64 - item.gold_tokens as f64).abs())),
    );
    let select = match (ce, len_loss) {
        (Some(c), Some(l)) => (1.0 - lambda) * c + lambda * l,
        (Some(c), None) => c,
        (None, Some(l)) => l,
        (None, None) => return Err(Error::Data("empty dev set".into())),
    };
    Ok((ce, diff, select))
}

fn clip(grads: &mut [Option<Vec<f64>>], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads.iter().flatten().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| g.iter_mut().for_each(|x| *x *= s));
    }
}

/// Trains a model from scratch. With `out`, the best and latest
/// checkpoints and the metrics CSV are written after every epoch.
pub fn train(
    train_set: &[Prepared],
    dev_set: &[Prepared],
    scheme: &ControlScheme,
    vocab: &Vocabulary,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    out: Option<&TrainOutput>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    check_scheme(scheme, model_cfg)?;
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::Data("training and dev sets must be non-empty".into()));
    }
    if model_cfg.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "model vocab_size {} differs from vocabulary size {}",
            model_cfg.vocab_size,
            vocab.len()
        )));
    }
    if cfg.lambda > 0.0 && !model_cfg.length_head {
        log::info!("no length head configured; training on the generation loss only");
    }
    if let Some(o) = out {
        std::fs::create_dir_all(&o.dir).map_err(|e| Error::io(&o.dir, e))?;
    }
    let lambda = if model_cfg.length_head { cfg.lambda } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::init(model_cfg.clone(), &mut rng)?;
    let mut adam = AdamState::new(model.params());
    let adam_cfg = cfg.adam();
    let dev_items: Vec<BatchItem> =
        dev_set.iter().map(|p| make_item(p, model_cfg, false, &mut rng)).collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::new();
    let mut best: Option<(f64, Model)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut ce_sum, mut len_sum, mut ce_n, mut len_n) = (0.0, 0.0, 0usize, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut jobs = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let item = make_item(&train_set[i], model_cfg, cfg.noise, &mut rng)?;
                let seed = rng.gen::<u64>();
                jobs.push((item, seed));
            }
            let results = try_map_ordered(&jobs, cfg.execution, |_, (item, seed)| {
                example_grads(&model, item, lambda, Some(*seed), true)
            })?;
            let mut sum: Vec<Option<Vec<f64>>> = vec![None; model.params().len()];
            for r in &results {
                let loss_ok = r.ce.is_none_or(f64::is_finite) && r.len_loss.is_none_or(f64::is_finite);
                if !loss_ok {
                    return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}, batch {bi}")));
                }
                if let Some(c) = r.ce {
                    ce_sum += c;
                    ce_n += 1;
                }
                if let Some(l) = r.len_loss {
                    len_sum += l;
                    len_n += 1;
                }
                for (acc, g) in sum.iter_mut().zip(&r.grads) {
                    if let Some(g) = g {
                        match acc {
                            Some(a) => a.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                            None => *acc = Some(g.clone()),
                        }
                    }
                }
            }
            let inv = 1.0 / results.len() as f64;
            sum.iter_mut().flatten().for_each(|g| g.iter_mut().for_each(|x| *x *= inv));
            clip(&mut sum, cfg.clip_norm);
            adam_step(model.params_mut(), &sum, &mut adam, &adam_cfg)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch {bi}: {e}")))?;
        }
        let (dev_ce, dev_len_diff, select) = dev_metrics(&model, &dev_items, lambda, cfg.execution)?;
        let row = EpochMetrics {
            epoch,
            train_ce: (ce_n > 0).then(|| ce_sum / ce_n as f64),
            train_len_loss: (len_n > 0).then(|| len_sum / len_n as f64),
            dev_ce,
            dev_len_diff,
        };
        log::info!(
            "epoch {epoch}: train_ce {:?} train_len {:?} dev_ce {:?} dev_len_diff {:?}",
            row.train_ce,
            row.train_len_loss,
            row.dev_ce,
            row.dev_len_diff
        );
        metrics.push(row);
        if !select.is_finite() {
            return Err(Error::Numeric(format!("non-finite dev loss after epoch {epoch}")));
        }
        let improved = best.as_ref().is_none_or(|(b, _)| select < *b);
        if improved {
            best = Some((select, model.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        if let Some(o) = out {
            let bundle = |m: &Model| Bundle { model: m.clone(), scheme: scheme.clone(), vocab: vocab.clone() };
            crate::model::save_bundle(o.last(), &bundle(&model))?;
            if improved {
                crate::model::save_bundle(o.best(), &bundle(&model))?;
            }
            write_metrics_csv(o.metrics(), &metrics)?;
        }
        if stale >= cfg.patience && cfg.patience > 0 {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { bundle: Bundle { model, scheme: scheme.clone(), vocab: vocab.clone() }, metrics })
}
