//! Checks shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use lenctl::model::{Model, ModelConfig};
use lenctl::position::{position_indices, PositionPlan, PositionScheme};
use lenctl::tensor::{Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

/// Denominator floor above finite-difference roundoff (about 1e-10 here), so
/// gradients that vanish in theory, like the attention key biases, do not
/// compare roundoff against roundoff.
pub const FD_FLOOR: f64 = 1e-6;

/// `‖a − b‖ / max(‖a‖ + ‖b‖, FD_FLOOR)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / (norm(a) + norm(b)).max(FD_FLOOR)
}

type Build = dyn Fn(&mut Tape, &[Var]) -> Var;

/// Worst relative error over the inputs of `build`, whose output is reduced
/// to a scalar by a fixed random weighting.
pub fn primitive_error(inputs: &[Tensor], build: &Build) -> f64 {
    let eval = |xs: &[Tensor]| {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
        let out = build(&mut t, &vars);
        t.value(out).clone()
    };
    let shape = eval(inputs).shape().to_vec();
    let probe = Tensor::randn(&shape, 1.0, &mut ChaCha8Rng::seed_from_u64(7));
    let scalar = |xs: &[Tensor]| eval(xs).data().iter().zip(probe.data()).map(|(a, b)| a * b).sum::<f64>();

    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone())).collect();
    let out = build(&mut t, &vars);
    let n = t.value(out).numel();
    let row = t.reshape(out, &[1, n]).unwrap();
    let col = t.leaf(Tensor::new(vec![n, 1], probe.data().to_vec()).unwrap());
    let s = t.matmul(row, col).unwrap();
    let grads = t.backward(s).unwrap();

    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let numeric: Vec<f64> = (0..inputs[i].numel())
            .map(|j| {
                let mut xs = inputs.to_vec();
                xs[i].data_mut()[j] += FD_STEP;
                let up = scalar(&xs);
                xs[i].data_mut()[j] -= 2.0 * FD_STEP;
                (up - scalar(&xs)) / (2.0 * FD_STEP)
            })
            .collect();
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

fn rand(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Relative error of every differentiable tape primitive, by name.
pub fn primitive_errors() -> Vec<(&'static str, f64)> {
    const MASK: [bool; 5] = [true, false, true, true, false];
    vec![
        ("matmul", primitive_error(&[rand(&[3, 4], 1), rand(&[4, 2], 2)], &|t, v| t.matmul(v[0], v[1]).unwrap())),
        ("add", primitive_error(&[rand(&[3, 4], 3), rand(&[3, 4], 4)], &|t, v| t.add(v[0], v[1]).unwrap())),
        ("add_row", primitive_error(&[rand(&[3, 4], 5), rand(&[4], 6)], &|t, v| t.add_row(v[0], v[1]).unwrap())),
        (
            "affine",
            primitive_error(&[rand(&[3, 4], 7), rand(&[4, 5], 8), rand(&[5], 9)], &|t, v| {
                t.affine(v[0], v[1], v[2]).unwrap()
            }),
        ),
        ("relu", primitive_error(&[rand(&[4, 5], 10)], &|t, v| t.relu(v[0]))),
        ("scale", primitive_error(&[rand(&[2, 3], 11)], &|t, v| t.scale(v[0], -1.7))),
        ("gather", primitive_error(&[rand(&[5, 3], 12)], &|t, v| t.gather(v[0], &[4, 1, 1, 0]).unwrap())),
        (
            "layer_norm",
            primitive_error(&[rand(&[3, 6], 13), rand(&[6], 14), rand(&[6], 15)], &|t, v| {
                t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap()
            }),
        ),
        ("softmax_rows", primitive_error(&[rand(&[3, 5], 16)], &|t, v| t.softmax_rows(v[0]).unwrap())),
        (
            "attention",
            primitive_error(&[rand(&[4, 6], 17), rand(&[4, 6], 18), rand(&[4, 6], 19)], &|t, v| {
                t.attention(v[0], v[1], v[2], 2, true, None).unwrap()
            }),
        ),
        (
            "attention_masked",
            primitive_error(&[rand(&[2, 4], 20), rand(&[5, 4], 21), rand(&[5, 4], 22)], &|t, v| {
                t.attention(v[0], v[1], v[2], 2, false, Some(&MASK)).unwrap()
            }),
        ),
        ("mean_rows", primitive_error(&[rand(&[5, 3], 23)], &|t, v| t.mean_rows(v[0], &[0, 2, 3]).unwrap())),
        (
            "dropout",
            primitive_error(&[rand(&[2, 3], 24)], &|t, v| t.dropout(v[0], vec![2.0, 0.0, 2.0, 2.0, 0.0, 2.0]).unwrap()),
        ),
        ("reshape", primitive_error(&[rand(&[2, 3], 25)], &|t, v| t.reshape(v[0], &[3, 2]).unwrap())),
        (
            "cross_entropy",
            primitive_error(&[rand(&[4, 7], 26)], &|t, v| t.cross_entropy(v[0], &[3, 0, 6, 2], 0).unwrap()),
        ),
        ("mse", primitive_error(&[rand(&[1, 3], 27), rand(&[1, 3], 28)], &|t, v| t.mse(v[0], v[1]).unwrap())),
    ]
}

/// Two encoder and two decoder layers at d=16, reverse positions, with a
/// length head.
pub fn grad_check_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 30,
        d_model: 16,
        enc_layers: 2,
        dec_layers: 2,
        heads: 2,
        ffn: 32,
        max_src_len: 12,
        max_tgt_len: 10,
        position_scheme: PositionScheme::Reverse,
        length_head: true,
        length_hidden: 8,
        dropout: 0.0,
        position_headroom: 4,
    }
}

/// Worst per-tensor relative error of the joint loss gradient with respect
/// to every model parameter, and the number of tensors checked.
pub fn joint_loss_error(lambda: f64) -> (f64, usize) {
    let cfg = grad_check_config();
    let model = Model::init(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let src = [8, 9, 10, 11, 12, 13, 0];
    let inputs = [1, 14, 15, 16, 17];
    let targets = [14, 15, 16, 17, 2];
    let plan = PositionPlan::reverse(4, 1, cfg.max_index());
    let positions = position_indices(&plan, inputs.len()).unwrap();
    let loss_of = |m: &Model| {
        let mut t = Tape::new();
        let l = m.example_loss(&mut t, &src, &inputs, &targets, &positions, 4, lambda, None).unwrap();
        t.value(l.total).item()
    };
    let mut t = Tape::new();
    let l = model.example_loss(&mut t, &src, &inputs, &targets, &positions, 4, lambda, None).unwrap();
    let grads = t.backward(l.total).unwrap();
    let n = model.params().len();
    let analytic = t.param_grads(&grads, n);
    drop(t);

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (p, a) in analytic.iter().enumerate() {
        let len = probe.params().get(p).numel();
        let mut numeric = Vec::with_capacity(len);
        for j in 0..len {
            let orig = probe.params().get(p).data()[j];
            probe.params_mut().tensors_mut()[p].data_mut()[j] = orig + FD_STEP;
            let up = loss_of(&probe);
            probe.params_mut().tensors_mut()[p].data_mut()[j] = orig - FD_STEP;
            let down = loss_of(&probe);
            probe.params_mut().tensors_mut()[p].data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        let a = a.clone().unwrap_or_else(|| vec![0.0; len]);
        worst = worst.max(rel_err(&a, &numeric));
    }
    (worst, n)
}

/// Exhaustive check of reverse indices for every `ℓ ≤ 64`, `|δ| ≤ 5` and
/// every step up to `ℓ + 5`, against direct integer arithmetic. Returns the
/// number of cases checked.
pub fn reverse_index_invariants() -> Result<usize, String> {
    let max_len = 64usize;
    let max_index = max_len + 8;
    let mut cases = 0;
    for len in 1..=max_len {
        for noise in -5i64..=5 {
            let plan = PositionPlan::reverse(len, noise, max_index);
            let steps = len + 5;
            let idx = position_indices(&plan, steps).map_err(|e| e.to_string())?;
            for (t, &i) in idx.iter().enumerate() {
                let raw = len as i64 - 1 + noise - t as i64;
                let expect = raw.max(0).min(max_index as i64) as usize;
                if i != expect || i > max_index {
                    return Err(format!("len {len} noise {noise} step {t}: {i} != {expect}"));
                }
                if t > 0 {
                    let prev = idx[t - 1];
                    if i > prev || (prev > 0 && prev - i != 1) {
                        return Err(format!("len {len} noise {noise} step {t}: {prev} -> {i} not a unit countdown"));
                    }
                }
                cases += 1;
            }
            if noise == 0 && (idx[len - 1] != 0 || idx[0] != len - 1) {
                return Err(format!("len {len}: countdown does not run from len-1 to 0"));
            }
        }
    }
    Ok(cases)
}

pub fn lenctl() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_lenctl"))
}

/// Runs `lenctl` in `dir`, returning its exit code and stderr.
pub fn run_cli_in(dir: &std::path::Path, args: &[&str]) -> (i32, String) {
    let out = lenctl().current_dir(dir).args(args).env("RUST_LOG", "warn").output().expect("spawn lenctl");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

pub fn run_cli(args: &[&str]) -> (i32, String) {
    run_cli_in(std::path::Path::new("."), args)
}

fn ok(dir: &std::path::Path, args: &[&str]) {
    let (code, err) = run_cli_in(dir, args);
    assert_eq!(code, 0, "lenctl {args:?} failed: {err}");
}

pub const TINY_SPEC: &str =
    "train = 48\ndev = 8\ntest = 8\nmin_sentences = 4\nmax_sentences = 6\nsummary_sentence_weights = [0.3, 0.4, 0.3]\n";

/// gen-data, train and evaluate a tiny SentEnum model inside `dir`, using
/// relative paths so that every artifact is independent of `dir`.
pub fn cli_pipeline(dir: &std::path::Path, seed: u64) {
    std::fs::write(dir.join("spec.toml"), TINY_SPEC).unwrap();
    let seed = seed.to_string();
    ok(dir, &["gen-data", "--spec", "spec.toml", "--out", "data", "--seed", &seed]);
    let sets = [
        "scheme=\"sentenum\"".to_string(),
        "paths.train=\"data/train.jsonl\"".into(),
        "paths.dev=\"data/dev.jsonl\"".into(),
        "paths.out_dir=\"run\"".into(),
        "model.d_model=16".into(),
        "model.heads=2".into(),
        "model.ffn=32".into(),
        "model.enc_layers=1".into(),
        "model.dec_layers=1".into(),
        "model.max_src_len=128".into(),
        "model.max_tgt_len=64".into(),
        "gen.max_steps=64".into(),
        "train.epochs=2".into(),
        "train.batch_size=8".into(),
        format!("train.seed={seed}"),
    ];
    let mut args = vec!["train".to_string()];
    for kv in &sets {
        args.push("--set".into());
        args.push(kv.clone());
    }
    ok(dir, &args.iter().map(String::as_str).collect::<Vec<_>>());
    ok(
        dir,
        &[
            "evaluate",
            "--checkpoint",
            "run/best.ckpt",
            "--input",
            "data/test.jsonl",
            "--out-dir",
            "eval",
            "--max-steps",
            "64",
        ],
    );
}
