use clap::{Args, Parser, Subcommand};
use lenctl::config::{fit, RunConfig};
use lenctl::control::{ControlScheme, LengthUnit, SchemeKind};
use lenctl::decode::{generate, GenConfig, LengthSource};
use lenctl::eval::{evaluate, fixed_length_sweep, resolve_unit, write_curve_csv, ModelSummarizer};
use lenctl::model::{load_bundle, round_length, Bundle};
use lenctl::parallel::{try_map_ordered, Execution};
use lenctl::text::corpus::{read_corpus, read_jsonl, write_corpus, write_jsonl};
use lenctl::text::synth::{generate_splits, SynthSpec};
use lenctl::text::tokenize::tokenize;
use lenctl::train::TrainOutput;
use lenctl::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "lenctl", version, about = "Length-controlled summarization lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write synthetic train/dev/test JSONL splits.
    GenData {
        /// TOML synthetic corpus spec; defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Annotate summaries with a control scheme.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        scheme: SchemeKind,
        /// Corpus used to fit bucket edges; defaults to the input.
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Train a model and write checkpoints and metrics.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. `--set train.lr=0.002`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Summarize every document of a corpus.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Emit the model's own length estimate per document.
    PredictLength {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Decode a test corpus and write a report, per-example rows and curves.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Length unit for uncontrolled models.
        #[arg(long)]
        unit: Option<LengthUnit>,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Request each length in a range on every document.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Inclusive range `a..b`.
        #[arg(long, default_value = "1..8")]
        lengths: String,
        /// Use only the first N documents.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        unit: Option<LengthUnit>,
        #[command(flatten)]
        gen: GenArgs,
    },
}

#[derive(Args, Clone)]
struct GenArgs {
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    length_penalty: f64,
    #[arg(long)]
    ngram_block: Option<usize>,
    /// Defaults to the model's maximum target length.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Requested length for every document.
    #[arg(long, conflicts_with = "predict_length")]
    length: Option<usize>,
    /// Let the model choose the length.
    #[arg(long)]
    predict_length: bool,
}

impl GenArgs {
    fn config(&self, bundle: &Bundle) -> GenConfig {
        GenConfig {
            beam: self.beam,
            length_penalty: self.length_penalty,
            ngram_block: self.ngram_block,
            max_steps: self.max_steps.unwrap_or(bundle.model.config().max_tgt_len),
            length: self.length,
            length_source: if self.predict_length { LengthSource::Predicted } else { LengthSource::User },
        }
    }
}

fn parse_range(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let bad = || Error::Config(format!("length range {s:?} is not of the form a..b"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b): (usize, usize) =
        (a.trim().parse().map_err(|_| bad())?, b.trim_start_matches('=').trim().parse().map_err(|_| bad())?);
    if a == 0 || b < a {
        return Err(bad());
    }
    Ok(a..=b)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Input line for decoding; other fields are ignored.
#[derive(Deserialize)]
struct DocRecord {
    document: String,
}

#[derive(Serialize)]
struct LengthEstimate {
    predicted: Option<f64>,
    length: Option<usize>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData { spec, out, seed } => {
            let spec: SynthSpec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))?
                }
                None => SynthSpec::default(),
            };
            let splits = generate_splits(&spec, seed)?;
            create_dir(&out)?;
            for (name, set) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
                write_corpus(out.join(format!("{name}.jsonl")), set)?;
            }
            log::info!("wrote {} examples to {}", spec.total(), out.display());
        }
        Cmd::Preprocess { input, output, scheme, fit } => {
            let data = read_corpus(&input)?;
            let basis = match fit {
                Some(p) => read_corpus(p)?,
                None => data.clone(),
            };
            let scheme = scheme.resolve(&basis)?;
            let out = data.iter().map(|e| scheme.apply(e)).collect::<Result<Vec<_>>>()?;
            write_corpus(&output, &out)?;
            log::info!("annotated {} examples with {scheme}", out.len());
        }
        Cmd::Train { config, set } => {
            let cfg = RunConfig::load(config.as_deref(), &set)?;
            log::info!("resolved config:\n{}", cfg.to_toml());
            let train_set = read_corpus(&cfg.paths.train)?;
            let dev_set = read_corpus(&cfg.paths.dev)?;
            let out = TrainOutput { dir: cfg.paths.out_dir.clone() };
            let outcome = fit(&train_set, &dev_set, &cfg, Some(&out))?;
            log::info!("best checkpoint {} after {} epochs", out.best().display(), outcome.metrics.len());
        }
        Cmd::Generate { checkpoint, input, output, gen } => {
            let bundle = load_bundle(&checkpoint)?;
            let cfg = gen.config(&bundle);
            let docs: Vec<DocRecord> = read_jsonl(&input)?;
            let rows = try_map_ordered(&docs, Execution::Parallel, |_, r| generate(&bundle, &r.document, &cfg))?;
            write_jsonl(&output, &rows)?;
        }
        Cmd::PredictLength { checkpoint, input, output, max_steps } => {
            let bundle = load_bundle(&checkpoint)?;
            let docs: Vec<DocRecord> = read_jsonl(&input)?;
            let rows = try_map_ordered(&docs, Execution::Parallel, |_, r| -> Result<LengthEstimate> {
                match bundle.scheme {
                    ControlScheme::SentEnum | ControlScheme::SentPrefix => {
                        let cfg = GenConfig {
                            max_steps: max_steps.unwrap_or(bundle.model.config().max_tgt_len),
                            length_source: LengthSource::Predicted,
                            ..GenConfig::default()
                        };
                        let g = generate(&bundle, &r.document, &cfg)?;
                        Ok(LengthEstimate { predicted: None, length: g.claimed_len })
                    }
                    _ => {
                        let mem = bundle.model.encode(&tokenize(&r.document, &bundle.vocab))?;
                        let p = bundle.model.predict_length(&mem)?;
                        Ok(LengthEstimate { predicted: Some(p), length: Some(round_length(p)) })
                    }
                }
            })?;
            write_jsonl(&output, &rows)?;
        }
        Cmd::Evaluate { checkpoint, input, out_dir, unit, gen } => {
            let bundle = load_bundle(&checkpoint)?;
            let unit = resolve_unit(&bundle.scheme, unit)?;
            let cfg = gen.config(&bundle);
            let gold = cfg.length_source == LengthSource::User && bundle.scheme != ControlScheme::None;
            let test = read_corpus(&input)?;
            let s = ModelSummarizer { bundle: &bundle, gen: cfg };
            let (report, rows) = evaluate(&s, &test, &bundle.scheme, unit, gold, Execution::Parallel)?;
            create_dir(&out_dir)?;
            report.write_json(out_dir.join("report.json"))?;
            write_jsonl(out_dir.join("examples.jsonl"), &rows)?;
            write_curve_csv(out_dir.join("curve.csv"), &report.lengths.per_length)?;
            log::info!(
                "acc {:.4} diff {:.4} rouge1 {:.4} rouge2 {:.4}",
                report.lengths.acc,
                report.lengths.diff,
                report.rouge1_f,
                report.rouge2_f
            );
        }
        Cmd::Sweep { checkpoint, input, output, lengths, limit, unit, gen } => {
            let bundle = load_bundle(&checkpoint)?;
            let unit = resolve_unit(&bundle.scheme, unit)?;
            let range = parse_range(&lengths)?;
            let mut test = read_corpus(&input)?;
            test.truncate(limit.unwrap_or(test.len()));
            let s = ModelSummarizer { bundle: &bundle, gen: gen.config(&bundle) };
            let rows = fixed_length_sweep(&s, &test, unit, range, Execution::Parallel)?;
            write_curve_csv(&output, &rows)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
