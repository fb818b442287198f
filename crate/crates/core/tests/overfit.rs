use lenctl::control::SchemeKind;
use lenctl::model::ModelConfig;
use lenctl::parallel::Execution;
use lenctl::position::PositionScheme;
use lenctl::text::{build_vocab, generate_splits, SynthSpec};
use lenctl::train::{prepare_example, train, Prepared, TrainConfig};

#[test]
fn memorizes_sixty_four_examples() {
    let spec = SynthSpec {
        train: 64,
        dev: 1,
        test: 1,
        min_sentences: 4,
        max_sentences: 6,
        summary_sentence_weights: vec![0.3, 0.4, 0.3],
        ..SynthSpec::default()
    };
    let data = generate_splits(&spec, 3).unwrap();
    let texts: Vec<&str> = data.train.iter().flat_map(|e| [e.document.text(), e.summary.text()]).collect();
    let vocab = build_vocab(&texts, 4096).unwrap();
    let scheme = SchemeKind::SentEnum.resolve(&data.train).unwrap();
    let set: Vec<Prepared> = data.train.iter().map(|e| prepare_example(e, &scheme, &vocab).unwrap()).collect();
    let model = ModelConfig {
        vocab_size: vocab.len(),
        d_model: 32,
        heads: 4,
        ffn: 128,
        max_src_len: 128,
        max_tgt_len: 64,
        position_scheme: PositionScheme::Forward,
        length_head: false,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 150,
        batch_size: 8,
        lr: 3e-3,
        lambda: 0.0,
        patience: 0,
        execution: Execution::Parallel,
        ..TrainConfig::default()
    };
    let out = train(&set, &set, &scheme, &vocab, &model, &cfg, None).unwrap();
    let ce: Vec<f64> = out.metrics.iter().map(|m| m.dev_ce.unwrap()).collect();
    for w in ce[..5].windows(2) {
        assert!(w[1] < w[0], "teacher-forced loss rose early: {:?}", &ce[..5]);
    }
    let best = ce.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(best < 0.1, "per-token loss {best} after {} epochs", ce.len());
}
