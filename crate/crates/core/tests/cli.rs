mod common;

use common::{cli_pipeline, run_cli};
use serde_json::Value;

#[test]
fn gen_data_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(&spec, common::TINY_SPEC).unwrap();
    let out = |name: &str, seed: &str| {
        let d = dir.path().join(name);
        let (code, err) =
            run_cli(&["gen-data", "--spec", spec.to_str().unwrap(), "--out", d.to_str().unwrap(), "--seed", seed]);
        assert_eq!(code, 0, "{err}");
        std::fs::read(d.join("train.jsonl")).unwrap()
    };
    let a = out("a", "5");
    assert_eq!(a, out("b", "5"));
    assert_ne!(a, out("c", "6"));
}

#[test]
fn pipeline_generates_requested_sentence_counts() {
    let dir = tempfile::tempdir().unwrap();
    cli_pipeline(dir.path(), 2);
    let (run, eval) = (dir.path().join("run"), dir.path().join("eval"));
    for f in ["best.ckpt", "last.ckpt", "metrics.csv", "config.toml"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    let count = report["count"].as_u64().unwrap();
    let n = |k: &str| report[k].as_u64().unwrap();
    assert_eq!(n("n_exact") + n("n_over") + n("n_under"), count);
    assert_eq!(std::fs::read_to_string(eval.join("curve.csv")).unwrap().lines().next(), Some("length,accuracy,count"));

    let docs = dir.path().join("docs.jsonl");
    std::fs::write(&docs, "{\"document\": \"The cat sat. It was warm. Then it left.\"}\n").unwrap();
    let gen = dir.path().join("gen.jsonl");
    let ckpt = run.join("best.ckpt");
    let base = ["generate", "--checkpoint", ckpt.to_str().unwrap(), "--input", docs.to_str().unwrap()];
    let (code, err) = run_cli(&[&base[..], &["--output", gen.to_str().unwrap(), "--length", "3"]].concat());
    assert_eq!(code, 0, "{err}");
    let row: Value = serde_json::from_str(std::fs::read_to_string(&gen).unwrap().trim()).unwrap();
    assert_eq!(row["claimed_len"], 3);
    assert_eq!(row["requested_len"], 3);

    // A length-controlled scheme needs a length or --predict-length.
    let (code, err) = run_cli(&[&base[..], &["--output", gen.to_str().unwrap()]].concat());
    assert_eq!(code, 2, "{err}");
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = dir.path().join("o.jsonl");
    let (code, err) = run_cli(&[
        "preprocess",
        "--input",
        missing.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--scheme",
        "sentenum",
    ]);
    assert_eq!(code, 3, "{err}");
    assert!(err.starts_with("error: "), "{err}");
    let (code, err) = run_cli(&["train", "--set", "model.d_modle=3"]);
    assert_eq!(code, 2, "{err}");
    let (code, _) = run_cli(&["sweep", "--checkpoint", "x", "--input", "y", "--output", "z", "--lengths", "5..2"]);
    assert_ne!(code, 0);
}
