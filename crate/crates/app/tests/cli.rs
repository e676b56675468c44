use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use matra_core::corpus::Corpus;
use matra_core::metrics::read_annotations;
use matra_core::training::{load_checkpoint, save_checkpoint, TrainMode};
use matra_testkit::toy::{memorized, synthetic_corpus};
use serde_json::{json, Value};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn matra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matra"))
        .args(args)
        .env_remove("MATRA_CHECKPOINT")
        .env_remove("MATRA_PORT")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_json(path: &Path, value: Value) -> PathBuf {
    std::fs::write(path, value.to_string()).unwrap();
    path.to_owned()
}

fn toy_corpus(dir: &Path) -> PathBuf {
    let path = dir.join("toy.tsv");
    let mut out = Vec::new();
    synthetic_corpus().write_tsv(&mut out).unwrap();
    std::fs::write(&path, out).unwrap();
    path
}

fn model_config(dir: &Path) -> PathBuf {
    write_json(
        &dir.join("model.json"),
        json!({
            "num_encoder_layers": 2, "num_decoder_layers": 2, "embed_size": 32,
            "heads": 4, "hidden_dim": 64, "max_seq_len": 16
        }),
    )
}

fn memorized_file(dir: &Path) -> PathBuf {
    let path = dir.join("toy.matr");
    save_checkpoint(memorized(), &path).unwrap();
    path
}

#[test]
fn parse_corpus_writes_the_tagged_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus.tsv");
    let run = || matra(&["parse-corpus", &format!("{FIXTURES}/news"), "--out", s(&out)]);
    let o = run();
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(&out).unwrap();
    assert_eq!(first, std::fs::read(format!("{FIXTURES}/news_en_ta.tsv")).unwrap());
    assert!(stderr(&o).contains("6 triples"), "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("corpus.tsv.rejections.jsonl")).unwrap();
    assert!(report.is_empty());

    assert!(run().status.success());
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn parse_corpus_reports_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    std::fs::copy(
        concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/news_en_hi.xml"),
        input.join("names.xml"),
    )
    .unwrap();
    let out = dir.path().join("c.tsv");
    let report = dir.path().join("r.jsonl");
    let o = matra(&["parse-corpus", s(&input), "--out", s(&out), "--report", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<Value> = std::fs::read_to_string(&report)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let rules: Vec<&str> = lines.iter().map(|l| l["rule"].as_str().unwrap()).collect();
    assert_eq!(rules, ["word-count", "foreign-chars-stripped", "duplicate"]);
    assert!(lines.iter().all(|l| l["file"] == "names.xml"));
}

#[test]
fn parse_corpus_needs_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = matra(&["parse-corpus", s(dir.path()), "--out", s(&dir.path().join("x.tsv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no .xml files"));
}

#[test]
fn train_writes_a_loadable_checkpoint_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = toy_corpus(dir.path());
    let train = write_json(
        &dir.path().join("train.json"),
        json!({ "batch_size": 8, "epochs": 2, "warmup_steps": 4, "peak_lr": 0.01, "seed": 3 }),
    );
    let out = dir.path().join("m.matr");
    let o = matra(&[
        "train", "--corpus", s(&corpus), "--model-config", s(&model_config(dir.path())), "--train-config", s(&train),
        "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let checkpoint = load_checkpoint(&out).unwrap();
    assert_eq!(checkpoint.metadata.mode, Some(TrainMode::Bidirectional));
    assert_eq!(checkpoint.metadata.steps, 16);
    let history = std::fs::read_to_string(dir.path().join("m.matr.history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);
}

#[test]
fn train_config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = toy_corpus(dir.path());
    let bad_model = write_json(
        &dir.path().join("bad.json"),
        json!({ "num_encoder_layers": 1, "num_decoder_layers": 1, "embed_size": 30, "heads": 4, "hidden_dim": 8, "max_seq_len": 16 }),
    );
    let out = dir.path().join("m.matr");
    let o = matra(&["train", "--corpus", s(&corpus), "--model-config", s(&bad_model), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("heads"), "{}", stderr(&o));

    let bad_train = write_json(&dir.path().join("t.json"), json!({ "batch_size": 0 }));
    let o = matra(&[
        "train", "--corpus", s(&corpus), "--model-config", s(&model_config(dir.path())), "--train-config", s(&bad_train),
        "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("batch_size"), "{}", stderr(&o));
}

#[test]
fn indic2eng_on_english_sources_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let english: Vec<_> = synthetic_corpus().triples.into_iter().filter(|t| t.source_lang.is_english()).collect();
    let corpus = dir.path().join("en.tsv");
    let mut out = Vec::new();
    Corpus::new(english).write_tsv(&mut out).unwrap();
    std::fs::write(&corpus, out).unwrap();
    let train = write_json(&dir.path().join("t.json"), json!({ "mode": "indic2eng", "epochs": 1, "warmup_steps": 1 }));
    let o = matra(&[
        "train", "--corpus", s(&corpus), "--model-config", s(&model_config(dir.path())), "--train-config", s(&train),
        "--out", s(&dir.path().join("m.matr")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no indic2eng triples"), "{}", stderr(&o));
}

#[test]
fn zero_epochs_checkpoint_is_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_json(&dir.path().join("t.json"), json!({ "epochs": 0, "seed": 11 }));
    let out = dir.path().join("m.matr");
    let o = matra(&[
        "train", "--corpus", s(&toy_corpus(dir.path())), "--model-config", s(&model_config(dir.path())),
        "--train-config", s(&train), "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let checkpoint = load_checkpoint(&out).unwrap();
    let init = matra_core::model::init_model::<f32>(checkpoint.config(), 11).unwrap();
    assert_eq!(checkpoint.params, init);
}

#[test]
fn evaluate_scores_a_test_set() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = matra(&[
        "evaluate", "--checkpoint", s(&memorized_file(dir.path())), "--test", s(&toy_corpus(dir.path())), "--out",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["items"], 64);
    for (metric, value) in [("top1", 1.0), ("cer", 0.0), ("cer_vanilla", 0.0)] {
        for (source, row) in v["metrics"][metric].as_object().unwrap() {
            for (target, cell) in row.as_object().unwrap() {
                assert_eq!(cell.as_f64(), Some(value), "{metric} {source}->{target}");
            }
        }
    }
    // Rows are sources: the toy corpus has English to Hindi and back.
    assert!(v["metrics"]["top1"]["english"]["hindi"].is_number());
    assert!(v["metrics"]["top1"]["hindi"]["english"].is_number());
    assert!(v["metrics"]["top1"]["hindi"].get("bengali").is_none());
}

#[test]
fn evaluate_annotations_reports_phonetic_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let lines: Vec<String> = (0..4)
        .map(|i| {
            let mut r = json!({
                "id": i.to_string(), "source_lang": "hindi", "target_lang": "english", "input": "कखग",
                "prediction": "ABC", "verdict": "correct", "annotator_id": "a"
            });
            if i == 2 {
                r["verdict"] = json!("incorrect");
                r["reference"] = json!("ABD");
            }
            r.to_string()
        })
        .collect();
    let path = dir.path().join("a.jsonl");
    std::fs::write(&path, lines.join("\n")).unwrap();
    let o = matra(&["evaluate", "--annotations", s(&path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["phonetic_accuracy"], 0.75);
    assert_eq!(v["phonetic_accuracy_matrix"]["hindi"]["english"], 0.75);
}

#[test]
fn transliterate_reads_the_checkpoint_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_matra"))
        .args(["transliterate", "--from", "hindi", "--to", "tamil", "कखग", "खकघ"])
        .env("MATRA_CHECKPOINT", memorized_file(dir.path()))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "கஙச ஙகஞ\n");

    let o = Command::new(env!("CARGO_BIN_EXE_matra"))
        .args(["transliterate", "--from", "english", "--to", "hindi", "क"])
        .env("MATRA_CHECKPOINT", memorized_file(dir.path()))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not english script"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(matra(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(matra(&["transliterate", "--from", "french", "--to", "hindi", "--checkpoint", "x", "A"]).status.code(), Some(1));
    assert_eq!(matra(&["serve", "--checkpoint", "x", "--rate-limit", "0"]).status.code(), Some(1));
    assert_eq!(matra(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_or_corrupt_checkpoints_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.matr");
    std::fs::write(&bad, b"not a model").unwrap();
    let o = matra(&["transliterate", "--checkpoint", s(&bad), "--from", "english", "--to", "hindi", "ABC"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not a checkpoint"), "{}", stderr(&o));
}

#[test]
fn annotation_export_and_import_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pending = dir.path().join("pending.jsonl");
    let o = matra(&[
        "annotations-export", "--checkpoint", s(&memorized_file(dir.path())), "--test", s(&toy_corpus(dir.path())),
        "--out", s(&pending),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let items: Vec<Value> = std::fs::read_to_string(&pending)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(items.len(), 64);
    assert!(items.iter().all(|i| i.get("verdict").is_none() && i["prediction"].is_string()));

    // Judge the first two, one each way.
    let judged: Vec<String> = items[..2]
        .iter()
        .enumerate()
        .map(|(k, i)| {
            let mut r = i.clone();
            r["annotator_id"] = json!("tester");
            r["verdict"] = json!(if k == 0 { "correct" } else { "incorrect" });
            if k == 1 {
                r["reference"] = json!("X");
            }
            r.to_string()
        })
        .collect();
    let input = dir.path().join("judged.jsonl");
    std::fs::write(&input, judged.join("\n")).unwrap();
    let store = dir.path().join("store.jsonl");
    let o = matra(&["annotations-import", s(&input), "--store", s(&store)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stored = read_annotations(std::fs::read(&store).unwrap().as_slice()).unwrap();
    assert_eq!(stored.len(), 2);

    let broken = dir.path().join("broken.jsonl");
    std::fs::write(&broken, format!("{}\n{{\"id\": 1}}\n", judged[0])).unwrap();
    let o = matra(&["annotations-import", s(&broken), "--store", s(&store)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(read_annotations(std::fs::read(&store).unwrap().as_slice()).unwrap().len(), 2);
}

