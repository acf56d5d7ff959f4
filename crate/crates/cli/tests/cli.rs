use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use g2p_bridge_core::codec::{to_phonemes, IntermediateAlphabet};
use g2p_bridge_core::corpus::synthetic::BUNDLED_TOY_CORPUS;
use g2p_bridge_core::corpus::{parse_corpus, Split};
use g2p_bridge_core::model::{build_model, save_checkpoint, ModelConfig};
use g2p_bridge_core::provenance::ArtifactMeta;
use g2p_bridge_core::tokenizer::{interleave, BpeConfig, BpeTokenizer};
use g2p_bridge_core::Transducer;
use serde_json::Value;
use tempfile::TempDir;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn toy_config() -> PathBuf {
    workspace().join("configs/toy.toml")
}

fn toy_corpus_path() -> PathBuf {
    workspace().join("crates/core/data/toy_corpus.jsonl")
}

fn run(dir: &Path, args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_g2p-bridge"))
        .current_dir(dir)
        .args(args)
        .env("G2P_BRIDGE_LOG", "warn")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // the process may exit before reading its input
    if let Err(e) = child.stdin.take().unwrap().write_all(stdin.as_bytes()) {
        assert_eq!(e.kind(), std::io::ErrorKind::BrokenPipe, "{e}");
    }
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Tokenizer trained on the toy corpus and a randomly initialized toy model.
fn fixture() -> (TempDir, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let corpus = parse_corpus(BUNDLED_TOY_CORPUS.as_bytes(), &IntermediateAlphabet::default_alphabet()).unwrap();
    let fa: Vec<&str> = corpus.entries.iter().map(|e| e.fa.as_str()).collect();
    let pg: Vec<&str> = corpus.entries.iter().map(|e| e.pg.as_str()).collect();
    let tok = BpeTokenizer::train(&interleave(&fa, &pg).unwrap(), BpeConfig::default()).unwrap();
    let tok_path = dir.path().join("tok.bpe");
    tok.save(&tok_path).unwrap();
    let model: Transducer =
        build_model(ModelConfig { max_sequence_length: 24, ..ModelConfig::toy(tok.vocab_size()) }, 3).unwrap();
    let model_path = dir.path().join("model.g2pm");
    save_checkpoint(&model, Some(&ArtifactMeta::new(model.config(), Some(3))), &model_path).unwrap();
    (dir, tok_path.display().to_string(), model_path.display().to_string())
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = run(Path::new("."), &["transmogrify"], "");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn evaluate_without_model_names_the_flag() {
    let o = run(Path::new("."), &["evaluate", "--tokenizer", "t.bpe"], "");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--model"), "{}", stderr(&o));
}

#[test]
fn missing_input_file_is_a_usage_error() {
    let o = run(Path::new("."), &["inspect", "/no/such/file"], "");
    assert_eq!(o.status.code(), Some(2));
    let o = run(Path::new("."), &["convert", "--model", "/no/such.g2pm", "--tokenizer", "x"], "");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_beam_is_rejected() {
    let (dir, tok, model) = fixture();
    let o = run(dir.path(), &["convert", "--model", &model, "--tokenizer", &tok, "--beam", "0"], "سلام\n");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn normalize_and_canonicalize_stream_lines() {
    let o = run(Path::new("."), &["normalize"], "كتاب  ي\nيك\n");
    assert!(o.status.success());
    assert_eq!(stdout(&o), "کتاب ی\nیک\n");

    let o = run(Path::new("."), &["canonicalize"], "khaab\nshab  baaz\n");
    assert!(o.status.success());
    assert_eq!(stdout(&o), "ķAb\nšab bAz\n");

    let o = run(Path::new("."), &["--format", "json", "canonicalize"], "khaab\n");
    let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["output"], "ķAb");
}

#[test]
fn unmappable_text_is_a_domain_error() {
    let o = run(Path::new("."), &["canonicalize"], "khaab\nk1b\n");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn lexicon_check_reports_bad_readings() {
    let dir = tempfile::tempdir().unwrap();
    let good = workspace().join("crates/core/data/homographs.jsonl");
    let o = run(dir.path(), &["lexicon", "check", "--lexicon", good.to_str().unwrap()], "");
    assert!(o.status.success(), "{}", stderr(&o));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        r#"{"surface":"مرد","readings":[{"reading_id":"man","pg":"mard","prior_rank":1},{"reading_id":"died","pg":"xord","prior_rank":2}]}"#,
    )
    .unwrap();
    let o = run(dir.path(), &["lexicon", "check", "--lexicon", bad.to_str().unwrap()], "");
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("problem"), "{}", stdout(&o));
}

#[test]
fn convert_is_byte_identical_across_runs() {
    let (dir, tok, model) = fixture();
    let input = "من روز کوچک را دیدم\nاین آسمان است\n\n";
    let args = ["convert", "--model", &model, "--tokenizer", &tok];
    let a = run(dir.path(), &args, input);
    let b = run(dir.path(), &args, input);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 3);
    let beam = ["convert", "--model", &model, "--tokenizer", &tok, "--beam", "3"];
    assert_eq!(run(dir.path(), &beam, input).stdout, run(dir.path(), &beam, input).stdout);
}

#[test]
fn artifacts_embed_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config();
    let cfg = config.to_str().unwrap();
    let corpus = toy_corpus_path();

    let unlabeled = dir.path().join("plain.jsonl");
    let text: String = BUNDLED_TOY_CORPUS
        .lines()
        .skip(1)
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("split");
            format!("{v}\n")
        })
        .collect();
    std::fs::write(&unlabeled, text).unwrap();

    let o = run(
        dir.path(),
        &["--config", cfg, "--seed", "11", "split", "--corpus", unlabeled.to_str().unwrap(), "--out", "split.jsonl"],
        "",
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read_to_string(dir.path().join("split.jsonl")).unwrap();
    let meta: Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(meta["meta"]["seed"], 11);
    assert!(meta["meta"]["tool"].as_str().unwrap().starts_with("g2p-bridge "));
    assert_eq!(meta["meta"]["config_digest"].as_str().unwrap().len(), 16);
    let labeled = parse_corpus(first.as_bytes(), &IntermediateAlphabet::default_alphabet()).unwrap();
    assert_eq!((labeled.count(Split::Val), labeled.count(Split::Test)), (40, 40));

    let o = run(
        dir.path(),
        &["--config", cfg, "augment", "--corpus", "split.jsonl", "--out", "aug.jsonl", "--target-size", "500"],
        "",
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let aug = std::fs::read_to_string(dir.path().join("aug.jsonl")).unwrap();
    assert!(aug.starts_with(r#"{"meta":"#));

    let o = run(
        dir.path(),
        &["--config", cfg, "train-tokenizer", "--corpus", corpus.to_str().unwrap(), "--out", "tok.bpe"],
        "",
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let tok = std::fs::read_to_string(dir.path().join("tok.bpe")).unwrap();
    assert!(tok.contains("# tool g2p-bridge") && tok.contains("# config_digest"));

    let (fixture_dir, _, model) = fixture();
    let o = run(fixture_dir.path(), &["--format", "json", "inspect", &model], "");
    let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["kind"], "checkpoint");
    assert_eq!(v["meta"]["seed"], 3);
}

#[test]
fn inspect_recognizes_each_artifact() {
    let (dir, tok, model) = fixture();
    let kind = |path: &str| {
        let o = run(dir.path(), &["--format", "json", "inspect", path], "");
        assert!(o.status.success(), "{}", stderr(&o));
        serde_json::from_str::<Value>(stdout(&o).trim()).unwrap()["kind"].as_str().unwrap().to_string()
    };
    assert_eq!(kind(&model), "checkpoint");
    assert_eq!(kind(&tok), "tokenizer");
    assert_eq!(kind(toy_corpus_path().to_str().unwrap()), "corpus");
}

/// Full toy run: the trained model's output on training sentences is
/// valid Pinglish and mostly correct.
#[test]
fn toy_model_converts_to_pinglish() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config();
    let cfg = cfg.to_str().unwrap();
    assert!(run(dir.path(), &["--config", cfg, "train-tokenizer", "--out", "tok.bpe"], "").status.success());
    let o = run(dir.path(), &["--config", cfg, "train", "--tokenizer", "tok.bpe", "--out", "m.g2pm"], "");
    assert!(o.status.success(), "{}", stderr(&o));

    let abc = IntermediateAlphabet::default_alphabet();
    let corpus = parse_corpus(BUNDLED_TOY_CORPUS.as_bytes(), &abc).unwrap();
    let sample: Vec<_> = corpus.entries_in(Split::Train).take(20).collect();
    let input: String = sample.iter().map(|e| format!("{}\n", e.fa)).collect();
    let o = run(dir.path(), &["--config", cfg, "convert", "--model", "m.g2pm", "--tokenizer", "tok.bpe"], &input);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), sample.len());
    let exact = lines.iter().zip(&sample).filter(|(h, e)| **h == e.pg).count();
    for line in &lines {
        assert!(to_phonemes(line, &abc).is_ok(), "{line:?} is not Pinglish");
    }
    assert!(exact >= 10, "only {exact} of {} exact: {lines:?}", sample.len());

    let o = run(
        dir.path(),
        &[
            "--config",
            cfg,
            "--format",
            "json",
            "evaluate",
            "--model",
            "m.g2pm",
            "--tokenizer",
            "tok.bpe",
            "--split",
            "val",
        ],
        "",
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(report["counts"]["sentences"], 40);
}
