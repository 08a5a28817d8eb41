mod support;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use natadv::checkpoint::load_checkpoint;
use natadv::config::RunConfig;
use natadv::core::attack::AttackMethod;
use natadv::core::model::ModelBundle;
use natadv::core::text::Label;
use natadv::formats::{read_dataset, read_records, read_sweep_csv, read_vocab, write_records, AttackRecord};
use natadv::manifest::read_manifest;
use support::{natadv, stderr};
use tempfile::TempDir;

/// A small prepared corpus and a briefly trained model, built once.
struct Fixture {
    _dir: TempDir,
    root: PathBuf,
    data: PathBuf,
    ckpt: PathBuf,
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let full = std::fs::read_to_string(support::desk_corpus()).unwrap();
        let small: String = full.lines().take(300).map(|l| format!("{l}\n")).collect();
        let csv = root.join("small.csv");
        std::fs::write(&csv, small).unwrap();
        let data = root.join("data");
        let o = natadv(&["prepare", s(&csv), "--out", s(&data)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let cfg = root.join("tiny.cfg");
        std::fs::write(&cfg, "# tiny model\nepochs = 2\nembed = 8\nhidden = 16\nffn = 8\n").unwrap();
        let ckpt = root.join("model.ckpt");
        let o = natadv(&["train", "--data", s(&data), "--config", s(&cfg), "--out", s(&ckpt)]);
        assert!(o.status.success(), "{}", stderr(&o));
        Fixture { _dir: dir, root, data, ckpt }
    })
}

#[test]
fn missing_data_dir_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let o = natadv(&["train", "--data", s(&missing), "--out", s(&dir.path().join("m.ckpt"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));
}

#[test]
fn bad_flags_exit_two() {
    assert_eq!(natadv(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(natadv(&["attack", "--epsilon", "x"]).status.code(), Some(2));
}

#[test]
fn malformed_corpus_reports_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "\"7\",\"what\"\n\"9\",\"no\"\n\"2\",\"fine\"\n").unwrap();
    let o = natadv(&["prepare", s(&csv), "--out", s(&dir.path().join("d"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row"), "{}", stderr(&o));
}

#[test]
fn prepare_rerun_is_byte_identical() {
    let f = fixture();
    let again = f.root.join("data2");
    let o = natadv(&["prepare", s(&f.root.join("small.csv")), "--out", s(&again)]);
    assert!(o.status.success());
    for name in ["bpe.txt", "vocab.tsv", "train.tsv", "test.tsv", "lm.tsv"] {
        let a = std::fs::read(f.data.join(name)).unwrap();
        let b = std::fs::read(again.join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn max_units_one_crops_everything() {
    let f = fixture();
    let out = f.root.join("data_one");
    let o = natadv(&["prepare", s(&f.root.join("small.csv")), "--out", s(&out), "--max-units", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for split in ["train.tsv", "test.tsv"] {
        for e in read_dataset(out.join(split)).unwrap() {
            assert_eq!(e.ids.len(), 1, "{}", e.text);
        }
    }
    assert!(read_vocab(out.join("vocab.tsv")).unwrap().len() <= 8000);
}

#[test]
fn zero_epochs_keeps_initial_parameters() {
    let f = fixture();
    let ckpt = f.root.join("untouched.ckpt");
    let o = natadv(&["train", "--data", s(&f.data), "--out", s(&ckpt), "--epochs", "0", "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let vocab = read_vocab(f.data.join("vocab.tsv")).unwrap();
    let loaded = load_checkpoint(&ckpt, &vocab).unwrap();
    let fresh = ModelBundle::init(RunConfig::default().dims(vocab.len()), 9);
    assert_eq!(loaded, fresh);
    assert!(f.root.join("untouched.ckpt.manifest.json").exists());
}

#[test]
fn training_twice_gives_the_same_bytes() {
    let f = fixture();
    let again = f.root.join("again.ckpt");
    let o = natadv(&[
        "train",
        "--data",
        s(&f.data),
        "--config",
        s(&f.root.join("tiny.cfg")),
        "--out",
        s(&again),
    ]);
    assert!(o.status.success());
    assert!(std::fs::read(&f.ckpt).unwrap() == std::fs::read(&again).unwrap());
}

#[test]
fn jsma_without_budget_changes_nothing() {
    let f = fixture();
    let out = f.root.join("jsma0.tsv");
    let o = natadv(&[
        "attack", "--checkpoint", s(&f.ckpt), "--data", s(&f.data), "--method", "jsma", "--max-subs", "0",
        "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs = read_records(&out).unwrap();
    assert!(!recs.is_empty());
    for r in recs {
        assert_eq!(r.original, r.adversarial);
        assert_eq!(r.substitutions, 0);
        assert_eq!(r.pred_after, Some(r.pred_before));
    }
}

#[test]
fn attack_records_and_manifest() {
    let f = fixture();
    let out = f.root.join("fgsm.tsv");
    let o = natadv(&[
        "attack", "--checkpoint", s(&f.ckpt), "--data", s(&f.data), "--epsilon", "0.3", "--limit", "10",
        "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("misclassification_rate"));
    assert_eq!(read_records(&out).unwrap().len(), 10);
    let m = read_manifest(f.root.join("fgsm.tsv.manifest.json")).unwrap();
    assert_eq!(m.command, "attack");
    assert_eq!(m.outputs.len(), 1);
}

#[test]
fn sweep_at_zero_is_one_row() {
    let f = fixture();
    let out = f.root.join("sweep0");
    let o = natadv(&[
        "sweep", "--checkpoint", s(&f.ckpt), "--data", s(&f.data), "--epsilons", "0", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_sweep_csv(out.join("sweep.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].epsilon, 0.0);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn descending_epsilons_are_rejected() {
    let f = fixture();
    let o = natadv(&[
        "sweep", "--checkpoint", s(&f.ckpt), "--data", s(&f.data), "--epsilons", "0.5,0.1", "--out",
        s(&f.root.join("bad")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mismatched_vocabulary_exits_two() {
    let f = fixture();
    let other = f.root.join("data_small_vocab");
    let o = natadv(&["prepare", s(&f.root.join("small.csv")), "--out", s(&other), "--vocab-limit", "20"]);
    assert!(o.status.success());
    let o = natadv(&[
        "attack", "--checkpoint", s(&f.ckpt), "--data", s(&other), "--out", s(&f.root.join("x.tsv")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

fn record(index: usize, label: Label, original: &str, adversarial: &str) -> AttackRecord {
    AttackRecord {
        index,
        method: AttackMethod::Fgsm,
        epsilon: 0.5,
        substitutions: 0,
        label,
        target: label.flipped(),
        pred_before: label,
        pred_after: Some(label.flipped()),
        prob_before: 0.5,
        prob_after: Some(0.5),
        success: true,
        original: original.into(),
        adversarial: adversarial.into(),
    }
}

#[test]
fn blackbox_with_marker_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let recs: Vec<AttackRecord> = support::flip_fixture()
        .iter()
        .enumerate()
        .map(|(i, it)| record(i, it.label, &it.original, &it.adversarial))
        .collect();
    let path = dir.path().join("records.tsv");
    write_records(&path, &recs).unwrap();
    let report = dir.path().join("bb.json");
    let o = natadv(&["blackbox", s(&path), "--mock", "flip_on_marker", "--out", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let field = |k: &str| v[k].as_f64().unwrap();
    for k in ["accuracy_original", "accuracy_adversarial", "abs_error_original", "abs_error_adversarial"] {
        assert!((0.0..=1.0).contains(&field(k)), "{k}");
    }
    assert!(field("accuracy_adversarial") < field("accuracy_original"));
    assert!(dir.path().join("bb.json.manifest.json").exists());
}

#[test]
fn empty_records_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.tsv");
    write_records(&path, &[]).unwrap();
    let o = natadv(&["blackbox", s(&path), "--mock", "keyword_lexicon"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unreachable_endpoint_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.tsv");
    write_records(&path, &[record(0, Label::Positive, "good", "bad")]).unwrap();
    // Bind and drop a listener to find a port nothing serves.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let o = natadv(&["blackbox", s(&path), "--endpoint", &url, "--max-retries", "1", "--backoff-ms", "5"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("n_failures"));
}
