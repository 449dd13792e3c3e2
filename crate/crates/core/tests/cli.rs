use std::path::Path;
use std::process::{Command, Output};

use semhier::hierarchy::build_hierarchy;
use semhier::io;
use semhier::vectors::{compute_centroids, fuse_modalities, ConceptCentroidSet, EmbeddingSnapshot, EmbeddingVector};

fn semhier(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semhier")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = semhier(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_synth(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "synth", "--classes", "10", "--depth", "4", "--dim", "16", "--samples", "20", "--test-samples", "20", "--out",
    ];
    args.push(p(dir));
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    small_synth(&a, &["--seed", "4"]);
    small_synth(&b, &["--seed", "4"]);
    small_synth(&c, &["--seed", "5"]);
    for f in ["train.hlem", "test.hlem", "truth.json", "ontology.tsv", "grounding.tsv", "bank.hlem", "bank.tsv", "run.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(
        std::fs::read(a.join("train.hlem")).unwrap(),
        std::fs::read(c.join("train.hlem")).unwrap()
    );
}

#[test]
fn sixteen_classes_depth_four() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--classes", "16", "--depth", "4", "--dim", "8", "--samples", "5", "--out", p(tmp.path())]);
    let truth = io::read_tree(&tmp.path().join("truth.json")).unwrap();
    assert_eq!(truth.leaves().count(), 16);
    assert!(truth.leaves().all(|l| truth.depth(l) == 4));
}

#[test]
fn extract_names_every_internal_node() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let e = tmp.path().join("e");
    small_synth(&d, &[]);
    let out = ok(&[
        "extract",
        "--snapshot",
        p(&d.join("train.hlem")),
        "--bank",
        p(&d.join("bank.hlem")),
        "--dot",
        "--out",
        p(&e),
    ]);
    assert!(out.contains("leaves: 10"), "{out}");
    assert!(out.contains("internal nodes: 9"), "{out}");
    let tree = io::read_tree(&e.join("tree.json")).unwrap();
    assert_eq!(tree.internal_nodes().filter(|&n| tree.name(n).is_some()).count(), 9);
    assert!(std::fs::read_to_string(e.join("tree.dot")).unwrap().starts_with("digraph"));
}

#[test]
fn small_bank_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    small_synth(&d, &[]);
    let mut bank = EmbeddingSnapshot::new(16, "bank").unwrap();
    for (i, name) in ["x", "y", "z"].iter().enumerate() {
        let mut v = vec![0.1; 16];
        v[i] = 1.0;
        bank.push(*name, EmbeddingVector::new(v).unwrap()).unwrap();
    }
    let bank_path = tmp.path().join("small.hlem");
    io::write_snapshot(&bank, &bank_path).unwrap();
    let out = semhier(&[
        "extract",
        "--snapshot",
        p(&d.join("train.hlem")),
        "--bank",
        p(&bank_path),
        "--out",
        p(&tmp.path().join("e")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bank too small"));
}

#[test]
fn modality_fuse_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, e) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("e"));
    small_synth(&a, &["--seed", "1"]);
    small_synth(&b, &["--seed", "2"]);
    ok(&[
        "extract",
        "--snapshot",
        p(&a.join("train.hlem")),
        "--modality-fuse",
        p(&b.join("train.hlem")),
        "--out",
        p(&e),
    ]);
    let ca = compute_centroids(&io::read_snapshot(&a.join("train.hlem")).unwrap()).unwrap();
    let cb = compute_centroids(&io::read_snapshot(&b.join("train.hlem")).unwrap()).unwrap();
    let fused: ConceptCentroidSet = fuse_modalities(&ca, &cb).unwrap();
    let want = build_hierarchy(&fused).unwrap().into_document();
    assert_eq!(io::read_tree(&e.join("tree.json")).unwrap(), want);
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 3, "synth": {"classes": 8, "depth": 3, "dim": 8, "samples": 4}}"#).unwrap();
    let out = tmp.path().join("o");
    ok(&["synth", "--config", p(&cfg), "--dim", "5", "--out", p(&out)]);
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 3);
    assert_eq!(run["params"]["classes"], 8);
    assert_eq!(run["params"]["dim"], 5);
    assert_eq!(run["params"]["seed"], 3);
    assert_eq!(io::read_snapshot(&out.join("train.hlem")).unwrap().dim(), 5);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = p(tmp.path());
    // unknown subcommand and unknown config key
    assert_eq!(semhier(&["frobnicate"]).status.code(), Some(2));
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"synth": {"clases": 8}}"#).unwrap();
    assert_eq!(semhier(&["synth", "--config", p(&cfg), "--out", o]).status.code(), Some(2));
    std::fs::write(&cfg, "{not json").unwrap();
    assert_eq!(semhier(&["synth", "--config", p(&cfg), "--out", o]).status.code(), Some(2));
    // missing required input, bad parameter
    assert_eq!(semhier(&["extract", "--out", o]).status.code(), Some(2));
    assert_eq!(semhier(&["synth", "--classes", "3", "--depth", "4", "--out", o]).status.code(), Some(2));
    assert_eq!(semhier(&["baseline", "--threads", "0", "--out", o]).status.code(), Some(2));
    // unreadable input is a runtime error
    let missing = tmp.path().join("missing.hlem");
    assert_eq!(semhier(&["extract", "--snapshot", p(&missing), "--out", o]).status.code(), Some(1));
}

#[test]
fn infer_without_early_stopping() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, e, o) = (tmp.path().join("d"), tmp.path().join("e"), tmp.path().join("o"));
    small_synth(&d, &[]);
    ok(&["extract", "--snapshot", p(&d.join("train.hlem")), "--out", p(&e)]);
    ok(&[
        "infer",
        "--tree",
        p(&e.join("tree.json")),
        "--test",
        p(&d.join("test.hlem")),
        "--train",
        p(&d.join("train.hlem")),
        "--quantile",
        "0",
        "--ontology",
        p(&d.join("ontology.tsv")),
        "--grounding",
        p(&d.join("grounding.tsv")),
        "--out",
        p(&o),
    ]);
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(o.join("faithfulness.json")).unwrap()).unwrap();
    for k in [
        "zero_shot_acc",
        "tree_acc",
        "soft_tree_acc",
        "faithfulness",
        "lcn_dist_vanilla",
        "lcn_dist_early",
        "onto_dist_vanilla",
        "onto_dist_early",
    ] {
        assert!(r.get(k).is_some(), "{k}");
    }
    assert_eq!(r["lcn_dist_vanilla"], r["lcn_dist_early"]);
    assert_eq!(r["onto_dist_vanilla"], r["onto_dist_early"]);
}

#[test]
fn verify_and_compare_extracted_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, e, o) = (tmp.path().join("d"), tmp.path().join("e"), tmp.path().join("o"));
    small_synth(&d, &[]);
    ok(&[
        "extract",
        "--snapshot",
        p(&d.join("train.hlem")),
        "--bank",
        p(&d.join("bank.hlem")),
        "--out",
        p(&e),
    ]);
    let out = ok(&[
        "verify",
        "--tree",
        p(&e.join("tree.json")),
        "--ontology",
        p(&d.join("ontology.tsv")),
        "--grounding",
        p(&d.join("grounding.tsv")),
        "--bank-names",
        p(&d.join("bank.tsv")),
        "--out",
        p(&o),
    ]);
    assert!(out.contains("hierarchical consistency 1.0000"), "{out}");
    assert!(out.contains("cluster consistency 1.0000"), "{out}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(o.join("consistency.json")).unwrap()).unwrap();
    assert_eq!(report["edges"].as_array().unwrap().len(), 18);

    let n = ok(&["compare", p(&e.join("tree.json")), p(&d.join("truth.json")), "--out", p(&o)]);
    assert_eq!(n.trim(), "0");
}

#[test]
fn baseline_on_two_leaves_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&["baseline", "--leaves", "2", "--runs", "5", "--out", p(tmp.path())]);
    assert!(out.starts_with("mean 0.000000"), "{out}");
}

#[test]
fn align_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, o) = (tmp.path().join("d"), tmp.path().join("o"));
    ok(&[
        "synth", "--classes", "4", "--depth", "2", "--dim", "8", "--samples", "30", "--test-samples", "10",
        "--noise", "0.3", "--branch-ratio", "1", "--out", p(&d),
    ]);
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"align": {"spec": {"layout_epochs": 20, "regressor": {"epochs": 5}}}}"#,
    )
    .unwrap();
    ok(&[
        "align",
        "--config",
        p(&cfg),
        "--train",
        p(&d.join("train.hlem")),
        "--test",
        p(&d.join("test.hlem")),
        "--task",
        "commitment",
        "--ontology",
        p(&d.join("ontology.tsv")),
        "--grounding",
        p(&d.join("grounding.tsv")),
        "--n-neighbors",
        "10",
        "--out",
        p(&o),
    ]);
    for f in ["model.json", "train_aligned.hlem", "test_aligned.hlem", "target.json", "metrics.json", "run.json"] {
        assert!(o.join(f).is_file(), "{f}");
    }
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["params"]["spec"]["layout_epochs"], 20);
    assert_eq!(run["params"]["spec"]["n_neighbors"], 10);
    assert_eq!(run["params"]["spec"]["alpha_orig"], 2.0);
    let aligned = io::read_snapshot(&o.join("test_aligned.hlem")).unwrap();
    assert_eq!(aligned.len(), 40);

    // swapping two siblings is rejected as a usage error
    let out = semhier(&[
        "align",
        "--train",
        p(&d.join("train.hlem")),
        "--test",
        p(&d.join("test.hlem")),
        "--swap",
        "c00,c01",
        "--n-neighbors",
        "10",
        "--out",
        p(&o),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
