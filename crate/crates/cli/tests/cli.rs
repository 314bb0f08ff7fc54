use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use foe_cli::{run_manifest, CliError, ExperimentManifest};
use serde_json::Value;

fn foe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_foe"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map(|it| {
            it.map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    names.sort();
    names
}

fn small_manifest(strategies: &str) -> String {
    format!(
        r#"{{
  "name": "small",
  "seed": 4,
  "output_dir": "out",
  "dataset": {{"synth": {{"config": {{
    "num_domains": 3, "num_classes": 4,
    "mixture_weights": [0.5, 0.25, 0.25],
    "in_domain_accuracy": 0.9, "off_domain_accuracy": 0.4,
    "confusion_temperature": 0.25,
    "samples_per_split": {{"train": 0, "validation": 0, "test": 100}}
  }}}}}},
  "strategies": {strategies}
}}"#
    )
}

#[test]
fn oracle_and_ensemble_manifest_writes_two_reports_and_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = ExperimentManifest::parse(
        &small_manifest(r#"[{"kind": "oracle"}, {"kind": "ensemble"}]"#),
        None,
    )
    .unwrap();
    let artifacts = run_manifest(&manifest, dir.path(), None).unwrap();
    let out = dir.path().join("out");
    assert_eq!(listing(&out), ["comparison.tsv", "ensemble.json", "oracle.json"]);
    assert_eq!(
        artifacts.reports,
        [out.join("oracle.json"), out.join("ensemble.json")]
    );

    let oracle = read_json(&out.join("oracle.json"));
    assert_eq!(oracle["spec_version"], "1.0");
    assert_eq!(oracle["report"]["records"], 100);
    assert_eq!(oracle["report"]["expert_selection_accuracy"], 1.0);
    assert_eq!(oracle["dataset"]["synth"]["config"]["seed"], 4);
    assert_eq!(oracle["strategy"]["kind"], "oracle");

    let table = std::fs::read_to_string(&artifacts.comparison).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("strategy\tkind\tlambda\trecords\taccuracy"));
    assert!(lines[1].starts_with("oracle\toracle\t-\t100\t"));
    assert!(lines[2].starts_with("ensemble\tensemble\t-\t100\t"));
}

#[test]
fn manifest_runs_are_byte_identical() {
    let strategies = r#"[
        {"kind": "ensemble"},
        {"kind": "frugal", "settings": {"m_neighbors": 5, "kappa": 3, "lambdas": [0.0, 0.5]}},
        {"kind": "mlp", "train": {"hidden": [8], "epochs": 2}}
    ]"#;
    let text = small_manifest(strategies).replace(
        r#""train": 0, "validation": 0"#,
        r#""train": 60, "validation": 40"#,
    );
    let manifest = ExperimentManifest::parse(&text, None).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_manifest(&manifest, a.path(), None).unwrap();
    run_manifest(&manifest, b.path(), None).unwrap();
    assert_eq!(listing(&a.path().join("out")), listing(&b.path().join("out")));
    for name in listing(&a.path().join("out")) {
        let x = std::fs::read(a.path().join("out").join(&name)).unwrap();
        let y = std::fs::read(b.path().join("out").join(&name)).unwrap();
        assert_eq!(x, y, "{name} differs between runs");
    }
    assert_eq!(first.frontiers.len(), 1);
    let frontier = std::fs::read_to_string(&first.frontiers[0]).unwrap();
    assert_eq!(frontier.lines().count(), 3);
    // the global seed reaches training configs that do not set their own
    let mlp = read_json(&a.path().join("out/mlp.json"));
    assert_eq!(mlp["strategy"]["train"]["seed"], 4);
}

#[test]
fn seed_override_changes_generated_data() {
    let text = small_manifest(r#"[{"kind": "ensemble"}]"#);
    let manifest = ExperimentManifest::parse(&text, Some(99)).unwrap();
    assert_eq!(manifest.seed, 99);
    let echoed = serde_json::to_value(&manifest.dataset).unwrap();
    assert_eq!(echoed["synth"]["config"]["seed"], 99);
}

#[test]
fn unknown_strategy_exits_with_its_code_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_manifest(r#"[{"kind": "oracle"}, {"kind": "magic"}]"#);
    let err = ExperimentManifest::parse(&text, None).unwrap_err();
    assert!(matches!(err, CliError::UnknownStrategy(ref s) if s == "magic"));

    let path = dir.path().join("bad.manifest");
    std::fs::write(&path, text).unwrap();
    let out = foe(&["run", "bad.manifest"], dir.path());
    assert_eq!(out.status.code(), Some(30));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.starts_with("error[UnknownStrategy]: "), "{stderr}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn failing_strategy_leaves_no_partial_reports() {
    let dir = tempfile::tempdir().unwrap();
    // knn needs neighbors, and this dataset's validation split is empty
    let text = small_manifest(r#"[{"kind": "oracle"}, {"kind": "knn"}]"#);
    let manifest = ExperimentManifest::parse(&text, None).unwrap();
    let err = run_manifest(&manifest, dir.path(), None).unwrap_err();
    assert_eq!(err.code(), "InsufficientNeighbors");
    assert!(listing(&dir.path().join("out")).is_empty());
}

#[test]
fn invalid_manifests_are_rejected() {
    let repeated = small_manifest(r#"[{"kind": "oracle"}, {"kind": "oracle"}]"#);
    assert_eq!(
        ExperimentManifest::parse(&repeated, None).unwrap_err().code(),
        "InvalidManifest"
    );
    let typo = small_manifest(r#"[{"kind": "knn", "kapa": 3}]"#);
    assert_eq!(
        ExperimentManifest::parse(&typo, None).unwrap_err().code(),
        "InvalidManifest"
    );
    assert_eq!(
        ExperimentManifest::parse("[1, 2]", None).unwrap_err().code(),
        "InvalidManifest"
    );
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn shipped_k10_manifest_reproduces_frozen_table() {
    let experiments = workspace_root().join("experiments");
    let manifest = ExperimentManifest::load(&experiments.join("k10-mixture.manifest"), None).unwrap();
    let reference = serde_json::to_value(foe::presets::k10_mixture()).unwrap();
    assert_eq!(
        serde_json::to_value(&manifest.dataset).unwrap()["synth"]["config"],
        reference
    );

    let dir = tempfile::tempdir().unwrap();
    let artifacts = run_manifest(&manifest, &experiments, Some(dir.path())).unwrap();
    let produced = std::fs::read_to_string(&artifacts.comparison).unwrap();
    let frozen = std::fs::read_to_string(experiments.join("k10-mixture.expected.tsv")).unwrap();
    assert_eq!(produced, frozen);
}

#[test]
fn subcommands_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth = foe(
        &[
            "synth",
            "--num-domains",
            "3",
            "--num-classes",
            "4",
            "--samples-per-split",
            "120,80,60",
            "--in-domain-accuracy",
            "0.95",
            "--error-mode",
            "independent",
            "--out-dir",
            "data",
            "--seed",
            "8",
        ],
        d,
    );
    assert!(
        synth.status.success(),
        "{}",
        String::from_utf8_lossy(&synth.stderr)
    );
    assert_eq!(
        listing(&d.join("data")),
        ["synth.json", "test.jsonl", "train.jsonl", "validation.jsonl"]
    );
    let synth_doc = read_json(&d.join("data/synth.json"));
    assert_eq!(synth_doc["config"]["seed"], 8);
    assert_eq!(synth_doc["config"]["error_mode"], "independent");

    let train = foe(
        &[
            "train-fuser",
            "--train",
            "data/train.jsonl",
            "--subset",
            "0,2",
            "--hidden",
            "8",
            "--epochs",
            "3",
            "--out",
            "f.json",
            "--seed",
            "1",
        ],
        d,
    );
    assert!(
        train.status.success(),
        "{}",
        String::from_utf8_lossy(&train.stderr)
    );
    let train_doc: Value = serde_json::from_slice(&train.stdout).unwrap();
    assert_eq!(train_doc["config"]["training"]["seed"], 1);

    for strategy in ["mlp", "knn", "ensemble", "confidence", "oracle"] {
        let out = foe(
            &[
                "eval",
                "--test",
                "data/test.jsonl",
                "--strategy",
                strategy,
                "--fuser",
                "f.json",
                "--validation",
                "data/validation.jsonl",
                "--kappa",
                "3",
                "--out",
                "report.json",
            ],
            d,
        );
        assert!(
            out.status.success(),
            "{strategy}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let doc = read_json(&d.join("report.json"));
        assert_eq!(doc["spec_version"], "1.0");
        assert_eq!(doc["config"]["strategy"], strategy);
        assert_eq!(doc["report"]["records"], 60);
    }

    let frugal = foe(
        &[
            "frugal",
            "--validation",
            "data/validation.jsonl",
            "--test",
            "data/test.jsonl",
            "--lambda",
            "0,0.5",
            "--m-neighbors",
            "7",
            "--kappa",
            "3",
            "--costs",
            "0.01,0.02,0.03",
            "--max-queries",
            "2",
            "--stop-on-zero",
            "--out",
            "frugal.json",
            "--frontier",
            "frontier.tsv",
        ],
        d,
    );
    assert!(
        frugal.status.success(),
        "{}",
        String::from_utf8_lossy(&frugal.stderr)
    );
    let doc = read_json(&d.join("frugal.json"));
    assert_eq!(
        doc["config"]["settings"]["costs"],
        serde_json::json!([0.01, 0.02, 0.03])
    );
    assert_eq!(doc["reports"].as_array().unwrap().len(), 2);
    assert!(doc["reports"][0]["mean_experts_queried"].as_f64().unwrap() <= 2.0);
    let frontier = std::fs::read_to_string(d.join("frontier.tsv")).unwrap();
    assert_eq!(frontier.lines().next(), Some("lambda\tmean_queried\taccuracy"));
    assert_eq!(frontier.lines().count(), 3);

    let text = foe(
        &[
            "--seed",
            "2",
            "analyze",
            "--validation",
            "data/validation.jsonl",
            "--fano",
        ],
        d,
    );
    assert!(text.status.success());
    let keys: Vec<String> = String::from_utf8(text.stdout)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect();
    assert_eq!(keys, ["H", "I", "K", "bound"]);
    let json = foe(
        &[
            "analyze",
            "--validation",
            "data/validation.jsonl",
            "--fano",
            "--json",
        ],
        d,
    );
    let doc: Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(doc["fano"]["num_experts"], 3);
    assert!(doc["fano"]["bound"].as_f64().unwrap() >= 0.0);
}

#[test]
fn failures_print_one_coded_line_and_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    let bad = fixtures.join("bad_sum.jsonl");
    let cases: [(Vec<&str>, i32, &str); 3] = [
        (
            vec!["eval", "--test", bad.to_str().unwrap(), "--strategy", "oracle"],
            10,
            "MalformedRecord",
        ),
        (
            vec!["eval", "--test", "absent.jsonl", "--strategy", "ensemble"],
            13,
            "IoFailure",
        ),
        (
            vec!["synth", "--num-domains", "2", "--out-dir", "x"],
            14,
            "InvalidConfig",
        ),
    ];
    for (args, code, name) in cases {
        let out = foe(&args, dir.path());
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        let stderr = String::from_utf8(out.stderr).unwrap();
        assert_eq!(stderr.lines().count(), 1, "{stderr}");
        assert!(stderr.starts_with(&format!("error[{name}]: ")), "{stderr}");
    }
    assert!(!dir.path().join("x").exists());

    let conflict = foe(
        &[
            "frugal",
            "--validation",
            "v",
            "--test",
            "t",
            "--cost",
            "0.1",
            "--costs",
            "0.1,0.2",
        ],
        dir.path(),
    );
    assert_eq!(conflict.status.code(), Some(2));
}
