use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use bisift::{read_corpus, BilingualLabel, Document};
use serde_json::Value;

fn bisift(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bisift"))
        .current_dir(dir)
        .args(args)
        .env_remove("BISIFT_JUDGE_ENDPOINT")
        .env_remove("BISIFT_JUDGE_API_KEY")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = bisift(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn docs(path: &Path) -> Vec<Document> {
    read_corpus(&[path]).map(|d| d.unwrap()).collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, documents: &str, seed: &str) {
    ok(
        dir,
        &[
            "synth",
            "--pair",
            "en-fr",
            "-o",
            "corpus.jsonl",
            "--documents",
            documents,
            "--seed",
            seed,
            "-q",
        ],
    );
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["--help"][..], &["detect", "--help"], &["split", "--help"]] {
        let out = bisift(dir.path(), args);
        assert_eq!(out.status.code(), Some(0));
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "20", "1");
    let cases: &[&[&str]] = &[
        &["detect"],
        &["detect", "-i", "corpus.jsonl", "-o", "out.jsonl", "-q"],
        &[
            "detect",
            "--pair",
            "en-en",
            "-i",
            "corpus.jsonl",
            "-o",
            "out.jsonl",
            "-q",
        ],
        &[
            "detect",
            "--pair",
            "en-fr",
            "-i",
            "missing.jsonl",
            "-o",
            "out.jsonl",
            "-q",
        ],
        &[
            "detect",
            "--pair",
            "en-fr",
            "-i",
            "corpus.jsonl",
            "-o",
            "out.jsonl",
            "--tau",
            "-1",
            "-q",
        ],
        &[
            "detect",
            "--pair",
            "en-fr",
            "-i",
            "corpus.jsonl",
            "-o",
            "out.jsonl",
            "--workers",
            "0",
            "-q",
        ],
        &[
            "classify",
            "--pair",
            "en-fr",
            "-i",
            "corpus.jsonl",
            "-o",
            "out.jsonl",
            "--mode",
            "remote",
            "-q",
        ],
    ];
    for args in cases {
        assert_eq!(bisift(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn missing_model_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "20", "1");
    let out = bisift(
        dir.path(),
        &[
            "detect",
            "--pair",
            "en-fr",
            "-i",
            "corpus.jsonl",
            "-o",
            "out.jsonl",
            "--model",
            "nope.model",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.model"));
    assert!(!dir.path().join("out.jsonl").exists());
}

#[test]
fn exported_model_loads_and_matches_the_bundled_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "300", "5");
    ok(d, &["export-model", "-o", "langid.model", "-q"]);
    ok(
        d,
        &["detect", "--pair", "en-fr", "-i", "corpus.jsonl", "-o", "a.jsonl", "-q"],
    );
    ok(
        d,
        &[
            "detect",
            "--pair",
            "en-fr",
            "-i",
            "corpus.jsonl",
            "-o",
            "b.jsonl",
            "--model",
            "langid.model",
            "-q",
        ],
    );
    assert_eq!(docs(&d.join("a.jsonl")), docs(&d.join("b.jsonl")));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "200", "2");
    std::fs::write(
        d.join("bisift.toml"),
        "pair = \"en-fr\"\nformat = \"machine\"\n\n[filter]\ntau = 0.3\n",
    )
    .unwrap();
    let from_file = ok(
        d,
        &[
            "--config",
            "bisift.toml",
            "detect",
            "-i",
            "corpus.jsonl",
            "-o",
            "a.jsonl",
            "-q",
        ],
    );
    let report: Value = serde_json::from_slice(&from_file.stdout).unwrap();
    assert!(report["stage1"]["documents"].as_u64() == Some(200));
    assert_eq!(json(&d.join("a.jsonl.run.json"))["config"]["filter"]["tau"], 0.3);

    ok(
        d,
        &[
            "--config",
            "bisift.toml",
            "detect",
            "-i",
            "corpus.jsonl",
            "-o",
            "b.jsonl",
            "--tau",
            "0.05",
            "--format",
            "human",
            "-q",
        ],
    );
    assert_eq!(json(&d.join("b.jsonl.run.json"))["config"]["filter"]["tau"], 0.05);

    std::fs::write(d.join("bad.toml"), "pair = \"en-fr\"\nsurprise = 1\n").unwrap();
    let out = bisift(
        d,
        &["--config", "bad.toml", "detect", "-i", "corpus.jsonl", "-o", "c.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));
}

fn candidate_ids(path: &Path) -> BTreeSet<String> {
    docs(path)
        .into_iter()
        .filter(|d| d.label() == Some(BilingualLabel::Candidate))
        .map(|d| d.doc_id)
        .collect()
}

#[test]
fn candidates_are_nested_across_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "1500", "11");
    let mut sets = Vec::new();
    for tau in ["0.05", "0.1", "0.2"] {
        let out = format!("tau-{tau}.jsonl");
        ok(
            d,
            &[
                "detect",
                "--pair",
                "en-fr",
                "-i",
                "corpus.jsonl",
                "-o",
                &out,
                "--tau",
                tau,
                "-q",
            ],
        );
        sets.push(candidate_ids(&d.join(out)));
    }
    assert!(sets[1].is_subset(&sets[0]));
    assert!(sets[2].is_subset(&sets[1]));
    assert!(!sets[2].is_empty());
}

#[test]
fn zero_bilingual_rate_gives_a_monolingual_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "synth",
            "--pair",
            "en-de",
            "-o",
            "mono.jsonl",
            "--documents",
            "400",
            "--bilingual-rate",
            "0",
            "--out-of-pair-rate",
            "0",
            "-q",
        ],
    );
    let planted = docs(&d.join("mono.jsonl"));
    assert_eq!(planted.len(), 400);
    assert!(planted
        .iter()
        .all(|doc| bisift::synth::planted_label(doc) == Some(BilingualLabel::Monolingual)));
    ok(
        d,
        &["detect", "--pair", "en-de", "-i", "mono.jsonl", "-o", "s1.jsonl", "-q"],
    );
    ok(
        d,
        &["classify", "--pair", "en-de", "-i", "s1.jsonl", "-o", "s2.jsonl", "-q"],
    );
    let report = json(&d.join("s2.jsonl.run.json"));
    let s2 = &report["summary"]["stage2"];
    assert_eq!(s2["parallel"].as_u64(), Some(0));
    assert_eq!(s2["code_switching"].as_u64(), Some(0));
    assert_eq!(s2["miscellaneous"].as_u64(), Some(0));
}

#[test]
fn malformed_lines_are_skipped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "30", "3");
    let mut text = std::fs::read_to_string(d.join("corpus.jsonl")).unwrap();
    text.push_str("{not json\n{\"id\": \"no-text\"}\n");
    std::fs::write(d.join("dirty.jsonl"), text).unwrap();
    let out = ok(
        d,
        &[
            "detect",
            "--pair",
            "en-fr",
            "-i",
            "dirty.jsonl",
            "-o",
            "s1.jsonl",
            "--format",
            "machine",
            "-q",
        ],
    );
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["skipped_records"].as_u64(), Some(2));
    assert_eq!(summary["stage1"]["documents"].as_u64(), Some(30));
}

#[test]
fn directories_expand_to_their_shards() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("shards")).unwrap();
    ok(
        d,
        &[
            "synth",
            "--pair",
            "en-fr",
            "-o",
            "shards/a.jsonl",
            "--documents",
            "40",
            "--seed",
            "1",
            "-q",
        ],
    );
    ok(
        d,
        &[
            "synth",
            "--pair",
            "en-fr",
            "-o",
            "shards/b.jsonl.gz",
            "--documents",
            "40",
            "--seed",
            "2",
            "-q",
        ],
    );
    std::fs::write(d.join("shards/notes.txt"), "ignored").unwrap();
    let out = ok(
        d,
        &[
            "detect",
            "--pair",
            "en-fr",
            "-i",
            "shards",
            "-o",
            "all.jsonl",
            "--format",
            "machine",
            "-q",
        ],
    );
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["stage1"]["documents"].as_u64(), Some(80));
    let report = json(&d.join("all.jsonl.run.json"));
    assert_eq!(report["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn split_needs_classified_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "50", "4");
    let out = bisift(d, &["split", "-i", "corpus.jsonl", "-o", "splits", "-q"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no final label"));
}

#[test]
fn split_writes_four_files_and_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "500", "4");
    ok(
        d,
        &[
            "detect",
            "--pair",
            "en-fr",
            "-i",
            "corpus.jsonl",
            "-o",
            "s1.jsonl",
            "-q",
        ],
    );
    ok(
        d,
        &["classify", "--pair", "en-fr", "-i", "s1.jsonl", "-o", "s2.jsonl", "-q"],
    );
    ok(
        d,
        &[
            "split",
            "-i",
            "s2.jsonl",
            "-o",
            "splits",
            "--gzip",
            "--strip-annotations",
            "-q",
        ],
    );
    let report = json(&d.join("splits/run.json"));
    assert_eq!(report["summary"]["algebra"]["passed"], true);
    for name in ["fineweb", "monoweb", "monoweb_parallel", "monoweb_codeswitch"] {
        let split = docs(&d.join(format!("splits/{name}.jsonl.gz")));
        assert_eq!(
            split.len() as u64,
            report["summary"]["splits"][name]["doc_count"].as_u64().unwrap(),
            "{name}"
        );
        assert!(split.iter().all(|doc| doc.annotations.is_none()));
    }
}

#[test]
fn progress_goes_to_stderr_and_quiet_silences_it() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let loud = ok(d, &["synth", "--pair", "en-fr", "-o", "a.jsonl", "--documents", "10"]);
    assert!(!loud.stderr.is_empty());
    let quiet = ok(
        d,
        &["synth", "--pair", "en-fr", "-o", "b.jsonl", "--documents", "10", "-q"],
    );
    assert!(quiet.stderr.is_empty());
    assert_eq!(loud.stdout, quiet.stdout);
}

#[test]
fn align_reads_embedding_files() {
    use bisift::align::{EmbeddingMatrix, Granularity};
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let rows: Vec<Vec<f64>> = (0..5)
        .map(|i| (0..4).map(|j| if i % 4 == j { 1.0 } else { 0.1 * i as f64 }).collect())
        .collect();
    let m = EmbeddingMatrix::from_rows(&rows, 0, Granularity::Sentence).unwrap();
    m.save(d.join("src.emb"), false).unwrap();
    m.save(d.join("tgt.emb"), true).unwrap();
    let out = ok(
        d,
        &[
            "align", "--src", "src.emb", "--tgt", "tgt.emb", "--format", "machine", "-q",
        ],
    );
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["alignment"]["layers"][0]["mean"], 1.0);
}
