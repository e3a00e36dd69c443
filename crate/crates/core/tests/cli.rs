use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use metasynth::fixture::{bundled_fixture, fixture_settings, to_jsonl};
use metasynth::{ErrorCode, ExemplarLibrary, HashingEmbedder, SimulatedCorpusDoc};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metasynth"))
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixture")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bundled_fixture_matches_generator() {
    let dir = fixture_dir();
    let fx = bundled_fixture();
    let read = |f: &str| std::fs::read_to_string(dir.join(f)).unwrap();
    assert_eq!(read("pages.jsonl"), to_jsonl(&fx.pages));
    assert_eq!(read("corpus.jsonl"), to_jsonl(&fx.corpus));
    assert_eq!(read("seeds.txt"), fx.seeds.join("\n") + "\n");
    assert_eq!(read("config.json"), fixture_settings().to_json() + "\n");
}

fn build_fixture_library(tmp: &Path) -> PathBuf {
    let lib = tmp.join("lib.jsonl");
    let dir = fixture_dir();
    let o = run(&[
        "build-library",
        "--seeds",
        s(&dir.join("seeds.txt")),
        "--config",
        s(&dir.join("config.json")),
        "--out",
        s(&lib),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("fetched "), "{}", stdout(&o));
    lib
}

fn generate(lib: &Path, out: &Path, freeze: bool) -> Output {
    let dir = fixture_dir();
    let (pages, config) = (dir.join("pages.jsonl"), dir.join("config.json"));
    let mut args = vec![
        "generate",
        "--page",
        s(&pages),
        "--library",
        s(lib),
        "--config",
        s(&config),
        "--out",
        s(out),
    ];
    if freeze {
        args.push("--freeze-library");
    }
    run(&args)
}

#[test]
fn generate_over_bundled_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = build_fixture_library(tmp.path());

    let o = generate(&lib, &tmp.path().join("out"), false);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut files: Vec<_> = std::fs::read_dir(tmp.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert_eq!(files.len(), 10);
    let mut accepted = 0;
    for f in &files {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(f).unwrap()).unwrap();
        for key in ["snippet", "stop_reason", "iterations", "queries_used"] {
            assert!(v.get(key).is_some(), "{key} missing in {}", f.display());
        }
        assert!(v["snippet"]["title"].is_string());
        if v["stop_reason"] == "accepted" {
            accepted += 1;
        }
    }
    assert!(accepted >= 9, "accepted {accepted}");
}

#[test]
fn frozen_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = build_fixture_library(tmp.path());
    let before = std::fs::read(&lib).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(generate(&lib, &a, true).status.success());
    assert!(generate(&lib, &b, true).status.success());
    assert_eq!(std::fs::read(&lib).unwrap(), before, "frozen library was rewritten");
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn write_back_when_library_grows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = fixture_dir();
    // A library from one seed query leaves most pages to expansion.
    std::fs::write(tmp.path().join("seeds.txt"), "# one seed\nbuy mug online\n").unwrap();
    let lib = tmp.path().join("lib.jsonl");
    let o = run(&[
        "build-library",
        "--seeds",
        s(&tmp.path().join("seeds.txt")),
        "--config",
        s(&dir.join("config.json")),
        "--out",
        s(&lib),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let embedder = std::sync::Arc::new(HashingEmbedder::default());
    let before = ExemplarLibrary::load(&lib, embedder.clone()).unwrap();
    let o = generate(&lib, &tmp.path().join("out"), false);
    assert!(o.status.success(), "{}", stderr(&o));
    let after = ExemplarLibrary::load(&lib, embedder).unwrap();
    assert!(after.query_count() > before.query_count());
    assert!(after.len() >= before.len());
}

#[test]
fn missing_library_has_its_own_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = generate(&tmp.path().join("absent.jsonl"), &tmp.path().join("out"), false);
    assert_eq!(o.status.code(), Some(ErrorCode::LibraryNotFound.exit_code()));
    let err = stderr(&o);
    assert!(err.trim_end().lines().last().unwrap().starts_with("error[LIBRARY_NOT_FOUND]:"), "{err}");
}

#[test]
fn build_library_on_small_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let mut docs: Vec<SimulatedCorpusDoc> = (0..9)
        .map(|i| SimulatedCorpusDoc {
            url: format!("https://shop.example/{i}"),
            title: format!("{} {}", ["Oak", "Pine", "Teak"][i % 3], ["desk", "shelf", "stool"][i / 3]),
            description: format!("{} finish, item {i}", ["matte", "gloss", "raw"][i % 3]),
            popularity: i as f64,
        })
        .collect();
    // Three mirror listings repeat existing snippets verbatim.
    for i in 0..3 {
        let mut d = docs[i * 3].clone();
        d.url = format!("https://mirror.example/{i}");
        docs.push(d);
    }
    assert_eq!(docs.len(), 12);
    std::fs::write(tmp.path().join("corpus.jsonl"), to_jsonl(&docs)).unwrap();
    std::fs::write(tmp.path().join("seeds.txt"), "oak desk\npine shelf\nteak stool\n").unwrap();
    std::fs::write(tmp.path().join("config.json"), r#"{"k_lib": 4}"#).unwrap();
    let o = run(&[
        "build-library",
        "--seeds",
        s(&tmp.path().join("seeds.txt")),
        "--config",
        s(&tmp.path().join("config.json")),
        "--out",
        s(&tmp.path().join("lib.jsonl")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let field = |name: &str| -> usize {
        let words: Vec<&str> = out.split_whitespace().collect();
        let i = words.iter().position(|w| *w == name).unwrap();
        words[i + 1].parse().unwrap()
    };
    assert_eq!(field("fetched"), 12);
    assert!(field("stored") <= 12);
    assert_eq!(field("stored") + field("deduped"), 12);
    assert!(field("deduped") > 0, "{out}");
}

#[test]
fn config_show_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.json");
    std::fs::write(&path, "{}").unwrap();
    let o = run(&["config", "show", "--config", s(&path)]);
    assert!(o.status.success());
    let shown: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(shown["lambda"], 0.7);
    assert_eq!(shown["k_max"], 5);
    assert_eq!(shown["guardrails"]["thresholds"]["promo"], 0.34);

    // The shown config is itself a full config that shows identically.
    std::fs::write(&path, stdout(&o)).unwrap();
    let again = run(&["config", "show", "--config", s(&path)]);
    assert_eq!(stdout(&again), stdout(&o));
    assert!(stderr(&again).is_empty());

    std::fs::write(&path, r#"{"lambda": 1.5}"#).unwrap();
    let o = run(&["config", "show", "--config", s(&path)]);
    assert_eq!(o.status.code(), Some(ErrorCode::Config.exit_code()));
    assert!(stderr(&o).contains("error[CONFIG]") && stderr(&o).contains("\"lambda\""), "{}", stderr(&o));

    std::fs::write(&path, r#"{"m": 2, "shiny": true}"#).unwrap();
    let o = run(&["config", "show", "--config", s(&path)]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("shiny"));
}

#[test]
fn judge_metrics_report() {
    let tmp = tempfile::tempdir().unwrap();
    let rankings = tmp.path().join("rankings.jsonl");
    std::fs::write(
        &rankings,
        concat!(
            r#"{"item_id":"1","ranking":{"full":1,"no_retrieval":2,"no_evaluation":3}}"#, "\n",
            r#"{"item_id":"2","ranking":{"full":2,"no_retrieval":1,"no_evaluation":3}}"#, "\n",
        ),
    )
    .unwrap();
    let out = tmp.path().join("report.json");
    let o = run(&["judge-metrics", "--rankings", s(&rankings), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("avg_rank"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["methods"]["full"]["avg_rank"], 1.5);
    assert_eq!(report["methods"]["full"]["mrr"], 0.75);
    assert_eq!(report["methods"]["no_evaluation"]["ndcg"], 0.0);
    assert_eq!(report["items"], 2);

    std::fs::write(&rankings, "{not json}\n").unwrap();
    let o = run(&["judge-metrics", "--rankings", s(&rankings), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(ErrorCode::Input.exit_code()));
}
