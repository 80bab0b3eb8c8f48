use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn prvf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prvf"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = prvf(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Single-line JSON error on stderr.
fn failure(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    serde_json::from_str(lines[0]).unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// A small synthetic benchmark, indexed, with CSI and Taily statistics.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Fixture { dir };
        ok(f.path(), &["synth", "--news-docs", "1500", "--tweets", "800", "--external-docs", "200", "--num-topics", "6"]);
        let (news, cfg, target, ext) = (f.data("news.jsonl"), f.data("verticals.json"), f.data("tweets.jsonl"), f.data("external.jsonl"));
        ok(f.path(), &["index", "--news", &news, "--verticals", &cfg, "--target", &target, "--external", &ext]);
        ok(f.path(), &["csi"]);
        ok(f.path(), &["taily-stats"]);
        f
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn data(&self, name: &str) -> String {
        self.path().join("data").join(name).to_str().unwrap().to_string()
    }

    fn evaluate(&self, extra: &[&str]) -> Output {
        let (topics, qrels) = (self.data("topics.jsonl"), self.data("qrels.txt"));
        let mut args = vec!["evaluate", "--topics", &topics, "--qrels", &qrels];
        args.extend_from_slice(extra);
        prvf(self.path(), &args)
    }

    fn expand(&self, extra: &[&str]) -> serde_json::Value {
        let mut args = vec!["expand", "--query", "ev0core g5 g7", "--timestamp", "1359676800"];
        args.extend_from_slice(extra);
        serde_json::from_str(&ok(self.path(), &args)).unwrap()
    }
}

fn csv_rows(path: PathBuf) -> Vec<Vec<String>> {
    let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn config_prints_the_documented_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg: toml::Table = toml::from_str(&ok(dir.path(), &["config"])).unwrap();
    let e = &cfg["expansion"];
    assert_eq!(e["mu"].as_float(), Some(2500.0));
    assert_eq!(e["fb_docs"].as_integer(), Some(50));
    assert_eq!(e["terms"].as_integer(), Some(20));
    assert_eq!(e["lambda"].as_float(), Some(0.5));
    assert_eq!(e["external_fb_docs"].as_integer(), Some(10));
    assert_eq!(e["depth"].as_integer(), Some(1000));
    assert_eq!(cfg["taily"]["n"].as_float(), Some(400.0));
    assert_eq!(cfg["taily"]["v"].as_float(), Some(50.0));
    assert_eq!(cfg["ranks"]["threshold"].as_float(), Some(1e-6));
    assert_eq!(cfg["ranks"]["base"].as_float(), Some(50.0));
    assert_eq!(cfg["crcs"]["gamma"].as_integer(), Some(50));
}

#[test]
fn flags_win_over_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.toml");
    fs::write(&file, "[expansion]\nlambda = 0.3\n[taily]\nn = 100.0\n").unwrap();
    let file = file.to_str().unwrap();
    let cfg: toml::Table = toml::from_str(&ok(dir.path(), &["config", "--config", file, "--lambda", "0.7"])).unwrap();
    assert_eq!(cfg["expansion"]["lambda"].as_float(), Some(0.7));
    assert_eq!(cfg["taily"]["n"].as_float(), Some(100.0));
    assert_eq!(cfg["expansion"]["mu"].as_float(), Some(2500.0));

    fs::write(dir.path().join("bad.toml"), "[taily]\nm = 3\n").unwrap();
    let bad = dir.path().join("bad.toml");
    let err = failure(&prvf(dir.path(), &["config", "--config", bad.to_str().unwrap()]));
    assert_eq!(err["error"], "invalid_config");
}

#[test]
fn empty_corpus_gives_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let news = dir.path().join("news.jsonl");
    let cfg = dir.path().join("v.json");
    fs::write(&news, "").unwrap();
    fs::write(&cfg, r#"{"verticals":{"a":["x"],"b":["y"]}}"#).unwrap();
    ok(dir.path(), &["index", "--news", news.to_str().unwrap(), "--verticals", cfg.to_str().unwrap()]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("indexes/news/manifest.json")).unwrap()).unwrap();
    let docs: Vec<u64> = manifest["verticals"].as_array().unwrap().iter().map(|v| v["docs"].as_u64().unwrap()).collect();
    assert_eq!(docs, [0, 0]);
}

#[test]
fn news_index_has_one_file_per_vertical_and_is_reproducible() {
    let f = Fixture::new();
    let news_dir = f.path().join("indexes/news");
    let files = fs::read_dir(&news_dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".index.json"))
        .count();
    assert_eq!(files, 9);
    let before = fs::read(news_dir.join("manifest.json")).unwrap();
    let (news, cfg) = (f.data("news.jsonl"), f.data("verticals.json"));
    ok(f.path(), &["index", "--news", &news, "--verticals", &cfg]);
    assert_eq!(fs::read(news_dir.join("manifest.json")).unwrap(), before);
    // Reindexing drops the sample and statistics built from the old index.
    assert!(!news_dir.join("csi.json").exists());
    assert!(!news_dir.join("taily.json").exists());
}

#[test]
fn malformed_corpus_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("t.jsonl");
    fs::write(&target, "{\"id\":\"a\",\"timestamp\":1,\"source\":\"s\",\"text\":\"x\"}\nnot json\n").unwrap();
    let err = failure(&prvf(dir.path(), &["index", "--target", target.to_str().unwrap()]));
    assert_eq!(err["error"], "parse");
    assert!(err["message"].as_str().unwrap().contains("line 2"), "{err}");
}

#[test]
fn expand_reports_selection_and_model() {
    let f = Fixture::new();

    let flat = f.expand(&["--lambda", "0"]);
    let model = flat["final_model"].as_object().unwrap();
    assert_eq!(model.keys().collect::<Vec<_>>(), ["ev0core", "g5", "g7"]);
    assert!(model.values().all(|w| (w.as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12));

    let taily = f.expand(&["--selector", "taily"]);
    assert_eq!(taily["c_sel"], 9);
    assert_eq!(taily["cost"]["c_sel"], 9);
    assert!(!taily["selected"].as_array().unwrap().is_empty());

    let crcs = f.expand(&["--selector", "crcs1"]);
    assert_eq!(crcs["selected"].as_array().unwrap().len(), 1);
    let per_vertical = crcs["cost"]["per_vertical"].as_object().unwrap();
    assert_eq!(per_vertical.len(), 1);
    assert_eq!(crcs["cost"]["c_vf"], crcs["cost"]["c_qe"]);
    assert_eq!(crcs["feedback"].as_array().unwrap().len(), 50);

    let news = f.expand(&["--method", "prf.news"]);
    assert!(news["selected"].is_null());
    assert_eq!(news["cost"]["per_vertical"]["monolithic"], news["cost"]["c_qe"]);
}

#[test]
fn search_prints_run_rows() {
    let f = Fixture::new();
    let out = ok(f.path(), &["search", "--query", "ev1core g3", "--method", "no-prf", "--hits", "5", "--topic", "T1"]);
    let rows: Vec<Vec<&str>> = out.lines().map(|l| l.split(' ').collect()).collect();
    assert_eq!(rows.len(), 5);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!((r[0], r[1], r[3], r[5]), ("T1", "Q0", (i + 1).to_string().as_str(), "no-prf"));
    }
}

#[test]
fn no_prf_only_has_metrics_and_no_expansion_cost() {
    let f = Fixture::new();
    let out = f.evaluate(&["--methods", "no-prf"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = csv_rows(f.path().join("reports/metrics.csv"));
    assert_eq!(metrics[0], ["method", "topic", "map", "ndcg30", "recall1000"]);
    assert_eq!(metrics.len(), 7);
    let costs = csv_rows(f.path().join("reports/costs.csv"));
    assert_eq!(costs[0], ["method", "topic", "C_SEL", "C_VR", "C_VF", "C_QE", "C_R_final", "C_Lat"]);
    for row in &costs[1..] {
        assert_eq!(&row[2..6], ["0", "0", "0", "0"]);
        assert_eq!(row[7], "0");
    }
    assert!(f.path().join("reports/config.toml").exists());
}

#[test]
fn two_methods_write_two_tagged_runs() {
    let f = Fixture::new();
    let out = f.evaluate(&["--methods", "prf.news,prvf(crcs2)"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut tags = Vec::new();
    for name in ["prf-news", "prvf-crcs2"] {
        let text = fs::read_to_string(f.path().join("runs").join(format!("{name}.run"))).unwrap();
        let mut t: Vec<&str> = text.lines().map(|l| l.rsplit(' ').next().unwrap()).collect();
        t.dedup();
        assert_eq!(t, [name]);
        tags.push(name);
    }
    assert_ne!(tags[0], tags[1]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("prvf(crcs2)"));
}

#[test]
fn age_list_sweeps() {
    let f = Fixture::new();
    let out = f.evaluate(&["--methods", "no-prf,prf.news", "--age-seconds", "0,86400,172800", "--span-seconds", "86400"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(f.path().join("reports/sweep.csv"));
    assert_eq!(rows[0], ["param", "method", "map", "ndcg30"]);
    assert_eq!(rows.len(), 1 + 3 * 2);
    assert_eq!(rows[3][0], "age=86400");

    let forced = f.evaluate(&["--methods", "prf.news", "--span-seconds", "86400", "--sweep", "span"]);
    assert!(forced.status.success());
    assert_eq!(csv_rows(f.path().join("reports/sweep.csv")).len(), 2);

    let both = f.evaluate(&["--methods", "prf.news", "--age-seconds", "0,1", "--span-seconds", "5,6"]);
    assert_eq!(failure(&both)["error"], "invalid_param");
}

#[test]
fn missing_inputs_fail_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let err = failure(&prvf(dir.path(), &["expand", "--query", "storm"]));
    assert_eq!(err["error"], "missing_input");
    assert!(err["message"].as_str().unwrap().contains("target index"));

    let f = Fixture::new();
    fs::remove_file(f.path().join("indexes/news/csi.json")).unwrap();
    let err = failure(&f.evaluate(&["--methods", "prvf(ranks)"]));
    assert_eq!(err["error"], "missing_input");
    assert!(err["message"].as_str().unwrap().contains("centralized sample index"));

    let err = failure(&prvf(f.path(), &["evaluate", "--methods", "no-prf"]));
    assert!(err["message"].as_str().unwrap().contains("--topics"));

    let usage = prvf(f.path(), &["evaluate", "--no-such-flag"]);
    assert_eq!(usage.status.code(), Some(2));
    assert_eq!(failure(&usage)["error"], "usage");

    let err = failure(&f.evaluate(&["--methods", "bm25"]));
    assert_eq!(err["error"], "invalid_param");
}
