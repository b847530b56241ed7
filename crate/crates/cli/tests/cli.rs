use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn thistle(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thistle"))
        .current_dir(dir)
        .env_remove("THISTLE_SEED")
        .env_remove("THISTLE_SIDECAR_CMD")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Asserts success and that nothing was reported as an error.
fn ok(o: Output) -> String {
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(o.status.success(), "failed: {err}");
    assert!(!err.contains("\"error\""), "error line on success: {err}");
    stdout(&o)
}

/// Asserts failure with exactly one JSON error line and returns its kind.
fn fails(o: Output) -> (String, String) {
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {err}");
    let v: Value = serde_json::from_str(lines[0]).unwrap();
    (
        v["error"].as_str().unwrap().to_owned(),
        v["message"].as_str().unwrap().to_owned(),
    )
}

fn fake_sidecar() -> String {
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/fake_sidecar.py");
    format!("python3 {}", script.display())
}

const THREE: &str = r#"{"id":"a","text":"Blue, Armadillo!!","vector":[1,0,0]}
{"id":"b","vector":[0,1,0]}
{"id":"c","text":"third","vector":[0.5,0.5,0.1]}
"#;

fn corpus(dir: &Path) -> PathBuf {
    let p = dir.join("corpus.jsonl");
    fs::write(&p, THREE).unwrap();
    p
}

fn info(dir: &Path, snap: &str) -> Value {
    serde_json::from_str(&ok(thistle(dir, &["info", snap, "--json"]))).unwrap()
}

#[test]
fn load_then_info_reports_count() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path());
    let out = ok(thistle(
        d.path(),
        &[
            "load",
            "corpus.jsonl",
            "-o",
            "db.snap",
            "--backend",
            "iter-cosine",
        ],
    ));
    assert!(out.contains("loaded 3 records"));
    let v = info(d.path(), "db.snap");
    assert_eq!(v["records"], 3);
    assert_eq!(v["dim"], 3);
    assert_eq!(v["backend"], "iter-cosine");
    assert_eq!(v["metric"], "cosine");
    assert_eq!(v["format_version"], 1);
    let text = ok(thistle(d.path(), &["info", "db.snap"]));
    assert!(text.contains("records: 3"));
}

#[test]
fn hnsw_flags_are_recorded_verbatim() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path());
    ok(thistle(
        d.path(),
        &[
            "load",
            "corpus.jsonl",
            "-o",
            "h.snap",
            "--backend",
            "hnsw-euclidean",
            "--M",
            "16",
            "--ef-construction",
            "64",
            "--ef-search",
            "33",
            "--seed",
            "9",
        ],
    ));
    let v = info(d.path(), "h.snap");
    assert_eq!(v["params"]["kind"], "hnsw");
    assert_eq!(v["params"]["m"], 16);
    assert_eq!(v["params"]["ef_construction"], 64);
    assert_eq!(v["params"]["ef_search"], 33);
    assert_eq!(v["seed"], 9);
    assert_eq!(v["metric"], "euclidean");

    ok(thistle(
        d.path(),
        &[
            "load",
            "corpus.jsonl",
            "-o",
            "l.snap",
            "--backend",
            "lsh",
            "--projections",
            "5",
            "--tables",
            "3",
        ],
    ));
    let v = info(d.path(), "l.snap");
    assert_eq!(v["params"]["n_projections"], 5);
    assert_eq!(v["params"]["n_tables"], 3);
}

#[test]
fn seed_comes_from_environment_unless_flag_given() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path());
    let bin = env!("CARGO_BIN_EXE_thistle");
    let run = |extra: &[&str]| {
        let mut cmd = Command::new(bin);
        cmd.current_dir(d.path()).env("THISTLE_SEED", "1234");
        cmd.args(["load", "corpus.jsonl", "-o", "s.snap", "--backend", "lsh"])
            .args(extra);
        assert!(cmd.output().unwrap().status.success());
        info(d.path(), "s.snap")["seed"].as_u64().unwrap()
    };
    assert_eq!(run(&[]), 1234);
    assert_eq!(run(&["--seed", "5"]), 5);
}

#[test]
fn wrong_dim_fails_without_leaving_a_snapshot() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path());
    let (kind, msg) = fails(thistle(
        d.path(),
        &["load", "corpus.jsonl", "-o", "db.snap", "--dim", "4"],
    ));
    assert_eq!(kind, "dimension_mismatch");
    assert!(msg.contains('4') && msg.contains('3'));
    let names: Vec<_> = fs::read_dir(d.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names, vec![std::ffi::OsString::from("corpus.jsonl")]);
}

#[test]
fn bad_flags_fail_before_reading_files() {
    let d = tempfile::tempdir().unwrap();
    let (kind, _) = fails(thistle(
        d.path(),
        &[
            "load",
            "missing.jsonl",
            "-o",
            "x.snap",
            "--backend",
            "hnsw-cosine",
            "--M",
            "0",
        ],
    ));
    assert_eq!(kind, "config");
    let (kind, _) = fails(thistle(
        d.path(),
        &["load", "missing.jsonl", "-o", "x.snap", "--backend", "nope"],
    ));
    assert_eq!(kind, "usage");
    let (kind, _) = fails(thistle(
        d.path(),
        &["load", "missing.jsonl", "-o", "x.snap"],
    ));
    assert_eq!(kind, "io");
}

#[test]
fn malformed_corpus_line_is_named() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("c.jsonl"),
        "{\"id\":\"a\",\"vector\":[1,2]}\n{\"id\":\"b\",\"vector\":[1,\"x\"]}\n",
    )
    .unwrap();
    let (kind, msg) = fails(thistle(d.path(), &["load", "c.jsonl", "-o", "db.snap"]));
    assert_eq!(kind, "parse");
    assert!(msg.contains(":2:"), "{msg}");
    assert!(!d.path().join("db.snap").exists());
}

#[test]
fn stored_vector_finds_itself() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path());
    for backend in [
        "iter-cosine",
        "iter-euclidean",
        "hnsw-cosine",
        "hnsw-euclidean",
        "lsh",
    ] {
        ok(thistle(
            d.path(),
            &[
                "load",
                "corpus.jsonl",
                "-o",
                "db.snap",
                "--backend",
                backend,
            ],
        ));
        let out = ok(thistle(
            d.path(),
            &[
                "query",
                "db.snap",
                "--vector",
                "0.5,0.5,0.1",
                "--k",
                "1",
                "--json",
            ],
        ));
        let v: Value = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(v["id"], "c", "{backend}");
        assert_eq!(v["rank"], 1);
        assert!(v["distance"].as_f64().unwrap().abs() < 1e-6, "{backend}");
    }
}

#[test]
fn k_beyond_corpus_lists_everything() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path());
    ok(thistle(
        d.path(),
        &[
            "load",
            "corpus.jsonl",
            "-o",
            "db.snap",
            "--backend",
            "iter-euclidean",
        ],
    ));
    let out = ok(thistle(
        d.path(),
        &["query", "db.snap", "--vector", "1,0,0", "--k", "50"],
    ));
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0], "1\ta\t0.000000\tBlue Armadillo");
    assert!(rows[2].starts_with("3\tb\t1.414214"));
}

#[test]
fn vector_file_and_negative_values() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path());
    ok(thistle(
        d.path(),
        &["load", "corpus.jsonl", "-o", "db.snap"],
    ));
    fs::write(d.path().join("q.json"), "[0, 1, 0]\n").unwrap();
    let out = ok(thistle(
        d.path(),
        &["query", "db.snap", "--vector-file", "q.json", "--k", "1"],
    ));
    assert!(out.starts_with("1\tb\t0.000000"));
    let out = ok(thistle(
        d.path(),
        &["query", "db.snap", "--vector", "-1,-0.01,0", "--k", "1"],
    ));
    assert!(out.starts_with("1\tb\t"));
}

#[test]
fn query_errors_are_machine_readable() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path());
    ok(thistle(
        d.path(),
        &["load", "corpus.jsonl", "-o", "db.snap"],
    ));
    let (kind, msg) = fails(thistle(
        d.path(),
        &["query", "db.snap", "--text", "Blue Armadillo"],
    ));
    assert_eq!(kind, "embedder");
    assert!(msg.contains("--embedder sidecar"));
    let (kind, _) = fails(thistle(d.path(), &["query", "db.snap", "--vector", "1,0"]));
    assert_eq!(kind, "dimension_mismatch");
    let (kind, _) = fails(thistle(
        d.path(),
        &["query", "db.snap", "--vector", "0,0,0"],
    ));
    assert_eq!(kind, "zero_vector");
    let (kind, _) = fails(thistle(
        d.path(),
        &["query", "db.snap", "--vector", "1,0,0", "--k", "0"],
    ));
    assert_eq!(kind, "invalid_k");
    let (kind, _) = fails(thistle(
        d.path(),
        &["query", "db.snap", "--vector", "1,abc,0"],
    ));
    assert_eq!(kind, "parse");
    let (kind, _) = fails(thistle(d.path(), &["query", "db.snap"]));
    assert_eq!(kind, "usage");
}

#[test]
fn damaged_snapshot_is_reported() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path());
    ok(thistle(
        d.path(),
        &["load", "corpus.jsonl", "-o", "db.snap"],
    ));
    let path = d.path().join("db.snap");
    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    fs::write(&path, &bytes).unwrap();
    assert_eq!(fails(thistle(d.path(), &["info", "db.snap"])).0, "checksum");
    fs::write(&path, &bytes[..10]).unwrap();
    assert_eq!(
        fails(thistle(d.path(), &["info", "db.snap"])).0,
        "truncated"
    );
}

fn report_lines(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn bench_all_backends_one_size() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(thistle(
        d.path(),
        &[
            "bench",
            "--sizes",
            "100",
            "--backends",
            "all",
            "--report",
            "r.jsonl",
        ],
    ));
    assert!(out.contains("iter-cosine") && out.contains("lsh"));
    let reports = report_lines(&d.path().join("r.jsonl"));
    assert_eq!(reports.len(), 5);
    for r in &reports {
        assert_eq!(r["n"], 100);
        let total = r["total_time_s"].as_f64().unwrap();
        let sum = r["insert_time_s"].as_f64().unwrap() + r["query_time_s"].as_f64().unwrap();
        assert_eq!(total, sum);
    }
}

#[test]
fn bench_pair_fills_recall_column() {
    let d = tempfile::tempdir().unwrap();
    ok(thistle(
        d.path(),
        &[
            "bench",
            "--backends",
            "iter-cosine,hnsw-cosine",
            "--sizes",
            "1000",
            "--report",
            "r.jsonl",
        ],
    ));
    let reports = report_lines(&d.path().join("r.jsonl"));
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["backend"], "IterativeCosine");
    assert_eq!(reports[1]["backend"], "HnswCosine");
    let recall = reports[1]["recall_vs_exact"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&recall));
}

#[test]
fn bench_defaults_write_report_and_plots() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(thistle(d.path(), &["bench", "--plots", "plots"]));
    assert!(out.contains("thistle-bench.jsonl"));
    let reports = report_lines(&d.path().join("thistle-bench.jsonl"));
    assert_eq!(reports.len(), 15);
    let sizes: Vec<u64> = reports.iter().map(|r| r["n"].as_u64().unwrap()).collect();
    assert_eq!(&sizes[..5], &[100; 5]);
    assert_eq!(&sizes[10..], &[10_000; 5]);
    assert!(d.path().join("plots/accuracy.svg").exists());
    assert!(d.path().join("plots/total_time.svg").exists());
}

#[test]
fn bench_is_deterministic_apart_from_timing() {
    let d = tempfile::tempdir().unwrap();
    let strip = |path: &str| -> Vec<Value> {
        report_lines(&d.path().join(path))
            .into_iter()
            .map(|mut r| {
                let o = r.as_object_mut().unwrap();
                o.retain(|k, _| !k.ends_with("_time_s"));
                r
            })
            .collect()
    };
    for name in ["a.jsonl", "b.jsonl"] {
        ok(thistle(
            d.path(),
            &["bench", "--sizes", "100,300", "--report", name, "--k", "3"],
        ));
    }
    assert_eq!(strip("a.jsonl"), strip("b.jsonl"));
}

#[test]
fn bench_rejects_unknown_backend_and_oversized_cells() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(
        fails(thistle(
            d.path(),
            &["bench", "--backends", "iter-cosine,faiss"]
        ))
        .0,
        "config"
    );
    assert_eq!(
        fails(thistle(d.path(), &["bench", "--sizes", "20000"])).0,
        "config"
    );
    assert!(!d.path().join("thistle-bench.jsonl").exists());
}

#[test]
fn bench_on_corpus_and_pair_files() {
    let d = tempfile::tempdir().unwrap();
    corpus(d.path());
    fs::write(
        d.path().join("pairs.jsonl"),
        "{\"query_id\":\"q1\",\"expected_id\":\"a\",\"vector\":[0.9,0.1,0]}\n\
         {\"query_id\":\"q2\",\"expected_id\":\"b\",\"vector\":[0,1,0.05]}\n",
    )
    .unwrap();
    ok(thistle(
        d.path(),
        &[
            "bench",
            "--corpus",
            "corpus.jsonl",
            "--pairs",
            "pairs.jsonl",
            "--report",
            "r.jsonl",
        ],
    ));
    let reports = report_lines(&d.path().join("r.jsonl"));
    assert_eq!(reports.len(), 5);
    assert_eq!(reports[0]["n"], 3);
    assert_eq!(reports[0]["accuracy"], 1.0);

    fs::write(
        d.path().join("text_pairs.jsonl"),
        "{\"query_id\":\"q1\",\"expected_id\":\"a\",\"text\":\"blue\"}\n",
    )
    .unwrap();
    let (kind, _) = fails(thistle(
        d.path(),
        &[
            "bench",
            "--corpus",
            "corpus.jsonl",
            "--pairs",
            "text_pairs.jsonl",
        ],
    ));
    assert_eq!(kind, "embedder");
}

const TEXTS: &str = r#"{"id":"p1","text":"Blue, Armadillo!!"}
{"id":"p2","text":"quiet harbor at dawn"}
{"id":"p3","text":"seventeen lemon trees"}
{"id":"p4","text":"Zebra crossing"}
"#;

#[test]
fn sidecar_embeds_corpus_and_text_queries() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("texts.jsonl"), TEXTS).unwrap();
    let log = d.path().join("sidecar.log");
    let sidecar = fake_sidecar();
    let bin = env!("CARGO_BIN_EXE_thistle");
    let run = |args: &[&str]| {
        Command::new(bin)
            .current_dir(d.path())
            .env("FAKE_SIDECAR_LOG", &log)
            .args(args)
            .output()
            .unwrap()
    };

    let (kind, _) = fails(run(&["load", "texts.jsonl", "-o", "db.snap"]));
    assert_eq!(kind, "parse");

    ok(run(&[
        "load",
        "texts.jsonl",
        "-o",
        "db.snap",
        "--embedder",
        "sidecar",
        "--sidecar-cmd",
        &sidecar,
    ]));
    let v = info(d.path(), "db.snap");
    assert_eq!(v["records"], 4);
    assert_eq!(v["dim"], 8);

    let out = ok(run(&[
        "query",
        "db.snap",
        "--text",
        "Blue Armadillo",
        "--k",
        "1",
        "--embedder",
        "sidecar",
        "--sidecar-cmd",
        &sidecar,
        "--pooling",
        "max",
        "--model",
        "tiny",
    ]));
    assert_eq!(out.trim(), "1\tp1\t0.000000\tBlue Armadillo");

    let calls: Vec<Vec<String>> = fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(calls.len(), 2);
    assert_eq!(&calls[0][2..], ["--pooling", "mean"]);
    assert_eq!(&calls[1][2..], ["--pooling", "max", "--model", "tiny"]);
}

#[test]
fn sidecar_embeds_text_pairs_for_bench() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("texts.jsonl"), TEXTS).unwrap();
    fs::write(
        d.path().join("pairs.jsonl"),
        "{\"query_id\":\"q1\",\"expected_id\":\"p1\",\"text\":\"armadillo blue\"}\n\
         {\"query_id\":\"q2\",\"expected_id\":\"p4\",\"text\":\"zebra crossing\"}\n",
    )
    .unwrap();
    let sidecar = fake_sidecar();
    ok(thistle(
        d.path(),
        &[
            "bench",
            "--corpus",
            "texts.jsonl",
            "--pairs",
            "pairs.jsonl",
            "--backends",
            "iter-cosine",
            "--report",
            "r.jsonl",
            "--embedder",
            "sidecar",
            "--sidecar-cmd",
            &sidecar,
        ],
    ));
    let reports = report_lines(&d.path().join("r.jsonl"));
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["accuracy"], 1.0);
}

#[test]
fn sidecar_failures_surface_as_errors() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("texts.jsonl"), TEXTS).unwrap();
    let sidecar = fake_sidecar();
    let out = Command::new(env!("CARGO_BIN_EXE_thistle"))
        .current_dir(d.path())
        .env("FAKE_SIDECAR_FAIL", "1")
        .args([
            "load",
            "texts.jsonl",
            "-o",
            "db.snap",
            "--embedder",
            "sidecar",
            "--sidecar-cmd",
            &sidecar,
        ])
        .output()
        .unwrap();
    let (kind, msg) = fails(out);
    assert_eq!(kind, "sidecar");
    assert!(msg.contains("model failed to load"));
    assert!(!d.path().join("db.snap").exists());

    let (kind, _) = fails(thistle(
        d.path(),
        &[
            "load",
            "texts.jsonl",
            "-o",
            "db.snap",
            "--embedder",
            "sidecar",
        ],
    ));
    assert_eq!(kind, "usage");
    let (kind, _) = fails(thistle(
        d.path(),
        &[
            "load",
            "texts.jsonl",
            "-o",
            "db.snap",
            "--embedder",
            "sidecar",
            "--sidecar-cmd",
            "/nonexistent/embedder",
        ],
    ));
    assert_eq!(kind, "sidecar");
}
