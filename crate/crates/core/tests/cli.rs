use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn carmen(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_carmen"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn toy_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/toy/toy.toml")
}

const RAW: &str = "Ecce Lichan trepidum latitantem rupe cauata\n\
Adspicit, utque dolor rabiem conlegerat omnem,\n\
\"Tune, Licha\", dixit \"feralia dona dedisti?\n";

#[test]
fn no_subcommand_is_a_usage_error() {
    let o = carmen(&[], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(carmen(&["train", "--no-such-flag"], None).status.code(), Some(2));
    assert_eq!(carmen(&["frobnicate"], None).status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_one_with_diagnostic() {
    let o = carmen(&["train", "--manifest", "/nonexistent/manifest.txt"], None);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error: "), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn bad_config_value_exits_one() {
    let o = carmen(&["tokenize", "--ablation", "rhyme_only"], Some("arma\n"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn version_prints_build_id() {
    let o = carmen(&["--version"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains(env!("CARGO_PKG_VERSION")) && text.contains("build "), "{text}");
}

#[test]
fn transcribe_golden_lines() {
    let o = carmen(&["transcribe"], Some(RAW));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "ekke Likan trepidum latitantem rupe kawata\n\
         adspikit utkwe dolor rabiem konlegerat omnem\n\
         tune Lika diksit feralia dona dedisti\n"
    );
}

#[test]
fn transcribe_reads_a_file_argument() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("in.txt");
    std::fs::write(&path, RAW).unwrap();
    let o = carmen(&["transcribe", path.to_str().unwrap()], None);
    assert_eq!(stdout(&o), stdout(&carmen(&["transcribe"], Some(RAW))));
}

#[test]
fn tokenize_golden_line() {
    let o = carmen(&["tokenize"], Some("Ecce Lichan trepidum latitantem rupe cauata\n"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        stdout(&o).trim_end(),
        "ek+A+L+S ke+WC li+S kan+A+L+SC tre+S pi dum+A+L+SC la ti tan+A+L+S tem+L+DI ru+A+L+S pe+WC ka wa+A+L+S ta+L EOL"
    );
}

#[test]
fn scan_reports_pattern_and_unscannable_lines() {
    let o = carmen(&["scan"], Some("Ecce Lichan trepidum latitantem rupe cauata\narma\n"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("DDDSDS\t"), "{}", lines[0]);
    assert_eq!(lines[1], "-\tunscannable");
}

fn run_ok(args: &[&str]) {
    let o = carmen(args, None);
    assert_eq!(o.status.code(), Some(0), "carmen {args:?}: {}", stderr(&o));
}

/// Small, fast variant of the toy configuration.
fn quick(out: &Path) -> Vec<String> {
    [
        "--config",
        toy_config().to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--epochs",
        "2",
        "--train-stride",
        "32",
        "--eval-stride",
        "32",
        "-q",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn with<'a>(head: &[&'a str], tail: &'a [String]) -> Vec<&'a str> {
    head.iter().copied().chain(tail.iter().map(String::as_str)).collect()
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn train_evaluate_attend_embed_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let q = quick(&out);
    run_ok(&with(&["train"], &q));
    for f in ["lexicon.tsv", "model.ckpt", "history.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    run_ok(&with(&["evaluate"], &q));
    let metrics: serde_json::Value = serde_json::from_slice(&read(out.join("metrics_test.json"))).unwrap();
    let acc = metrics["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(metrics["labels"].as_array().unwrap().len(), 3);
    let n = metrics["samples"].as_u64().unwrap() as usize;
    assert!(n > 0);
    assert_eq!(metrics["per_sample"].as_array().unwrap().len(), n);
    let confusion_total: u64 = metrics["confusion"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()))
        .sum();
    assert_eq!(confusion_total as usize, n);

    for vis in ["vanilla", "gradcam", "scorecam"] {
        let svg = dir.path().join(format!("{vis}.svg"));
        run_ok(&with(
            &["attend", "--work", "beta", "--start", "5", "--visualizer", vis, "--out", svg.to_str().unwrap()],
            &q,
        ));
        let text = String::from_utf8(read(svg.clone())).unwrap();
        assert!(text.starts_with("<svg") || text.starts_with("<?xml"), "{vis}");
        let side: serde_json::Value = serde_json::from_slice(&read(svg.with_extension("json"))).unwrap();
        assert_eq!(side["rows"], 64);
        assert_eq!(side["cols"], 20);
    }
    let o = carmen(&with(&["attend", "--work", "beta", "--start", "500"], &q), None);
    assert_eq!(o.status.code(), Some(1), "window past the end of the work");

    run_ok(&with(&["embed-analyze", "--subsets", "50", "--grid", "16"], &q));
    let embed = out.join("embed");
    for f in ["embeddings.tsv", "coords.tsv", "stats.json"] {
        assert!(embed.join(f).is_file(), "{f}");
    }
    let stats: serde_json::Value = serde_json::from_slice(&read(embed.join("stats.json"))).unwrap();
    assert_eq!(stats["method"], "pca");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("run{i}"))).collect();
    for out in &runs {
        let q = quick(out);
        run_ok(&with(&["encode"], &q));
        run_ok(&with(&["train"], &q));
        run_ok(&with(&["evaluate"], &q));
    }
    for f in [
        "lexicon.tsv",
        "splits.tsv",
        "train.samples",
        "test.samples",
        "model.ckpt",
    ] {
        assert!(read(runs[0].join(f)) == read(runs[1].join(f)), "{f} differs");
    }
    // The JSON reports embed the output path, which differs between the two runs.
    let strip = |p: &Path, f: &str| {
        let mut v: serde_json::Value = serde_json::from_slice(&read(p.join(f))).unwrap();
        v["config"]["data"]["output"] = serde_json::Value::Null;
        v
    };
    for f in ["history.json", "metrics_test.json"] {
        assert!(strip(&runs[0], f) == strip(&runs[1], f), "{f} differs");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut q = quick(&out);
    q.extend(["--kind", "lstm", "--seed", "7"].map(String::from));
    run_ok(&with(&["train"], &q));
    let h: serde_json::Value = serde_json::from_slice(&read(out.join("history.json"))).unwrap();
    assert_eq!(h["kind"], "lstm");
    assert_eq!(h["config"]["train"]["seed"], 7);
    assert_eq!(h["config"]["train"]["epochs"], 2);
    assert_eq!(h["config"]["train"]["bn_recalibrate"], true, "file value kept when no flag is given");
}
