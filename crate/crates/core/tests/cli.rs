use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn brctc(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_brctc"))
        .args(args)
        .env_clear()
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

fn json_lines(out: &Output) -> Vec<Value> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn loss_of_fixture() {
    let out = brctc(&["loss", "-i", fixture("loss.jsonl").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = json_lines(&out);
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0]["id"], "single-frame");
    let loss = lines[0]["loss"].as_f64().unwrap();
    assert!((loss + 0.6f64.ln()).abs() < 1e-12);
    assert!(lines.iter().all(|l| l["loss"].as_f64().unwrap() > 0.0));
}

#[test]
fn zero_lambda_downsample_matches_vanilla_bytes() {
    let input = fixture("loss.jsonl");
    let input = input.to_str().unwrap();
    let vanilla = brctc(&["loss", "-i", input, "--grad"], None);
    let ds = brctc(&["loss", "-i", input, "--grad", "--risk", "downsample", "--lambda", "0"], None);
    let ee = brctc(&["loss", "-i", input, "--grad", "--risk", "early-emission", "--lambda", "0"], None);
    assert_eq!(vanilla.status.code(), Some(0));
    assert_eq!(vanilla.stdout, ds.stdout);
    assert_eq!(vanilla.stdout, ee.stdout);
}

#[test]
fn stream_with_one_infeasible_record_is_partial() {
    let mut input = String::new();
    for i in 0..100 {
        if i == 41 {
            input.push_str(r#"{"id":"bad","logprobs":[[-0.1,-2.4],[-0.1,-2.4]],"labels":[1,1]}"#);
        } else {
            input.push_str(&format!(r#"{{"id":"u{i}","logits":[[0.1,0.{i}],[0.3,-0.2],[0.0,1.0]],"labels":[1]}}"#));
        }
        input.push('\n');
    }
    let out = brctc(&["loss", "--risk", "downsample", "--lambda", "10"], Some(&input));
    assert_eq!(out.status.code(), Some(2));
    let lines = json_lines(&out);
    assert_eq!(lines.len(), 100);
    let errors: Vec<&Value> = lines.iter().filter(|l| l.get("error").is_some()).collect();
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0]["id"], "bad");
    assert_eq!(errors[0]["line"], 42);
    assert_eq!(lines.iter().filter(|l| l.get("loss").is_some()).count(), 99);
    // output order follows input order
    assert_eq!(lines[0]["id"], "u0");
    assert_eq!(lines[99]["id"], "u99");
}

#[test]
fn rejects_bad_risk_arguments() {
    let out = brctc(&["loss", "--risk", "downsample", "--lambda", "-1"], Some(""));
    assert_eq!(out.status.code(), Some(1));
    let out = brctc(&["loss", "--risk", "downsample", "--lambda=-1"], Some(""));
    assert_eq!(out.status.code(), Some(1));
    let out = brctc(&["loss", "--risk", "sideways"], Some(""));
    assert_eq!(out.status.code(), Some(1));
    let out = brctc(&["--help"], None);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn oracle_compare_fixtures_and_sweep() {
    let out = brctc(&["oracle-compare", "--fixture", fixture("grouping_paths.json").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = &json_lines(&out)[0]["report"];
    assert!((report["objective"].as_f64().unwrap() - 0.62).abs() < 1e-12);

    let out = brctc(&["oracle-compare", "--fixture", fixture("infeasible.json").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let out = brctc(&["oracle-compare", "--seed", "7", "--instances", "10"], None);
    assert_eq!(out.status.code(), Some(0));
    let lines = json_lines(&out);
    assert_eq!(lines.last().unwrap()["failed"], 0);
    assert_eq!(lines.len(), 11);
}

#[test]
fn grad_check_passes() {
    let out = brctc(
        &["grad-check", "--risk", "early-emission", "--lambda", "20", "--instances", "3"],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_lines(&out).len(), 3);
}

#[test]
fn trim_fixture() {
    let out = brctc(&["trim", "-i", fixture("trim.jsonl").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let line = &json_lines(&out)[0];
    assert_eq!(line["report"]["kept"], 15);
    assert_eq!(line["report"]["dsf"], 0.75);
    assert_eq!(line["hidden"].as_array().unwrap().len(), 15);

    let out = brctc(&["trim", "-i", fixture("trim.jsonl").to_str().unwrap(), "--margin", "2"], None);
    assert_eq!(json_lines(&out)[0]["report"]["kept"], 12);
}

#[test]
fn latency_fixture() {
    let out = brctc(
        &["latency", "-i", fixture("latency.jsonl").to_str().unwrap(), "--rtf", "0.176", "--right-context-ms", "160"],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = json_lines(&out);
    assert_eq!(lines.len(), 4);
    // ends at frames 1 and 4 against starts 0 and 2: 1.5 frames of drift
    assert_eq!(lines[0]["dl"], 60.0);
    assert_eq!(lines[0]["dcl"], 240.0);
    assert!((lines[0]["cl"].as_f64().unwrap() - 28.16).abs() < 1e-9);
    // per-record chunk config wins
    assert_eq!(lines[2]["dcl"], 240.0);
    assert!((lines[2]["cl"].as_f64().unwrap() - 61.44).abs() < 1e-9);
    assert_eq!(lines[3]["corpus"]["utterances"], 3);
}

#[test]
fn train_toy_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "[task]\nnum_train = 16\nnum_eval = 4\n\n[model]\nhidden = 8\n\n[train]\nepochs = 3\n",
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let out = brctc(
        &[
            "train-toy",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--risk",
            "downsample",
            "--lambda",
            "10",
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = &json_lines(&out)[0];
    assert_eq!(summary["summary"]["utterances"], 4);

    let trace = std::fs::read_to_string(out_dir.join("loss.csv")).unwrap();
    assert_eq!(trace.lines().count(), 4);
    assert!(trace.starts_with("epoch,loss"));
    let spikes = std::fs::read_to_string(out_dir.join("spikes.jsonl")).unwrap();
    assert_eq!(spikes.lines().count(), 4);
    let saved = std::fs::read_to_string(out_dir.join("config.toml")).unwrap();
    let cfg = brctc::toy::RunConfig::from_toml(&saved).unwrap();
    assert_eq!(cfg.train.epochs, 3);
    assert_eq!(cfg.risk.lambda, 10.0);
    let model = brctc::toy::load_checkpoint(&out_dir.join("model.ckpt")).unwrap();
    assert_eq!(model.hidden_width(), 8);
    let heatmaps = std::fs::read_dir(out_dir.join("heatmaps")).unwrap().count();
    assert_eq!(heatmaps, 4);
}
