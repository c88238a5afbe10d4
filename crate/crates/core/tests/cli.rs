use std::fs;
use std::path::Path;
use std::process::Command;

fn nep(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_nep")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "nep {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let spec = root.join("spec.txt");
    fs::write(&spec, "events = 40\n").unwrap();
    let cfg = root.join("run.cfg");
    fs::write(
        &cfg,
        "embed_dim = 32\nenv_dim = 8\ndetector_dim = 8\nepochs = 2\nskew_ratios = 1, 10\nresamples = 10\n",
    )
    .unwrap();
    let data = root.join("data");
    nep(&["synth", "--spec", s(&spec), "--seed", "4", "--out", s(&data)]);
    let news = data.join("news.jsonl");
    let posts = data.join("posts.jsonl");

    nep(&["ingest", "--news", s(&news), "--posts", s(&posts), "--config", s(&cfg), "--out", s(&data)]);
    let ingest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data.join("ingest_report.json")).unwrap()).unwrap();
    assert_eq!(ingest["dim"], 32);
    assert_eq!(ingest["dropped"].as_array().unwrap().len(), 0);
    assert!(ingest["below_macro_floor"]["train"].is_u64());

    let corpus = ["--news", s(&news), "--posts", s(&posts), "--config", s(&cfg)];
    let (a, b) = (root.join("a"), root.join("b"));
    for out in [&a, &b] {
        nep(&[&["train"], &corpus[..], &["--out", s(out)]].concat());
    }
    for f in ["metrics.json", "checkpoint.nep", "training_log.jsonl", "diagnostics.jsonl", "roc.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["selection"], "val_macro_f1");
    assert_eq!(metrics["skew"].as_array().unwrap().len(), 2);
    assert_eq!(metrics["config_hash"].as_str().unwrap().len(), 64);
    assert!(metrics["config"].as_str().unwrap().contains("env_dim = 8"));
    assert_eq!(fs::read_to_string(a.join("training_log.jsonl")).unwrap().lines().count(), 2);
    assert!(fs::read_to_string(a.join("roc.csv")).unwrap().starts_with("fpr,tpr\n"));

    let e = root.join("e");
    let ck = a.join("checkpoint.nep");
    nep(&["evaluate", "--news", s(&news), "--posts", s(&posts), "--checkpoint", s(&ck), "--out", s(&e)]);
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(e.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(eval["test"], metrics["test"]);

    // a config with different shapes is refused
    let wide = root.join("wide.cfg");
    fs::write(&wide, "embed_dim = 32\nenv_dim = 16\ndetector_dim = 8\n").unwrap();
    let refused = Command::new(env!("CARGO_BIN_EXE_nep"))
        .args(["evaluate", "--news", s(&news), "--posts", s(&posts), "--checkpoint", s(&ck)])
        .args(["--config", s(&wide), "--out", s(&e)])
        .output()
        .unwrap();
    assert!(!refused.status.success());

    let g = root.join("g");
    let diags = a.join("diagnostics.jsonl");
    let out = nep(&["gate-report", "--diagnostics", s(&diags), "--out", s(&g)]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(g.join("gate_report.json")).unwrap()).unwrap();
    let n = fs::read_to_string(&diags).unwrap().lines().count();
    assert_eq!(report["slice_size"], n.div_ceil(100));
    assert!(String::from_utf8_lossy(&out.stdout).contains("macro\t"));

    let w = root.join("w");
    nep(&[&["sweep"], &corpus[..], &["--param", "T", "--values", "1,3", "--out", s(&w)]].concat());
    let csv = fs::read_to_string(w.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("T,1,"));
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "proportion = 2\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_nep"))
        .args(["train", "--news", "x", "--posts", "y", "--config", s(&cfg)])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("proportion"));
}
