use std::fs;
use std::path::Path;
use std::process::Command;

use smilegan_cli::{exit, run};

const SPEC: &str = r#"{
  "patterns": [
    {"name": "A", "rois": [0, 1, 2, 3], "rate": {"fixed": 0.2}},
    {"name": "B", "rois": [4, 5, 6, 7], "rate": {"fixed": 0.2}},
    {"name": "C", "rois": [8, 9, 10, 11], "rate": {"uniform": {"lo": 0.1, "hi": 0.3}}}
  ]
}"#;

fn cli(args: &[&str]) -> i32 {
    let argv: Vec<String> = std::iter::once("smilegan").chain(args.iter().copied()).map(String::from).collect();
    run(argv)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.json");
    fs::write(&spec, SPEC).unwrap();
    let out = dir.join("data");
    let code = cli(&[
        "simulate", "--spec", p(&spec), "--n-cn", "48", "--n-pt", "48", "--n-features", "16", "--seed", "3", "--out",
        p(&out),
    ]);
    assert_eq!(code, exit::SUCCESS);
    out
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["train", "--cn-pt", p(data), "--m", "3", "--seed", "1", "--max-epoch", "4"];
    if !extra.contains(&"--reruns") {
        args.extend_from_slice(&["--reruns", "1"]);
    }
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", p(out)]);
    cli(&args)
}

#[test]
fn simulate_writes_table_truth_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path());
    let roi = fs::read_to_string(data.join("roi.csv")).unwrap();
    assert_eq!(roi.lines().count(), 1 + 96);
    let truth = fs::read_to_string(data.join("truth.csv")).unwrap();
    assert_eq!(truth.lines().next().unwrap(), "id,pattern,confounder_flag");
    assert!(data.join("resolved-config.json").exists());
}

#[test]
fn simulate_preset_has_1200_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("data");
    assert_eq!(cli(&["simulate", "--preset", "paper-supp131", "--seed", "7", "--out", p(&out)]), 0);
    let roi = fs::read_to_string(out.join("roi.csv")).unwrap();
    assert_eq!(roi.lines().count(), 1 + 1200);
}

#[test]
fn train_outputs_and_infer_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path()).join("roi.csv");
    let run1 = tmp.path().join("run1");
    assert_eq!(train(&data, &run1, &[]), exit::SUCCESS);
    for f in ["model.json", "monitor.csv", "assignments.csv", "resolved-config.json"] {
        assert!(run1.join(f).exists(), "missing {f}");
    }
    let monitor = fs::read_to_string(run1.join("monitor.csv")).unwrap();
    assert_eq!(monitor.lines().count(), 1 + 4);

    let probs = tmp.path().join("probs.csv");
    assert_eq!(cli(&["infer", "--model", p(&run1.join("model.json")), "--data", p(&data), "--out", p(&probs)]), 0);
    assert_eq!(fs::read(&probs).unwrap(), fs::read(run1.join("assignments.csv")).unwrap());
}

#[test]
fn identical_argv_gives_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path()).join("roi.csv");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(train(&data, &a, &[]), 0);
    assert_eq!(train(&data, &b, &[]), 0);
    for f in ["model.json", "monitor.csv", "assignments.csv", "resolved-config.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn resolved_config_replays_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path()).join("roi.csv");
    let a = tmp.path().join("a");
    assert_eq!(train(&data, &a, &["--mu", "3", "--batch-size", "16"]), 0);
    let b = tmp.path().join("b");
    assert_eq!(cli(&["train", "--config", p(&a.join("resolved-config.json")), "--out", p(&b)]), 0);
    for f in ["model.json", "monitor.csv", "assignments.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path()).join("roi.csv");
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 5, "training": {"mu": 2.0, "max_epoch": 2}, "reruns": 1}"#).unwrap();
    let out = tmp.path().join("o");
    let code = cli(&["train", "--config", p(&cfg), "--cn-pt", p(&data), "--mu", "4", "--out", p(&out)]);
    assert_eq!(code, 0);
    let resolved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("resolved-config.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 5);
    assert_eq!(resolved["training"]["mu"], 4.0);
    assert_eq!(resolved["training"]["max_epoch"], 2);
}

#[test]
fn reruns_emit_per_model_and_consensus_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path()).join("roi.csv");
    let out = tmp.path().join("multi");
    assert_eq!(train(&data, &out, &["--reruns", "3", "--jobs", "2"]), 0);
    for k in 0..3 {
        assert!(out.join(format!("runs/run_{k:03}/model.json")).exists());
    }
    let consensus = fs::read_to_string(out.join("consensus.csv")).unwrap();
    assert_eq!(consensus.lines().next().unwrap(), "id,p_0,p_1,p_2,dominant");
    assert_eq!(consensus.lines().count(), 1 + 48);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("consensus.json")).unwrap()).unwrap();
    let template = summary["template"].as_u64().unwrap() as usize;
    assert_eq!(
        fs::read(out.join("model.json")).unwrap(),
        fs::read(out.join(format!("runs/run_{template:03}/model.json"))).unwrap()
    );

    // The jobs setting does not change results.
    let serial = tmp.path().join("serial");
    assert_eq!(train(&data, &serial, &["--reruns", "3", "--jobs", "1"]), 0);
    assert_eq!(fs::read(out.join("consensus.csv")).unwrap(), fs::read(serial.join("consensus.csv")).unwrap());

    let standalone = tmp.path().join("standalone.csv");
    let models: Vec<String> = (0..3).map(|k| format!("{}/runs/run_{k:03}/model.json", out.display())).collect();
    let mut args = vec!["consensus", "--data", p(&data), "--out", p(&standalone), "--models"];
    args.extend(models.iter().map(String::as_str));
    assert_eq!(cli(&args), 0);
    assert_eq!(fs::read(&standalone).unwrap(), fs::read(out.join("consensus.csv")).unwrap());
}

#[test]
fn select_m_reports_a_candidate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path()).join("roi.csv");
    let out = tmp.path().join("sel");
    let code = cli(&[
        "select-m", "--cn-pt", p(&data), "--candidates", "2,3", "--repetitions", "2", "--max-epoch", "2", "--seed",
        "4", "--out", p(&out),
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("selection.json")).unwrap()).unwrap();
    let chosen = report["chosen_m"].as_u64().unwrap();
    assert!(chosen == 2 || chosen == 3);
    assert!(out.join("resolved-config.json").exists());
}

#[test]
fn preprocess_and_inject_write_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path()).join("roi.csv");
    let pre = tmp.path().join("pre");
    assert_eq!(cli(&["preprocess", "--data", p(&data), "--out", p(&pre)]), 0);
    let stats = pre.join("preprocess-stats.json");
    assert!(stats.exists());
    let replay = tmp.path().join("replay");
    assert_eq!(cli(&["preprocess", "--data", p(&data), "--stats", p(&stats), "--out", p(&replay)]), 0);
    assert_eq!(fs::read(pre.join("roi.csv")).unwrap(), fs::read(replay.join("roi.csv")).unwrap());

    let spec = tmp.path().join("spec.json");
    let inj = tmp.path().join("inj");
    let code = cli(&["inject", "--data", p(&data), "--spec", p(&spec), "--rate", "0.15", "--seed", "2", "--out", p(&inj)]);
    assert_eq!(code, 0);
    assert!(inj.join("truth.csv").exists());
    assert!(inj.join("resolved-config.json").exists());
}

#[test]
fn monitor_export_writes_metrics_and_changes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path()).join("roi.csv");
    let run1 = tmp.path().join("run1");
    assert_eq!(train(&data, &run1, &[]), 0);
    let out = tmp.path().join("export");
    assert_eq!(cli(&["monitor-export", "--model", p(&run1.join("model.json")), "--data", p(&data), "--out", p(&out)]), 0);
    let monitor = fs::read_to_string(out.join("monitor.csv")).unwrap();
    assert_eq!(monitor.lines().count(), 2);
    let changes = fs::read_to_string(out.join("mapping-changes.csv")).unwrap();
    assert_eq!(changes.lines().next().unwrap(), "roi,change_0,change_1,change_2");
    assert_eq!(changes.lines().count(), 1 + 16);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["no-such-command"]), exit::USAGE);
    assert_eq!(cli(&["train", "--m", "three", "--out", "x"]), exit::USAGE);

    let missing = tmp.path().join("missing.csv");
    assert_eq!(train(&missing, &tmp.path().join("o"), &[]), exit::DATA);

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "id,group,roi_1\ns1,CN,notanumber\n").unwrap();
    assert_eq!(train(&bad, &tmp.path().join("o2"), &[]), exit::DATA);

    let data = simulate(tmp.path()).join("roi.csv");
    assert_eq!(train(&data, &tmp.path().join("o3"), &["--m", "1"]), exit::USAGE);

    let corrupt = tmp.path().join("model.json");
    fs::write(&corrupt, "{\"format_version\": 1, \"trunc").unwrap();
    let out = tmp.path().join("p.csv");
    assert_eq!(cli(&["infer", "--model", p(&corrupt), "--data", p(&data), "--out", p(&out)]), exit::DATA);
}

#[test]
fn non_finite_loss_exits_3_and_keeps_last_finite_model() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path()).join("roi.csv");
    let text = fs::read_to_string(&data).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let cn_row = lines.iter().position(|l| l.contains(",CN,")).unwrap();
    let fields: Vec<String> = lines[cn_row].split(',').map(String::from).collect();
    let mut blown = fields[..2].to_vec();
    blown.extend((2..fields.len()).map(|_| "1.7e308".to_string()));
    lines[cn_row] = blown.join(",");
    let huge = tmp.path().join("huge.csv");
    fs::write(&huge, lines.join("\n") + "\n").unwrap();
    let out = tmp.path().join("nan");
    assert_eq!(train(&huge, &out, &[]), exit::NUMERICAL);
    assert!(out.join("model.json").exists());
}

#[test]
fn binary_reports_usage_errors() {
    let status = Command::new(env!("CARGO_BIN_EXE_smilegan")).arg("--bogus").output().unwrap();
    assert_eq!(status.status.code(), Some(exit::USAGE));
    assert!(!status.stderr.is_empty());
    let help = Command::new(env!("CARGO_BIN_EXE_smilegan")).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}
