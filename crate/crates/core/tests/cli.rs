mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swiftvad")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(common::tiny_json()).unwrap();
    edit(&mut v);
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    tool(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

/// Relative path and contents of every file under `dir`, sorted.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(tool(&[]).status.code(), Some(1));
    assert_eq!(tool(&["train", "--config", "x.json"]).status.code(), Some(1));
    assert_eq!(tool(&["gen"]).status.code(), Some(1));
    let o = tool(&["gen", "--config", "x.json", "--seed", "minus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error kind=usage"));
    assert_eq!(tool(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(tool(&["gen", "--config", tmp.path().join("none.json").to_str().unwrap()]).status.code(), Some(2));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(tool(&["gen", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let unknown = write_config(tmp.path(), |v| v["train"]["epochz"] = 3.into());
    let o = run("gen", &unknown, tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind=config"), "{}", stderr(&o));

    let axis = write_config(tmp.path(), |v| v["ablate"]["axes"] = serde_json::json!(["lr"]));
    assert!(run("gen", &axis, tmp.path()).status.success());
    assert_eq!(run("ablate", &axis, tmp.path()).status.code(), Some(2));

    let mismatch = write_config(tmp.path(), |v| v["model"]["input_resolution"] = serde_json::json!([32, 32]));
    assert_eq!(run("gen", &mismatch, tmp.path()).status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |_| {});
    let o = run("eval", &cfg, &tmp.path().join("empty"));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error kind=runtime"));
    assert!(run("gen", &cfg, tmp.path()).status.success());
    assert_eq!(run("distill", &cfg, tmp.path()).status.code(), Some(3), "no encoder checkpoint yet");
}

#[test]
fn ground_truth_scorer_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |v| v["eval"] = serde_json::json!({"scorer": {"kind": "ground_truth"}}));
    assert!(run("gen", &cfg, tmp.path()).status.success());
    let o = run("eval", &cfg, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let line = String::from_utf8_lossy(&o.stdout);
    assert!(line.contains("micro_auc=1 macro_auc=1"), "{line}");
    let csv = fs::read_to_string(tmp.path().join("reports/eval_auc.csv")).unwrap();
    assert!(csv.ends_with("micro,1\nmacro,1\n"), "{csv}");
}

#[test]
fn full_pipeline_and_bench_leave_checkpoints_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |_| {});
    for cmd in ["gen", "pretrain", "distill", "eval"] {
        let o = run(cmd, &cfg, tmp.path());
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).starts_with(&format!("{cmd} ok")));
    }
    let ckpt = tmp.path().join("checkpoints/student.ckpt");
    let before = fs::read(&ckpt).unwrap();
    let o = run("bench", &cfg, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&ckpt).unwrap(), before);
    let bench = fs::read_to_string(tmp.path().join("reports/bench.csv")).unwrap();
    assert_eq!(bench.lines().count(), 2);
}

#[test]
fn seed_flag_changes_training_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |_| {});
    let cfg = cfg.to_str().unwrap();
    let mut ckpts = Vec::new();
    for (dir, seed) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out = tmp.path().join(dir);
        let out = out.to_str().unwrap();
        for cmd in ["gen", "pretrain"] {
            assert!(tool(&[cmd, "--config", cfg, "--seed", seed, "--out", out]).status.success());
        }
        ckpts.push((
            tree(&tmp.path().join(dir).join("data")),
            fs::read(tmp.path().join(dir).join("checkpoints/encoder.ckpt")).unwrap(),
        ));
    }
    assert_eq!(ckpts[0], ckpts[1]);
    assert_eq!(ckpts[0].0, ckpts[2].0);
    assert_ne!(ckpts[0].1, ckpts[2].1);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let desk = swiftvad::pipeline::RunConfig::load(&dir.join("desk.json")).unwrap();
    let expected = common::desk_config(0);
    assert_eq!((desk.model, desk.train), (expected.model, expected.train));
    swiftvad::pipeline::RunConfig::load(&dir.join("tiny.json")).unwrap();
}
