use std::path::Path;
use std::process::{Command, Output};

fn lab(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_consol-lab"))
        .args(args)
        .env("CONSOL_LAB_DIR", root)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lab(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(lab(dir.path(), &["verify", "--suite", "everything"]).status.code(), Some(1));
    assert_eq!(lab(dir.path(), &["consolidate", "--schedule", "alt:0", "--experts", "x"]).status.code(), Some(1));
    assert_eq!(lab(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["train-expert", "--task", "mini-chess", "--steps", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mini-chess"));
    let missing = dir.path().join("missing");
    let out = lab(dir.path(), &["transfer", "--mechanism", "transplant", "--source", missing.to_str().unwrap(), "--task", "mini-pong"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn verify_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["verify", "--suite", "surgery"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 4);
    assert!(!text.contains("[FAIL]"));
}

#[test]
fn train_consolidate_transfer_chain_under_run_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["train-expert", "--task", "mini-pong", "--steps", "600", "--seed", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let expert = dir.path().join("experts/mini-pong-2/mini-pong");
    assert!(expert.join("checkpoint/manifest.json").exists());
    let csv = std::fs::read_to_string(expert.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("iteration,env_steps,mean_return,episodes,epsilon,percent_of_expert"));

    let out = lab(
        dir.path(),
        &["consolidate", "--experts", expert.to_str().unwrap(), "--schedule", "alt:100", "--steps", "400"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("of expert"));
    let student = dir.path().join("consolidated/alt-100-0");
    assert!(student.join("amn/checkpoint/manifest.json").exists());

    for mechanism in ["transplant", "lateral", "layers:2"] {
        let out = lab(
            dir.path(),
            &["transfer", "--mechanism", mechanism, "--source", student.to_str().unwrap(), "--task", "mini-pong", "--steps", "300"],
        );
        assert_eq!(out.status.code(), Some(0), "{mechanism}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = lab(
        dir.path(),
        &["transfer", "--mechanism", "layers:3", "--source", expert.to_str().unwrap(), "--task", "mini-breakout", "--steps", "300"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn cycle_and_report_write_figures() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cycle.toml");
    std::fs::write(
        &config,
        r#"
        phase1_tasks = ["mini-pong"]
        phase2_tasks = ["mini-pong"]
        seeds = [4]
        [active]
        total_steps = 600
        iteration_steps = 300
        warmup = 100
        eval_episodes = 1
        [passive]
        total_steps = 400
        iteration_steps = 200
        warmup = 50
        eval_episodes = 1
        baseline_episodes = 2
        "#,
    )
    .unwrap();
    let out = lab(dir.path(), &["cycle", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let hash_dir = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .unwrap();
    let figures = dir.path().join("figures");
    for figure in ["fig1", "fig3", "fig5"] {
        let out = lab(
            dir.path(),
            &["report", "--runs", hash_dir.to_str().unwrap(), "--figure", figure, "--out", figures.to_str().unwrap()],
        );
        assert_eq!(out.status.code(), Some(0), "{figure}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(figures.join(format!("{figure}.svg")).exists());
    }
}
