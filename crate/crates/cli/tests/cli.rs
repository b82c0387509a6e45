use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gardo(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gardo"))
        .args(args)
        .env("GARDO_RUN_ROOT", root)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &[&str] = &[
    "--set", "pretrain_steps=200",
    "--set", "iterations=6",
    "--set", "eval_every=3",
    "--set", "checkpoint_every=2",
    "--set", "eval_samples=256",
    "--set", "final_samples=300",
];

#[test]
fn presets_lists_worlds() {
    let dir = tempfile::tempdir().unwrap();
    let o = gardo(dir.path(), &["presets"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    for name in ["fig3", "fig3-hackable", "fig3-morl", "unit-gaussian"] {
        assert!(out.lines().any(|l| l.starts_with(&format!("{name}\t"))), "{out}");
    }
}

#[test]
fn bad_invocations_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&gardo(dir.path(), &[])), 2);
    assert_eq!(code(&gardo(dir.path(), &["train"])), 2);
    assert_eq!(code(&gardo(dir.path(), &["finetune", "--method", "ppo"])), 2);
    assert_eq!(code(&gardo(dir.path(), &["oracle", "--preset", "nope"])), 2);
    assert_eq!(code(&gardo(dir.path(), &["finetune", "--set", "beta"])), 2);
    assert_eq!(code(&gardo(dir.path(), &["eval", "--run", dir.path().to_str().unwrap()])), 2);
}

#[test]
fn malformed_config_reports_line_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "method = gardo\n\nbeta = -1\n").unwrap();
    let o = gardo(dir.path(), &["finetune", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("bad.cfg:3") && err.contains("beta"), "{err}");

    fs::write(&cfg, "warp_factor = 9\n").unwrap();
    let o = gardo(dir.path(), &["pretrain", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("warp_factor"));
}

#[test]
fn finetune_without_pretrained_model_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = gardo(dir.path(), &["finetune", "--seed", "1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("pretrain"), "{}", stderr(&o));
}

#[test]
fn oracle_reports_errors_below_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let o = gardo(dir.path(), &["oracle", "--beta", "0.04", "--preset", "fig3-hackable"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("beta=0.04 max_rel_error=") && line.trim_end().ends_with("ok"), "{line}");
    let o = gardo(dir.path(), &["oracle", "--beta", "-1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn plot_of_empty_metrics_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    fs::create_dir_all(&run).unwrap();
    fs::write(run.join("config.resolved"), "").unwrap();
    fs::write(run.join("metrics.csv"), "iteration,mean_proxy_reward,mean_true_reward,diversity,k,gated_fraction,kl_loss,reset,mode_coverage,wall_ms\n").unwrap();
    let o = gardo(dir.path(), &["plot", "--run", run.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("no metrics rows"));
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut pre = vec!["pretrain"];
    pre.extend_from_slice(TINY);
    let o = gardo(root, &pre);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(root.join("pretrain-fig3-s0/policy.ckpt").is_file());

    let mut ft = vec!["finetune", "--method", "gardo", "--seed", "1"];
    ft.extend_from_slice(TINY);
    let o = gardo(root, &ft);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = root.join("fig3-gardo-s1");
    assert_eq!(stdout(&o).trim(), run.display().to_string());
    for f in ["config.resolved", "metrics.csv", "policy.ckpt", "reference.ckpt", "samples.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let ckpts: Vec<String> = fs::read_dir(run.join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(ckpts.len(), 3, "{ckpts:?}");
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 7);

    // The run directory alone is enough for eval and plot.
    let o = gardo(root, &["eval", "--run", run.to_str().unwrap(), "--samples", "512"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
    assert!(run.join("eval.csv").is_file());

    let figs = root.join("figs");
    let o = gardo(root, &["plot", "--run", run.to_str().unwrap(), "--out", figs.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["reward_curve.svg", "kl_dynamics.svg", "samples_panel.svg"] {
        assert!(fs::read_to_string(figs.join(f)).unwrap().contains("</svg>"), "{f}");
    }

    // Same config and seed, different directory: byte-identical metrics.
    let again = root.join("again");
    let mut ft2 = ft.clone();
    ft2.extend_from_slice(&["--out", again.to_str().unwrap()]);
    let o = gardo(root, &ft2);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(again.join("metrics.csv")).unwrap(), metrics.as_bytes());
}
