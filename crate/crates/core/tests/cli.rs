//! The `vtcc` binary: subcommand outputs, exit codes and error lines.

use std::path::Path;
use std::process::{Command, Output};

fn vtcc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtcc"))
        .args(args)
        .current_dir(cwd)
        .env("VTCC_THREADS", "1")
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn assert_one_error_line(out: &Output, kind: &str) {
    let err = text(&out.stderr);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error[{kind}]: ")), "{err}");
}

#[test]
fn gen_train_eval_embed() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let out = vtcc(&["gen-data", "--classes", "2", "--per-class", "16", "--out", "d.bin"], cwd);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(std::fs::metadata(cwd.join("d.bin")).unwrap().len(), 20 + 32 * (2 + 1024));

    let cfg = cwd.join("c.cfg");
    std::fs::write(&cfg, "train.batch_size = 16\nmodel.clusters = 2\ntrain.epochs = 1\ntrain.eval_every = 1\n").unwrap();
    let out = vtcc(&["train", "--config", "c.cfg", "--seed", "1", "--out", "runs/1", "--data", "d.bin"], cwd);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.starts_with("report="), "{stdout}");
    let progress = text(&out.stderr);
    assert!(progress.starts_with("epoch 1 loss="), "{progress}");
    assert!(progress.contains(" nmi="), "{progress}");
    for f in ["report.json", "final.ckpt", "assignments.tsv"] {
        assert!(cwd.join("runs/1").join(f).is_file(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(cwd.join("runs/1/report.json")).unwrap()).unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 1);

    let out = vtcc(&["eval", "--ckpt", "runs/1/final.ckpt", "--data", "d.bin"], cwd);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let lines: Vec<String> = text(&out.stdout).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 3);
    for (line, key) in lines.iter().zip(["nmi=", "acc=", "ari="]) {
        let v: f64 = line.strip_prefix(key).unwrap().parse().unwrap();
        assert!(v.is_finite() && v <= 1.0);
    }
    // evaluation is deterministic through the binary as well
    let again = vtcc(&["eval", "--ckpt", "runs/1/final.ckpt", "--data", "d.bin"], cwd);
    assert_eq!(again.stdout, out.stdout);

    let out = vtcc(&["embed", "--ckpt", "runs/1/final.ckpt", "--data", "d.bin", "--out", "e.tsv"], cwd);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let tsv = std::fs::read_to_string(cwd.join("e.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 33);

    // resuming a finished run with a larger budget continues it
    let out = vtcc(
        &["train", "--config", "c.cfg", "--seed", "1", "--out", "runs/2", "--data", "d.bin", "--epochs", "2", "--resume", "runs/1/final.ckpt", "--quiet"],
        cwd,
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(out.stderr.is_empty());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["train", "--no-such-flag"], &[]] {
        let out = vtcc(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn runtime_errors_are_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let out = vtcc(&["eval", "--ckpt", "missing.ckpt", "--data", "missing.bin"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert_one_error_line(&out, "io");

    let out = vtcc(&["train", "--set", "model.bogus=1", "--data", "x.bin"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert_one_error_line(&out, "config");

    std::fs::write(cwd.join("junk.ckpt"), b"not a checkpoint").unwrap();
    std::fs::write(cwd.join("junk.bin"), b"VTCCDS01").unwrap();
    let out = vtcc(&["eval", "--ckpt", "junk.ckpt", "--data", "junk.bin"], cwd);
    assert_eq!(out.status.code(), Some(1));
    assert_one_error_line(&out, "checkpoint");

    let out = Command::new(env!("CARGO_BIN_EXE_vtcc"))
        .args(["gradcheck", "--ops-only"])
        .env("VTCC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_one_error_line(&out, "config");
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = vtcc(&["gradcheck", "--seed", "2"], dir.path());
    let stdout = text(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", text(&out.stderr));
    assert!(stdout.lines().last().unwrap().starts_with("gradcheck ok: "), "{stdout}");
    assert!(stdout.contains("end-to-end objective"));
}
