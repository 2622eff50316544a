//! End-to-end runs of the `rwre` binary through its public surface.

use std::path::Path;
use std::process::{Command, Output};

use rwre_core::table::ResultTable;

fn rwre() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rwre"))
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const VELOCITY_TOY: &str = "experiment = velocity\nseed = 11\nrun.trials = 10\nrun.n = 50\n";

#[test]
fn velocity_run_writes_a_parseable_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.conf", VELOCITY_TOY);
    let out_path = dir.path().join("v.csv");
    let out = rwre().args(["velocity", "--config"]).arg(&cfg).arg("--out").arg(&out_path).output().unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("# rwre-table v1\n"));
    assert!(text.contains("\ntrial,x1_over_n,x2_over_n\n"));
    let table = ResultTable::parse(&text).unwrap();
    assert_eq!(table.rows.len(), 10);
    assert!(stderr_of(&out).contains("10 rows"));
}

#[test]
fn default_output_lands_in_the_kind_named_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = rwre()
        .args(["torus", "--seed", "3"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert!(dir.path().join("torus.csv").is_file());
}

#[test]
fn reruns_and_thread_counts_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.conf", VELOCITY_TOY);
    let mut bytes = Vec::new();
    for (name, threads) in [("a.csv", "1"), ("b.csv", "8"), ("c.csv", "1")] {
        let out_path = dir.path().join(name);
        let out = rwre()
            .args(["velocity", "--threads", threads, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_path)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
        bytes.push(std::fs::read(&out_path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1], "thread count changed the bytes");
    assert_eq!(bytes[1], bytes[2], "rerun changed the bytes");
}

#[test]
fn unknown_keys_are_rejected_with_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.conf",
        "experiment = velocity\nrun.trials = 10\nrun.bogus = 1\n",
    );
    let out = rwre().args(["velocity", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("run.bogus"), "stderr: {err}");
    assert!(err.contains("line 3"), "stderr: {err}");
}

#[test]
fn config_kind_must_match_the_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.conf", VELOCITY_TOY);
    let out = rwre().args(["condt", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("velocity") && err.contains("condt"), "stderr: {err}");
}

#[test]
fn replay_check_distinguishes_equal_from_different() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    std::fs::write(&a, "same bytes\n").unwrap();
    std::fs::write(&b, "same bytes\n").unwrap();
    std::fs::write(&c, "other bytes\n").unwrap();
    let same = rwre().arg("replay-check").arg(&a).arg(&b).output().unwrap();
    assert!(same.status.success());
    assert!(stdout_of(&same).contains("identical"));
    let differ = rwre().arg("replay-check").arg(&a).arg(&c).output().unwrap();
    assert_eq!(differ.status.code(), Some(1));
    assert!(stdout_of(&differ).contains("different"));
    let missing = rwre().arg("replay-check").arg(&a).arg(dir.path().join("nope.csv")).output().unwrap();
    assert_eq!(missing.status.code(), Some(4));
}

#[test]
fn summarize_recovers_a_planted_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut table = ResultTable::new(&["x", "y"]).unwrap();
    for i in 0..9 {
        let x = i as f64;
        table.push_row(&[x, 2.0 * x + 1.0]);
    }
    let path = dir.path().join("line.csv");
    table.write_to(&path).unwrap();
    let out = rwre().arg("summarize").arg(&path).output().unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("y ~ x"), "stdout: {text}");
    assert!(text.contains("slope 2 "), "stdout: {text}");
    assert!(text.contains("intercept 1 "), "stdout: {text}");
    assert!(text.contains("r2 1 "), "stdout: {text}");

    let empty = ResultTable::new(&["x", "y"]).unwrap();
    let empty_path = dir.path().join("empty.csv");
    empty.write_to(&empty_path).unwrap();
    let out = rwre().arg("summarize").arg(&empty_path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resource_guards_use_their_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "t.conf",
        "experiment = torus\ndim = 3\nrun.l = 17\nrun.n = 10\n",
    );
    let out = rwre().args(["torus", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_of(&out).contains("resource guard"), "stderr: {}", stderr_of(&out));
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.conf", VELOCITY_TOY);
    let base = dir.path().join("base.csv");
    let reseeded = dir.path().join("reseeded.csv");
    for (path, seed) in [(&base, None), (&reseeded, Some("99"))] {
        let mut cmd = rwre();
        cmd.args(["velocity", "--config"]).arg(&cfg).arg("--out").arg(path);
        if let Some(seed) = seed {
            cmd.args(["--seed", seed]);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    }
    let a = std::fs::read_to_string(&base).unwrap();
    let b = std::fs::read_to_string(&reseeded).unwrap();
    assert_ne!(a, b, "a new seed must change the sampled rows");
    assert!(a.contains("seed = 11") && b.contains("seed = 99"));
}
