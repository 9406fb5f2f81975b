//! End-to-end runs of the `uavsim` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use uavsim::experiment::{CSV_HEADER, SWEEP_HEADER};

fn uavsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = uavsim(args);
    assert!(
        out.status.success(),
        "uavsim {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn same_seed_gives_byte_identical_csv() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    for out in [&a, &b] {
        ok(&[
            "run",
            "--algorithm",
            "opponent-q",
            "--cycles",
            "30",
            "--seeds",
            "1,2",
            "--out",
            s(out),
        ]);
    }
    let (a, b) = (fs::read(a).unwrap(), fs::read(b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn one_uav_one_cycle_writes_header_and_one_row() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "run.csv");
    ok(&[
        "run",
        "--config",
        &config("power.toml"),
        "--algorithm",
        "actor-critic-power",
        "--cycles",
        "1",
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(
        lines[1].split(',').count(),
        CSV_HEADER.split(',').count(),
        "{}",
        lines[1]
    );
    assert!(lines[1].starts_with("actor-critic-power-s1,1,actor-critic-power,0,1,"));
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let dir = TempDir::new().unwrap();
    let bad = path(&dir, "bad.toml");
    let text = fs::read_to_string(config("bandit.toml")).unwrap();
    fs::write(
        &bad,
        text.replace("[run]\n", "[run]\nframes_per_cylce = 3\n"),
    )
    .unwrap();
    let out = uavsim(&[
        "run",
        "--config",
        s(&bad),
        "--algorithm",
        "bandit-assoc",
        "--out",
        s(&path(&dir, "x.csv")),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("frames_per_cylce"), "{stderr}");
}

/// Splits a CSV into its header and per-seed row lists.
fn rows_by_seed(text: &str) -> (String, Vec<(String, Vec<String>)>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let mut seeds: Vec<(String, Vec<String>)> = Vec::new();
    for line in lines {
        let run = line.split(',').next().unwrap().to_string();
        match seeds.last_mut() {
            Some((r, rows)) if *r == run => rows.push(line.to_string()),
            _ => seeds.push((run, vec![line.to_string()])),
        }
    }
    (header, seeds)
}

fn check_resume(config_path: Option<&str>, algorithm: &str, half: u64) {
    let dir = TempDir::new().unwrap();
    let cfg: Vec<&str> = match config_path {
        Some(p) => vec!["--config", p],
        None => vec![],
    };
    let run = |cycles: u64, out: &Path, extra: &[&str]| {
        let cycles = cycles.to_string();
        let mut args = vec![
            "run",
            "--algorithm",
            algorithm,
            "--seeds",
            "5,6",
            "--cycles",
            &cycles,
            "--out",
            s(out),
        ];
        args.extend(&cfg);
        args.extend(extra);
        ok(&args);
    };
    let (full, first, second) = (
        path(&dir, "full.csv"),
        path(&dir, "first.csv"),
        path(&dir, "second.csv"),
    );
    let ckpt = path(&dir, "ckpt.json");
    run(2 * half, &full, &[]);
    run(half, &first, &["--checkpoint", s(&ckpt)]);
    run(half, &second, &["--resume", s(&ckpt)]);

    let (h_full, full) = rows_by_seed(&fs::read_to_string(full).unwrap());
    let (h_first, first) = rows_by_seed(&fs::read_to_string(first).unwrap());
    let (h_second, second) = rows_by_seed(&fs::read_to_string(second).unwrap());
    assert_eq!(h_full, h_first);
    assert_eq!(h_full, h_second);
    assert_eq!(full.len(), 2);
    for ((run, all), ((_, a), (_, b))) in full.iter().zip(first.iter().zip(&second)) {
        let joined: Vec<String> = a.iter().chain(b).cloned().collect();
        assert_eq!(
            all, &joined,
            "{algorithm} run {run} diverged after resuming"
        );
    }
}

#[test]
fn resumed_runs_match_uninterrupted_runs() {
    // The two-cell scenario explores at a constant rate, and the power
    // scenario fixes its exploration horizon, so neither depends on the
    // run length.
    check_resume(None, "enhanced-q", 40);
    check_resume(Some(&config("power.toml")), "actor-critic-power", 40);

    // The allocation scenario decays exploration over the run; pin the
    // horizon so both halves share one schedule.
    let dir = TempDir::new().unwrap();
    let pinned = path(&dir, "dqn.toml");
    let text = fs::read_to_string(config("dqn_toy.toml")).unwrap();
    fs::write(
        &pinned,
        text.replace("[run.agents]\n", "[run.agents]\nepsilon_horizon = 80\n"),
    )
    .unwrap();
    check_resume(Some(s(&pinned)), "dqn-alloc", 40);
}

#[test]
fn resume_refuses_a_checkpoint_from_another_algorithm() {
    let dir = TempDir::new().unwrap();
    let ckpt = path(&dir, "ckpt.json");
    ok(&[
        "run",
        "--algorithm",
        "single-q",
        "--cycles",
        "3",
        "--out",
        s(&path(&dir, "a.csv")),
        "--checkpoint",
        s(&ckpt),
    ]);
    let out = uavsim(&[
        "run",
        "--algorithm",
        "opponent-q",
        "--cycles",
        "3",
        "--out",
        s(&path(&dir, "b.csv")),
        "--resume",
        s(&ckpt),
    ]);
    assert!(!out.status.success());
}

#[test]
fn sweep_writes_one_row_per_run() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "sweep.csv");
    ok(&[
        "sweep-distance",
        "--algorithm",
        "single-q,enhanced-q",
        "--distances",
        "100,300",
        "--seeds",
        "1,2,3",
        "--cycles",
        "20",
        "--window",
        "5",
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], SWEEP_HEADER);
    assert_eq!(lines.len(), 1 + 2 * 2 * 3);
}

#[test]
fn selftest_passes() {
    let out = ok(&["selftest"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[PASS]"));
    assert!(!stdout.contains("[FAIL]"));
}

#[test]
fn seed_defaults_to_the_scenario_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "seed7.toml");
    let text = fs::read_to_string(config("bandit.toml")).unwrap();
    fs::write(&cfg, text.replace("seed = 1\n", "seed = 7\n")).unwrap();
    let (implicit, explicit) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    let base = [
        "run",
        "--config",
        s(&cfg),
        "--algorithm",
        "bandit-assoc",
        "--cycles",
        "5",
    ];
    ok(&[&base[..], &["--out", s(&implicit)]].concat());
    ok(&[&base[..], &["--out", s(&explicit), "--seeds", "7"]].concat());
    let text = fs::read_to_string(&implicit).unwrap();
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("bandit-assoc-s7,7,"));
    assert_eq!(text, fs::read_to_string(explicit).unwrap());
}
