use std::fs;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_perfect-gibbs"));
    cmd.env_remove("PERFECT_GIBBS_CAP");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const TRIANGLE: &[&str] = &["--graph", "random:3,1.0,7", "--model", "coloring", "--q", "3"];

#[test]
fn sample_emits_one_line_per_draw() {
    let out = run(&[
        "sample", "--model", "coloring", "--graph", "grid:3x3", "--q", "9", "--ell", "1",
        "--samples", "5", "--seed", "7",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    for line in lines {
        assert_eq!(line.split(' ').count(), 9);
        assert!(line.split(' ').all(|t| t.parse::<u32>().is_ok_and(|s| s < 9)));
    }
}

#[test]
fn identical_command_lines_are_byte_identical() {
    let args = [
        "sample", "--model", "hardcore", "--graph", "grid:4x4", "--lambda", "1.5",
        "--samples", "8", "--seed", "42",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);

    let mut with_jobs = args.to_vec();
    with_jobs.extend(["--jobs", "3"]);
    let c = run(&with_jobs);
    assert_eq!(a.stdout, c.stdout, "worker pool must not reorder trials");
}

#[test]
fn sample_out_writes_file_and_stats_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("draws.txt");
    let out = run(&[
        "sample", "--model", "coloring", "--graph", "random:3,1.0,7", "--q", "3",
        "--samples", "4", "--seed", "1", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    assert!(stdout_of(&out).is_empty());
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 4);
    let stats = fs::read_to_string(dir.path().join("draws.txt.stats.csv")).unwrap();
    let mut lines = stats.lines();
    assert_eq!(lines.next(), Some("trial,T"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn verify_passes_on_the_triangle() {
    let mut args = vec!["verify"];
    args.extend_from_slice(TRIANGLE);
    args.extend(["--ell", "1", "--samples", "4000", "--seed", "1"]);
    let out = run(&args);
    let text = stdout_of(&out);
    assert_eq!(code(&out), 0, "stdout: {text} stderr: {}", stderr_of(&out));
    assert!(text.contains("outcomes 6"));
    assert!(text.contains("tv_distance 0.0"));
    assert!(text.contains("verdict pass"));
}

#[test]
fn verify_catches_the_unfiltered_sweep() {
    let mut args = vec!["verify"];
    args.extend_from_slice(TRIANGLE);
    args.extend(["--samples", "600", "--seed", "1", "--unfiltered"]);
    let out = run(&args);
    assert_eq!(code(&out), 1, "stdout: {}", stdout_of(&out));
    assert!(stdout_of(&out).contains("verdict fail"));
}

#[test]
fn verify_in_rational_mode() {
    let out = run(&[
        "verify", "--graph", "random:2,1.0,1", "--model", "hardcore", "--lambda", "2",
        "--samples", "2000", "--seed", "5", "--numeric", "rational",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    assert!(stdout_of(&out).contains("outcomes 3"));
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(code(&run(&["frobnicate"])), 3);
    assert_eq!(code(&run(&["sample", "--graph", "grid:3x3"])), 3, "missing --model");
    assert_eq!(code(&run(&["sample", "--graph", "lattice:3x3", "--model", "hardcore"])), 3);
    assert_eq!(code(&run(&["sample", "--graph", "grid:3", "--model", "hardcore"])), 3);
    assert_eq!(
        code(&run(&["sample", "--graph", "grid:3x3", "--model", "coloring"])),
        3,
        "coloring without --q"
    );
    let probe_both = run(&["probe", "--graph", "grid:2x2", "--model", "hardcore", "--ssm", "--gamma"]);
    assert_eq!(code(&probe_both), 3);
    let no_kind = run(&["probe", "--graph", "grid:2x2", "--model", "hardcore"]);
    assert_eq!(code(&no_kind), 3);
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["sample", "--help"])), 0);
}

#[test]
fn cap_env_var_trips_resource_exit() {
    let mut args = vec!["verify"];
    args.extend_from_slice(TRIANGLE);
    args.extend(["--samples", "100"]);
    let out = bin().args(&args).env("PERFECT_GIBBS_CAP", "4").output().unwrap();
    assert_eq!(code(&out), 2, "stderr: {}", stderr_of(&out));

    let bad = bin().args(&args).env("PERFECT_GIBBS_CAP", "many").output().unwrap();
    assert_eq!(code(&bad), 3);
}

#[test]
fn bench_prints_csv() {
    let out = run(&[
        "bench", "--model", "coloring", "--q", "9", "--sizes", "4,16", "--trials", "2",
        "--ell", "1", "--seed", "3",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,trials,mean_T,sd_T,mean_ms,sd_ms,T_over_n");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("4,2,"));
    assert!(lines[2].starts_with("16,2,"));

    let odd = run(&["bench", "--model", "hardcore", "--sizes", "5", "--trials", "1"]);
    assert_eq!(code(&odd), 3, "non-square size");
}

#[test]
fn probe_gamma_reports_zero_with_warning_at_radius_zero() {
    let mut args = vec!["probe"];
    args.extend_from_slice(TRIANGLE);
    args.extend(["--gamma", "--ell", "0"]);
    let out = run(&args);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_of(&out).trim(), "gamma 0");
    assert!(stderr_of(&out).contains("warning"));

    let mut args = vec!["probe"];
    args.extend_from_slice(TRIANGLE);
    args.extend(["--gamma", "--ell", "1"]);
    let out = run(&args);
    assert_eq!(code(&out), 0);
    let text = stdout_of(&out);
    assert!(text.starts_with("gamma "));
    assert_ne!(text.trim(), "gamma 0");
}

#[test]
fn probe_ssm_on_an_edgeless_instance_certifies_everything() {
    let out = run(&[
        "probe", "--graph", "random:3,0.0,1", "--model", "hardcore", "--ssm", "--ell", "1",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert_eq!(text.matches("certified yes").count(), 3);
    assert!(text.contains("certified_ratio true"));
    assert!(text.contains("certified_weak true"));
}

const PAIR_INSTANCE: &str = r#"{
    "q": 2, "n": 2, "edges": [],
    "b": "uniform",
    "A": {"default": [[1, 1], [1, 1]]}
}"#;

#[test]
fn dynamic_applies_update_files() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("pair.json");
    fs::write(&inst, PAIR_INSTANCE).unwrap();
    let update = dir.path().join("add-edge.json");
    fs::write(&update, r#"{"edges": [{"edge": [0, 1], "matrix": [[2, 1], [1, 2]]}]}"#).unwrap();
    let graph = format!("file:{}", inst.display());
    let samples = dir.path().join("draws.txt");
    let out = run(&[
        "dynamic", "--graph", &graph, "--update", update.to_str().unwrap(),
        "--samples", "6", "--seed", "4", "--out", samples.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    let body = fs::read_to_string(&samples).unwrap();
    assert_eq!(body.lines().count(), 6);
    for line in body.lines() {
        assert_eq!(line.split(' ').count(), 2);
    }
    let stats = fs::read_to_string(dir.path().join("draws.txt.stats.csv")).unwrap();
    assert!(stats.starts_with("trial,T,repair_size\n"));
    // The update touches both endpoints, so every repair covers the pair.
    for row in stats.lines().skip(1) {
        assert!(row.ends_with(",2"));
    }

    let empty = dir.path().join("empty.json");
    fs::write(&empty, "{}").unwrap();
    let out = run(&[
        "dynamic", "--graph", &graph, "--update", empty.to_str().unwrap(), "--samples", "2",
        "--seed", "4",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout_of(&out).lines().count(), 2);
}

#[test]
fn file_sources_reject_model_flags() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("pair.json");
    fs::write(&inst, PAIR_INSTANCE).unwrap();
    let graph = format!("file:{}", inst.display());
    let out = run(&["sample", "--graph", &graph, "--model", "hardcore", "--samples", "1"]);
    assert_eq!(code(&out), 3);
    let ok = run(&["sample", "--graph", &graph, "--samples", "3", "--seed", "2"]);
    assert_eq!(code(&ok), 0, "stderr: {}", stderr_of(&ok));
    assert_eq!(stdout_of(&ok).lines().count(), 3);
}

#[test]
fn rational_sampling_runs() {
    let out = run(&[
        "sample", "--graph", "random:2,1.0,1", "--model", "hardcore", "--numeric", "rational",
        "--samples", "2", "--seed", "9",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    assert_eq!(stdout_of(&out).lines().count(), 2);
}
