use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toposample")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn deterministic_commands_succeed() {
    let csv = stdout(&["density", "--family", "chebyshev", "--n", "5", "--points", "11"]);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("x,c,c_cbrt,s,d"));
    assert_eq!(lines.count(), 11);
    assert!(!csv.contains('\r'));

    let grid = stdout(&["grid", "--family", "binomial", "--n", "4", "--m", "6"]);
    assert_eq!(grid.lines().count(), 8);

    let bound = stdout(&["bound", "--family", "chebyshev", "--n", "5", "--p", "0.95", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&bound).unwrap();
    assert_eq!(v["metadata"]["command"], "bound");
    assert!(v["columns"].is_array());
    assert!(v["rows"].as_array().map_or(false, |r| !r.is_empty()));
}

#[test]
fn exit_codes() {
    // stochastic command without a seed
    assert_eq!(code(&["experiment", "--family", "chebyshev", "--n", "5", "--m", "8", "--trials", "10"]), 2);
    // unknown family
    assert_eq!(code(&["density", "--family", "legendre", "--n", "5"]), 2);
    // both a sample count and a probability
    assert_eq!(
        code(&["experiment", "--family", "chebyshev", "--n", "5", "--m", "8", "--p", "0.9", "--seed", "1"]),
        2
    );
    // clap usage error
    assert_eq!(code(&["density", "--bogus"]), 2);
    // a density that vanishes everywhere
    assert_eq!(code(&["density", "--family", "constant"]), 3);
    // unwritable output
    assert_eq!(
        code(&["density", "--family", "chebyshev", "--n", "3", "--output", "/nonexistent/dir/out.csv"]),
        1
    );
    // coarse spacings cannot meet the eigen-expansion tolerance
    let coarse = ["orthant-check", "--mode", "eigen", "--family", "binomial", "--n", "5", "--deltas", "0.5,0.25"];
    assert_eq!(code(&coarse), 0);
    let mut strict = coarse.to_vec();
    strict.push("--validate");
    assert_eq!(code(&strict), 4);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[model]\nfamily = \"chebyshev\"\nn = 5\n\n[run]\nstrategy = \"uniform\"\nm = 8\ntrials = 200\nseed = 9\n",
    )
    .unwrap();
    let from_file = stdout(&["experiment", "--config", path_str(&cfg), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&from_file).unwrap();
    assert_eq!(v["metadata"]["seed"], 9);
    assert_eq!(v["metadata"]["config"]["model"]["family"], "chebyshev");
    assert_eq!(v["rows"][0]["strategy"], "uniform");
    assert_eq!(v["rows"][0]["trials"], 200);

    let overridden = stdout(&["experiment", "--config", path_str(&cfg), "--trials", "50", "--seed", "3", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&overridden).unwrap();
    assert_eq!(v["metadata"]["seed"], 3);
    assert_eq!(v["rows"][0]["trials"], 50);

    fs::write(&cfg, "[model]\nfamily = \"chebyshev\"\nn = 5\ncolour = 3\n").unwrap();
    assert_eq!(code(&["density", "--config", path_str(&cfg)]), 2);
}

#[test]
fn per_trial_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("trials.csv");
    stdout(&[
        "experiment", "--family", "cosine", "--n", "4", "--m", "6", "--trials", "25", "--seed", "5",
        "--per-trial-log", path_str(&log),
    ]);
    let text = fs::read_to_string(&log).unwrap();
    assert!(text.lines().next().unwrap().starts_with("trial,"));
    assert_eq!(text.lines().count(), 26);
}

#[test]
fn outputs_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let commands: [&[&str]; 5] = [
        &["experiment", "--family", "chebyshev", "--n", "5", "--p", "0.9", "--trials", "300", "--seed", "4"],
        &["compare", "--family", "binomial", "--n", "5", "--m", "6", "--trials", "300", "--seed", "4"],
        &["zeros", "--family", "cosine", "--n", "5", "--trials", "300", "--seed", "4"],
        &["orthant-check", "--mode", "crossover", "--family", "periodic", "--n", "5", "--trials", "200000", "--seed", "4"],
        &["orthant-check", "--mode", "s-alpha", "--count", "20", "--seed", "4"],
    ];
    for (i, args) in commands.iter().enumerate() {
        let mut files = Vec::new();
        for threads in ["1", "4"] {
            let out = dir.path().join(format!("{i}-{threads}.csv"));
            let mut full = args.to_vec();
            full.extend(["--threads", threads, "--output", path_str(&out)]);
            stdout(&full);
            files.push(fs::read(&out).unwrap());
        }
        assert_eq!(files[0], files[1], "{args:?}");
    }
}
