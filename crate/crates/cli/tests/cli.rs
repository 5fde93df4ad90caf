//! End-to-end tests of the `rnic` binary. Golden outputs live in
//! `tests/golden`; run with `UPDATE_GOLDEN=1` to regenerate them.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rnic_core::CoarseState;

fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/models")
}

fn rnic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rnic")).args(args).current_dir(models_dir()).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Compares `text` with `golden/<name>.txt`, or rewrites it under
/// `UPDATE_GOLDEN=1`.
fn check_golden(name: &str, text: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, text).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}; run with UPDATE_GOLDEN=1", path.display()));
    assert_eq!(text, want, "output differs from {}", path.display());
}

fn golden(name: &str, args: &[&str]) -> Output {
    let o = rnic(args);
    check_golden(name, &format!("exit: {}\n--- stdout\n{}--- stderr\n{}", code(&o), stdout(&o), stderr(&o)));
    o
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn compartments(state: &serde_json::Value) -> u64 {
    state.as_str().unwrap().parse::<CoarseState>().unwrap().num_compartments()
}

#[test]
fn validate_goldens() {
    assert_eq!(code(&golden("validate_ex2_3", &["validate", "--model", "ex2_3.rnic"])), 0);
    let o = golden("validate_ex4_13", &["validate", "--model", "ex4_13.rnic"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("warning: conservation law: total A+B preserved by chemistry"));
    let o = golden("validate_malformed", &["validate", "--model", "malformed.rnic"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"));
}

#[test]
fn simulate_goldens() {
    for seed in ["1", "2", "3"] {
        let o = golden(
            &format!("simulate_ex2_3_seed{seed}"),
            &["simulate", "--model", "ex2_3.rnic", "--seed", seed, "--t-end", "2", "--init", "[(3,4)]"],
        );
        assert_eq!(code(&o), 0);
    }
}

#[test]
fn simulate_long_run_time_average_exceeds_threshold() {
    let o = golden(
        "simulate_ex4_17_seed1",
        &["simulate", "--model", "ex4_17.rnic", "--seed", "1", "--t-end", "2000", "--init", "[(3,0),(3,0),(3,0)]"],
    );
    assert_eq!(code(&o), 0);
    let j = json(&o);
    assert_eq!(j["end_reason"], "TimeReached");
    assert!(j["totals_per_time"]["A"].as_f64().unwrap() >= 1.41, "{j}");
}

#[test]
fn simulate_pure_gain_totals_never_shrink() {
    for seed in 1..=5 {
        let o = rnic(&["simulate", "--model", "ex4_10.rnic", "--seed", &seed.to_string(), "--t-end", "20"]);
        assert_eq!(code(&o), 0);
        let j = json(&o);
        assert_eq!(j["total_monotone"]["S"], true, "seed {seed}");
        assert!(j["events"].as_u64().unwrap() > 0);
    }
}

#[test]
fn simulate_frozen_model_has_no_events() {
    let o = rnic(&["simulate", "--model", "frozen.rnic", "--t-end", "5"]);
    assert_eq!(code(&o), 0);
    let j = json(&o);
    assert_eq!(j["events"], 0);
    assert_eq!(j["end_reason"], "TimeReached");
    assert_eq!(j["end_time"], 5.0);
}

#[test]
fn simulate_event_log_has_one_line_per_event() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("traj.jsonl");
    let o = rnic(&[
        "simulate",
        "--model",
        "ex2_3.rnic",
        "--seed",
        "4",
        "--t-end",
        "3",
        "--init",
        "[(3,4)]",
        "--out",
        log.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let events = json(&o)["events"].as_u64().unwrap();
    let text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text.lines().count() as u64, events);
    let mut last_t = 0.0;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let t = v["t"].as_f64().unwrap();
        assert!(t >= last_t && t <= 3.0);
        last_t = t;
        assert!(v["kind"].is_string() && v["args"].is_array() && v["digest"].is_u64());
    }
}

#[test]
fn simulate_strict_cap_is_a_guard_failure() {
    let args = ["simulate", "--model", "ex4_10.rnic", "--t-end", "100", "--max-events", "10"];
    let o = rnic(&args);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["end_reason"], "MaxEventsReached");
    assert!(stderr(&o).contains("event cap"));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(code(&rnic(&strict)), 4);
}

#[test]
fn classify_goldens() {
    let o = golden("classify_ex4_8_even", &["classify", "--model", "ex4_8.rnic", "--state", "{(2):1}"]);
    assert!(stdout(&o).contains("verdict: PositiveRecurrent"));
    assert!(stdout(&o).contains("compartment chain: PositiveRecurrent"));
    assert!(stdout(&o).contains("reachable from the empty state in 2 transitions"));
    let o = golden("classify_ex4_8_odd", &["classify", "--model", "ex4_8.rnic", "--state", "{(1):1}", "--depth", "6"]);
    assert!(stdout(&o).contains("not reached from the empty state within depth 6"));
    let o = golden("classify_ex4_8_empty", &["classify", "--model", "ex4_8.rnic", "--state", "{}"]);
    assert!(stdout(&o).contains("reachable from the empty state in 0 transitions"));
    assert_eq!(code(&o), 0);
}

#[test]
fn classify_accepts_compartment_lists() {
    let a = rnic(&["classify", "--model", "ex4_8.rnic", "--state", "[(2),(0)]"]);
    let b = rnic(&["classify", "--model", "ex4_8.rnic", "--state", "{(0):1,(2):1}"]);
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn lyapunov_goldens() {
    let o = golden(
        "lyapunov_ex4_16_transience",
        &["lyapunov", "--model", "ex4_16.rnic", "--function", "ex4_16", "--max-c", "5", "--box", "20", "--mode", "transience"],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["verdict"], "HypothesisHolds");
    let o = golden(
        "lyapunov_ex4_13_exceptional",
        &["lyapunov", "--model", "ex4_13.rnic", "--function", "ex4_13", "--max-c", "6", "--box", "1,1", "--exceptional-c", "0-3"],
    );
    assert_eq!(code(&o), 0);
    let j = json(&o);
    let exceptional = j["exceptional_set"].as_array().unwrap();
    assert!(!exceptional.is_empty());
    assert!(exceptional.iter().all(|s| compartments(s) <= 3));
    let o = golden(
        "lyapunov_zero_function",
        &["lyapunov", "--model", "ex4_16.rnic", "--function", "0", "--max-c", "1", "--box", "1"],
    );
    assert_eq!(code(&o), 5);
    assert_eq!(json(&o)["verdict"], "HypothesisFailsAtListedStates");
}

#[test]
fn lyapunov_expression_matches_builtin() {
    let run = |f: &str| {
        let o = rnic(&[
            "lyapunov",
            "--model",
            "ex4_11.rnic",
            "--function",
            f,
            "--max-c",
            "3",
            "--box",
            "6,6",
            "--exceptional-c",
            "1",
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        json(&o)
    };
    assert_eq!(run("ex4_11"), run("B == 0 ? A + B + 5C + 7 : A + B + 5C - 1"));
}

#[test]
fn lyapunov_recurrence_fails_without_exceptional_set() {
    let o = rnic(&["lyapunov", "--model", "ex4_13.rnic", "--function", "ex4_13", "--max-c", "6", "--box", "1,1"]);
    assert_eq!(code(&o), 5);
    let j = json(&o);
    // 2 + 2C - C(C-1) <= -1 exactly when C >= 4
    let violations = j["violations"].as_array().unwrap();
    assert!(!violations.is_empty());
    for v in violations {
        let c = compartments(&v["state"]) as f64;
        assert_eq!(v["value"].as_f64().unwrap(), 2.0 + 2.0 * c - c * (c - 1.0));
        assert!(c <= 3.0);
    }
}

#[test]
fn lyapunov_unknown_or_malformed_function_exits_6() {
    for f in ["nope", "A +", "Q + 1", "ex4_11"] {
        let o = rnic(&["lyapunov", "--model", "ex4_16.rnic", "--function", f, "--box", "2"]);
        assert_eq!(code(&o), 6, "{f}: {}", stderr(&o));
    }
}

#[test]
fn stationary_goldens() {
    let o = golden("stationary_ex5_2", &["stationary", "--model", "ex5_2.rnic", "--box", "40"]);
    assert_eq!(code(&o), 0);
    let mean = json(&o)["alpha_mean"][0].as_f64().unwrap();
    assert!((mean - 2.5).abs() < 1e-9, "{mean}");
    let o = golden("stationary_coag_precondition", &["stationary", "--model", "coag.rnic", "--box", "10"]);
    assert_eq!(code(&o), 7);
    assert!(stderr(&o).contains("kappa_F = kappa_C = 0"));
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("alpha.csv");
    let o = rnic(&["stationary", "--model", "ex5_4.rnic", "--box", "30", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    check_golden("stationary_ex5_4_table", &std::fs::read_to_string(&csv).unwrap());
}

fn read_alpha_csv(path: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("S,alpha"));
    lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
}

#[test]
fn stationary_routes_agree_on_uniform_inflow() {
    let dir = tempfile::tempdir().unwrap();
    let table = |route: &str| {
        let p = dir.path().join(format!("{route}.csv"));
        let o = rnic(&["stationary", "--model", "ex5_4.rnic", "--box", "30", "--route", route, "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        read_alpha_csv(&p)
    };
    let closed = table("closed-form");
    let cme = table("cme");
    assert_eq!(closed.len(), 31);
    let err = closed.iter().zip(&cme).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
    // pure birth at rate 1 with Exponential(1) lifetimes: a shift of the
    // uniform start by a Geometric(1/2) count
    for (x, a) in closed.iter().enumerate() {
        let want: f64 = (0..=2.min(x)).map(|s| 0.5f64.powi((x - s + 1) as i32) / 3.0).sum();
        assert!((a - want).abs() < 1e-9, "x={x}: {a} vs {want}");
    }
}

#[test]
fn stationary_json_format_and_small_box() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("alpha.json");
    let o = rnic(&["stationary", "--model", "ex5_2.rnic", "--box", "40", "--format", "json", "--out", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(t["values"].as_array().unwrap().len(), 41);
    assert_eq!(code(&rnic(&["stationary", "--model", "ex5_2.rnic", "--box", "5"])), 2);
}

#[test]
fn ensemble_goldens() {
    for seed in ["1", "2", "3"] {
        let o = golden(
            &format!("ensemble_ex5_2_seed{seed}"),
            &["ensemble", "--model", "ex5_2.rnic", "--samples", "linspace:0:10:6", "--n-traj", "3", "--seed", seed],
        );
        assert_eq!(code(&o), 0);
    }
}

#[test]
fn ensemble_does_not_depend_on_thread_count() {
    let run = |threads: &str| {
        let o = rnic(&[
            "--threads",
            threads,
            "ensemble",
            "--model",
            "ex2_3.rnic",
            "--samples",
            "0.5,1,2",
            "--n-traj",
            "16",
            "--seed",
            "9",
            "--init",
            "[(3,4)]",
        ]);
        assert_eq!(code(&o), 0);
        stdout(&o)
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn ensemble_strict_cap_and_bad_samples() {
    let o = rnic(&["ensemble", "--model", "ex4_10.rnic", "--samples", "10,20", "--max-events", "50", "--strict"]);
    assert_eq!(code(&o), 4);
    let o = rnic(&["ensemble", "--model", "ex4_10.rnic", "--samples", "linspace:0:1"]);
    assert_eq!(code(&o), 2);
    let o = rnic(&["ensemble", "--model", "ex4_10.rnic", "--samples", "1", "--format", "json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn compare_goldens() {
    for seed in ["1", "2", "3"] {
        let o = golden(
            &format!("compare_ex5_2_seed{seed}"),
            &["compare", "--model", "ex5_2.rnic", "--box", "40", "--t-end", "2000", "--seed", seed],
        );
        assert_eq!(code(&o), 0);
        let j = json(&o);
        assert_eq!(j["burn_in"], 10.0);
        assert_eq!(j["samples"], 1991);
        assert!(j["flags"].as_array().unwrap().is_empty());
    }
}

#[test]
fn compare_long_run_is_close_to_product_form() {
    let o = rnic(&[
        "compare",
        "--model",
        "ex5_2.rnic",
        "--box",
        "40",
        "--t-end",
        "50000",
        "--dt",
        "2",
        "--seed",
        "5",
        "--n-traj",
        "2",
    ]);
    assert_eq!(code(&o), 0);
    let j = json(&o);
    assert!(j["tv_compartment_count"].as_f64().unwrap() < 0.02, "{j}");
    assert!(j["tv_content"].as_f64().unwrap() < 0.02, "{j}");
}

#[test]
fn compare_needs_product_form_hypotheses() {
    let o = rnic(&["compare", "--model", "coag.rnic", "--box", "10", "--t-end", "100"]);
    assert_eq!(code(&o), 7);
}

#[test]
fn io_and_usage_errors() {
    assert_eq!(code(&rnic(&["validate", "--model", "missing.rnic"])), 3);
    let dir = tempfile::tempdir().unwrap();
    let bad_out = dir.path().join("no/such/dir/out.json");
    let o =
        rnic(&["lyapunov", "--model", "ex4_16.rnic", "--function", "ex4_16", "--box", "2", "--out", bad_out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&rnic(&["simulate", "--model", "ex2_3.rnic", "--t-end", "1", "--init", "[(1)]"])), 2);
    assert_eq!(code(&rnic(&["classify", "--model", "ex2_3.rnic", "--state", "{(1"])), 2);
    assert_eq!(code(&rnic(&["simulate", "--model", "ex2_3.rnic"])), 2);
}
