mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cbs_rv::model::{builtin_task, parse_model};
use cbs_rv::semantics::{replay, run_global, EngineConfig, Label, Trace};
use cbs_rv::trace_io::{read_trace, write_trace, TraceFile};
use cbs_rv::witness::interactions_of;
use serde_json::Value;
use tempfile::TempDir;

use common::task_partial;

fn cbs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbs-rv"))
        .args(args)
        .env("CBS_RV_LOG", "off")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cbs(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    cbs(args).status.code().expect("exit code")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn monitored_run_counts_one_delivery_per_interaction() {
    let rep = json(&ok(&[
        "run",
        "builtin:task",
        "--mode",
        "monitored",
        "--monitor",
        "builtin:task",
        "--seed",
        "7",
        "--steps",
        "50",
        "--json",
    ]));
    assert_eq!(rep["gamma"], 50);
    assert_eq!(rep["delivered"], 50);
    assert_eq!(
        rep["extra"].as_u64().unwrap(),
        rep["beta"].as_u64().unwrap() + rep["delivered"].as_u64().unwrap()
    );
    let verdicts: u64 = rep["verdicts"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(verdicts, 50);
}

#[test]
fn zero_steps_records_only_the_initial_state() {
    let dir = TempDir::new().unwrap();
    let t = path(&dir, "init.trace");
    for mode in ["global", "partial"] {
        ok(&["run", "builtin:task", "--mode", mode, "--steps", "0", "-o", &t]);
        let f = read_trace(&fs::read_to_string(&t).unwrap()).unwrap();
        assert!(f.trace.steps.is_empty(), "{mode}");
        assert_eq!(f.trace.initial, builtin_task().initial_state());
        let w = ok(&["witness", &t]);
        assert_eq!(w.lines().filter(|l| l.starts_with("STATE ")).count(), 1);
        assert_eq!(w.lines().filter(|l| l.starts_with("LABEL ")).count(), 0);
    }
}

#[test]
fn same_seed_gives_identical_reports_and_traces() {
    let dir = TempDir::new().unwrap();
    let mut runs = Vec::new();
    for (name, format) in [("a", "text"), ("b", "text"), ("c", "json"), ("d", "json")] {
        let t = path(&dir, name);
        let mut rep = json(&ok(&[
            "run",
            "builtin:readers-writers",
            "--mode",
            "monitored",
            "--monitor",
            "builtin:readers-writers",
            "--seed",
            "11",
            "--steps",
            "40",
            "--json",
            "--format",
            format,
            "-o",
            &t,
        ]));
        let o = rep.as_object_mut().unwrap();
        o.remove("wall_time_ms");
        o.remove("trace_path");
        runs.push((rep, fs::read_to_string(&t).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[2], runs[3]);
    assert_eq!(runs[0].0, runs[2].0);
    assert_eq!(read_trace(&runs[0].1).unwrap(), read_trace(&runs[2].1).unwrap());
}

#[test]
fn witness_of_the_table_trace() {
    let dir = TempDir::new().unwrap();
    let p = task_partial();
    let ls: Vec<Label> = ["ex12", "β4", "nt", "β2", "β1"]
        .iter()
        .map(|s| Label::parse(s))
        .collect();
    let t = replay(&p, &ls).unwrap();
    let file = path(&dir, "table.trace");
    fs::write(&file, write_trace(&TraceFile::new(p.layout(), t))).unwrap();
    let w = ok(&["witness", &file, "--model", "builtin:task"]);
    let labels: Vec<&str> = w.lines().filter_map(|l| l.strip_prefix("LABEL ")).collect();
    assert_eq!(labels, ["ex12", "nt"]);
    assert_eq!(w.lines().filter(|l| l.starts_with("STATE ")).count(), 2);
    assert!(w.lines().last().unwrap().starts_with("LABEL nt"));

    let j = json(&ok(&["witness", &file, "--json"]));
    let items = j["witness"].as_array().unwrap();
    assert_eq!(items.len(), 4);
    assert_eq!(items[1]["label"], "ex12");
    assert_eq!(items[2]["state"][3]["loc"], "delivered");
}

#[test]
fn witness_of_drained_run_equals_global_replay() {
    let dir = TempDir::new().unwrap();
    let file = path(&dir, "run.trace");
    let out = path(&dir, "run.witness");
    for seed in ["1", "2", "3"] {
        ok(&["run", "builtin:task", "--seed", seed, "--steps", "30", "-o", &file]);
        ok(&["witness", &file, "--model", "builtin:task", "-o", &out]);
        let partial = read_trace(&fs::read_to_string(&file).unwrap()).unwrap();
        let w = read_trace(&fs::read_to_string(&out).unwrap()).unwrap();
        let inter: Vec<Label> = interactions_of(&partial.trace)
            .into_iter()
            .map(Label::Interaction)
            .collect();
        let global = run_global(&builtin_task(), &EngineConfig::fixed(inter)).unwrap();
        assert_eq!(w.trace, global.trace, "seed {seed}");
    }
}

#[test]
fn witness_rejects_traces_of_other_models() {
    let dir = TempDir::new().unwrap();
    let file = path(&dir, "run.trace");
    ok(&["run", "builtin:task", "--seed", "4", "--steps", "10", "-o", &file]);
    assert_eq!(code(&["witness", &file, "--model", "builtin:readers-writers"]), 2);

    let mut f = read_trace(&fs::read_to_string(&file).unwrap()).unwrap();
    let mut steps = f.trace.steps.clone();
    steps.swap(0, 1);
    f.trace = Trace {
        initial: f.trace.initial.clone(),
        steps,
    };
    fs::write(&file, write_trace(&f)).unwrap();
    assert_eq!(code(&["witness", &file, "--model", "builtin:task"]), 2);

    fs::write(&file, "COMPONENTS []\nLABEL x\n").unwrap();
    assert_eq!(code(&["witness", &file]), 2);
}

#[test]
fn monitored_trace_carries_verdicts() {
    let dir = TempDir::new().unwrap();
    let file = path(&dir, "m.trace");
    ok(&[
        "run",
        "builtin:task",
        "--mode",
        "monitored",
        "--monitor",
        "builtin:task",
        "--seed",
        "3",
        "--steps",
        "12",
        "-o",
        &file,
    ]);
    let text = fs::read_to_string(&file).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("DELIVER ")).count(), 12);
    assert_eq!(text.lines().filter(|l| l.starts_with("VERDICT ")).count(), 12);
    let w = ok(&["witness", &file, "--model", "builtin:task", "--monitor", "builtin:task"]);
    assert_eq!(w.lines().filter(|l| l.starts_with("LABEL ")).count(), 12);
}

#[test]
fn transform_emits_a_model_that_revalidates() {
    let dir = TempDir::new().unwrap();
    for (model, monitor) in [("builtin:task", None), ("builtin:task", Some("builtin:task"))] {
        let out = path(&dir, "r.model");
        let mut args = vec!["transform", model, "-o", &out];
        if let Some(m) = monitor {
            args.extend(["--monitor", m]);
        }
        ok(&args);
        let text = fs::read_to_string(&out).unwrap();
        let sys = parse_model(&text).unwrap();
        assert!(sys.rgt.is_some());
        assert_eq!(sys.monitor.is_some(), monitor.is_some());
        assert_eq!(ok(&["check", &out]).trim(), "Task: 4 components, 10 interactions");

        let j = path(&dir, "r.json");
        ok(&["transform", model, "--json", "-o", &j]);
        ok(&["check", &j]);
    }
}

#[test]
fn run_accepts_its_own_transform_output() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "r.model");
    ok(&["transform", "builtin:task", "--monitor", "builtin:task", "-o", &out]);
    let rep = json(&ok(&[
        "run",
        &out,
        "--mode",
        "monitored",
        "--seed",
        "5",
        "--steps",
        "20",
        "--json",
    ]));
    assert_eq!(rep["delivered"], 20);
}

#[test]
fn check_converts_between_formats() {
    let dir = TempDir::new().unwrap();
    let j = path(&dir, "task.json");
    let t = path(&dir, "task.model");
    ok(&["check", "builtin:task", "--emit", "json", "-o", &j]);
    ok(&["check", &j, "--emit", "text", "-o", &t]);
    assert_eq!(parse_model(&fs::read_to_string(&t).unwrap()).unwrap(), builtin_task());
}

#[test]
fn verify_equivalence_stages() {
    let out = ok(&["verify-equivalence", "builtin:readers-writers", "--stage", "partial"]);
    assert!(out.starts_with("EQUIVALENT"), "{out}");
    let out = ok(&[
        "verify-equivalence",
        "builtin:readers-writers",
        "--stage",
        "transformed",
        "--json",
    ]);
    assert_eq!(json(&out)["equivalent"], true);
    assert_eq!(
        code(&["verify-equivalence", "builtin:readers-writers", "--bound", "10"]),
        3
    );
}

#[test]
fn verify_equivalence_catches_a_dropped_delivery() {
    let dir = TempDir::new().unwrap();
    let r = path(&dir, "r.model");
    ok(&[
        "transform",
        "builtin:readers-writers",
        "--rgt-variant",
        "unguarded-new",
        "-o",
        &r,
    ]);
    let text = fs::read_to_string(&r).unwrap();
    let mutated: String = text
        .lines()
        .filter(|l| !l.starts_with("interaction \"read1^m\""))
        .map(|l| format!("{l}\n"))
        .collect();
    assert_ne!(mutated, text);
    let m = path(&dir, "m.model");
    fs::write(&m, mutated).unwrap();
    let out = cbs(&["verify-equivalence", &m, "--stage", "transformed"]);
    assert_eq!(out.status.code(), Some(3));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("NOT EQUIVALENT") && stdout.contains("counterexample"),
        "{stdout}"
    );
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["run"]), 1);
    assert_eq!(code(&["run", "builtin:task", "--rgt-variant", "loose"]), 1);
    assert_eq!(code(&["run", "builtin:task", "--threads", "0"]), 1);
    assert_eq!(code(&["check", "no/such/file"]), 1);
    assert_eq!(code(&["--help"]), 0);

    let bad = path(&dir, "bad.model");
    fs::write(&bad, "system S;\ncomponent A { locations l; initial m; }\n").unwrap();
    assert_eq!(code(&["check", &bad]), 2);
    assert_eq!(code(&["run", &bad]), 2);
    let bad_monitor = path(&dir, "bad.monitor");
    fs::write(&bad_monitor, "monitor M { state s: maybe; }").unwrap();
    assert_eq!(
        code(&["run", "builtin:task", "--mode", "monitored", "--monitor", &bad_monitor]),
        2
    );
    assert!(Path::new(&bad).exists());
}

#[test]
fn real_time_run_from_the_command_line() {
    let rep = json(&ok(&[
        "run",
        "builtin:task",
        "--real-time",
        "--threads",
        "4",
        "--busy-delay-us",
        "20",
        "--steps",
        "200",
        "--json",
    ]));
    assert_eq!(rep["gamma"], 200);
    assert_eq!(rep["real_time"], true);
    assert_eq!(rep["deadlock"], false);
}
