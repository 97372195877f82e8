use std::path::Path;
use std::process::{Command, Output};

fn adhoc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adhoc")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn help_and_version_succeed_usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&adhoc(dir.path(), &["--help"])), 0);
    assert_eq!(code(&adhoc(dir.path(), &["--version"])), 0);
    assert_eq!(code(&adhoc(dir.path(), &[])), 1);
    assert_eq!(code(&adhoc(dir.path(), &["fly"])), 1);
    assert_eq!(code(&adhoc(dir.path(), &["simulate", "--policy", "nope"])), 1);
    assert_eq!(code(&adhoc(dir.path(), &["simulate", "--episodes", "0"])), 1);
    std::fs::write(dir.path().join("bad.txt"), "colour = red\n").unwrap();
    assert_eq!(code(&adhoc(dir.path(), &["experiment", "bad.txt"])), 1);
}

#[test]
fn missing_inputs_are_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&adhoc(dir.path(), &["explain", "nothing.jsonl"])), 2);
    assert_eq!(code(&adhoc(dir.path(), &["compare", "a.json", "b.json"])), 2);
    assert_eq!(code(&adhoc(dir.path(), &["simulate", "--models", "none.txt"])), 2);
}

#[test]
fn train_simulate_experiment_compare_explain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let o = adhoc(d, &["train", "--examples", "300", "--out", "m.txt", "--report", "r.csv", "--examples-dir", "ex"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(d.join("m.txt")).unwrap().starts_with("adhoc-models "));
    assert_eq!(std::fs::read_to_string(d.join("r.csv")).unwrap().lines().count(), 5);
    for t in ["guard_type1", "guard_type2", "attacker_type1", "attacker_type2"] {
        let csv = std::fs::read_to_string(d.join("ex").join(format!("{t}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 40);
        assert_eq!(lines.count(), 300);
    }

    let sim = |out: &str| adhoc(d, &["simulate", "--policy", "b650", "--episodes", "2", "--seed", "4", "--models", "m.txt", "--out", out]);
    assert_eq!(code(&sim("s1")), 0);
    assert_eq!(code(&sim("s2")), 0);
    let trace = d.join("s1/traces/episode_0000.jsonl");
    assert_eq!(std::fs::read(&trace).unwrap(), std::fs::read(d.join("s2/traces/episode_0000.jsonl")).unwrap());
    for line in std::fs::read_to_string(&trace).unwrap().lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    assert_eq!(std::fs::read_to_string(d.join("s1/episodes.csv")).unwrap().lines().count(), 3);

    for (name, adhoc_on) in [("a", true), ("b", false)] {
        std::fs::write(d.join(format!("{name}.txt")), format!("id = {name}\npolicy = p1\nepisodes = 30\nseed = 2\nadhoc = {adhoc_on}\n")).unwrap();
        let o = adhoc(d, &["experiment", &format!("{name}.txt"), "--out", name, "--models", "m.txt"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let s: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(s["episodes"], 30);
    }
    let o = adhoc(d, &["compare", "a/summary.json", "b/summary.json", "--resamples", "500"]);
    assert_eq!(code(&o), 0);
    let c: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(c["win_diff_ci"]["lo"].as_f64().unwrap() <= c["win_diff_ci"]["hi"].as_f64().unwrap());
    assert_eq!(code(&adhoc(d, &["compare", "a/summary.json", "b/summary.json", "--alpha", "2"])), 1);

    std::fs::write(d.join("q.txt"), "why did you wait in step 1\nwhy belief in(ah,0,0) at step 1\nwhat now\n").unwrap();
    let trace = trace.to_str().unwrap();
    let o = adhoc(d, &["explain", trace, "--batch", "q.txt", "--out", "answers.jsonl"]);
    assert_eq!(code(&o), 0);
    let answers = std::fs::read_to_string(d.join("answers.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = answers.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["question"].is_string() && (r["answer"].is_object() || r["error"].is_string())));
    assert!(rows[2]["error"].as_str().unwrap().contains("cannot parse"));
}

#[test]
fn repl_answers_until_quit() {
    use std::io::Write;
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&adhoc(d, &["simulate", "--episodes", "1", "--out", "s"])), 0);
    let mut child = Command::new(env!("CARGO_BIN_EXE_adhoc"))
        .current_dir(d)
        .args(["explain", "s/traces/episode_0000.jsonl"])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"help\nhuh\nquit\nhelp\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.matches("why [did you] <action> in step <i>").count(), 2, "{text}");
    assert!(text.contains("I did not understand"));
}
