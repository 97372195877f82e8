use adhoc_core::harness::*;
use adhoc_core::policies::PolicyName;

fn synthetic(id: &str, policy: PolicyName, wins: usize, n: usize) -> Summary {
    let won: Vec<bool> = (0..n).map(|i| i < wins).collect();
    let steps: Vec<u32> = (0..n).map(|i| 20 + (i % 7) as u32).collect();
    Summary {
        id: id.into(),
        config_hash: "0".into(),
        seed: 3,
        policy,
        adhoc: true,
        episodes: n,
        wins,
        win_pct: 100.0 * wins as f64 / n as f64,
        win_pct_ci: Interval { lo: 0.0, hi: 0.0 },
        mean_steps: 0.0,
        steps_ci: Interval { lo: 0.0, hi: 0.0 },
        adhoc_accuracy: None,
        guard_accuracy: None,
        fallbacks: 0,
        won,
        steps,
    }
}

fn small_train() -> TrainConfig {
    TrainConfig { examples_per_type: 400, seed: 9, ..TrainConfig::default() }
}

#[test]
fn training_reports_four_types_and_repeats() {
    let (lib_a, a) = train_models(&small_train()).unwrap();
    let (lib_b, b) = train_models(&small_train()).unwrap();
    assert_eq!(a.rows.len(), 4);
    let names: Vec<&str> = a.rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["guard_type1", "guard_type2", "attacker_type1", "attacker_type2"]);
    for r in &a.rows {
        assert_eq!(r.examples, 400);
        assert_eq!(r.train + r.holdout, 400);
        assert!((0.0..=1.0).contains(&r.accuracy));
    }
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(lib_a, lib_b);
}

#[test]
fn train_config_keys() {
    let c = TrainConfig::parse("seed = 4\nexamples = 100\nmax_leaves = 8\ngrid.max_steps = 50\n").unwrap();
    assert_eq!((c.seed, c.examples_per_type, c.max_leaves, c.grid.max_steps), (4, 100, 8, 50));
    assert!(TrainConfig::parse("bogus = 1").is_err());
}

#[test]
fn one_episode_gives_a_degenerate_interval() {
    let (lib, _) = train_models(&small_train()).unwrap();
    let cfg = ExperimentConfig { episodes: 1, seed: 2, resamples: 500, ..Default::default() };
    let r = run_experiment(&cfg, Some(lib)).unwrap();
    let s = &r.summary;
    let e = &r.stats.episodes[0];
    assert_eq!(s.episodes, 1);
    assert_eq!(s.mean_steps, e.steps as f64);
    assert_eq!(s.win_pct, if e.guards_win() { 100.0 } else { 0.0 });
    assert_eq!((s.win_pct_ci.lo, s.win_pct_ci.hi), (s.win_pct, s.win_pct));
    assert_eq!((s.steps_ci.lo, s.steps_ci.hi), (s.mean_steps, s.mean_steps));
}

#[test]
fn experiment_outputs_carry_provenance_and_repeat_exactly() {
    let (lib, _) = train_models(&small_train()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let cfg = ExperimentConfig {
            policy: PolicyName::B650,
            episodes: 3,
            seed: 8,
            resamples: 200,
            traces: true,
            out_dir: Some(out.clone()),
            ..Default::default()
        };
        run_experiment(&cfg, Some(lib.clone())).unwrap();
        (cfg, out)
    };
    let (cfg, a) = run("a");
    let (_, b) = run("b");
    let csv = std::fs::read_to_string(a.join("episodes.csv")).unwrap();
    let prefix = format!("{},{},", cfg.hash(), cfg.seed);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|l| l.starts_with(&prefix)), "{csv}");
    for f in ["episodes.csv", "summary.json", "traces/episode_0000.jsonl", "traces/episode_0002.jsonl"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let s = Summary::load(&a.join("summary.json")).unwrap();
    assert_eq!(s.config_hash, cfg.hash());
    let again = ExperimentConfig::load(&a.join("config.txt")).unwrap();
    assert_eq!(again.hash(), cfg.hash());
}

#[test]
fn unwritable_output_fails_before_playing() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("taken");
    std::fs::write(&file, "").unwrap();
    let cfg = ExperimentConfig { out_dir: Some(file.join("out")), episodes: 1, ..Default::default() };
    let started = std::time::Instant::now();
    assert!(matches!(run_experiment(&cfg, None), Err(HarnessError::Io { .. })));
    // failing after training or playing would take far longer
    assert!(started.elapsed().as_secs_f64() < 0.5);
}

#[test]
fn config_parse_round_trips() {
    let text = "id = x\npolicy = b1240\nadhoc = false\nepisodes = 7\nseed = 11\nhorizon = 6\ngrid.max_steps = 60\n";
    let c = ExperimentConfig::parse(text, None).unwrap();
    assert_eq!((c.policy, c.adhoc, c.episodes, c.seed, c.agent.horizon, c.grid.max_steps), (PolicyName::B1240, false, 7, 11, 6, 60));
    assert_eq!(ExperimentConfig::parse(&c.to_key_values(), None).unwrap(), c);
    assert!(ExperimentConfig::parse("episodes = 0", None).is_err());
    assert!(ExperimentConfig::parse("policy = nope", None).is_err());
    assert!(ExperimentConfig::parse("colour = red", None).is_err());
}

#[test]
fn identical_summaries_are_not_significant() {
    let a = synthetic("a", PolicyName::P1, 40, 100);
    let c = compare(&a, &a.clone(), false, 2000, 0.05).unwrap();
    assert_eq!(c.win_diff, 0.0);
    assert!(!c.win_significant && !c.steps_significant);
}

#[test]
fn all_versus_none_is_significant() {
    let c = compare(&synthetic("a", PolicyName::P2, 100, 100), &synthetic("b", PolicyName::P2, 0, 100), false, 2000, 0.05).unwrap();
    assert_eq!(c.win_diff, 100.0);
    assert!(c.win_significant);
}

#[test]
fn sixteen_versus_seven_points_the_right_way() {
    let c = compare(&synthetic("a", PolicyName::P1, 16, 100), &synthetic("b", PolicyName::P1, 7, 100), false, 10_000, 0.05).unwrap();
    assert!((c.win_diff - 9.0).abs() < 1e-9);
    assert!(c.win_diff_ci.hi > 0.0);
    assert!(c.win_diff_ci.contains(9.0));
}

#[test]
fn comparisons_need_matching_policies_and_enough_episodes() {
    let a = synthetic("a", PolicyName::P1, 10, 50);
    let b = synthetic("b", PolicyName::B220, 10, 50);
    assert!(matches!(compare(&a, &b, false, 100, 0.05), Err(HarnessError::Mismatch(_))));
    assert!(compare(&a, &b, true, 100, 0.05).is_ok());
    let few = synthetic("c", PolicyName::P1, 5, 29);
    assert!(matches!(compare(&a, &few, false, 100, 0.05), Err(HarnessError::TooFew(29))));
}
