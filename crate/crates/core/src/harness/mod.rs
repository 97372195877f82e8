//! Experiment harness: model training, seeded experiment runs with bootstrap
//! intervals, and comparisons between two runs.

mod stats;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use stats::{bootstrap_mean_ci, bootstrap_mean_diff, bootstrap_proportion_diff, Interval};

use crate::agent::{episode_seed, run_games, AgentConfig, GameError, GameStats, RunOptions};
use crate::env::{self, parse_key_values, EnvError, GridConfig, JointAction};
use crate::features::{extract, Example};
use crate::kr::fort_attack_domain;
use crate::models::{
    learn_stacked_with, mix64, read_library, split_holdout, ModelConfig, ModelFileError, ModelLibrary, ModelManager,
    Team, TrainError, DEFAULT_MAX_LEAVES,
};
use crate::policies::{policy_action, PolicyError, PolicyName, PolicySpec};

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const EXAMPLES_PER_TYPE: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelFileError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("summaries differ in {0}; pass force to compare anyway")]
    Mismatch(String),
    #[error("need at least 30 episodes per summary, got {0}")]
    TooFew(usize),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn parse_field<T: std::str::FromStr>(v: &str, key: &str) -> Result<T, HarnessError> {
    v.parse().map_err(|_| HarnessError::Config(format!("bad value `{v}` for `{key}`")))
}

fn parse_policy(v: &str) -> Result<PolicyName, HarnessError> {
    PolicyName::parse(v).ok_or_else(|| HarnessError::Config(format!("unknown policy `{v}`")))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// ------------------------------------------------------------------ training

/// One agent type to learn: the agents of `team` under `policy`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeSpec {
    pub name: String,
    pub team: Team,
    pub policy: PolicyName,
}

/// Guard and attacker roles under both handcrafted policies.
pub fn default_types() -> Vec<TypeSpec> {
    let t = |name: &str, team, policy| TypeSpec { name: name.into(), team, policy };
    vec![
        t("guard_type1", Team::Guards, PolicyName::P1),
        t("guard_type2", Team::Guards, PolicyName::P2),
        t("attacker_type1", Team::Attackers, PolicyName::P1),
        t("attacker_type2", Team::Attackers, PolicyName::P2),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub examples_per_type: usize,
    pub max_leaves: usize,
    pub grid: GridConfig,
    pub types: Vec<TypeSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let mut grid = GridConfig::default();
        grid.adhoc_guard = false;
        TrainConfig {
            seed: 0,
            examples_per_type: EXAMPLES_PER_TYPE,
            max_leaves: DEFAULT_MAX_LEAVES,
            grid,
            types: default_types(),
        }
    }
}

impl TrainConfig {
    /// Keys: seed, examples, max_leaves and `grid.<key>`.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let kv = parse_key_values(text).map_err(HarnessError::Config)?;
        let mut cfg = TrainConfig::default();
        let mut grid = String::from("adhoc_guard = false\n");
        for (k, v) in &kv {
            match k.as_str() {
                "seed" => cfg.seed = parse_field(v, k)?,
                "examples" => cfg.examples_per_type = parse_field(v, k)?,
                "max_leaves" => cfg.max_leaves = parse_field(v, k)?,
                _ => match k.strip_prefix("grid.") {
                    Some(g) if g != "adhoc_guard" => {
                        let _ = writeln!(grid, "{g} = {v}");
                    }
                    _ => return Err(HarnessError::Config(format!("unknown key `{k}`"))),
                },
            }
        }
        cfg.grid = GridConfig::parse(&grid)?;
        if cfg.examples_per_type < 10 {
            return Err(HarnessError::Config("examples must be at least 10".into()));
        }
        Ok(cfg)
    }

    /// The examples type `i` is trained and evaluated on.
    pub fn examples_for(&self, i: usize) -> Result<(Vec<Example>, usize), HarnessError> {
        let t = self.types.get(i).ok_or_else(|| HarnessError::Config(format!("no type {i}")))?;
        let seed = mix64(self.seed ^ mix64(0x1000 + i as u64));
        collect_examples(&self.grid, t.policy, t.team, self.examples_per_type, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub name: String,
    pub team: Team,
    pub policy: PolicyName,
    pub examples: usize,
    pub train: usize,
    pub holdout: usize,
    pub accuracy: f64,
    /// Episodes played to collect the examples.
    pub episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub rows: Vec<TypeReport>,
    #[serde(skip)]
    pub seconds: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("type,team,policy,examples,train,holdout,accuracy\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:.4}",
                r.name,
                r.team.name(),
                r.policy,
                r.examples,
                r.train,
                r.holdout,
                r.accuracy
            );
        }
        s
    }
}

/// Play policy-only episodes until exactly `n` (features, action) examples of
/// `team` under `policy` are logged. Returns them and the episodes used.
pub fn collect_examples(
    grid: &GridConfig,
    policy: PolicyName,
    team: Team,
    n: usize,
    seed: u64,
) -> Result<(Vec<Example>, usize), HarnessError> {
    let mut grid = grid.clone();
    grid.adhoc_guard = false;
    let spec = PolicySpec::new(policy);
    let mut out = Vec::with_capacity(n);
    let mut episode = 0;
    while out.len() < n {
        let s0 = episode_seed(seed, episode);
        episode += 1;
        let spec = spec.resolve(s0);
        let mut state = env::reset(&grid, s0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(s0 ^ 0x7472_6169_6e));
        let mut prev: BTreeMap<_, _> = state.agents.iter().map(|a| (a.id, env::Action::Noop)).collect();
        while env::terminal(&state).is_none() && out.len() < n {
            let mut joint = JointAction::new();
            for a in state.alive() {
                let act = policy_action(&spec, &state, a.id, &mut rng)?;
                if Team::of(a.kind) == team && out.len() < n {
                    out.push(Example { features: extract(&state, a.id, prev[&a.id])?, action: act.kind() });
                }
                joint.insert(a.id, act);
            }
            state = env::step(&state, &joint)?.0;
            for (id, a) in joint {
                prev.insert(id, a);
            }
        }
        if episode > 100 * n + 100 {
            return Err(HarnessError::Config(format!("no {} examples under {policy}", team.name())));
        }
    }
    Ok((out, episode))
}

/// Collect, split 80/20, train one stacked model per type and report held-out accuracy.
pub fn train_models(cfg: &TrainConfig) -> Result<(ModelLibrary, TrainReport), HarnessError> {
    let start = Instant::now();
    let mut lib = ModelLibrary::default();
    let mut rows = Vec::new();
    for (i, t) in cfg.types.iter().enumerate() {
        let (examples, episodes) = cfg.examples_for(i)?;
        let (train, hold) = split_holdout(&examples);
        let model = learn_stacked_with(&train, cfg.max_leaves)?;
        let accuracy = model.accuracy(&hold);
        log::info!("{}: {} examples from {} episodes, held-out accuracy {:.3}", t.name, examples.len(), episodes, accuracy);
        rows.push(TypeReport {
            name: t.name.clone(),
            team: t.team,
            policy: t.policy,
            examples: examples.len(),
            train: train.len(),
            holdout: hold.len(),
            accuracy,
            episodes,
        });
        lib.add(t.name.clone(), t.team, model);
    }
    Ok((lib, TrainReport { seed: cfg.seed, rows, seconds: start.elapsed().as_secs_f64() }))
}

pub fn load_library(path: &Path) -> Result<ModelLibrary, HarnessError> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    Ok(read_library(io::BufReader::new(f))?)
}

// --------------------------------------------------------------- experiments

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub policy: PolicyName,
    /// Guard 0 is the ad hoc agent; otherwise it follows the team policy.
    pub adhoc: bool,
    pub episodes: usize,
    pub seed: u64,
    /// Model file; without one the models are trained first with `seed`.
    pub models: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Write a JSONL trace per episode under `out_dir/traces`.
    pub traces: bool,
    pub learn_online: bool,
    pub agent: AgentConfig,
    pub grid: GridConfig,
    pub resamples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            id: "experiment".into(),
            policy: PolicyName::P1,
            adhoc: true,
            episodes: 100,
            seed: 0,
            models: None,
            out_dir: None,
            traces: false,
            learn_online: true,
            agent: AgentConfig::default(),
            grid: GridConfig::default(),
            resamples: DEFAULT_RESAMPLES,
        }
    }
}

fn parse_bool(v: &str, key: &str) -> Result<bool, HarnessError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(HarnessError::Config(format!("bad value `{v}` for `{key}`"))),
    }
}

impl ExperimentConfig {
    /// Parse `key = value` text. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, HarnessError> {
        let kv = parse_key_values(text).map_err(HarnessError::Config)?;
        let mut cfg = ExperimentConfig::default();
        let path = |v: &str| match base {
            Some(b) if Path::new(v).is_relative() => b.join(v),
            _ => PathBuf::from(v),
        };
        let mut grid = String::new();
        for (k, v) in &kv {
            match k.as_str() {
                "id" => cfg.id = v.clone(),
                "policy" => cfg.policy = parse_policy(v)?,
                "adhoc" => cfg.adhoc = parse_bool(v, k)?,
                "episodes" => cfg.episodes = parse_field(v, k)?,
                "seed" => cfg.seed = parse_field(v, k)?,
                "models" => cfg.models = Some(path(v)),
                "out_dir" => cfg.out_dir = Some(path(v)),
                "traces" => cfg.traces = parse_bool(v, k)?,
                "learn_online" => cfg.learn_online = parse_bool(v, k)?,
                "resamples" => cfg.resamples = parse_field(v, k)?,
                "horizon" => cfg.agent.horizon = parse_field(v, k)?,
                "node_limit" => cfg.agent.node_limit = parse_field(v, k)?,
                "reach_margin" => cfg.agent.reach_margin = parse_field(v, k)?,
                "use_zones" => cfg.agent.use_zones = parse_bool(v, k)?,
                _ => match k.strip_prefix("grid.") {
                    Some(g) if g != "adhoc_guard" => {
                        let _ = writeln!(grid, "{g} = {v}");
                    }
                    _ => return Err(HarnessError::Config(format!("unknown key `{k}`"))),
                },
            }
        }
        cfg.grid = GridConfig::parse(&grid)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path.parent())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes < 1 {
            return Err(HarnessError::Config("episodes must be >= 1".into()));
        }
        if self.resamples < 1 {
            return Err(HarnessError::Config("resamples must be >= 1".into()));
        }
        self.grid.validate()?;
        Ok(())
    }

    /// Canonical `key = value` rendering; the config hash is taken over this.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "id = {}", self.id);
        let _ = writeln!(s, "policy = {}", self.policy);
        let _ = writeln!(s, "adhoc = {}", self.adhoc);
        let _ = writeln!(s, "episodes = {}", self.episodes);
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(m) = &self.models {
            let _ = writeln!(s, "models = {}", m.display());
        }
        if let Some(o) = &self.out_dir {
            let _ = writeln!(s, "out_dir = {}", o.display());
        }
        let _ = writeln!(s, "traces = {}", self.traces);
        let _ = writeln!(s, "learn_online = {}", self.learn_online);
        let _ = writeln!(s, "resamples = {}", self.resamples);
        let _ = writeln!(s, "horizon = {}", self.agent.horizon);
        let _ = writeln!(s, "node_limit = {}", self.agent.node_limit);
        let _ = writeln!(s, "reach_margin = {}", self.agent.reach_margin);
        let _ = writeln!(s, "use_zones = {}", self.agent.use_zones);
        for line in self.grid.to_key_values().lines().filter(|l| !l.starts_with("adhoc_guard")) {
            let _ = writeln!(s, "grid.{line}");
        }
        s
    }

    /// Short sha256 of the canonical rendering, without output paths.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let digest = Sha256::digest(c.to_key_values().as_bytes());
        hex(&digest[..8])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub id: String,
    pub config_hash: String,
    pub seed: u64,
    pub policy: PolicyName,
    pub adhoc: bool,
    pub episodes: usize,
    pub wins: usize,
    pub win_pct: f64,
    pub win_pct_ci: Interval,
    pub mean_steps: f64,
    pub steps_ci: Interval,
    pub adhoc_accuracy: Option<f64>,
    /// Mean shooting accuracy of the policy-driven guards.
    pub guard_accuracy: Option<f64>,
    pub fallbacks: u32,
    /// Per-episode outcomes, for comparisons.
    pub won: Vec<bool>,
    pub steps: Vec<u32>,
}

impl Summary {
    pub fn from_stats(cfg: &ExperimentConfig, stats: &GameStats) -> Summary {
        let won: Vec<bool> = stats.episodes.iter().map(|e| e.guards_win()).collect();
        let steps: Vec<u32> = stats.episodes.iter().map(|e| e.steps).collect();
        let wins_f: Vec<f64> = won.iter().map(|&w| if w { 100.0 } else { 0.0 }).collect();
        let steps_f: Vec<f64> = steps.iter().map(|&s| s as f64).collect();
        let seed = mix64(cfg.seed ^ 0x626f_6f74);
        Summary {
            id: cfg.id.clone(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            policy: cfg.policy,
            adhoc: cfg.adhoc,
            episodes: stats.len(),
            wins: stats.wins(),
            win_pct: stats.win_pct(),
            win_pct_ci: bootstrap_mean_ci(&wins_f, cfg.resamples, seed),
            mean_steps: stats.mean_steps(),
            steps_ci: bootstrap_mean_ci(&steps_f, cfg.resamples, seed ^ 1),
            adhoc_accuracy: stats.adhoc_accuracy(),
            guard_accuracy: stats.policy_guard_accuracy(),
            fallbacks: stats.episodes.iter().map(|e| e.fallbacks).sum(),
            won,
            steps,
        }
    }

    pub fn load(path: &Path) -> Result<Summary, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub summary: Summary,
    pub stats: GameStats,
    pub train: Option<TrainReport>,
}

/// Episode CSV with the config hash and master seed on every row.
pub fn episodes_csv(summary: &Summary, stats: &GameStats) -> String {
    let mut out = String::new();
    for (i, line) in stats.to_csv().lines().enumerate() {
        if i == 0 {
            let _ = writeln!(out, "config_hash,master_seed,{line}");
        } else {
            let _ = writeln!(out, "{},{},{line}", summary.config_hash, summary.seed);
        }
    }
    out
}

/// Run one arm. With `out_dir` set, writes `episodes.csv` and `summary.json`
/// (and traces); the directory is checked before any episode runs.
pub fn run_experiment(cfg: &ExperimentConfig, library: Option<ModelLibrary>) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let probe = dir.join(".write_test");
        std::fs::write(&probe, b"").map_err(io_err(dir))?;
        let _ = std::fs::remove_file(probe);
    }
    let mut train = None;
    let library = match (library, &cfg.models) {
        (Some(l), _) => l,
        (None, Some(p)) => load_library(p)?,
        (None, None) => {
            let tc = TrainConfig { seed: cfg.seed, grid: cfg.grid.clone(), ..TrainConfig::default() };
            let (l, r) = train_models(&tc)?;
            train = Some(r);
            l
        }
    };
    let mut grid = cfg.grid.clone();
    grid.adhoc_guard = cfg.adhoc;
    let mut manager = ModelManager::new(library, ModelConfig { learn_online: cfg.learn_online, ..ModelConfig::default() });
    let opts = RunOptions {
        seed: cfg.seed,
        agent: cfg.agent.clone(),
        trace_dir: match (&cfg.out_dir, cfg.traces) {
            (Some(d), true) => Some(d.join("traces")),
            _ => None,
        },
    };
    let domain = fort_attack_domain().map_err(GameError::from)?;
    let stats = run_games(cfg.episodes, &grid, &domain, &mut manager, &PolicySpec::new(cfg.policy), &opts)?;
    let summary = Summary::from_stats(cfg, &stats);
    if let Some(dir) = &cfg.out_dir {
        let csv = dir.join("episodes.csv");
        std::fs::write(&csv, episodes_csv(&summary, &stats)).map_err(io_err(&csv))?;
        let js = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(&js, text + "\n").map_err(io_err(&js))?;
        let kv = dir.join("config.txt");
        std::fs::write(&kv, cfg.to_key_values()).map_err(io_err(&kv))?;
    }
    Ok(ExperimentResult { summary, stats, train })
}

// ---------------------------------------------------------------- comparison

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    /// Win percentage of `a` minus that of `b`.
    pub win_diff: f64,
    pub win_diff_ci: Interval,
    pub win_significant: bool,
    pub steps_diff: f64,
    pub steps_diff_ci: Interval,
    pub steps_significant: bool,
    pub alpha: f64,
}

/// Bootstrap comparison of two summaries at level `alpha`: two-proportion
/// resampling on wins and a difference of means on episode length.
pub fn compare(a: &Summary, b: &Summary, force: bool, resamples: usize, alpha: f64) -> Result<Comparison, HarnessError> {
    for s in [a, b] {
        if s.won.len() < 30 {
            return Err(HarnessError::TooFew(s.won.len()));
        }
    }
    if !force && a.policy != b.policy {
        return Err(HarnessError::Mismatch(format!("policy ({} vs {})", a.policy, b.policy)));
    }
    let seed = mix64(a.seed ^ mix64(b.seed) ^ 0x636d70);
    let wa: Vec<f64> = a.won.iter().map(|&w| if w { 100.0 } else { 0.0 }).collect();
    let wb: Vec<f64> = b.won.iter().map(|&w| if w { 100.0 } else { 0.0 }).collect();
    let (win_diff, win_ci) = bootstrap_proportion_diff(&wa, &wb, resamples, seed, alpha);
    let sa: Vec<f64> = a.steps.iter().map(|&s| s as f64).collect();
    let sb: Vec<f64> = b.steps.iter().map(|&s| s as f64).collect();
    let (steps_diff, steps_ci) = bootstrap_mean_diff(&sa, &sb, resamples, seed ^ 1, alpha);
    Ok(Comparison {
        a: a.id.clone(),
        b: b.id.clone(),
        win_diff,
        win_diff_ci: win_ci,
        win_significant: win_ci.excludes_zero(),
        steps_diff,
        steps_diff_ci: steps_ci,
        steps_significant: steps_ci.excludes_zero(),
        alpha,
    })
}
