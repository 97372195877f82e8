//! The control loop: everyone else acts from their policies, the ad hoc guard
//! from its reasoning, the joint action is executed and the behaviour models
//! learn from what was observed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdHocAgent, AgentConfig, Decision};
use crate::env::{self, Action, AgentId, AgentKind, EnvError, GridConfig, JointAction, Outcome, WorldState};
use crate::explain::TraceWriter;
use crate::features::extract;
use crate::kr::{DomainDescription, KrError};
use crate::models::{mix64, ModelManager, TrainError};
use crate::policies::{policy_action, PolicyError, PolicySpec};

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Kr(#[from] KrError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("trace: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub seed: u64,
    pub agent: AgentConfig,
    /// Write one JSONL trace per episode here.
    pub trace_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { seed: 0, agent: AgentConfig::default(), trace_dir: None }
    }
}

/// Seed of episode `index` under a master seed.
pub fn episode_seed(master: u64, index: usize) -> u64 {
    mix64(master ^ mix64(index as u64))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub seed: u64,
    pub policy: String,
    pub outcome: Outcome,
    pub steps: u32,
    pub shots_fired: BTreeMap<AgentId, u32>,
    pub shots_hit: BTreeMap<AgentId, u32>,
    pub adhoc: Option<AgentId>,
    /// Ticks where the ad hoc guard fell back to walking toward the fort.
    pub fallbacks: u32,
    /// Ad hoc decision times in microseconds. Not written to traces.
    #[serde(skip)]
    pub latencies: Vec<u64>,
}

// timing differs between identical runs
impl PartialEq for EpisodeStats {
    fn eq(&self, o: &Self) -> bool {
        (self.episode, self.seed, &self.policy, self.outcome, self.steps, &self.shots_fired, &self.shots_hit)
            == (o.episode, o.seed, &o.policy, o.outcome, o.steps, &o.shots_fired, &o.shots_hit)
            && (self.adhoc, self.fallbacks) == (o.adhoc, o.fallbacks)
    }
}

impl EpisodeStats {
    pub fn guards_win(&self) -> bool {
        self.outcome.guards_win()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GameStats {
    pub episodes: Vec<EpisodeStats>,
    /// Agent kinds by id, as in every episode.
    pub kinds: Vec<AgentKind>,
}

fn ratio(hit: u32, fired: u32) -> Option<f64> {
    (fired > 0).then(|| hit as f64 / fired as f64)
}

impl GameStats {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn wins(&self) -> usize {
        self.episodes.iter().filter(|e| e.guards_win()).count()
    }

    /// Percentage of episodes the guards won.
    pub fn win_pct(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        100.0 * self.wins() as f64 / self.episodes.len() as f64
    }

    pub fn mean_steps(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().map(|e| e.steps as f64).sum::<f64>() / self.episodes.len() as f64
    }

    /// (hits, fired) of one agent over all episodes.
    pub fn shots(&self, agent: AgentId) -> (u32, u32) {
        self.episodes.iter().fold((0, 0), |(h, f), e| {
            (h + e.shots_hit.get(&agent).copied().unwrap_or(0), f + e.shots_fired.get(&agent).copied().unwrap_or(0))
        })
    }

    /// Shooting accuracy of one agent; `None` if it never fired.
    pub fn accuracy(&self, agent: AgentId) -> Option<f64> {
        let (h, f) = self.shots(agent);
        ratio(h, f)
    }

    pub fn adhoc_accuracy(&self) -> Option<f64> {
        let id = self.kinds.iter().position(|k| *k == AgentKind::AdHocGuard)?;
        self.accuracy(AgentId(id as u8))
    }

    /// Mean accuracy over the policy-driven guards that fired at least once.
    pub fn policy_guard_accuracy(&self) -> Option<f64> {
        let acc: Vec<f64> = self
            .kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == AgentKind::Guard)
            .filter_map(|(i, _)| self.accuracy(AgentId(i as u8)))
            .collect();
        (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64)
    }

    pub fn latencies(&self) -> Vec<u64> {
        self.episodes.iter().flat_map(|e| e.latencies.iter().copied()).collect()
    }

    /// One row per episode.
    pub fn to_csv(&self) -> String {
        let guards: Vec<usize> =
            self.kinds.iter().enumerate().filter(|(_, k)| k.is_guard()).map(|(i, _)| i).collect();
        let mut s = String::from("episode,seed,policy,outcome,guards_win,steps");
        for g in &guards {
            let _ = write!(s, ",fired_{g},hit_{g}");
        }
        s.push_str(",fallbacks\n");
        for e in &self.episodes {
            let _ = write!(
                s,
                "{},{},{},{},{},{}",
                e.episode,
                e.seed,
                e.policy,
                e.outcome.name(),
                e.guards_win() as u8,
                e.steps
            );
            for &g in &guards {
                let id = AgentId(g as u8);
                let _ = write!(
                    s,
                    ",{},{}",
                    e.shots_fired.get(&id).copied().unwrap_or(0),
                    e.shots_hit.get(&id).copied().unwrap_or(0)
                );
            }
            let _ = writeln!(s, ",{}", e.fallbacks);
        }
        s
    }
}

/// Play one episode. Models in `manager` carry over between episodes.
pub fn run_episode(
    index: usize,
    config: &GridConfig,
    domain: &DomainDescription,
    manager: &mut ModelManager,
    policy: &PolicySpec,
    opts: &RunOptions,
    trace: Option<&mut dyn Write>,
) -> Result<EpisodeStats, GameError> {
    let seed = episode_seed(opts.seed, index);
    let spec = policy.resolve(seed);
    let mut state = env::reset(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x706f_6c69_6379));
    let mut agent = match state.adhoc() {
        Some(_) => Some(AdHocAgent::new(domain, &state, opts.agent.clone())?),
        None => None,
    };
    let me = agent.as_ref().map(|a| a.id);
    manager.begin_episode(state.agents.iter().filter(|a| Some(a.id) != me).map(|a| (a.id, a.kind)));

    let mut writer = match trace {
        Some(w) => Some(TraceWriter::new(w, &state, agent.as_ref().map(|a| a.domain()), seed, spec.name.as_str())?),
        None => None,
    };

    let mut prev: BTreeMap<AgentId, Action> = state.agents.iter().map(|a| (a.id, Action::Noop)).collect();
    let mut latencies = Vec::new();
    let mut fallbacks = 0;
    let result = loop {
        if let Some(r) = env::terminal(&state) {
            break r;
        }
        let mut joint = JointAction::new();
        let mut seen = Vec::new();
        for a in state.alive() {
            if Some(a.id) == me {
                continue;
            }
            joint.insert(a.id, policy_action(&spec, &state, a.id, &mut rng)?);
            // features are taken before execution and matched with the action afterwards
            seen.push((a.id, extract(&state, a.id, prev[&a.id])?));
        }
        let decision: Option<Decision> = match (&agent, me) {
            (Some(ag), Some(id)) if state.agent(id)?.alive => {
                let d = ag.decide(&state, &*manager, &prev);
                latencies.push(d.micros);
                if d.kind == super::DecisionKind::Fallback {
                    fallbacks += 1;
                }
                joint.insert(id, d.action);
                Some(d)
            }
            _ => None,
        };
        let (next, events) = env::step(&state, &joint)?;
        for (id, f) in &seen {
            manager.observe(*id, f, joint[id].kind());
        }
        for ev in manager.update()? {
            log::debug!("episode {index} step {}: {ev:?}", state.step);
        }
        if let Some(ag) = agent.as_mut() {
            ag.observe_step(&state, &joint, &events);
        }
        if let Some(w) = writer.as_mut() {
            w.step(&state, &joint, &events, decision.as_ref())?;
        }
        for (id, a) in &joint {
            prev.insert(*id, *a);
        }
        state = next;
    };
    if let Some(w) = writer.as_mut() {
        w.finish(&state, &result)?;
    }
    Ok(EpisodeStats {
        episode: index,
        seed,
        policy: spec.name.as_str().to_string(),
        outcome: result.outcome,
        steps: result.steps,
        shots_fired: result.shots_fired,
        shots_hit: result.shots_hit,
        adhoc: me,
        fallbacks,
        latencies,
    })
}

/// Play `n` episodes and collect their statistics.
pub fn run_games(
    n: usize,
    config: &GridConfig,
    domain: &DomainDescription,
    manager: &mut ModelManager,
    policy: &PolicySpec,
    opts: &RunOptions,
) -> Result<GameStats, GameError> {
    let mut stats = GameStats::default();
    if let Some(dir) = &opts.trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    for i in 0..n {
        let e = match &opts.trace_dir {
            Some(dir) => {
                let file = std::fs::File::create(dir.join(format!("episode_{i:04}.jsonl")))?;
                let mut w = io::BufWriter::new(file);
                let e = run_episode(i, config, domain, manager, policy, opts, Some(&mut w))?;
                w.flush()?;
                e
            }
            None => run_episode(i, config, domain, manager, policy, opts, None)?,
        };
        log::info!("episode {}/{}: {} in {} steps", i + 1, n, e.outcome.name(), e.steps);
        if stats.kinds.is_empty() {
            stats.kinds = env::reset(config, e.seed)?.agents.iter().map(|a| a.kind).collect();
        }
        stats.episodes.push(e);
    }
    Ok(stats)
}

/// World state of episode `index` before any action.
pub fn initial_state(config: &GridConfig, master: u64, index: usize) -> Result<WorldState, EnvError> {
    env::reset(config, episode_seed(master, index))
}
