//! Behaviour models of the other agents.
//!
//! Each agent type gets a [`StackedModel`]: one binary fast-and-frugal tree per
//! action kind (does the agent take this action?) and a combiner tree over the
//! eight votes. Windowed agreement between predictions and observed actions
//! drives model selection, and an online [`ModelManager`] refits or adds types as
//! the game goes on.

mod combiner;
mod fftree;
mod io;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

pub use combiner::{Combiner, Node, Votes, ARITY as COMBINER_ARITY, MAX_DEPTH as COMBINER_MAX_DEPTH};
pub use fftree::{learn_ff_tree, learn_presorted, Cue, FFTree, Presorted, Test, TrainError};
pub use io::{read_library, write_library, ModelFileError, FORMAT_VERSION};

use crate::env::{ActionKind, AgentId, AgentKind};
use crate::features::{Example, FeatureVector, N_FEATURES};

pub const DEFAULT_MAX_LEAVES: usize = N_FEATURES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    /// One tree per action kind, in action index order.
    pub experts: Vec<FFTree>,
    pub combiner: Combiner,
    pub train_count: usize,
}

impl StackedModel {
    pub fn votes(&self, f: &FeatureVector) -> Votes {
        let mut v = 0u8;
        for (i, t) in self.experts.iter().enumerate() {
            if t.predict(&f.0) {
                v |= 1 << i;
            }
        }
        v
    }

    pub fn predict(&self, f: &FeatureVector) -> ActionKind {
        self.combiner.predict(self.votes(f))
    }

    pub fn accuracy(&self, examples: &[Example]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let hits = examples.iter().filter(|e| self.predict(&e.features) == e.action).count();
        hits as f64 / examples.len() as f64
    }
}

pub fn learn_stacked(examples: &[Example]) -> Result<StackedModel, TrainError> {
    learn_stacked_with(examples, DEFAULT_MAX_LEAVES)
}

pub fn learn_stacked_with(examples: &[Example], max_leaves: usize) -> Result<StackedModel, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::Empty);
    }
    let rows: Vec<FeatureVector> = examples.iter().map(|e| e.features.clone()).collect();
    let data = Presorted::new(&rows);
    let mut experts = Vec::with_capacity(ActionKind::COUNT);
    for a in ActionKind::ALL {
        let labels: Vec<bool> = examples.iter().map(|e| e.action == a).collect();
        experts.push(learn_presorted(&data, &labels, max_leaves)?);
    }
    let mut m = StackedModel { experts, combiner: Combiner::constant(ActionKind::Noop), train_count: examples.len() };
    let stacked: Vec<(Votes, ActionKind)> = examples.iter().map(|e| (m.votes(&e.features), e.action)).collect();
    m.combiner = Combiner::learn(&stacked);
    Ok(m)
}

/// Deterministic train / holdout split: about one example in five is held out,
/// chosen by a hash of the position so periodic logs do not alias.
pub fn split_holdout(examples: &[Example]) -> (Vec<Example>, Vec<Example>) {
    let mut train = Vec::with_capacity(examples.len());
    let mut hold = Vec::with_capacity(examples.len() / 5 + 1);
    for (i, e) in examples.iter().enumerate() {
        if mix64(i as u64) % 5 == 0 {
            hold.push(e.clone());
        } else {
            train.push(e.clone());
        }
    }
    (train, hold)
}

pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub model: StackedModel,
    pub replaced: bool,
    pub old_accuracy: f64,
    pub new_accuracy: f64,
}

/// Refit on the sliding reservoir plus `buffer`; the reservoir then absorbs the
/// buffer and is trimmed to `capacity`. The old model survives if the refit
/// scores lower on the held-out part.
pub fn incremental_update(
    model: &StackedModel,
    reservoir: &mut VecDeque<Example>,
    buffer: &[Example],
    capacity: usize,
    max_leaves: usize,
) -> Result<UpdateOutcome, TrainError> {
    if buffer.is_empty() {
        return Err(TrainError::Empty);
    }
    let out = if reservoir.is_empty() {
        let m = learn_stacked_with(buffer, max_leaves)?;
        let acc = m.accuracy(buffer);
        UpdateOutcome { model: m, replaced: true, old_accuracy: model.accuracy(buffer), new_accuracy: acc }
    } else {
        let pool: Vec<Example> = reservoir.iter().chain(buffer).cloned().collect();
        let (train, hold) = split_holdout(&pool);
        let fresh = learn_stacked_with(&train, max_leaves)?;
        let (old_acc, new_acc) = (model.accuracy(&hold), fresh.accuracy(&hold));
        if new_acc < old_acc {
            UpdateOutcome { model: model.clone(), replaced: false, old_accuracy: old_acc, new_accuracy: new_acc }
        } else {
            UpdateOutcome { model: fresh, replaced: true, old_accuracy: old_acc, new_accuracy: new_acc }
        }
    };
    reservoir.extend(buffer.iter().cloned());
    while reservoir.len() > capacity {
        reservoir.pop_front();
    }
    Ok(out)
}

// ------------------------------------------------------------------ agreement

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementTracker {
    pub window: usize,
    flags: VecDeque<bool>,
}

impl AgreementTracker {
    pub fn new(window: usize) -> Self {
        AgreementTracker { window: window.max(1), flags: VecDeque::with_capacity(window) }
    }

    pub fn update(&mut self, predicted: ActionKind, actual: ActionKind) -> f64 {
        self.push(predicted == actual)
    }

    pub fn push(&mut self, matched: bool) -> f64 {
        if self.flags.len() == self.window {
            self.flags.pop_front();
        }
        self.flags.push_back(matched);
        self.fraction()
    }

    pub fn observed(&self) -> usize {
        self.flags.len()
    }

    pub fn flags(&self) -> impl Iterator<Item = bool> + '_ {
        self.flags.iter().copied()
    }

    /// Windowed mean; 1.0 before any observation.
    pub fn fraction(&self) -> f64 {
        if self.flags.is_empty() {
            return 1.0;
        }
        self.flags.iter().filter(|&&c| c).count() as f64 / self.flags.len() as f64
    }
}

// -------------------------------------------------------------------- library

#[derive(Copy, Clone, Debug, Hash, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Team {
    Guards,
    Attackers,
}

impl Team {
    pub fn of(kind: AgentKind) -> Team {
        if kind.is_guard() {
            Team::Guards
        } else {
            Team::Attackers
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Team::Guards => "guard",
            Team::Attackers => "attacker",
        }
    }
}

pub type TypeId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentType {
    pub name: String,
    pub team: Team,
    pub model: StackedModel,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelLibrary {
    pub types: Vec<AgentType>,
    /// `None` marks an agent no known type explains.
    pub assignment: BTreeMap<AgentId, Option<TypeId>>,
}

impl ModelLibrary {
    pub fn add(&mut self, name: impl Into<String>, team: Team, model: StackedModel) -> TypeId {
        self.types.push(AgentType { name: name.into(), team, model });
        self.types.len() - 1
    }

    pub fn types_of(&self, team: Team) -> impl Iterator<Item = TypeId> + '_ {
        self.types.iter().enumerate().filter(move |(_, t)| t.team == team).map(|(i, _)| i)
    }

    pub fn model_for(&self, agent: AgentId) -> Option<&StackedModel> {
        self.assignment.get(&agent).copied().flatten().map(|t| &self.types[t].model)
    }
}

pub type Trackers = BTreeMap<(AgentId, TypeId), AgreementTracker>;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Keep(TypeId),
    Switch(TypeId),
    FlagNewModel,
}

/// Keep the current model while it agrees often enough, else switch to the best
/// known model that does (ties to the lowest type id), else ask for a new one.
pub fn select_or_flag(lib: &ModelLibrary, trackers: &Trackers, theta: f64) -> BTreeMap<AgentId, Selection> {
    let mut out = BTreeMap::new();
    for (&agent, &current) in &lib.assignment {
        let frac = |t: TypeId| trackers.get(&(agent, t)).map(|k| k.fraction());
        if let Some(c) = current {
            if frac(c).is_some_and(|f| f >= theta) {
                out.insert(agent, Selection::Keep(c));
                continue;
            }
        }
        let mut best: Option<(TypeId, f64)> = None;
        for t in 0..lib.types.len() {
            if let Some(f) = frac(t) {
                if f >= theta && best.is_none_or(|(_, b)| f > b) {
                    best = Some((t, f));
                }
            }
        }
        out.insert(agent, best.map_or(Selection::FlagNewModel, |(t, _)| Selection::Switch(t)));
    }
    out
}

// ------------------------------------------------------------ online manager

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub window: usize,
    pub theta: f64,
    pub reservoir: usize,
    pub buffer: usize,
    /// Observations needed before an agent's agreement is trusted.
    pub min_observations: usize,
    pub max_leaves: usize,
    pub max_types: usize,
    /// Learn new types and refit existing ones while playing.
    pub learn_online: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window: 30,
            theta: 0.5,
            reservoir: 5000,
            buffer: 200,
            min_observations: 10,
            max_leaves: DEFAULT_MAX_LEAVES,
            max_types: 16,
            learn_online: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum ModelEvent {
    Switched { agent: AgentId, from: Option<TypeId>, to: TypeId },
    Flagged { agent: AgentId },
    Learned { agent: AgentId, type_id: TypeId, examples: usize },
    Refit { type_id: TypeId, replaced: bool, old_accuracy: f64, new_accuracy: f64 },
}

#[derive(Clone, Debug)]
pub struct ModelManager {
    pub config: ModelConfig,
    pub library: ModelLibrary,
    pub trackers: Trackers,
    reservoirs: Vec<VecDeque<Example>>,
    buffers: Vec<Vec<Example>>,
    fresh: BTreeMap<AgentId, Vec<Example>>,
    teams: BTreeMap<AgentId, Team>,
}

impl ModelManager {
    pub fn new(library: ModelLibrary, config: ModelConfig) -> Self {
        let n = library.types.len();
        ModelManager {
            config,
            library,
            trackers: BTreeMap::new(),
            reservoirs: vec![VecDeque::new(); n],
            buffers: vec![Vec::new(); n],
            fresh: BTreeMap::new(),
            teams: BTreeMap::new(),
        }
    }

    /// Forget per-agent state; the library and reservoirs carry over.
    pub fn begin_episode(&mut self, agents: impl IntoIterator<Item = (AgentId, AgentKind)>) {
        self.trackers.clear();
        self.fresh.clear();
        self.teams.clear();
        self.library.assignment.clear();
        for (id, kind) in agents {
            let team = Team::of(kind);
            self.teams.insert(id, team);
            let first = self.library.types_of(team).next();
            self.library.assignment.insert(id, first);
        }
    }

    pub fn predict(&self, agent: AgentId, f: &FeatureVector) -> Option<ActionKind> {
        self.library.model_for(agent).map(|m| m.predict(f))
    }

    /// Record the action `agent` actually took in the state described by `f`.
    pub fn observe(&mut self, agent: AgentId, f: &FeatureVector, actual: ActionKind) {
        let Some(&team) = self.teams.get(&agent) else { return };
        let window = self.config.window;
        let ids: Vec<TypeId> = self.library.types_of(team).collect();
        for t in ids {
            let p = self.library.types[t].model.predict(f);
            self.trackers.entry((agent, t)).or_insert_with(|| AgreementTracker::new(window)).update(p, actual);
        }
        if !self.config.learn_online {
            return;
        }
        let ex = Example { features: f.clone(), action: actual };
        match self.library.assignment.get(&agent).copied().flatten() {
            Some(t) => self.buffers[t].push(ex),
            None => self.fresh.entry(agent).or_default().push(ex),
        }
    }

    /// Model selection and any due learning; called once per tick.
    pub fn update(&mut self) -> Result<Vec<ModelEvent>, TrainError> {
        let mut events = Vec::new();
        let trusted: Trackers = self
            .trackers
            .iter()
            .filter(|(_, k)| k.observed() >= self.config.min_observations)
            .map(|(k, v)| (*k, v.clone()))
            .collect();
        let mut view = self.library.clone();
        // agents without enough evidence keep whatever they have
        view.assignment.retain(|a, _| trusted.keys().any(|(b, _)| b == a));
        for (agent, sel) in select_or_flag(&view, &trusted, self.config.theta) {
            let current = self.library.assignment.get(&agent).copied().flatten();
            match sel {
                Selection::Keep(_) => {}
                Selection::Switch(t) => {
                    if current != Some(t) {
                        self.library.assignment.insert(agent, Some(t));
                        events.push(ModelEvent::Switched { agent, from: current, to: t });
                    }
                }
                Selection::FlagNewModel => {
                    if current.is_some() && self.config.learn_online {
                        self.library.assignment.insert(agent, None);
                        events.push(ModelEvent::Flagged { agent });
                    }
                }
            }
        }
        if !self.config.learn_online {
            return Ok(events);
        }
        let ready: Vec<AgentId> = self
            .fresh
            .iter()
            .filter(|(_, v)| v.len() >= self.config.buffer)
            .map(|(a, _)| *a)
            .collect();
        for agent in ready {
            let examples = self.fresh.remove(&agent).unwrap_or_default();
            let team = self.teams[&agent];
            if self.library.types.len() >= self.config.max_types {
                // library full: fold the data into the best-agreeing known type
                let best = self
                    .library
                    .types_of(team)
                    .max_by(|a, b| {
                        let f = |t: TypeId| self.trackers.get(&(agent, t)).map_or(0.0, |k| k.fraction());
                        f(*a).total_cmp(&f(*b)).then(b.cmp(a))
                    });
                if let Some(t) = best {
                    self.buffers[t].extend(examples);
                    self.library.assignment.insert(agent, Some(t));
                }
                continue;
            }
            let model = learn_stacked_with(&examples, self.config.max_leaves)?;
            let name = format!("{}_learned{}", team.name(), self.library.types.len());
            let t = self.library.add(name, team, model);
            self.reservoirs.push(examples.iter().cloned().collect());
            self.buffers.push(Vec::new());
            self.library.assignment.insert(agent, Some(t));
            self.trackers.insert((agent, t), AgreementTracker::new(self.config.window));
            events.push(ModelEvent::Learned { agent, type_id: t, examples: examples.len() });
        }
        for t in 0..self.library.types.len() {
            if self.buffers[t].len() < self.config.buffer {
                continue;
            }
            let buf = std::mem::take(&mut self.buffers[t]);
            if self.reservoirs[t].is_empty() && self.library.types[t].model.train_count > 0 {
                // nothing to compare against yet: the first buffer only seeds the reservoir
                self.seed_reservoir(t, &buf);
                continue;
            }
            let out = incremental_update(
                &self.library.types[t].model,
                &mut self.reservoirs[t],
                &buf,
                self.config.reservoir,
                self.config.max_leaves,
            )?;
            events.push(ModelEvent::Refit {
                type_id: t,
                replaced: out.replaced,
                old_accuracy: out.old_accuracy,
                new_accuracy: out.new_accuracy,
            });
            self.library.types[t].model = out.model;
        }
        Ok(events)
    }

    /// Seed a type's reservoir with its training data so refits keep it in view.
    pub fn seed_reservoir(&mut self, t: TypeId, examples: &[Example]) {
        let r = &mut self.reservoirs[t];
        r.extend(examples.iter().cloned());
        while r.len() > self.config.reservoir {
            r.pop_front();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(x: f64, a: ActionKind) -> Example {
        let mut v = [0.0; N_FEATURES];
        v[0] = x;
        v[1] = (x * 3.0) % 7.0;
        Example { features: FeatureVector(v), action: a }
    }

    fn toy(n: usize) -> Vec<Example> {
        (0..n)
            .map(|i| {
                let x = (i % 20) as f64;
                let a = if x < 7.0 {
                    ActionKind::MoveN
                } else if x < 14.0 {
                    ActionKind::Shoot
                } else {
                    ActionKind::RotateCw
                };
                ex(x, a)
            })
            .collect()
    }

    #[test]
    fn stacked_fits_separable_data() {
        let data = toy(200);
        let m = learn_stacked(&data).unwrap();
        assert_eq!(m.accuracy(&data), 1.0);
        assert_eq!(m.experts.len(), 8);
        assert!(learn_stacked(&[]).is_err());
    }

    #[test]
    fn constant_action_is_always_predicted() {
        let data: Vec<Example> = (0..50).map(|i| ex(i as f64, ActionKind::MoveW)).collect();
        let m = learn_stacked(&data).unwrap();
        assert!((0..100).all(|i| m.predict(&ex(i as f64 * 0.37, ActionKind::Noop).features) == ActionKind::MoveW));
    }

    #[test]
    fn agreement_window_arithmetic() {
        let mut t = AgreementTracker::new(10);
        for i in 0..10 {
            t.push(i < 7);
        }
        assert!((t.fraction() - 0.7).abs() < 1e-12);
        t.push(true);
        // oldest (true) dropped, new true added
        assert!((t.fraction() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn selection_rules() {
        let m = learn_stacked(&toy(40)).unwrap();
        let mut lib = ModelLibrary::default();
        lib.add("a", Team::Guards, m.clone());
        lib.add("b", Team::Guards, m);
        let a = AgentId(1);
        lib.assignment.insert(a, Some(0));
        let mk = |hits: usize| {
            let mut t = AgreementTracker::new(10);
            for i in 0..10 {
                t.push(i < hits);
            }
            t
        };
        let mut tr = Trackers::new();
        tr.insert((a, 0), mk(9));
        tr.insert((a, 1), mk(3));
        assert_eq!(select_or_flag(&lib, &tr, 0.6)[&a], Selection::Keep(0));
        tr.insert((a, 0), mk(3));
        tr.insert((a, 1), mk(8));
        assert_eq!(select_or_flag(&lib, &tr, 0.6)[&a], Selection::Switch(1));
        tr.insert((a, 1), mk(2));
        assert_eq!(select_or_flag(&lib, &tr, 0.6)[&a], Selection::FlagNewModel);
    }

    #[test]
    fn incremental_update_keeps_better_model() {
        let data = toy(400);
        let m = learn_stacked(&data).unwrap();
        let mut res: VecDeque<Example> = data.iter().cloned().collect();
        let out = incremental_update(&m, &mut res, &toy(200), 500, DEFAULT_MAX_LEAVES).unwrap();
        assert!((out.new_accuracy - out.old_accuracy).abs() <= 0.02);
        assert_eq!(res.len(), 500);
        // empty reservoir reduces to plain training
        let mut empty = VecDeque::new();
        let out = incremental_update(&m, &mut empty, &toy(100), 500, DEFAULT_MAX_LEAVES).unwrap();
        assert_eq!(out.model, learn_stacked(&toy(100)).unwrap());
    }

    #[test]
    fn manager_learns_new_type_for_unexplained_agent() {
        let mut lib = ModelLibrary::default();
        let only_n: Vec<Example> = (0..100).map(|i| ex(i as f64, ActionKind::MoveN)).collect();
        lib.add("g", Team::Attackers, learn_stacked(&only_n).unwrap());
        let mut mgr = ModelManager::new(lib, ModelConfig { buffer: 40, ..ModelConfig::default() });
        let a = AgentId(3);
        mgr.begin_episode([(a, AgentKind::Attacker)]);
        let mut learned = false;
        for (i, e) in toy(400).iter().filter(|e| e.action != ActionKind::MoveN).enumerate() {
            mgr.observe(a, &e.features, e.action);
            let ev = mgr.update().unwrap();
            learned |= ev.iter().any(|e| matches!(e, ModelEvent::Learned { .. }));
            if i > 200 {
                break;
            }
        }
        assert!(learned);
        assert_eq!(mgr.library.types.len(), 2);
        assert_eq!(mgr.library.assignment[&a], Some(1));
    }
}
