//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use adhoc_core::env::{hit_test, AgentId, AgentKind, AgentState, Cell, Dir, GridConfig, WorldState};

pub fn agent(id: u8, kind: AgentKind, x: i32, y: i32, dir: Dir) -> AgentState {
    AgentState { id: AgentId(id), kind, pos: Cell::new(x, y), dir, alive: true, shots_fired: 0, shots_hit: 0 }
}

pub fn small_grid(size: i32) -> GridConfig {
    let mut cfg = GridConfig::with_size(size, size);
    cfg.n_guards = 1;
    cfg.n_attackers = 1;
    cfg
}

pub fn world(cfg: &GridConfig, agents: Vec<AgentState>) -> WorldState {
    WorldState { config: Arc::new(cfg.clone()), agents, step: 0 }
}

/// Fewest steps for a shooter to hit a stationary target: moves to free
/// in-bounds cells, quarter turns, and a final shot.
pub fn bfs_shoot_steps(cfg: &GridConfig, from: Cell, dir: Dir, target: Cell, horizon: usize) -> Option<usize> {
    let mut seen = HashSet::new();
    let mut q = VecDeque::new();
    q.push_back((from, dir, 0usize));
    seen.insert((from, dir));
    while let Some((c, d, n)) = q.pop_front() {
        if hit_test(cfg, c, d, target) {
            return (n + 1 <= horizon).then_some(n + 1);
        }
        if n + 1 >= horizon {
            continue;
        }
        let mut next = vec![(c, d.cw()), (c, d.ccw())];
        for m in Dir::ALL {
            let c2 = c.offset(m);
            if cfg.in_bounds(c2) && c2 != target {
                next.push((c2, d));
            }
        }
        for (c2, d2) in next {
            if seen.insert((c2, d2)) {
                q.push_back((c2, d2, n + 1));
            }
        }
    }
    None
}

/// A default-conflict fixture: `np` defaults `p(ai)` (true by default) and
/// `nq` defaults `-q(bj)`, denials over those literals, and observations.
#[derive(Clone, Debug)]
pub struct DefaultFixture {
    pub np: usize,
    pub nq: usize,
    /// Each denial is a list of (atom index, required truth); atoms `0..np`
    /// are `p`, the rest `q`.
    pub denials: Vec<Vec<(usize, bool)>>,
    pub observations: Vec<(usize, bool)>,
}

impl DefaultFixture {
    fn atom(&self, i: usize) -> String {
        if i < self.np {
            format!("p(a{})", i + 1)
        } else {
            format!("q(b{})", i - self.np + 1)
        }
    }

    pub fn domain_text(&self) -> String {
        let mut t = String::new();
        let items = |pre: &str, n: usize| (1..=n).map(|k| format!("{pre}{k}")).collect::<Vec<_>>().join(", ");
        t += &format!("sort pitem = {{{}}}.\n", if self.np > 0 { items("a", self.np) } else { "a_none".into() });
        t += &format!("sort qitem = {{{}}}.\n", if self.nq > 0 { items("b", self.nq) } else { "b_none".into() });
        t += "inertial p(pitem).\ninertial q(qitem).\n";
        if self.np > 0 {
            t += "initial default p(X) if pitem(X).\n";
        }
        if self.nq > 0 {
            t += "initial default -q(X) if qitem(X).\n";
        }
        for d in &self.denials {
            let lits: Vec<String> =
                d.iter().map(|&(i, v)| if v { self.atom(i) } else { format!("not {}", self.atom(i)) }).collect();
            t += &format!("false if {}.\n", lits.join(", "));
        }
        t
    }

    /// Truth of each atom when the defaults in `retract` are withdrawn.
    fn values(&self, retract: u32) -> Vec<bool> {
        (0..self.np + self.nq)
            .map(|i| {
                let r = retract >> i & 1 == 1;
                if i < self.np {
                    !r
                } else {
                    r
                }
            })
            .collect()
    }

    pub fn consistent(&self, retract: u32) -> bool {
        let v = self.values(retract);
        self.observations.iter().all(|&(i, b)| v[i] == b) && !self.denials.iter().any(|d| d.iter().all(|&(i, b)| v[i] == b))
    }

    /// Subset-minimal consistent retraction sets, then the smallest, ties to the
    /// lexicographically first sorted index list.
    pub fn oracle(&self) -> Option<Vec<usize>> {
        let n = self.np + self.nq;
        let ok: Vec<u32> = (0..1u32 << n).filter(|&m| self.consistent(m)).collect();
        let minimal: Vec<u32> = ok.iter().copied().filter(|&m| !ok.iter().any(|&o| o != m && o & m == o)).collect();
        let as_list = |m: u32| (0..n).filter(|&i| m >> i & 1 == 1).collect::<Vec<_>>();
        minimal.into_iter().map(as_list).min_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)))
    }
}

/// Deterministic fixture family covering 1..=6 defaults.
pub fn default_fixtures(count: usize, seed: u64) -> Vec<DefaultFixture> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let n = 1 + k % 6;
            let np = rng.random_range(0..=n);
            let nq = n - np;
            let nd = rng.random_range(0..4);
            let denials = (0..nd)
                .map(|_| {
                    let len = rng.random_range(1..=n.min(3));
                    let mut idx: Vec<usize> = (0..n).collect();
                    use rand::seq::SliceRandom;
                    idx.shuffle(&mut rng);
                    idx[..len].iter().map(|&i| (i, rng.random_bool(0.6) == (i < np))).collect()
                })
                .collect();
            let no = rng.random_range(0..=2.min(n));
            let observations = (0..no).map(|_| (rng.random_range(0..n), rng.random_bool(0.5))).collect();
            DefaultFixture { np, nq, denials, observations }
        })
        .collect()
}

/// Run the ad hoc guard from `start` for up to `ticks` ticks while everyone
/// else follows `script` (no-op when it returns nothing); returns the trace.
pub fn scripted_trace(
    start: WorldState,
    ticks: usize,
    script: impl Fn(u32, AgentId) -> Option<adhoc_core::env::Action>,
) -> Vec<u8> {
    use adhoc_core::agent::{AdHocAgent, AgentConfig, NoModels};
    use adhoc_core::env::{self, Action};
    use adhoc_core::explain::TraceWriter;
    use std::collections::BTreeMap;

    let dom = adhoc_core::kr::fort_attack_domain().unwrap();
    let mut s = start;
    let mut agent = AdHocAgent::new(&dom, &s, AgentConfig::default()).unwrap();
    let mut prev: BTreeMap<AgentId, Action> = s.agents.iter().map(|a| (a.id, Action::Noop)).collect();
    let mut buf = Vec::new();
    let mut w = TraceWriter::new(&mut buf, &s, Some(agent.domain()), 0, "scripted").unwrap();
    for _ in 0..ticks {
        if env::terminal(&s).is_some() {
            break;
        }
        let d = agent.decide(&s, &NoModels, &prev);
        let mut joint: env::JointAction =
            s.alive().map(|a| (a.id, script(s.step, a.id).unwrap_or(Action::Noop))).collect();
        if s.agents[agent.id.0 as usize].alive {
            joint.insert(agent.id, d.action);
        }
        let (next, events) = env::step(&s, &joint).unwrap();
        agent.observe_step(&s, &joint, &events);
        w.step(&s, &joint, &events, Some(&d)).unwrap();
        prev.extend(joint.iter().map(|(k, v)| (*k, *v)));
        s = next;
    }
    drop(w);
    buf
}

/// The ad hoc guard at (3,13) facing north with attacker1 at (7,18), which
/// steps east at step 2. Everyone else stays put.
pub fn doorway_scenario(ticks: usize) -> Vec<u8> {
    use adhoc_core::env::Action;
    let cfg = GridConfig::default();
    let mut s = world(
        &cfg,
        vec![
            agent(0, AgentKind::AdHocGuard, 3, 13, Dir::N),
            agent(1, AgentKind::Guard, 17, 18, Dir::S),
            agent(2, AgentKind::Guard, 15, 18, Dir::S),
            agent(3, AgentKind::Attacker, 7, 18, Dir::N),
            agent(4, AgentKind::Attacker, 19, 0, Dir::N),
            agent(5, AgentKind::Attacker, 18, 0, Dir::N),
        ],
    );
    s.step = 1;
    scripted_trace(s, ticks, |step, id| (step == 2 && id == AgentId(3)).then_some(Action::Move(Dir::E)))
}

/// Checks each condition of a cited ground axiom against the stored belief
/// snapshot, computing defined fluents and geometry from scratch.
pub struct Rechecker<'a> {
    trace: &'a adhoc_core::explain::Trace,
    sorts: std::collections::HashMap<String, String>,
}

fn split_top(body: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0, 0);
    let b = body.as_bytes();
    for i in 0..b.len() {
        match b[i] {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b',' if depth == 0 => {
                out.push(body[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(body[start..].trim());
    out
}

fn call(text: &str) -> (&str, Vec<&str>) {
    match text.split_once('(') {
        Some((n, rest)) => (n, rest.trim_end_matches(')').split(',').map(str::trim).collect()),
        None => (text, vec![]),
    }
}

fn dir_of(s: &str) -> Option<Dir> {
    Some(match s {
        "n" => Dir::N,
        "e" => Dir::E,
        "s" => Dir::S,
        "w" => Dir::W,
        _ => return None,
    })
}

impl<'a> Rechecker<'a> {
    pub fn new(trace: &'a adhoc_core::explain::Trace) -> Self {
        let sorts = trace.header.agents.iter().map(|a| (a.name.clone(), a.sort.clone())).collect();
        Rechecker { trace, sorts }
    }

    fn grid(&self) -> &GridConfig {
        &self.trace.header.grid
    }

    fn zones(&self) -> (i32, i32, i32) {
        let z = self.trace.header.zone_size;
        let g = self.grid();
        (z, (g.width + z - 1) / z, (g.height + z - 1) / z)
    }

    fn zone_of(&self, x: i32, y: i32) -> i32 {
        let (z, nx, _) = self.zones();
        (y / z) * nx + x / z
    }

    fn guard_zone(&self, r: i32) -> bool {
        let (_, nx, ny) = self.zones();
        let fort: HashSet<i32> = self.grid().fort_cells.iter().map(|c| self.zone_of(c.x, c.y)).collect();
        let (rx, ry) = (r % nx, r / nx);
        !fort.contains(&r)
            && [(0, 1), (1, 0), (0, -1), (-1, 0)].iter().any(|(dx, dy)| {
                let (x, y) = (rx + dx, ry + dy);
                x >= 0 && y >= 0 && x < nx && y < ny && fort.contains(&(y * nx + x))
            })
    }

    /// Snapshot literals the reference points into.
    pub fn snapshot(&self, a: &adhoc_core::explain::AxiomRef) -> Option<HashSet<String>> {
        let r = self.trace.step(a.step)?.reasoning.as_ref()?;
        let lits = if a.offset == 0 { &r.belief } else { r.plan_states.get(a.offset - 1)? };
        Some(lits.iter().cloned().collect())
    }

    pub fn holds(&self, a: &adhoc_core::explain::AxiomRef) -> bool {
        let Some(snap) = self.snapshot(a) else { return false };
        match a.text.split_once(" if ") {
            Some((_, body)) => split_top(body).into_iter().all(|l| self.lit(l, &snap)),
            None => true,
        }
    }

    fn lit(&self, l: &str, snap: &HashSet<String>) -> bool {
        if let Some(rest) = l.strip_prefix("not ") {
            return !self.atom(rest, snap);
        }
        if let Some((x, y)) = l.split_once(" != ") {
            return x.trim() != y.trim();
        }
        if let Some((x, y)) = l.split_once(" = ") {
            return x.trim() == y.trim();
        }
        self.atom(l, snap)
    }

    fn cell_of(&self, a: &str, snap: &HashSet<String>) -> Option<(i32, i32)> {
        let pre = format!("in({a},");
        snap.iter().find(|s| s.starts_with(&pre)).map(|s| {
            let (_, args) = call(s);
            (args[1].parse().unwrap(), args[2].parse().unwrap())
        })
    }

    fn is_ext(&self, a: &str) -> bool {
        matches!(self.sorts.get(a).map(String::as_str), Some("guard" | "attacker"))
    }

    fn in_region(&self, a: &str, r: i32, snap: &HashSet<String>) -> bool {
        self.cell_of(a, snap).is_some_and(|(x, y)| self.zone_of(x, y) == r) || snap.contains(&format!("region_in({a},{r})"))
    }

    fn guarded(&self, r: i32, snap: &HashSet<String>) -> bool {
        self.guard_zone(r)
            && self.sorts.iter().any(|(n, s)| {
                (s == "guard" || s == "ah_agent") && self.in_region(n, r, snap) && !snap.contains(&format!("shot({n})"))
            })
    }

    fn unguarded_zone(&self) -> impl Fn(&HashSet<String>) -> bool + '_ {
        move |snap| {
            let (_, nx, ny) = self.zones();
            (0..nx * ny).any(|r| self.guard_zone(r) && !self.guarded(r, snap))
        }
    }

    fn atom(&self, text: &str, snap: &HashSet<String>) -> bool {
        let (name, args) = call(text);
        let int = |i: usize| args[i].parse::<i32>().expect("integer argument");
        let g = self.grid();
        let sort = |a: &str| self.sorts.get(a).cloned().unwrap_or_default();
        match name {
            "ah_agent" | "guard" | "attacker" => sort(args[0]) == name,
            "ext_agent" => self.is_ext(args[0]),
            "agent" => self.sorts.contains_key(args[0]),
            "dir" => dir_of(args[0]).is_some(),
            "x_val" => (0..g.width).contains(&int(0)),
            "y_val" => (0..g.height).contains(&int(0)),
            "region" => {
                let (_, nx, ny) = self.zones();
                (0..nx * ny).contains(&int(0))
            }
            "in" | "face" | "shot" | "region_in" | "spread_attack" | "shoots" => snap.contains(text),
            "agent_in" => self.is_ext(args[0]) && snap.contains(&format!("in({},{},{})", args[0], args[1], args[2])),
            "agent_face" => self.is_ext(args[0]) && snap.contains(&format!("face({},{})", args[0], args[1])),
            "agent_shot" => self.is_ext(args[0]) && snap.contains(&format!("shot({})", args[0])),
            "in_region" => self.in_region(args[0], int(1), snap),
            "in_range" => {
                let face = snap.iter().find_map(|s| s.strip_prefix(&format!("face({},", args[0])).and_then(|d| dir_of(&d[..1])));
                match (self.cell_of(args[0], snap), face, self.cell_of(args[1], snap)) {
                    (Some((x1, y1)), Some(d), Some((x2, y2))) => hit_test(g, Cell::new(x1, y1), d, Cell::new(x2, y2)),
                    _ => false,
                }
            }
            "occupied" => self.sorts.keys().any(|a| {
                self.cell_of(a, snap) == Some((int(0), int(1))) && !snap.contains(&format!("shot({a})"))
            }),
            "guarded" => self.guarded(int(0), snap),
            "unguarded_zone" => self.unguarded_zone()(snap),
            "spread_guards" => !self.unguarded_zone()(snap),
            "next_to" => {
                let inb = |x: i32, y: i32| x >= 0 && y >= 0 && x < g.width && y < g.height;
                inb(int(0), int(1)) && inb(int(2), int(3)) && (int(0) - int(2)).abs() + (int(1) - int(3)).abs() == 1
            }
            "component" => self.zone_of(int(0), int(1)) == int(2),
            "region_east" | "region_north" | "next_to_region" => {
                let (_, nx, _) = self.zones();
                let (a, b) = (int(0), int(1));
                let east = |a: i32, b: i32| a / nx == b / nx && b % nx == a % nx + 1;
                let north = |a: i32, b: i32| b == a + nx;
                match name {
                    "region_east" => east(a, b),
                    "region_north" => north(a, b),
                    _ => east(a, b) || north(a, b) || east(b, a) || north(b, a),
                }
            }
            "within_reach" => {
                let d = dir_of(args[2]).expect("direction");
                hit_test(g, Cell::new(int(0), int(1)), d, Cell::new(int(3), int(4)))
            }
            "guard_zone" => self.guard_zone(int(0)),
            "fort_cell" => g.fort_cells.contains(&Cell::new(int(0), int(1))),
            "next_dir" => matches!((args[0], args[1]), ("n", "e") | ("e", "s") | ("s", "w") | ("w", "n")),
            other => panic!("re-checker does not know `{other}` in {text}"),
        }
    }
}

/// Queries about what the ad hoc guard did, did not do, and believed.
pub fn random_queries(trace: &adhoc_core::explain::Trace, rng: &mut impl rand::Rng, n: usize) -> Vec<String> {
    use rand::seq::IndexedRandom;
    let steps: Vec<_> = trace.steps.iter().filter(|s| s.reasoning.is_some()).collect();
    let attackers: Vec<&str> =
        trace.header.agents.iter().filter(|a| a.sort == "attacker").map(|a| a.name.as_str()).collect();
    let mut out = Vec::new();
    for _ in 0..n {
        let Some(s) = steps.choose(rng) else { break };
        let r = s.reasoning.as_ref().unwrap();
        let step = s.step;
        let q = match rng.random_range(0..3) {
            0 => match r.action.as_deref() {
                Some(a) => {
                    let (name, args) = adhoc_core::explain::split_call(a).unwrap();
                    format!("why {name}({}) in step {step}", args[1..].join(","))
                }
                None => format!("why wait in step {step}"),
            },
            1 => {
                let me = s.agents.iter().find(|a| a.kind == adhoc_core::env::AgentKind::AdHocGuard).unwrap().pos;
                match rng.random_range(0..4) {
                    0 => {
                        let (dx, dy) = [(0, 1), (1, 0), (0, -1), (-1, 0)][rng.random_range(0..4)];
                        format!("why not move to ({},{}) in step {step}", me.x + dx, me.y + dy)
                    }
                    1 => format!("why not rotate {} in step {step}", ["n", "e", "s", "w"][rng.random_range(0..4)]),
                    2 => format!("why not shoot {} in step {step}", attackers.choose(rng).unwrap()),
                    _ => format!("why not wait in step {step}"),
                }
            }
            _ => {
                let lit = r.belief.choose(rng).unwrap();
                format!("why belief {lit} at step {step}")
            }
        };
        out.push(q);
    }
    out
}

/// Random labelled rows whose categorical columns hold valid categories.
pub fn ff_case() -> impl proptest::strategy::Strategy<Value = (Vec<adhoc_core::features::FeatureVector>, Vec<bool>, usize)> {
    use adhoc_core::features::{feature_kind, FeatureKind, FeatureVector, N_FEATURES};
    use proptest::prelude::*;
    let cell = |f: usize| -> BoxedStrategy<f64> {
        match feature_kind(f) {
            FeatureKind::Categorical(k) => (0..k).prop_map(|c| c as f64).boxed(),
            FeatureKind::Continuous => (0..6i32).prop_map(f64::from).boxed(),
        }
    };
    let row = (0..N_FEATURES).map(cell).collect::<Vec<_>>().prop_map(|v| {
        let mut a = [0.0; N_FEATURES];
        a.copy_from_slice(&v);
        FeatureVector(a)
    });
    (2usize..48)
        .prop_flat_map(move |n| (proptest::collection::vec(row.clone(), n), proptest::collection::vec(any::<bool>(), n), 2usize..60))
}

/// Structural and behavioural checks of a trained fast-and-frugal tree.
pub fn check_ff_case(rows: &[adhoc_core::features::FeatureVector], labels: &[bool], max_leaves: usize) -> Result<(), String> {
    use adhoc_core::features::{feature_kind, FeatureKind, N_FEATURES};
    use adhoc_core::models::{learn_ff_tree, Test};
    let t = learn_ff_tree(rows, labels, max_leaves).map_err(|e| e.to_string())?;
    if t.leaves() > N_FEATURES || t.leaves() > max_leaves.max(1) {
        return Err(format!("{} leaves with budget {max_leaves}", t.leaves()));
    }
    if t.cues.len() + 1 != t.leaves() {
        return Err("leaf count is not cues + 1".into());
    }
    // every level sends some of the rows reaching it to its exit and some onwards
    let mut reach: Vec<usize> = (0..rows.len()).collect();
    for (lvl, c) in t.cues.iter().enumerate() {
        match (feature_kind(c.feature), c.test) {
            (FeatureKind::Categorical(k), Test::Is(v)) if v >= 0.0 && (v as usize) < k => {}
            (FeatureKind::Continuous, Test::AtMost(_)) => {}
            other => return Err(format!("level {lvl}: test {other:?} does not fit the feature")),
        }
        let (exit, on): (Vec<usize>, Vec<usize>) = reach.iter().partition(|&&i| c.test.eval(rows[i].0[c.feature]) == c.exit_on);
        if exit.is_empty() || on.is_empty() {
            return Err(format!("level {lvl} does not split the rows reaching it"));
        }
        reach = on;
    }
    for r in rows {
        let x = r.values();
        let mut want = (t.final_label, t.cues.len());
        for (i, c) in t.cues.iter().enumerate() {
            let hit = match c.test {
                Test::AtMost(th) => x[c.feature] <= th,
                Test::Is(v) => x[c.feature] == v,
            };
            if hit == c.exit_on {
                want = (c.exit_label, i + 1);
                break;
            }
        }
        let got = t.predict_traced(x);
        if got != want {
            return Err(format!("traced prediction {got:?}, sequential walk {want:?}"));
        }
        if got.1 > t.leaves() - 1 {
            return Err(format!("{} cues inspected with {} leaves", got.1, t.leaves()));
        }
    }
    if learn_ff_tree(rows, labels, max_leaves).map_err(|e| e.to_string())? != t {
        return Err("retraining gave a different tree".into());
    }
    Ok(())
}

/// Windowed agreement against the mean of the last `min(window, n)` flags.
pub fn check_agreement(flags: &[bool], window: usize) -> Result<(), String> {
    let mut tr = adhoc_core::models::AgreementTracker::new(window);
    for (i, &f) in flags.iter().enumerate() {
        let got = tr.push(f);
        let seen = &flags[..=i];
        let tail = &seen[seen.len().saturating_sub(window.max(1))..];
        let want = tail.iter().filter(|&&b| b).count() as f64 / tail.len() as f64;
        if (got - want).abs() > 1e-12 || !(0.0..=1.0).contains(&got) {
            return Err(format!("after {} flags: {got} vs {want}", i + 1));
        }
    }
    Ok(())
}
