mod oracles;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use adhoc_core::agent::{AdHocAgent, AgentConfig, NoModels};
use adhoc_core::env::{self, hit_test, Action, AgentId, AgentKind, Cell, Dir, GridConfig, JointAction, WorldState};
use adhoc_core::features::{extract, slot, BLOCK, IDX_DEAD_ATTACKERS, IDX_NEAREST_ATTACKER, N_BLOCKS, N_FEATURES};
use adhoc_core::kr::fort::{self, heuristic, rank_fn};
use adhoc_core::kr::syntax::PredKind;
use adhoc_core::kr::*;
use oracles::*;
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// States of one episode where everyone picks uniformly among legal actions.
fn random_run(seed: u64, len: usize) -> Vec<(WorldState, JointAction)> {
    let cfg = GridConfig::default();
    let mut s = env::reset(&cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..len {
        if env::terminal(&s).is_some() {
            break;
        }
        let joint: JointAction =
            s.alive().map(|a| (a.id, *env::legal_actions(&s, a.id).unwrap().choose(&mut rng).unwrap())).collect();
        let next = env::step(&s, &joint).unwrap().0;
        out.push((s, joint));
        s = next;
    }
    out.push((s, JointAction::new()));
    out
}

fn mirror_dir(d: Dir) -> Dir {
    match d {
        Dir::E => Dir::W,
        Dir::W => Dir::E,
        d => d,
    }
}

fn mirror_action(a: Action) -> Action {
    match a {
        Action::Move(d) => Action::Move(mirror_dir(d)),
        Action::RotateCw => Action::RotateCcw,
        Action::RotateCcw => Action::RotateCw,
        a => a,
    }
}

fn mirror(s: &WorldState) -> WorldState {
    let mut cfg = (*s.config).clone();
    let w = cfg.width;
    cfg.fort_cells = cfg.fort_cells.iter().map(|c| Cell::new(w - 1 - c.x, c.y)).collect();
    let mut m = s.clone();
    m.config = Arc::new(cfg);
    for a in &mut m.agents {
        a.pos = Cell::new(w - 1 - a.pos.x, a.pos.y);
        a.dir = mirror_dir(a.dir);
    }
    m
}

fn same_angle(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d < 1e-9 || (std::f64::consts::TAU - d) < 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn episodes_conserve_agents_and_cells(seed in 0u64..1_000_000) {
        let run = random_run(seed, 100);
        for w in run.windows(2) {
            let ((s, joint), (next, _)) = (&w[0], &w[1]);
            prop_assert_eq!(&env::step(s, joint).unwrap().0, next);
            prop_assert!(next.alive().count() <= s.alive().count());
            for (a, b) in s.agents.iter().zip(&next.agents) {
                if !a.alive {
                    prop_assert!(!b.alive);
                    prop_assert_eq!((a.pos, a.dir), (b.pos, b.dir));
                }
                prop_assert!(b.shots_hit <= b.shots_fired);
            }
            let cells: HashSet<Cell> = next.alive().map(|a| a.pos).collect();
            prop_assert_eq!(cells.len(), next.alive().count());
        }
        let (last, _) = run.last().unwrap();
        if env::terminal(last).is_some() {
            let joint: JointAction = last.alive().map(|a| (a.id, Action::Noop)).collect();
            prop_assert!(env::step(last, &joint).is_err());
        }
    }

    #[test]
    fn hits_depend_only_on_relative_geometry(
        fx in 0i32..20, fy in 0i32..20, dx in -6i32..=6, dy in -6i32..=6, tx in -30i32..30, ty in -30i32..30, d in 0usize..4,
    ) {
        let cfg = GridConfig::default();
        let dir = Dir::ALL[d];
        let (a, b) = (Cell::new(fx, fy), Cell::new(fx + dx, fy + dy));
        let (a2, b2) = (Cell::new(fx + tx, fy + ty), Cell::new(fx + dx + tx, fy + dy + ty));
        prop_assert_eq!(hit_test(&cfg, a, dir, b), hit_test(&cfg, a2, dir, b2));
    }

    #[test]
    fn features_are_pure_bounded_and_mirror(seed in 0u64..1_000_000, pick in 0usize..100) {
        let run = random_run(seed, 40);
        let (s, joint) = &run[pick % run.len()];
        for a in &s.agents {
            let prev = joint.get(&a.id).copied().unwrap_or(Action::Noop);
            let f = extract(s, a.id, prev).unwrap();
            prop_assert_eq!(f.values().len(), N_FEATURES);
            prop_assert_eq!(&f, &extract(s, a.id, prev).unwrap());
            let n_att = s.attackers().count() as f64;
            prop_assert!((0.0..=n_att).contains(&f.get(IDX_DEAD_ATTACKERS)));
            prop_assert!(f.get(IDX_NEAREST_ATTACKER) >= 0.0);
            for b in 0..N_BLOCKS {
                prop_assert!(f.get(b * BLOCK + slot::DIST_CENTER) >= 0.0);
                prop_assert!(f.get(b * BLOCK + slot::DIST_FORT) >= 0.0);
            }
            let m = extract(&mirror(s), a.id, mirror_action(prev)).unwrap();
            for b in 0..N_BLOCKS {
                let o = b * BLOCK;
                if f.get(o + slot::X) < 0.0 {
                    continue;
                }
                prop_assert!(same_angle(m.get(o + slot::ANGLE), -f.get(o + slot::ANGLE)), "block {}", b);
                let dir = Dir::ALL[f.get(o + slot::ORIENTATION) as usize];
                prop_assert_eq!(m.get(o + slot::ORIENTATION), mirror_dir(dir).index() as f64);
                prop_assert!((m.get(o + slot::DIST_FORT) - f.get(o + slot::DIST_FORT)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ff_trees_keep_their_shape((rows, labels, leaves) in ff_case()) {
        prop_assert_eq!(check_ff_case(&rows, &labels, leaves), Ok(()));
    }

    #[test]
    fn agreement_is_the_window_mean(flags in proptest::collection::vec(any::<bool>(), 0..80), window in 1usize..40) {
        prop_assert_eq!(check_agreement(&flags, window), Ok(()));
    }

    #[test]
    fn stacked_prediction_is_pure(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let run = random_run(seed, 30);
        let examples: Vec<adhoc_core::features::Example> = run
            .iter()
            .filter(|(_, j)| !j.is_empty())
            .flat_map(|(s, j)| j.iter().map(move |(id, a)| (s, *id, *a)))
            .map(|(s, id, a)| adhoc_core::features::Example { features: extract(s, id, Action::Noop).unwrap(), action: a.kind() })
            .collect();
        let m = adhoc_core::models::learn_stacked(&examples).unwrap();
        let again = adhoc_core::models::learn_stacked(&examples).unwrap();
        prop_assert_eq!(&m, &again);
        let probe = &examples.choose(&mut rng).unwrap().features;
        prop_assert_eq!(m.predict(probe), m.predict(probe));
        prop_assert!(adhoc_core::env::ActionKind::ALL.contains(&m.predict(probe)));
    }
}

fn small_world(ah: (i32, i32, usize), att: (i32, i32, usize)) -> WorldState {
    let cfg = small_grid(5);
    world(
        &cfg,
        vec![
            agent(0, AgentKind::AdHocGuard, ah.0, ah.1, Dir::ALL[ah.2]),
            agent(1, AgentKind::Attacker, att.0, att.1, Dir::ALL[att.2]),
        ],
    )
}

fn grounded(state: &WorldState) -> GroundedDomain {
    ground(&fort_attack_domain().unwrap(), &GroundContext::fort_attack(state)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plans_replay_to_a_goal_state(
        ax in 0i32..5, ay in 0i32..5, ad in 0usize..4, tx in 0i32..5, ty in 0i32..5, td in 0usize..4, horizon in 1usize..=4,
    ) {
        prop_assume!((ax, ay) != (tx, ty));
        let st = small_world((ax, ay, ad), (tx, ty, td));
        let g = grounded(&st);
        let s = fort::observe(&g, &st).unwrap();
        let ah = g.sym("ah").unwrap();
        let goal = Goal::new("shoot_target", vec![g.sym("attacker1").unwrap()]);
        let tl = Timeline::default();
        let opts = PlanOptions { horizon, node_limit: 1_000_000 };
        let h = heuristic(&g, &goal, &tl, ah);
        let rank = rank_fn(&g);
        let found = plan(&g, &s, ah, &goal, &tl, &opts, &h, &rank).unwrap();
        if let Some(p) = found {
            prop_assert!(p.len() <= horizon);
            let mut cur = s.clone();
            prop_assert_eq!(&p.states[0], &cur);
            for (k, step) in p.steps.iter().enumerate() {
                let mut acts = step.exogenous.clone();
                if let Some(a) = step.action {
                    prop_assert!(g.check_executable(&cur, &a), "step {} not executable", k);
                    acts.push(a);
                }
                cur = g.progress(&cur, &acts).unwrap();
                prop_assert!(g.violation(&cur).is_none());
                prop_assert_eq!(&p.states[k + 1], &cur);
            }
            prop_assert!(g.goal_instance(&cur, &goal).is_some());
        }
    }

    #[test]
    fn progress_keeps_untouched_fluents_and_stores_no_defined_ones(seed in 0u64..1_000_000, pick in 0usize..64) {
        let cfg = GridConfig::default();
        let st = env::reset(&cfg, seed).unwrap();
        let g = grounded(&st);
        let s = fort::observe(&g, &st).unwrap();
        let ah = g.sym("ah").unwrap();
        let cands: Vec<Atom> = g.candidates(&s, ah).into_iter().filter(|a| g.check_executable(&s, a)).collect();
        prop_assume!(!cands.is_empty());
        let act = cands[pick % cands.len()];
        let next = g.progress(&s, &[act]).unwrap();
        let effects: Vec<Atom> = g.causal_instances(&s, &act).into_iter().map(|(_, e, _)| e).collect();
        let touched = |a: &Atom| effects.iter().any(|e| e.pred == a.pred && e.args[0] == a.args[0]);
        for a in s.atoms() {
            if !touched(a) {
                prop_assert!(next.contains(a), "{} lost", g.desc.atom_text(a));
            }
        }
        for a in next.atoms() {
            prop_assert!(g.desc.decl(a.pred).kind != PredKind::Defined, "{} stored", g.desc.atom_text(a));
            if !s.contains(a) {
                prop_assert!(effects.contains(a), "{} appeared", g.desc.atom_text(a));
            }
        }
        let shot = g.pred("shot").unwrap();
        let agent_shot = g.pred("agent_shot").unwrap();
        for n in &g.ctx.agents {
            let v = g.sym(&n.name).unwrap();
            let ext = n.sort != "ah_agent";
            prop_assert_eq!(g.holds(&next, &Atom::new(agent_shot, &[v])), ext && next.contains(&Atom::new(shot, &[v])));
        }
    }

    #[test]
    fn regions_bridge_cells(w in 5i32..=24, h in 5i32..=24, seed in 0u64..1000) {
        let mut cfg = GridConfig::with_size(w, h);
        cfg.n_guards = 1;
        cfg.n_attackers = 1;
        let st = env::reset(&cfg, seed).unwrap();
        let g0 = grounded(&st);
        let g = g0.with_granularity(Granularity::all_fine(&g0.zones));
        let s = fort::observe(&g, &st).unwrap();
        let in_region = g.pred("in_region").unwrap();
        for a in &st.agents {
            let v = g.agent_val(a.id).unwrap();
            let regions = g.query(&s, in_region, &[v]);
            prop_assert_eq!(regions.len(), 1);
            prop_assert_eq!(regions[0].args[1], Val::Int(g.zones.zone_of(a.pos) as i32));
        }
        let adj = g.pred("next_to_region").unwrap();
        for a in g.query(&s, adj, &[]) {
            prop_assert!(g.holds(&s, &Atom::new(adj, &[a.args[1], a.args[0]])));
        }
    }

    #[test]
    fn more_observations_keep_retractions_consistent(k in 0usize..300, extra in 0usize..6, truth in any::<bool>()) {
        let fx = default_fixtures(300, 11)[k].clone();
        let n = fx.np + fx.nq;
        let mut more = fx.clone();
        more.observations.push((extra % n, truth));
        let before = fx.oracle();
        if let (Some(b), Some(a)) = (before, more.oracle()) {
            let mask = |v: &[usize]| v.iter().fold(0u32, |m, &i| m | 1 << i);
            prop_assert!(more.consistent(mask(&a)));
            // a default contradicted by an earlier observation stays retracted
            for &(i, v) in &fx.observations {
                let default_value = i < fx.np;
                if v != default_value {
                    prop_assert!(b.contains(&i) && a.contains(&i));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn the_adhoc_guard_always_acts_legally(seed in 0u64..1_000_000) {
        let cfg = GridConfig::default();
        let mut s = env::reset(&cfg, seed).unwrap();
        let agent = AdHocAgent::new(&fort_attack_domain().unwrap(), &s, AgentConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prev: BTreeMap<AgentId, Action> = BTreeMap::new();
        for _ in 0..20 {
            if env::terminal(&s).is_some() || !s.agents[0].alive {
                break;
            }
            let d = agent.decide(&s, &NoModels, &prev);
            prop_assert!(env::legal_actions(&s, AgentId(0)).unwrap().contains(&d.action));
            let mut joint: JointAction =
                s.alive().map(|a| (a.id, *env::legal_actions(&s, a.id).unwrap().choose(&mut rng).unwrap())).collect();
            joint.insert(AgentId(0), d.action);
            prop_assert_eq!(joint.len(), s.alive().count());
            s = env::step(&s, &joint).unwrap().0;
        }
    }
}
