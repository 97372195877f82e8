//! Grounding: sort universes from the game, static facts closed under the
//! static rules, rule indexes, and the cell-level restriction that
//! granularity imposes on `x_val`/`y_val` argument pairs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::syntax::*;
use super::zones::{Granularity, ZoneGrid, DEFAULT_ZONE_SIZE};
use super::KrError;
use crate::env::{AgentId, AgentKind, Cell, Dir, GridConfig, WorldState};

/// An agent as the reasoner names it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedAgent {
    pub id: AgentId,
    pub name: String,
    /// Leaf sort the agent belongs to.
    pub sort: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundContext {
    pub grid: GridConfig,
    pub zone_size: i32,
    pub agents: Vec<NamedAgent>,
}

impl GroundContext {
    /// The ad hoc guard is `ah`, other guards `guard<id+1>`, attackers
    /// `attacker1..` in id order.
    pub fn fort_attack(state: &WorldState) -> Self {
        let mut agents = Vec::new();
        let mut n_att = 0;
        for a in &state.agents {
            let (name, sort) = match a.kind {
                AgentKind::AdHocGuard => ("ah".to_string(), "ah_agent"),
                AgentKind::Guard => (format!("guard{}", a.id.0 + 1), "guard"),
                AgentKind::Attacker => {
                    n_att += 1;
                    (format!("attacker{n_att}"), "attacker")
                }
            };
            agents.push(NamedAgent { id: a.id, name, sort: sort.into() });
        }
        GroundContext { grid: (*state.config).clone(), zone_size: DEFAULT_ZONE_SIZE, agents }
    }

    pub fn name_of(&self, id: AgentId) -> Option<&str> {
        self.agents.iter().find(|a| a.id == id).map(|a| a.name.as_str())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub(crate) enum Builtin {
    /// `next_to(X1, Y1, X2, Y2)`: 4-adjacent cells.
    NextTo,
    /// `component(X, Y, R)`: cell belongs to zone.
    Component,
    /// `region_east(R1, R2)`: R2 is immediately east of R1.
    RegionEast,
    /// `region_north(R1, R2)`: R2 is immediately north of R1.
    RegionNorth,
    /// `within_reach(X1, Y1, D, X2, Y2)`: a shot from the first cell facing D hits the second.
    WithinReach,
    GuardZone,
    FortCell,
}

impl Builtin {
    fn by_name(n: &str) -> Option<Builtin> {
        Some(match n {
            "next_to" => Builtin::NextTo,
            "component" => Builtin::Component,
            "region_east" => Builtin::RegionEast,
            "region_north" => Builtin::RegionNorth,
            "within_reach" => Builtin::WithinReach,
            "guard_zone" => Builtin::GuardZone,
            "fort_cell" => Builtin::FortCell,
            _ => return None,
        })
    }
}

#[derive(Debug)]
pub(crate) struct Base {
    pub sort_index: HashMap<String, usize>,
    pub universes: Vec<Vec<Val>>,
    pub members: Vec<HashSet<Val>>,
    /// Sort index for sort-membership predicates.
    pub pred_sort: Vec<Option<usize>>,
    pub builtin: Vec<Option<Builtin>>,
    pub statics: Vec<Vec<Atom>>,
    pub static_set: HashSet<Atom>,
    pub defs: Vec<Vec<usize>>,
    pub causal: Vec<Vec<usize>>,
    pub impossible: Vec<Vec<usize>>,
    pub candidates: Vec<Vec<usize>>,
    pub pos_constraints: Vec<usize>,
    pub neg_constraints: Vec<Vec<usize>>,
    pub denials: Vec<usize>,
    pub goals: BTreeMap<String, Vec<usize>>,
    /// Argument positions `i` where args `i`, `i+1` are an `x_val`, `y_val` pair.
    pub xy_pairs: Vec<Vec<usize>>,
    pub agent_vals: Vec<(AgentId, Val)>,
    pub dir_vals: [Val; 4],
}

/// A domain description grounded for one game, at one granularity.
#[derive(Clone, Debug)]
pub struct GroundedDomain {
    pub desc: Arc<DomainDescription>,
    pub ctx: Arc<GroundContext>,
    pub zones: ZoneGrid,
    pub(crate) base: Arc<Base>,
    pub granularity: Granularity,
}

fn ground_err(r: &Rule, msg: impl Into<String>) -> KrError {
    KrError::Ground { axiom: r.text.clone(), msg: msg.into() }
}

/// Ground `desc` for the game described by `ctx`, with every zone at cell level.
pub fn ground(desc: &DomainDescription, ctx: &GroundContext) -> Result<GroundedDomain, KrError> {
    let mut desc = desc.clone();
    let zones = ZoneGrid::new(&ctx.grid, ctx.zone_size);
    let np = desc.preds.len();

    // sort universes
    let mut sort_index = HashMap::new();
    for (i, (n, _)) in desc.sorts.iter().enumerate() {
        sort_index.insert(n.clone(), i);
    }
    let mut agent_vals = Vec::new();
    for a in &ctx.agents {
        // a description without agent sorts simply does not talk about agents
        if !sort_index.contains_key(&a.sort) {
            continue;
        }
        let v = Val::Sym(desc.intern(&a.name));
        agent_vals.push((a.id, v));
    }
    let mut universes: Vec<Option<Vec<Val>>> = vec![None; desc.sorts.len()];
    fn fill(
        i: usize,
        desc: &DomainDescription,
        ctx: &GroundContext,
        zones: &ZoneGrid,
        idx: &HashMap<String, usize>,
        out: &mut Vec<Option<Vec<Val>>>,
        depth: usize,
    ) -> Result<Vec<Val>, KrError> {
        if let Some(u) = &out[i] {
            return Ok(u.clone());
        }
        if depth > desc.sorts.len() {
            return Err(KrError::Context(format!("sort `{}` is defined in terms of itself", desc.sorts[i].0)));
        }
        let (name, def) = &desc.sorts[i];
        let mut u: Vec<Val> = match def {
            SortDef::Enum(items) => items.iter().map(|s| desc.sym(s).expect("interned")).collect(),
            SortDef::Union(parts) => {
                let mut v = Vec::new();
                for p in parts {
                    v.extend(fill(idx[p], desc, ctx, zones, idx, out, depth + 1)?);
                }
                v
            }
            SortDef::Context => match name.as_str() {
                "x_val" => (0..ctx.grid.width).map(Val::Int).collect(),
                "y_val" => (0..ctx.grid.height).map(Val::Int).collect(),
                "region" => (0..zones.count() as i32).map(Val::Int).collect(),
                _ => ctx
                    .agents
                    .iter()
                    .filter(|a| &a.sort == name)
                    .map(|a| desc.sym(&a.name).expect("interned"))
                    .collect(),
            },
        };
        u.sort();
        u.dedup();
        out[i] = Some(u.clone());
        Ok(u)
    }
    for i in 0..desc.sorts.len() {
        fill(i, &desc, ctx, &zones, &sort_index, &mut universes, 0)?;
    }
    let universes: Vec<Vec<Val>> = universes.into_iter().map(Option::unwrap).collect();
    let members: Vec<HashSet<Val>> = universes.iter().map(|u| u.iter().copied().collect()).collect();

    let dir_vals = {
        let get = |s: &str| desc.sym(s).unwrap_or(Val::Nil);
        [get("n"), get("e"), get("s"), get("w")]
    };

    let mut pred_sort = vec![None; np];
    let mut builtin = vec![None; np];
    let mut xy_pairs = vec![Vec::new(); np];
    for (p, d) in desc.preds.iter().enumerate() {
        match d.kind {
            PredKind::Sort => pred_sort[p] = sort_index.get(&d.name).copied(),
            PredKind::Builtin => {
                builtin[p] = Some(
                    Builtin::by_name(&d.name)
                        .ok_or_else(|| KrError::Context(format!("unknown builtin `{}`", d.name)))?,
                )
            }
            _ => {}
        }
        for i in 0..d.sorts.len().saturating_sub(1) {
            if d.sorts[i] == "x_val" && d.sorts[i + 1] == "y_val" {
                xy_pairs[p].push(i);
            }
        }
    }

    // every constant must belong to some sort
    let known: HashSet<Val> = universes.iter().flatten().copied().collect();
    let check_pat = |r: Option<&Rule>, p: &Pattern| -> Result<(), KrError> {
        let d = &desc.preds[p.pred as usize];
        for (i, t) in p.args.iter().enumerate() {
            if let Term::Const(v) = t {
                let ok = match sort_index.get(&d.sorts[i]) {
                    Some(&s) => members[s].contains(v),
                    None => known.contains(v),
                };
                if !ok {
                    let msg = format!("symbol `{}` is not of sort {}", desc.val_name(*v), d.sorts[i]);
                    return Err(match r {
                        Some(r) => ground_err(r, msg),
                        None => KrError::Ground { axiom: format!("fact {}", d.name), msg },
                    });
                }
            }
        }
        Ok(())
    };
    for r in &desc.rules {
        for p in r.head.iter().chain(r.action.iter().filter(|_| r.kind != RuleKind::Goal)) {
            check_pat(Some(r), p)?;
        }
        for l in &r.body {
            match l {
                BodyLit::Pos(p) | BodyLit::Neg(p) => check_pat(Some(r), p)?,
                BodyLit::Cmp(_, a, b) => {
                    for t in [a, b] {
                        if let Term::Const(v) = t {
                            if !known.contains(v) && !matches!(v, Val::Int(_)) {
                                return Err(ground_err(r, format!("symbol `{}` belongs to no sort", desc.val_name(*v))));
                            }
                        }
                    }
                }
            }
        }
    }
    for f in &desc.facts {
        let d = &desc.preds[f.pred as usize];
        let p = Pattern { pred: f.pred, args: f.args[..d.sorts.len()].iter().map(|v| Term::Const(*v)).collect() };
        check_pat(None, &p)?;
    }

    // rule indexes
    let mut defs = vec![Vec::new(); np];
    let mut causal = vec![Vec::new(); np];
    let mut impossible = vec![Vec::new(); np];
    let mut candidates = vec![Vec::new(); np];
    let mut neg_constraints = vec![Vec::new(); np];
    let (mut pos_constraints, mut denials) = (Vec::new(), Vec::new());
    let mut goals: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for r in &desc.rules {
        let hp = r.head.as_ref().map(|h| h.pred as usize);
        let ap = r.action.as_ref().map(|a| a.pred as usize);
        match r.kind {
            RuleKind::Definition => defs[hp.unwrap()].push(r.id),
            RuleKind::Causal => causal[ap.unwrap()].push(r.id),
            RuleKind::Impossible => impossible[ap.unwrap()].push(r.id),
            RuleKind::Candidates => candidates[ap.unwrap()].push(r.id),
            RuleKind::Constraint if r.head_negated => neg_constraints[hp.unwrap()].push(r.id),
            RuleKind::Constraint => pos_constraints.push(r.id),
            RuleKind::Denial => denials.push(r.id),
            RuleKind::Goal => goals.entry(r.goal.clone().unwrap()).or_default().push(r.id),
            RuleKind::StaticRule | RuleKind::Default => {}
        }
    }
    // definitions must not depend on themselves
    {
        let mut state = vec![0u8; np];
        fn visit(p: usize, desc: &DomainDescription, defs: &[Vec<usize>], state: &mut [u8]) -> Result<(), KrError> {
            match state[p] {
                1 => {
                    return Err(KrError::Ground {
                        axiom: desc.rules[defs[p][0]].text.clone(),
                        msg: format!("defined fluent `{}` depends on itself", desc.preds[p].name),
                    })
                }
                2 => return Ok(()),
                _ => {}
            }
            state[p] = 1;
            for &r in &defs[p] {
                for l in &desc.rules[r].body {
                    if let BodyLit::Pos(q) | BodyLit::Neg(q) = l {
                        if desc.preds[q.pred as usize].kind == PredKind::Defined {
                            visit(q.pred as usize, desc, defs, state)?;
                        }
                    }
                }
            }
            state[p] = 2;
            Ok(())
        }
        for p in 0..np {
            if desc.preds[p].kind == PredKind::Defined {
                visit(p, &desc, &defs, &mut state)?;
            }
        }
    }

    let mut base = Base {
        sort_index,
        universes,
        members,
        pred_sort,
        builtin,
        statics: vec![Vec::new(); np],
        static_set: HashSet::new(),
        defs,
        causal,
        impossible,
        candidates,
        pos_constraints,
        neg_constraints,
        denials,
        goals,
        xy_pairs,
        agent_vals,
        dir_vals,
    };
    for f in &desc.facts {
        base.static_set.insert(*f);
    }

    let desc = Arc::new(desc);
    let ctx = Arc::new(ctx.clone());
    let granularity = Granularity::all_fine(&zones);
    // static rules, naive fixpoint
    rebuild_statics(&mut base, np);
    let mut g = GroundedDomain { desc: desc.clone(), ctx, zones, base: Arc::new(base), granularity };
    let empty = super::BeliefState::default();
    loop {
        let mut new = Vec::new();
        for r in desc.rules_of(RuleKind::StaticRule) {
            let head = r.head.as_ref().unwrap();
            g.solutions(&empty, &r.body, vec![Val::Nil; r.var_names.len()], &mut |b| {
                let a = super::eval::instantiate(head, b);
                if !g.base.static_set.contains(&a) {
                    new.push(a);
                }
                true
            });
        }
        if new.is_empty() {
            break;
        }
        let b = Arc::get_mut(&mut g.base).expect("base not shared during grounding");
        b.static_set.extend(new);
        rebuild_statics(b, np);
    }
    Ok(g)
}

fn rebuild_statics(base: &mut Base, np: usize) {
    let mut by = vec![Vec::new(); np];
    for a in &base.static_set {
        by[a.pred as usize].push(*a);
    }
    for v in &mut by {
        v.sort();
    }
    base.statics = by;
}

impl GroundedDomain {
    /// Same grounding restricted to the given cell-level zones.
    pub fn with_granularity(&self, g: Granularity) -> GroundedDomain {
        GroundedDomain { granularity: g, ..self.clone() }
    }

    pub fn pred(&self, name: &str) -> Result<PredId, KrError> {
        self.desc.pred(name).ok_or_else(|| KrError::Context(format!("predicate `{name}` is not declared")))
    }

    pub fn sym(&self, name: &str) -> Result<Val, KrError> {
        self.desc.sym(name).ok_or_else(|| KrError::Context(format!("unknown symbol `{name}`")))
    }

    pub fn atom(&self, name: &str, args: &[Val]) -> Result<Atom, KrError> {
        let p = self.pred(name)?;
        if self.desc.arity(p) != args.len() {
            return Err(KrError::Context(format!("`{name}` takes {} arguments", self.desc.arity(p))));
        }
        Ok(Atom::new(p, args))
    }

    pub fn agent_val(&self, id: AgentId) -> Option<Val> {
        self.base.agent_vals.iter().find(|(a, _)| *a == id).map(|(_, v)| *v)
    }

    pub fn agent_of(&self, v: Val) -> Option<AgentId> {
        self.base.agent_vals.iter().find(|(_, x)| *x == v).map(|(a, _)| *a)
    }

    pub fn dir_val(&self, d: Dir) -> Val {
        self.base.dir_vals[d.index()]
    }

    pub fn dir_of(&self, v: Val) -> Option<Dir> {
        self.base.dir_vals.iter().position(|x| *x == v).and_then(Dir::from_index)
    }

    pub fn universe(&self, sort: &str) -> &[Val] {
        self.base.sort_index.get(sort).map_or(&[], |&i| &self.base.universes[i])
    }

    pub fn in_sort(&self, sort: &str, v: Val) -> bool {
        self.base.sort_index.get(sort).is_some_and(|&i| self.base.members[i].contains(&v))
    }

    pub fn is_fine(&self, x: i32, y: i32) -> bool {
        let c = Cell::new(x, y);
        self.ctx.grid.in_bounds(c) && self.granularity.is_fine_cell(&self.zones, c)
    }

    /// Whether the atom belongs to this grounding: every argument is of its
    /// declared sort and every cell argument lies in a fine zone.
    pub fn in_grounding(&self, a: &Atom) -> bool {
        let d = self.desc.decl(a.pred);
        for (i, s) in d.sorts.iter().enumerate() {
            if !self.in_sort(s, a.args[i]) {
                return false;
            }
        }
        self.base.xy_pairs[a.pred as usize].iter().all(|&i| match (a.args[i], a.args[i + 1]) {
            (Val::Int(x), Val::Int(y)) => self.is_fine(x, y),
            _ => false,
        })
    }

    fn fine_cells(&self) -> usize {
        (0..self.ctx.grid.height)
            .flat_map(|y| (0..self.ctx.grid.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.is_fine(x, y))
            .count()
    }

    fn sort_size(&self, s: &str) -> usize {
        self.universe(s).len()
    }

    /// Number of ground atoms of a predicate in this grounding.
    pub fn atom_count(&self, pred: PredId) -> usize {
        let d = self.desc.decl(pred);
        let pairs = &self.base.xy_pairs[pred as usize];
        let mut n = 1usize;
        let mut i = 0;
        while i < d.sorts.len() {
            if pairs.contains(&i) {
                n *= self.fine_cells();
                i += 2;
            } else {
                n *= self.sort_size(&d.sorts[i]);
                i += 1;
            }
        }
        n
    }

    /// Number of ground instances of one axiom. Variables take the sort of
    /// their first argument position; an `x_val`,`y_val` variable pair that
    /// appears together ranges over fine cells only.
    pub fn axiom_instance_count(&self, rule: &Rule) -> usize {
        let nv = rule.var_names.len();
        let mut sort: Vec<Option<String>> = vec![None; nv];
        let mut paired: Vec<Option<u16>> = vec![None; nv];
        let pats = rule.head.iter().chain(rule.action.iter().filter(|_| rule.kind != RuleKind::Goal)).chain(rule.body.iter().filter_map(|l| match l {
            BodyLit::Pos(p) | BodyLit::Neg(p) => Some(p),
            _ => None,
        }));
        for p in pats {
            let d = self.desc.decl(p.pred);
            for (i, t) in p.args.iter().enumerate() {
                if let Term::Var(v) = t {
                    let v = *v as usize;
                    if sort[v].is_none() {
                        sort[v] = Some(d.sorts[i].clone());
                    }
                }
            }
            for &i in &self.base.xy_pairs[p.pred as usize] {
                if let (Term::Var(x), Term::Var(y)) = (p.args[i], p.args[i + 1]) {
                    if paired[x as usize].is_none() && paired[y as usize].is_none() {
                        paired[x as usize] = Some(y);
                        paired[y as usize] = Some(x);
                    }
                }
            }
        }
        let mut n = 1usize;
        let mut done = vec![false; nv];
        for v in 0..nv {
            if done[v] {
                continue;
            }
            done[v] = true;
            if let Some(w) = paired[v] {
                done[w as usize] = true;
                n *= self.fine_cells();
            } else if let Some(s) = &sort[v] {
                n *= self.sort_size(s);
            }
        }
        n
    }

    /// Total ground axiom instances over all rules.
    pub fn grounded_size(&self) -> usize {
        self.desc.rules.iter().map(|r| self.axiom_instance_count(r)).sum()
    }

    /// Instances of causal laws for one action name.
    pub fn causal_instance_count(&self, action: &str) -> usize {
        let Some(p) = self.desc.pred(action) else { return 0 };
        self.base.causal[p as usize].iter().map(|&r| self.axiom_instance_count(&self.desc.rules[r])).sum()
    }

    pub(crate) fn eval_builtin(&self, b: Builtin, args: &[Val], out: &mut Vec<[Val; MAX_ARITY]>) {
        let grid = &self.ctx.grid;
        let z = &self.zones;
        let int = |v: Val| if let Val::Int(i) = v { Some(i) } else { None };
        let bound = |v: Val| v != Val::Nil;
        let mut push = |vals: &[Val]| {
            if vals.iter().zip(args).all(|(v, a)| !bound(*a) || a == v) {
                let mut t = [Val::Nil; MAX_ARITY];
                t[..vals.len()].copy_from_slice(vals);
                out.push(t);
            }
        };
        match b {
            Builtin::NextTo => {
                let (src, dst_first) = if bound(args[0]) && bound(args[1]) {
                    ((args[0], args[1]), true)
                } else if bound(args[2]) && bound(args[3]) {
                    ((args[2], args[3]), false)
                } else {
                    return;
                };
                let (Some(x), Some(y)) = (int(src.0), int(src.1)) else { return };
                for d in Dir::ALL {
                    let c = Cell::new(x, y).offset(d);
                    if grid.in_bounds(c) {
                        let (cx, cy) = (Val::Int(c.x), Val::Int(c.y));
                        if dst_first {
                            push(&[src.0, src.1, cx, cy]);
                        } else {
                            push(&[cx, cy, src.0, src.1]);
                        }
                    }
                }
            }
            Builtin::Component => {
                if let (Some(x), Some(y)) = (int(args[0]), int(args[1])) {
                    let c = Cell::new(x, y);
                    if grid.in_bounds(c) {
                        push(&[args[0], args[1], Val::Int(z.zone_of(c) as i32)]);
                    }
                } else if let Some(r) = int(args[2]) {
                    if r >= 0 && (r as usize) < z.count() {
                        for c in z.cells(r as usize) {
                            push(&[Val::Int(c.x), Val::Int(c.y), args[2]]);
                        }
                    }
                }
            }
            Builtin::RegionEast | Builtin::RegionNorth => {
                let (dx, dy) = if b == Builtin::RegionEast { (1, 0) } else { (0, 1) };
                for r in 0..z.count() {
                    let (x, y) = z.coords(r);
                    let (x2, y2) = (x + dx, y + dy);
                    if x2 < z.nx && y2 < z.ny {
                        push(&[Val::Int(r as i32), Val::Int(y2 * z.nx + x2)]);
                    }
                }
            }
            Builtin::WithinReach => {
                let (Some(x1), Some(y1), Some(x2), Some(y2)) = (int(args[0]), int(args[1]), int(args[3]), int(args[4])) else {
                    return;
                };
                let Some(d) = self.dir_of(args[2]) else { return };
                if crate::env::hit_test(grid, Cell::new(x1, y1), d, Cell::new(x2, y2)) {
                    push(&args[..5]);
                }
            }
            Builtin::GuardZone => {
                for r in z.guard_zones(grid) {
                    push(&[Val::Int(r as i32)]);
                }
            }
            Builtin::FortCell => {
                for c in &grid.fort_cells {
                    push(&[Val::Int(c.x), Val::Int(c.y)]);
                }
            }
        }
    }
}
